import numpy as np
import pytest

from bdots.errors import DegenerateParams, UnknownCurve
from bdots.modules.curves import (
    CURVES, LOGISTIC4, PIECEWISE, CurveSpec, Logistic4Params, PiecewiseParams, curve_matrix,
    eval_logistic4, eval_piecewise, get_curve, numeric_jacobian, register_curve,
)


class TestLogistic4:
    def test_midpoint_at_crossover(self):
        assert eval_logistic4(Logistic4Params(1.0, 0.0, 0.002, 500.0), 500.0) == pytest.approx(0.5)

    def test_asymptotes(self, logistic_theta):
        far = LOGISTIC4.eval(logistic_theta, np.array([-1e6, 1e6]))
        np.testing.assert_allclose(far, [0.1, 0.9], atol=1e-12)

    def test_slope_at_crossover(self, logistic_theta):
        x = logistic_theta[3]
        h = 1e-3
        slope = (LOGISTIC4.eval(logistic_theta, x + h) - LOGISTIC4.eval(logistic_theta, x - h)) / (2 * h)
        assert slope == pytest.approx(logistic_theta[2], rel=1e-6)

    def test_peak_baseline_swap_leaves_curve_unchanged(self, logistic_times, logistic_theta):
        p, b, s, x = logistic_theta
        np.testing.assert_allclose(LOGISTIC4.eval([b, p, s, x], logistic_times),
                                   LOGISTIC4.eval([p, b, s, x], logistic_times), atol=1e-14)

    def test_equal_peak_and_baseline_is_degenerate(self):
        with pytest.raises(DegenerateParams):
            LOGISTIC4.eval([0.5, 0.5, 0.001, 700.0], np.array([0.0, 100.0]))

    def test_analytic_jacobian_matches_numeric(self, logistic_times, logistic_theta):
        np.testing.assert_allclose(LOGISTIC4.jacobian(logistic_theta, logistic_times),
                                   numeric_jacobian(LOGISTIC4, logistic_theta, logistic_times),
                                   rtol=1e-5, atol=1e-8)

    def test_stacked_parameters(self, logistic_times, logistic_theta):
        stack = np.vstack([logistic_theta, logistic_theta + [0.0, 0.0, 0.0, 50.0]])
        out = LOGISTIC4.eval(stack, logistic_times)
        assert out.shape == (2, logistic_times.size)
        np.testing.assert_allclose(out[1], LOGISTIC4.eval(stack[1], logistic_times))

    def test_wrong_parameter_count(self):
        with pytest.raises(DegenerateParams):
            LOGISTIC4.eval([0.9, 0.1, 0.002], np.array([0.0]))


class TestPiecewise:
    @pytest.mark.parametrize("t, expected", [(-0.5, 0.2), (0.0, 0.2), (0.4, 0.3)])
    def test_values(self, t, expected):
        assert eval_piecewise(PiecewiseParams(0.2, 0.25), t) == pytest.approx(expected)

    def test_jacobian(self):
        t = np.array([-1.0, -0.1, 0.0, 0.5])
        np.testing.assert_allclose(PIECEWISE.jacobian([0.0, 1.0], t), [[1, 0], [1, 0], [1, 0], [1, 0.5]])


class TestRegistry:
    def test_shipped_families(self):
        assert get_curve("logistic4") is LOGISTIC4
        assert get_curve("piecewise_linear") is PIECEWISE

    def test_unknown_curve(self):
        with pytest.raises(UnknownCurve) as exc:
            get_curve("gompertz")
        assert exc.value.exit_code == 2

    def test_registered_family_uses_numeric_jacobian(self):
        quad = register_curve(CurveSpec(name="quadratic_test", param_names=("c",),
                                        func=lambda theta, t: theta[..., 0:1] * t ** 2))
        try:
            jac = quad.jacobian([2.0], np.array([1.0, 2.0, 3.0]))
            np.testing.assert_allclose(jac[:, 0], [1.0, 4.0, 9.0], rtol=1e-6)
        finally:
            CURVES.pop("quadratic_test")


class TestCurveMatrix:
    def test_rows_are_subjects(self, logistic_times, logistic_theta):
        m = curve_matrix(LOGISTIC4, [logistic_theta, logistic_theta], logistic_times)
        assert m.shape == (2, logistic_times.size)

    def test_empty(self, logistic_times):
        assert curve_matrix(LOGISTIC4, [], logistic_times).shape == (0, logistic_times.size)

    def test_degenerate_row_is_reported(self, logistic_times, logistic_theta):
        with pytest.raises(DegenerateParams) as exc:
            curve_matrix(LOGISTIC4, [logistic_theta, [0.3, 0.3, 0.001, 700.0]], logistic_times)
        assert exc.value.subject_index == 1
