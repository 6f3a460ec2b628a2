import json
import os

import numpy as np
import pandas as pd
import pytest

from bdots.errors import UnknownScenario
from bdots.models import GridConfig, SimReport, SimScenario
from bdots.modules.harness import (
    fwer_matrix, full_scale, piecewise_matrix, run_scenario, shift_matrix, write_report, write_summary,
)


def small(**kw) -> SimScenario:
    base = dict(kind="fwer_logistic", n_subjects=6, replicates=2, B=100, P=100, ar1_error=False, ar1_fit=False,
                grid=GridConfig(start=0.0, stop=1600.0, n_points=41), seed=3)
    base.update(kw)
    return SimScenario(**base)


class TestRunScenario:
    def test_report_shape(self):
        run = run_scenario(small())
        report = run.report
        assert report.replicates == 2
        assert set(report.methods) == {"homboot", "hetboot", "perm"}
        for mr in report.methods.values():
            assert mr.fwer in (0.0, 0.5, 1.0)
            assert len(mr.per_time_rate) == 41
            assert mr.power is None
        assert len(report.replicate_rows) == 2 * 3
        assert run.masks["perm"].shape == (2, 41)

    def test_single_replicate(self):
        report = run_scenario(small(replicates=1, methods=["hetboot"])).report
        assert report.methods["hetboot"].fwer in (0.0, 1.0)

    def test_same_seed_same_report(self):
        a = run_scenario(small(methods=["hetboot"])).report.model_dump_json()
        b = run_scenario(small(methods=["hetboot"])).report.model_dump_json()
        assert a == b

    def test_worker_count_does_not_change_results(self):
        sc = small(replicates=3, methods=["homboot", "perm"])
        assert run_scenario(sc, workers=1).report.model_dump_json() == \
            run_scenario(sc, workers=2).report.model_dump_json()

    def test_method_results_do_not_depend_on_other_methods(self):
        alone = run_scenario(small(methods=["perm"])).masks["perm"]
        together = run_scenario(small()).masks["perm"]
        assert (alone == together).all()

    def test_power_scenario_reports_power(self):
        sc = small(kind="power_piecewise", grid=GridConfig(start=-1.0, stop=1.0, n_points=41), methods=["hetboot"])
        mr = run_scenario(sc).report.methods["hetboot"]
        assert mr.power is not None
        assert mr.power.alpha + mr.power.beta + mr.power.power == pytest.approx(1.0)

    def test_unknown_kind(self):
        with pytest.raises(UnknownScenario):
            run_scenario(small(kind="nope"))


class TestMatrices:
    def test_fwer_matrix(self):
        cells = fwer_matrix()
        assert len(cells) == 16
        assert len({c.name for c in cells}) == 16
        assert sum(c.paired == "noisy" for c in cells) == 4
        assert all(c.heterogeneous for c in cells if c.paired != "none")

    def test_piecewise_matrix(self):
        cells = piecewise_matrix()
        assert len(cells) == 8
        assert {c.kind for c in cells} == {"power_piecewise"}

    def test_shift_matrix(self):
        cells = shift_matrix()
        assert len(cells) == 8
        assert {(c.shift, c.crossover_sd) for c in cells} == {(50.0, 60.0), (50.0, 120.0), (150.0, 60.0),
                                                              (150.0, 120.0)}

    def test_full_scale(self):
        cell = full_scale(piecewise_matrix()[0])
        assert cell.replicates == 1000 and cell.grid.n_points == 401 and cell.grid.start == -1.0


def test_write_report(tmp_path):
    run = run_scenario(small(methods=["hetboot", "perm"]))
    paths = write_report(run, str(tmp_path))
    assert [os.path.basename(p) for p in paths] == ["report.json", "curves.csv", "replicates.csv"]
    SimReport.model_validate(json.loads((tmp_path / "report.json").read_text()))
    curves = pd.read_csv(tmp_path / "curves.csv")
    assert list(curves.columns) == ["time", "method", "rate"]
    assert len(curves) == 2 * 41
    reps = pd.read_csv(tmp_path / "replicates.csv")
    assert list(reps.columns) == ["replicate", "method", "null_detection", "any_detection", "onset", "n_significant"]
    summary = pd.read_csv(write_summary([run.report, run.report], str(tmp_path)))
    assert set(summary["method"]) == {"hetboot", "perm"}


@pytest.mark.slow
class TestAcceptance:
    """Desk-scale versions of the simulation study (200 replicates, 101-point grid)."""

    def test_homogeneous_bootstrap_inflates_fwer_under_heterogeneous_means(self):
        report = run_scenario(SimScenario(kind="fwer_logistic", heterogeneous=True, replicates=200, seed=1),
                              workers=os.cpu_count()).report
        assert report.methods["homboot"].fwer >= 0.85
        assert report.methods["hetboot"].fwer <= 0.12
        assert report.methods["perm"].fwer <= 0.12
        assert report.methods["homboot"].median_pcer >= 0.4
        assert report.methods["hetboot"].median_pcer <= 0.05

    def test_homogeneous_means_with_ar1(self):
        report = run_scenario(SimScenario(kind="fwer_logistic", heterogeneous=False, replicates=200, seed=2,
                                          methods=["homboot", "hetboot"]), workers=os.cpu_count()).report
        assert report.methods["homboot"].fwer <= 0.15
        assert report.methods["hetboot"].fwer <= 0.12

    def test_piecewise_power_homogeneous_ar1(self):
        report = run_scenario(SimScenario(kind="power_piecewise", heterogeneous=False, replicates=200, seed=3),
                              workers=os.cpu_count()).report
        for mr in report.methods.values():
            assert mr.power.power >= 0.9
            assert mr.power.onset_median <= 0.06

    def test_shift_power_is_monotone(self):
        per_shift = []
        for shift in (50.0, 150.0):
            sc = SimScenario(kind="power_shift", shift=shift, replicates=200, seed=4, methods=["hetboot"])
            per_shift.append(run_scenario(sc, workers=os.cpu_count()).report.methods["hetboot"].per_time_rate)
        assert all(big >= small_ - 0.05 for small_, big in zip(*per_shift))


def _desk(**kw):
    return run_scenario(SimScenario(replicates=200, **kw), workers=os.cpu_count()).report.methods


@pytest.mark.slow
class TestAcceptanceMatrix:
    """Remaining cells of the desk-scale simulation study."""

    def test_homogeneous_means_without_ar1_fit(self):
        methods = _desk(kind="fwer_logistic", heterogeneous=False, ar1_fit=False, seed=5,
                        methods=["homboot", "hetboot"])
        assert methods["homboot"].fwer >= 0.6
        assert methods["hetboot"].fwer <= 0.12

    def test_identical_pairing(self):
        methods = _desk(kind="fwer_logistic", paired="identical", seed=6, methods=["homboot"])
        assert methods["homboot"].fwer <= 0.2

    def test_identical_pairing_without_ar1_fit(self):
        methods = _desk(kind="fwer_logistic", paired="identical", ar1_fit=False, seed=7, methods=["homboot"])
        assert methods["homboot"].fwer >= 0.55

    def test_noisy_pairing(self):
        methods = _desk(kind="fwer_logistic", paired="noisy", seed=8)
        assert methods["homboot"].fwer >= 0.35
        assert methods["hetboot"].fwer <= 0.12
        assert methods["perm"].fwer <= 0.17

    def test_permutation_median_pcer(self):
        methods = _desk(kind="fwer_logistic", seed=9, methods=["perm"])
        assert methods["perm"].median_pcer <= 0.05

    @pytest.mark.parametrize("ar1_fit", [True, False])
    def test_heterogeneous_piecewise_power(self, ar1_fit):
        methods = _desk(kind="power_piecewise", heterogeneous=True, ar1_fit=ar1_fit, seed=10)
        for name in ("hetboot", "perm"):
            assert methods[name].power.power >= 0.85
            assert methods[name].power.alpha <= 0.1
        assert methods["homboot"].power.alpha >= 0.8


@pytest.mark.slow
class TestShiftOrderings:
    def _rates(self, **kw):
        sc = SimScenario(kind="power_shift", replicates=200, seed=12, methods=["hetboot"], **kw)
        report = run_scenario(sc, workers=os.cpu_count()).report
        return np.array(report.times), np.array(report.methods["hetboot"].per_time_rate)

    def test_smaller_crossover_spread_gives_more_power(self):
        times, narrow = self._rates(shift=150.0, crossover_sd=60.0)
        _, wide = self._rates(shift=150.0, crossover_sd=120.0)
        near = np.abs(times - (720.0 + 75.0)) <= 100.0
        assert np.all(narrow[near] >= wide[near] - 0.05)

    def test_paired_power_barely_depends_on_spread(self):
        _, narrow = self._rates(shift=150.0, crossover_sd=60.0, paired="identical")
        _, wide = self._rates(shift=150.0, crossover_sd=120.0, paired="identical")
        assert np.max(np.abs(narrow - wide)) <= 0.10
