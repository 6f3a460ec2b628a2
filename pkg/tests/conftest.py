import numpy as np
import pandas as pd
import pytest

from bdots.modules.curves import LOGISTIC4, CurveSpec
from bdots.modules.fitting import SubjectFit
from bdots.modules.resampling import GroupFits

LOGISTIC_THETA = np.array([0.9, 0.1, 0.0019, 720.0])


def _linear(theta, t):
    return theta[..., 0:1] * t


def _linear_jac(theta, t):
    return t[:, None]


# one-parameter family f(t) = a t, used for closed-form variance checks
LINEAR = CurveSpec(name="linear1", param_names=("a",), func=_linear, jac=_linear_jac)


def make_fit(theta, se, group="A", subject_id="s1", pair_id=None, converged=True) -> SubjectFit:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    se = np.broadcast_to(np.asarray(se, dtype=float), theta.shape).copy()
    return SubjectFit(theta_hat=theta, se=se, phi_hat=0.0, sigma_hat=0.0, converged=converged, rss=0.0,
                      n_iter=1, subject_id=subject_id, group=group, pair_id=pair_id)


def make_group(thetas, ses, group="A", spec=LOGISTIC4, pair_ids=None) -> GroupFits:
    thetas = np.asarray(thetas, dtype=float)
    ses = np.broadcast_to(np.asarray(ses, dtype=float), thetas.shape)
    fits = [make_fit(th, s, group=group, subject_id=f"{group}{i}",
                     pair_id=None if pair_ids is None else pair_ids[i])
            for i, (th, s) in enumerate(zip(thetas, ses))]
    return GroupFits(group=group, fits=fits, spec=spec)


def write_long_csv(path, series, with_pairs=False):
    rows = []
    for s in series:
        for t, y in zip(s.times, s.values):
            row = {"subject": s.subject_id, "group": s.group, "time": t, "value": y}
            if with_pairs:
                row["pair_id"] = s.pair_id
            rows.append(row)
    pd.DataFrame(rows).to_csv(path, index=False)
    return str(path)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def logistic_times():
    return np.linspace(0.0, 1600.0, 101)


@pytest.fixture
def logistic_theta():
    return LOGISTIC_THETA.copy()


@pytest.fixture
def hetero_groups(rng):
    """Two logistic groups of 8 subjects drawn from the same distribution."""
    mu, sd = LOGISTIC_THETA, np.array([0.06, 0.04, 0.0004, 120.0])
    ses = sd / 10.0
    g1 = make_group(mu + rng.standard_normal((8, 4)) * sd, ses, group="A")
    g2 = make_group(mu + rng.standard_normal((8, 4)) * sd, ses, group="B")
    return g1, g2
