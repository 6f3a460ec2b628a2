"""Homogeneous and heterogeneous bootstraps of group population curves.

Both bootstraps draw, for every subject taking part in a bootstrap iteration, one
parameter vector from Normal(theta_hat_i, diag(s_i^2)), average the draws across
subjects, and evaluate the curve at the average. The homogeneous bootstrap uses every
subject exactly once; the heterogeneous bootstrap first resamples subjects with
replacement.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import InvalidArgument, PlanShapeMismatch, UnpairedSubject, ZeroVariance
from .curves import CurveSpec
from .fitting import SubjectFit
from .utils import child_seed, iteration_rngs

logger = logging.getLogger(__name__)

MIN_ITERATIONS = 100
DEFAULT_B = 1000


class Method(str, Enum):
    HOMBOOT = "homboot"
    HETBOOT = "hetboot"
    PERM = "perm"


class Covariance(str, Enum):
    DIAGONAL = "diagonal"
    FULL = "full"


@dataclass
class GroupFits:
    group: str
    fits: List[SubjectFit]
    spec: CurveSpec

    def __post_init__(self):
        if any(not f.converged for f in self.fits):
            raise InvalidArgument(f"group {self.group}: all fits must be converged; use GroupFits.from_fits")

    @classmethod
    def from_fits(cls, group: str, fits: Sequence[SubjectFit], spec: CurveSpec) -> "GroupFits":
        """Build a group, excluding non-converged subjects with a warning."""
        kept = [f for f in fits if f.converged]
        dropped = [f.subject_id for f in fits if not f.converged]
        if dropped:
            logger.warning("group %s: excluding %d non-converged subject(s): %s",
                           group, len(dropped), ", ".join(map(str, dropped)))
        return cls(group=group, fits=kept, spec=spec)

    @property
    def n(self) -> int:
        return len(self.fits)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([f.theta_hat for f in self.fits], dtype=float).reshape(self.n, self.spec.n_params)

    @property
    def ses(self) -> np.ndarray:
        return np.array([f.se for f in self.fits], dtype=float).reshape(self.n, self.spec.n_params)

    @property
    def pair_ids(self) -> List[Optional[str]]:
        return [f.pair_id for f in self.fits]

    def subset(self, order: Sequence[int]) -> "GroupFits":
        return GroupFits(group=self.group, fits=[self.fits[i] for i in order], spec=self.spec)


@dataclass
class GroupCurveStats:
    times: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    B: int
    method: Method = Method.HOMBOOT
    curves: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_curves(cls, times, curves: np.ndarray, method: Method) -> "GroupCurveStats":
        return cls(times=np.asarray(times, dtype=float), mean=curves.mean(axis=0),
                   sd=curves.std(axis=0, ddof=1), B=curves.shape[0], method=method, curves=curves)


@dataclass
class TestStatSeries:
    times: np.ndarray
    stats: np.ndarray
    method: Method
    paired: bool = False

    __test__ = False


def _covariance_factors(group: GroupFits) -> np.ndarray:
    factors = []
    for f, se in zip(group.fits, group.ses):
        if f.cov is None:
            factors.append(np.diag(se))
            continue
        vals, vecs = np.linalg.eigh(np.asarray(f.cov, dtype=float))
        factors.append(vecs * np.sqrt(np.clip(vals, 0.0, None)))
    return np.array(factors)


def draw_parameters(group: GroupFits, idx: np.ndarray, rng: np.random.Generator,
                    covariance: Covariance = Covariance.DIAGONAL, factors: Optional[np.ndarray] = None) -> np.ndarray:
    """One parameter draw per entry of ``idx`` from each subject's sampling distribution."""
    theta = group.thetas[idx]
    z = rng.standard_normal(theta.shape)
    if covariance == Covariance.FULL:
        if factors is None:
            factors = _covariance_factors(group)
        return theta + np.einsum("nij,nj->ni", factors[idx], z)
    return theta + group.ses[idx] * z


def _check_iterations(B: int, group: GroupFits):
    if B < MIN_ITERATIONS:
        raise InvalidArgument(f"bootstrap count must be at least {MIN_ITERATIONS}, got {B}")
    if group.n == 0:
        raise InvalidArgument(f"group {group.group} has no converged subjects")


def _bootstrap_curves(group: GroupFits, times: np.ndarray, B: int, rng: np.random.Generator,
                      plan: Optional[np.ndarray], resample: bool, covariance: Covariance) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    identity = np.arange(group.n)
    factors = _covariance_factors(group) if covariance == Covariance.FULL else None
    theta_means = np.empty((B, group.spec.n_params))
    for b, g in enumerate(iteration_rngs(rng, B)):
        if plan is not None:
            idx = plan[b]
        elif resample:
            idx = g.integers(0, group.n, size=group.n)
        else:
            idx = identity
        theta_means[b] = draw_parameters(group, idx, g, covariance, factors).mean(axis=0)
    return np.atleast_2d(group.spec.eval(theta_means, times))


def hom_bootstrap(group: GroupFits, times, B: int, rng: np.random.Generator,
                  covariance: Covariance = Covariance.DIAGONAL) -> GroupCurveStats:
    """Bootstrap without subject resampling."""
    _check_iterations(B, group)
    curves = _bootstrap_curves(group, times, B, rng, None, False, covariance)
    return GroupCurveStats.from_curves(times, curves, Method.HOMBOOT)


def het_bootstrap(group: GroupFits, times, B: int, rng: np.random.Generator,
                  resample_plan: Optional[np.ndarray] = None,
                  covariance: Covariance = Covariance.DIAGONAL) -> GroupCurveStats:
    """Bootstrap resampling subjects with replacement, or following ``resample_plan`` rows."""
    _check_iterations(B, group)
    if resample_plan is not None:
        resample_plan = np.asarray(resample_plan)
        if resample_plan.shape != (B, group.n):
            raise PlanShapeMismatch(
                f"resample plan has shape {resample_plan.shape}, expected {(B, group.n)}")
    curves = _bootstrap_curves(group, times, B, rng, resample_plan, True, covariance)
    return GroupCurveStats.from_curves(times, curves, Method.HETBOOT)


def _zero_variance(var: np.ndarray, level: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(level)))) if level.size else 1.0
    return var <= (64.0 * np.finfo(float).eps * scale) ** 2


def diff_test_stats(g1: GroupCurveStats, g2: GroupCurveStats) -> TestStatSeries:
    """T_t = (mean_1t - mean_2t) / sqrt(sd_1t^2 + sd_2t^2)."""
    if g1.times.shape != g2.times.shape or not np.array_equal(g1.times, g2.times):
        raise InvalidArgument("group curve statistics are on different time grids")
    var = g1.sd ** 2 + g2.sd ** 2
    degenerate = _zero_variance(var, np.concatenate([g1.mean, g2.mean]))
    if degenerate.any():
        bad = g1.times[degenerate]
        raise ZeroVariance(f"bootstrap variance is zero at {bad.size} time point(s), first at t={bad[0]:g}")
    return TestStatSeries(times=g1.times, stats=(g1.mean - g2.mean) / np.sqrt(var), method=g1.method)


def align_pairs(g1: GroupFits, g2: GroupFits) -> Tuple[np.ndarray, np.ndarray]:
    """Index orders putting both groups' subjects in matching pair-id order."""
    ids1, ids2 = g1.pair_ids, g2.pair_ids
    if any(p is None for p in ids1 + ids2):
        raise UnpairedSubject("paired analysis requested but some subjects have no pair_id")
    if len(set(ids1)) != len(ids1) or len(set(ids2)) != len(ids2):
        raise UnpairedSubject("pair_id values must be unique within each group")
    if set(ids1) != set(ids2):
        missing = sorted(set(ids1) ^ set(ids2))
        raise UnpairedSubject(f"pair_id values without a partner: {', '.join(map(str, missing[:10]))}")
    pos2 = {p: j for j, p in enumerate(ids2)}
    order1 = np.argsort(np.array(ids1, dtype=object).astype(str), kind="stable")
    order2 = np.array([pos2[ids1[i]] for i in order1], dtype=int)
    return order1.astype(int), order2


def paired_diff_bootstrap(g1: GroupFits, g2: GroupFits, times, B: int, rng: np.random.Generator,
                          method: Method = Method.HETBOOT,
                          covariance: Covariance = Covariance.DIAGONAL) -> TestStatSeries:
    """Statistics on the bootstrap distribution of paired mean differences.

    One index plan is shared by both groups so every iteration contains the same
    pairs. With ``method=HOMBOOT`` each plan row is every pair exactly once.
    """
    order1, order2 = align_pairs(g1, g2)
    a, b = g1.subset(order1), g2.subset(order2)
    n = a.n
    plan_seq, seq1, seq2 = np.random.SeedSequence(child_seed(rng)).spawn(3)
    if method == Method.HETBOOT:
        plan = np.random.default_rng(plan_seq).integers(0, n, size=(B, n))
    else:
        plan = np.tile(np.arange(n), (B, 1))

    s1 = het_bootstrap(a, times, B, np.random.default_rng(seq1), resample_plan=plan, covariance=covariance)
    s2 = het_bootstrap(b, times, B, np.random.default_rng(seq2), resample_plan=plan, covariance=covariance)
    diff = s1.curves - s2.curves
    mean = diff.mean(axis=0)
    sd = diff.std(axis=0, ddof=1)
    if np.any(_zero_variance(sd ** 2, np.concatenate([s1.mean, s2.mean]))):
        raise ZeroVariance("bootstrap variance of the paired difference is zero")
    return TestStatSeries(times=np.asarray(times, dtype=float), stats=mean / sd, method=method, paired=True)
