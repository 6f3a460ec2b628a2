"""Max-statistic permutation test on fitted subject curves.

The observed statistic uses the point estimates. Every permutation relabels the
subjects (group sizes preserved, or pair members swapped when paired), redraws each
subject's parameters from its sampling distribution, and keeps the maximum of the
statistic over time. The 1 - alpha quantile of those maxima is the threshold.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np

from ..errors import InvalidArgument, ZeroVariance
from .resampling import (
    Covariance, GroupFits, Method, TestStatSeries, _zero_variance, align_pairs, draw_parameters,
)
from .utils import child_seed, iteration_rngs

logger = logging.getLogger(__name__)

DEFAULT_P = 1000


@dataclass
class PermutationResult:
    observed: TestStatSeries
    null_max: np.ndarray
    threshold: float
    significant: np.ndarray
    p_value: float
    alpha: float
    exhaustive: bool = False


def _abs_stat(curves1: np.ndarray, curves2: np.ndarray) -> np.ndarray:
    m1, m2 = curves1.mean(axis=0), curves2.mean(axis=0)
    var = curves1.var(axis=0, ddof=1) + curves2.var(axis=0, ddof=1)
    if np.any(_zero_variance(var, np.concatenate([m1, m2]))):
        raise ZeroVariance("between-subject variance is zero at some time point")
    return np.abs(m1 - m2) / np.sqrt(var)


def _require_two(group: GroupFits):
    if group.n < 2:
        raise InvalidArgument(f"group {group.group} needs at least 2 subjects, has {group.n}")


def observed_perm_stat(g1: GroupFits, g2: GroupFits, times) -> TestStatSeries:
    """|mean_1t - mean_2t| / sqrt(var_1t + var_2t) over the subjects' fitted curves."""
    _require_two(g1)
    _require_two(g2)
    times = np.asarray(times, dtype=float)
    c1 = np.atleast_2d(g1.spec.eval(g1.thetas, times))
    c2 = np.atleast_2d(g2.spec.eval(g2.thetas, times))
    return TestStatSeries(times=times, stats=_abs_stat(c1, c2), method=Method.PERM)


def _assignments(n1: int, n2: int, paired: bool, exhaustive: bool, P: int,
                 rng: np.random.Generator) -> Iterator[Tuple[np.ndarray, np.ndarray, np.random.Generator]]:
    """Yield (group-1 indices, group-2 indices, generator for the parameter redraw)."""
    total = n1 + n2
    if exhaustive:
        if paired:
            base = np.arange(n1)
            patterns = (np.array(s, dtype=bool) for s in itertools.product((False, True), repeat=n1))
            count = 2 ** n1
        else:
            patterns = (np.array(c) for c in itertools.combinations(range(total), n1))
            count = math.comb(total, n1)
        for pattern, g in zip(patterns, iteration_rngs(rng, count)):
            if paired:
                yield np.where(pattern, base + n1, base), np.where(pattern, base, base + n1), g
            else:
                yield pattern, np.setdiff1d(np.arange(total), pattern), g
        return

    for g in iteration_rngs(rng, P):
        if paired:
            base = np.arange(n1)
            swap = g.random(n1) < 0.5
            yield np.where(swap, base + n1, base), np.where(swap, base, base + n1), g
        else:
            perm = g.permutation(total)
            yield perm[:n1], perm[n1:], g


def permutation_test(g1: GroupFits, g2: GroupFits, times, P: int = DEFAULT_P, alpha: float = 0.05,
                     rng: Optional[np.random.Generator] = None, paired: bool = False,
                     redraw_observed: bool = False, exhaustive: bool = False,
                     covariance: Covariance = Covariance.DIAGONAL) -> PermutationResult:
    if not 0.0 < alpha < 1.0:
        raise InvalidArgument(f"alpha must be in (0, 1), got {alpha}")
    if not exhaustive and P < 100:
        raise InvalidArgument(f"permutation count must be at least 100, got {P}")
    rng = rng if rng is not None else np.random.default_rng()
    times = np.asarray(times, dtype=float)
    # canonical order so that swapping the labels reproduces the same relabellings
    if g2.group < g1.group:
        g1, g2 = g2, g1
    if paired:
        order1, order2 = align_pairs(g1, g2)
        g1, g2 = g1.subset(order1), g2.subset(order2)

    pooled = GroupFits(group=f"{g1.group}+{g2.group}", fits=g1.fits + g2.fits, spec=g1.spec)
    n1, n2 = g1.n, g2.n
    everyone = np.arange(n1 + n2)
    obs_seq, perm_seq = np.random.SeedSequence(child_seed(rng)).spawn(2)

    if redraw_observed:
        _require_two(g1)
        _require_two(g2)
        draws = draw_parameters(pooled, everyone, np.random.default_rng(obs_seq), covariance)
        curves = np.atleast_2d(pooled.spec.eval(draws, times))
        observed = TestStatSeries(times=times, stats=_abs_stat(curves[:n1], curves[n1:]), method=Method.PERM)
    else:
        observed = observed_perm_stat(g1, g2, times)
    observed.paired = paired

    maxima = []
    for idx1, idx2, g in _assignments(n1, n2, paired, exhaustive, P, np.random.default_rng(perm_seq)):
        draws = draw_parameters(pooled, everyone, g, covariance)
        curves = np.atleast_2d(pooled.spec.eval(draws, times))
        maxima.append(float(np.max(_abs_stat(curves[idx1], curves[idx2]))))
    null_max = np.array(maxima)

    count = null_max.size
    rank = min(max(math.ceil((1.0 - alpha) * count - 1e-9), 1), count)
    threshold = float(np.sort(null_max)[rank - 1])
    p_value = float(np.mean(null_max >= np.max(observed.stats)))
    logger.debug("permutation test: %d relabellings, threshold %.4f, p=%.4f", count, threshold, p_value)
    return PermutationResult(
        observed=observed,
        null_max=null_max,
        threshold=threshold,
        significant=observed.stats > threshold,
        p_value=p_value,
        alpha=alpha,
        exhaustive=exhaustive,
    )
