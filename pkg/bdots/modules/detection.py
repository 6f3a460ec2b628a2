"""Run one named detection method end to end on two fitted groups."""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .inference import AdjustedAlpha, adjust_alpha, estimate_rho, significant_intervals
from .permutation import DEFAULT_P, PermutationResult, permutation_test
from .resampling import (
    DEFAULT_B, Covariance, GroupFits, Method, TestStatSeries, align_pairs, diff_test_stats,
    het_bootstrap, hom_bootstrap, paired_diff_bootstrap,
)
from .utils import child_seed, mask_to_intervals

logger = logging.getLogger(__name__)

__all__ = ["Detection", "align_pairs", "detect"]


@dataclass
class Detection:
    method: Method
    stats: TestStatSeries
    threshold: float
    mask: np.ndarray
    intervals: List[Tuple[float, float]]
    adjusted: Optional[AdjustedAlpha] = None
    permutation: Optional[PermutationResult] = None


def _bootstrap_stats(method: Method, g1: GroupFits, g2: GroupFits, times, B: int,
                     rng: np.random.Generator, paired: bool, covariance: Covariance) -> TestStatSeries:
    if paired:
        return paired_diff_bootstrap(g1, g2, times, B, rng, method=method, covariance=covariance)
    seq1, seq2 = np.random.SeedSequence(child_seed(rng)).spawn(2)
    rng1, rng2 = np.random.default_rng(seq1), np.random.default_rng(seq2)
    if method == Method.HOMBOOT:
        s1 = hom_bootstrap(g1, times, B, rng1, covariance=covariance)
        s2 = hom_bootstrap(g2, times, B, rng2, covariance=covariance)
    else:
        s1 = het_bootstrap(g1, times, B, rng1, covariance=covariance)
        s2 = het_bootstrap(g2, times, B, rng2, covariance=covariance)
    return diff_test_stats(s1, s2)


def detect(method: Method, g1: GroupFits, g2: GroupFits, times, alpha: float,
           rng: np.random.Generator, paired: bool = False, B: int = DEFAULT_B, P: int = DEFAULT_P,
           redraw_observed: bool = False, covariance: Covariance = Covariance.DIAGONAL) -> Detection:
    """Statistic series, threshold, and significant intervals for ``method``."""
    method = Method(method)
    times = np.asarray(times, dtype=float)
    if method == Method.PERM:
        result = permutation_test(g1, g2, times, P=P, alpha=alpha, rng=rng, paired=paired,
                                  redraw_observed=redraw_observed, covariance=covariance)
        return Detection(
            method=method,
            stats=result.observed,
            threshold=result.threshold,
            mask=result.significant,
            intervals=mask_to_intervals(times, result.significant),
            permutation=result,
        )

    stats = _bootstrap_stats(method, g1, g2, times, B, rng, paired, covariance)
    rho = estimate_rho(stats)
    adj = adjust_alpha(alpha, rho, times.size)
    report = significant_intervals(stats, adj)
    logger.debug("%s: rho=%.4f alpha*=%.3g, %d interval(s)", method.value, rho, adj.alpha_star,
                 len(report.intervals))
    return Detection(
        method=method,
        stats=stats,
        threshold=report.threshold,
        mask=report.mask,
        intervals=report.intervals,
        adjusted=adj,
    )
