"""Modified Bonferroni correction for an AR(1) sequence of test statistics.

With T_t = rho T_{t-1} + e_t and standard normal margins, the family-wise error of
testing every |T_t| against z_{1 - a/2} is

    FWER(a) = 1 - P(I_1) P(I_t | I_{t-1})^(T - 1),   I_t = {|T_t| <= z}.

``adjust_alpha`` inverts this for a, ``p_adjust`` evaluates it at each p-value.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import integrate
from scipy.optimize import bisect
from scipy.stats import norm

from ..errors import InvalidArgument, NoRoot, SeriesTooShort
from .resampling import TestStatSeries
from .utils import lag1_autocorrelation, mask_to_intervals

logger = logging.getLogger(__name__)

RHO_MAX = 0.999
ALPHA_FLOOR = 1e-12
FWER_TOL = 1e-8


@dataclass(frozen=True)
class AdjustedAlpha:
    alpha: float
    alpha_star: float
    rho: float
    T: int


@dataclass
class SignificanceReport:
    threshold: float
    mask: np.ndarray
    intervals: List[Tuple[float, float]]


def bvn_rect_prob(h: float, k: float, rho: float) -> float:
    """P(X <= h, Y <= k) for a standard bivariate normal with correlation ``rho``.

    Uses Phi(h) Phi(k) + 1/(2 pi) * integral over theta in [0, asin(rho)] of
    exp(-(h^2 + k^2 - 2 h k sin theta) / (2 cos^2 theta)), which is smooth on
    the whole range.
    """
    if abs(rho) > 1.0:
        raise InvalidArgument(f"correlation must be in [-1, 1], got {rho}")
    if h == -math.inf or k == -math.inf:
        return 0.0
    if h == math.inf:
        return float(norm.cdf(k))
    if k == math.inf:
        return float(norm.cdf(h))
    if rho == 1.0:
        return float(norm.cdf(min(h, k)))
    if rho == -1.0:
        return float(max(0.0, norm.cdf(h) + norm.cdf(k) - 1.0))

    base = float(norm.cdf(h) * norm.cdf(k))
    if rho == 0.0:
        return base
    hk, hh = h * k, 0.5 * (h * h + k * k)

    def integrand(theta):
        c = math.cos(theta)
        return math.exp((hk * math.sin(theta) - hh) / (c * c))

    value, _ = integrate.quad(integrand, 0.0, math.asin(rho), epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(min(1.0, max(0.0, base + value / (2.0 * math.pi))))


def bvn_box_prob(z: float, rho: float) -> float:
    """P(|X| <= z, |Y| <= z) from four CDF corners."""
    return (bvn_rect_prob(z, z, rho) - bvn_rect_prob(-z, z, rho)
            - bvn_rect_prob(z, -z, rho) + bvn_rect_prob(-z, -z, rho))


def chain_fwer(alpha_star: float, rho: float, T: int) -> float:
    """Family-wise error of T AR(1)-correlated tests each run at level ``alpha_star``."""
    if alpha_star <= 0.0:
        return 0.0
    if alpha_star >= 1.0:
        return 1.0
    if T == 1 or rho >= 1.0:
        return alpha_star
    z = float(norm.ppf(1.0 - alpha_star / 2.0))
    p_single = 1.0 - alpha_star
    p_cond = min(1.0, bvn_box_prob(z, rho) / p_single)
    return float(min(1.0, max(0.0, 1.0 - p_single * p_cond ** (T - 1))))


def estimate_rho(stats: TestStatSeries) -> float:
    """Lag-1 autocorrelation of the statistic sequence, clipped to [0, 0.999]."""
    values = np.asarray(stats.stats, dtype=float)
    if values.size < 10:
        raise SeriesTooShort(f"need at least 10 statistics to estimate rho, got {values.size}")
    return float(np.clip(lag1_autocorrelation(values), 0.0, RHO_MAX))


def adjust_alpha(alpha: float, rho: float, T: int) -> AdjustedAlpha:
    """Per-test level alpha* whose chain FWER equals ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise InvalidArgument(f"alpha must be in (0, 1), got {alpha}")
    if T < 1:
        raise InvalidArgument(f"number of tests must be at least 1, got {T}")
    if not 0.0 <= rho <= 1.0:
        raise InvalidArgument(f"rho must be in [0, 1], got {rho}")
    if T == 1 or rho == 1.0:
        return AdjustedAlpha(alpha=alpha, alpha_star=alpha, rho=rho, T=T)

    def excess(a):
        return chain_fwer(a, rho, T) - alpha

    if abs(excess(alpha)) <= FWER_TOL:
        return AdjustedAlpha(alpha=alpha, alpha_star=alpha, rho=rho, T=T)
    try:
        root = bisect(excess, ALPHA_FLOOR, alpha, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=400)
    except (ValueError, RuntimeError) as e:
        raise NoRoot(f"no alpha* in ({ALPHA_FLOOR}, {alpha}] for rho={rho}, T={T}: {e}") from e
    if abs(excess(root)) > FWER_TOL:
        raise NoRoot(f"alpha* search for rho={rho}, T={T} stopped at FWER error {excess(root):.2e}")
    logger.debug("alpha=%.4g rho=%.4f T=%d -> alpha*=%.6g", alpha, rho, T, root)
    return AdjustedAlpha(alpha=alpha, alpha_star=float(root), rho=rho, T=T)


def significant_intervals(stats: TestStatSeries, adj: AdjustedAlpha) -> SignificanceReport:
    values = np.asarray(stats.stats, dtype=float)
    times = np.asarray(stats.times, dtype=float)
    if values.shape != times.shape:
        raise InvalidArgument("statistic series and time grid have different lengths")
    threshold = float(norm.ppf(1.0 - adj.alpha_star / 2.0))
    mask = np.abs(values) > threshold
    return SignificanceReport(threshold=threshold, mask=mask, intervals=mask_to_intervals(times, mask))


def p_adjust(p_values: Sequence[float], rho: float) -> np.ndarray:
    """Map each p-value to the family-wise error at which it is exactly critical."""
    p = np.asarray(p_values, dtype=float)
    if p.size and (np.any(p < 0.0) or np.any(p > 1.0) or not np.all(np.isfinite(p))):
        raise InvalidArgument("p-values must lie in [0, 1]")
    if not 0.0 <= rho <= 1.0:
        raise InvalidArgument(f"rho must be in [0, 1], got {rho}")
    T = p.size
    adjusted = np.array([chain_fwer(float(v), rho, T) for v in p], dtype=float)
    return np.clip(adjusted, 0.0, 1.0)
