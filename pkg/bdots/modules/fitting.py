"""Per-subject nonlinear least-squares fits with optional AR(1) errors.

AR(1) is handled by iterated quasi-differencing (Cochrane-Orcutt style, with the
Prais-Winsten first row kept so that phi = 0 is exactly the unwhitened problem).
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from ..errors import DegenerateParams, InsufficientData, MalformedInput, SingularJacobian
from .curves import CurveSpec
from .utils import lag1_autocorrelation

logger = logging.getLogger(__name__)

# residual scale, relative to max(1, max|y|), below which a fit counts as exact
RESID_FLOOR = 1e-8


@dataclass
class SubjectSeries:
    subject_id: str
    group: str
    times: np.ndarray
    values: np.ndarray
    pair_id: Optional[str] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise MalformedInput(f"subject {self.subject_id}: times and values must be 1-d and of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise MalformedInput(f"subject {self.subject_id}: times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise MalformedInput(f"subject {self.subject_id}: values must be finite")


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 200
    gtol: float = 1e-8
    xtol: float = 1e-10
    ftol: float = 1e-10
    max_outer: int = 25
    phi_tol: float = 1e-4
    phi_max: float = 0.99
    x0: Optional[Sequence[float]] = None


@dataclass
class SubjectFit:
    theta_hat: np.ndarray
    se: np.ndarray
    phi_hat: float
    sigma_hat: float
    converged: bool
    rss: float
    n_iter: int
    subject_id: str = ""
    group: str = ""
    pair_id: Optional[str] = None
    cov: Optional[np.ndarray] = field(default=None, repr=False)


def ar1_whiten(x: np.ndarray, phi: float) -> np.ndarray:
    """Quasi-difference along the first axis: x_t - phi x_{t-1}, first row scaled by sqrt(1 - phi^2)."""
    x = np.asarray(x, dtype=float)
    if phi == 0.0:
        return x
    out = np.empty_like(x)
    out[0] = np.sqrt(1.0 - phi * phi) * x[0]
    out[1:] = x[1:] - phi * x[:-1]
    return out


def init_params(series: SubjectSeries, spec: CurveSpec) -> np.ndarray:
    """Heuristic starting values for the shipped curve families."""
    t, y = series.times, series.values
    if y.size < spec.n_params + 2:
        raise InsufficientData(
            f"subject {series.subject_id}: {y.size} observations, need at least {spec.n_params + 2}")

    if spec.name == "logistic4":
        n10 = max(1, int(np.ceil(0.1 * y.size)))
        b = float(np.mean(y[:n10]))
        p = float(np.mean(y[-n10:]))
        mid = 0.5 * (p + b)
        crossed = y >= mid if p >= b else y <= mid
        x = float(t[np.argmax(crossed)]) if crossed.any() else float(0.5 * (t[0] + t[-1]))
        s = (p - b) / (0.5 * (t[-1] - t[0]))
        return np.array([p, b, s, x])

    if spec.name == "piecewise_linear":
        left, right = t < 0, t >= 0
        m, intercept = 0.0, None
        if right.sum() >= 2:
            m, intercept = np.polyfit(t[right], y[right], 1)
        if left.any():
            b = float(np.mean(y[left]))
        else:
            b = float(intercept) if intercept is not None else float(np.mean(y))
        return np.array([b, float(m)])

    raise InsufficientData(f"no starting-value heuristic for curve '{spec.name}'; pass FitOptions.x0")


def _solve(spec: CurveSpec, t: np.ndarray, y: np.ndarray, x0: np.ndarray, phi: float, opts: FitOptions):
    def residuals(theta):
        return ar1_whiten(spec.eval(theta, t) - y, phi)

    def jacobian(theta):
        return ar1_whiten(spec.jacobian(theta, t), phi)

    kwargs = {}
    if spec.param_bounds is not None:
        kwargs["bounds"] = tuple(np.array(b, dtype=float) for b in zip(*spec.param_bounds))
    res = least_squares(
        residuals, x0, jac=jacobian, method="trf", x_scale="jac",
        max_nfev=opts.max_iter, gtol=opts.gtol, xtol=opts.xtol, ftol=opts.ftol, **kwargs,
    )
    return res.x, int(res.nfev), bool(res.status > 0)


def _scale(y: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(y))))


def _estimate_phi(resid: np.ndarray, y: np.ndarray, phi_max: float) -> float:
    # residuals at rounding level carry no autocorrelation information
    if np.sqrt(np.mean(resid ** 2)) <= RESID_FLOOR * _scale(y):
        return 0.0
    return float(np.clip(lag1_autocorrelation(resid), 0.0, phi_max))


def fit_subject(series: SubjectSeries, spec: CurveSpec, ar1: bool = True,
                opts: Optional[FitOptions] = None) -> SubjectFit:
    """Fit ``spec`` to one subject; non-convergence is reported on the result, not raised.

    The residual variance is floored at (RESID_FLOOR * max(1, max|y|))^2, so an exact fit
    to noiseless data still has strictly positive standard errors.
    """
    opts = opts or FitOptions()
    t, y = series.times, series.values
    k = spec.n_params
    if y.size < k + 2:
        raise InsufficientData(f"subject {series.subject_id}: {y.size} observations, need at least {k + 2}")
    x0 = np.asarray(opts.x0, dtype=float) if opts.x0 is not None else init_params(series, spec)

    try:
        theta, n_iter, converged = _solve(spec, t, y, x0, 0.0, opts)
        phi = 0.0
        if ar1:
            settled = False
            for _ in range(opts.max_outer):
                new_phi = _estimate_phi(y - spec.eval(theta, t), y, opts.phi_max)
                theta, it, converged = _solve(spec, t, y, theta, new_phi, opts)
                n_iter += it
                delta, phi = abs(new_phi - phi), new_phi
                if delta < opts.phi_tol:
                    settled = True
                    break
            converged = converged and settled
            logger.debug("subject %s: phi=%.4f after %d evaluations", series.subject_id, phi, n_iter)
        fitted = spec.eval(theta, t)
        jw = ar1_whiten(spec.jacobian(theta, t), phi)
    except DegenerateParams as e:
        raise SingularJacobian(f"subject {series.subject_id}: unidentifiable fit ({e.detail})") from e

    if np.linalg.matrix_rank(jw) < k:
        raise SingularJacobian(f"subject {series.subject_id}: rank-deficient Jacobian at optimum")
    try:
        normal_inv = np.linalg.inv(jw.T @ jw)
    except np.linalg.LinAlgError as e:
        raise SingularJacobian(f"subject {series.subject_id}: singular normal matrix") from e

    resid = fitted - y
    wrss = float(np.sum(ar1_whiten(resid, phi) ** 2))
    sigma2 = max(wrss / (y.size - k), (RESID_FLOOR * _scale(y)) ** 2)
    cov = sigma2 * normal_inv
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    if not converged:
        logger.debug("subject %s: iteration cap reached without meeting tolerance", series.subject_id)

    return SubjectFit(
        theta_hat=theta,
        se=se,
        phi_hat=phi,
        sigma_hat=float(np.sqrt(sigma2)),
        converged=converged,
        rss=float(np.sum(resid ** 2)),
        n_iter=n_iter,
        subject_id=series.subject_id,
        group=series.group,
        pair_id=series.pair_id,
        cov=cov,
    )
