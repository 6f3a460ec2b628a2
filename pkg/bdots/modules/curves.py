"""Parametric mean-structure families.

A ``CurveSpec`` bundles an evaluator, its Jacobian and the parameter names. All
evaluators broadcast: ``theta`` may be a single vector ``(k,)`` or a stack
``(m, k)``; the result has shape ``(T,)`` or ``(m, T)`` respectively.
"""
from dataclasses import dataclass
from typing import Callable, Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from ..errors import DegenerateParams, UnknownCurve

ArrayFunc = Callable[[np.ndarray, np.ndarray], np.ndarray]


class Logistic4Params(NamedTuple):
    peak: float
    baseline: float
    slope: float
    crossover: float


class PiecewiseParams(NamedTuple):
    baseline: float
    slope: float


@dataclass(frozen=True)
class CurveSpec:
    name: str
    param_names: Tuple[str, ...]
    func: ArrayFunc
    jac: Optional[ArrayFunc] = None
    param_bounds: Optional[Tuple[Tuple[float, float], ...]] = None

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def eval(self, theta, t):
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.n_params:
            raise DegenerateParams(f"{self.name} expects {self.n_params} parameters, got {theta.shape[-1]}")
        t = np.asarray(t, dtype=float)
        out = self.func(theta, np.atleast_1d(t))
        if t.ndim == 0:
            return float(out[0]) if theta.ndim == 1 else out[..., 0]
        return out

    def jacobian(self, theta, t) -> np.ndarray:
        """Matrix of partial derivatives, shape (T, n_params), for one parameter vector."""
        theta = np.asarray(theta, dtype=float)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.jac is not None:
            return self.jac(theta, t)
        return numeric_jacobian(self, theta, t)


def numeric_jacobian(spec: CurveSpec, theta: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Central finite differences of ``spec.eval``."""
    theta = np.asarray(theta, dtype=float)
    steps = 1e-6 * np.maximum(1.0, np.abs(theta))
    cols = []
    for j, h in enumerate(steps):
        up, down = theta.copy(), theta.copy()
        up[j] += h
        down[j] -= h
        cols.append((spec.func(up, t) - spec.func(down, t)) / (2.0 * h))
    return np.stack(cols, axis=-1)


# --- four-parameter logistic ---

def _logistic_parts(theta: np.ndarray, t: np.ndarray):
    p, b, s, x = (theta[..., j:j + 1] for j in range(4))
    d = p - b
    if np.any(d == 0):
        raise DegenerateParams("logistic4 peak equals baseline")
    u = 4.0 * s * (t - x) / d
    return p, b, s, x, d, u


def _logistic4(theta: np.ndarray, t: np.ndarray) -> np.ndarray:
    _, b, _, _, d, u = _logistic_parts(theta, t)
    return d * expit(u) + b


def _logistic4_jac(theta: np.ndarray, t: np.ndarray) -> np.ndarray:
    _, _, s, x, _, u = _logistic_parts(theta, t)
    g = expit(u)
    dg = g * (1.0 - g)
    cols = (g - u * dg, 1.0 - g + u * dg, 4.0 * (t - x) * dg, -4.0 * s * dg)
    return np.stack(cols, axis=-1)


def eval_logistic4(theta: Logistic4Params, t):
    """(p - b) / (1 + exp(4 s (x - t) / (p - b))) + b."""
    return LOGISTIC4.eval(np.asarray(theta, dtype=float), t)


# --- piecewise linear ---

def _piecewise(theta: np.ndarray, t: np.ndarray) -> np.ndarray:
    b = theta[..., 0:1]
    m = theta[..., 1:2]
    return b + m * np.where(t >= 0, t, 0.0)


def _piecewise_jac(theta: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.stack([np.ones_like(t), np.where(t >= 0, t, 0.0)], axis=-1)


def eval_piecewise(theta: PiecewiseParams, t):
    """b for t < 0, m t + b for t >= 0."""
    return PIECEWISE.eval(np.asarray(theta, dtype=float), t)


LOGISTIC4 = CurveSpec(
    name="logistic4",
    param_names=("peak", "baseline", "slope", "crossover"),
    func=_logistic4,
    jac=_logistic4_jac,
)

PIECEWISE = CurveSpec(
    name="piecewise_linear",
    param_names=("baseline", "slope"),
    func=_piecewise,
    jac=_piecewise_jac,
)

CURVES: Dict[str, CurveSpec] = {LOGISTIC4.name: LOGISTIC4, PIECEWISE.name: PIECEWISE}


def get_curve(name: str) -> CurveSpec:
    try:
        return CURVES[name]
    except KeyError:
        raise UnknownCurve(f"Unknown curve family '{name}'. Choose one of: {', '.join(sorted(CURVES))}.")


def register_curve(spec: CurveSpec) -> CurveSpec:
    """Add a user-supplied family; without ``jac`` the numeric Jacobian is used."""
    CURVES[spec.name] = spec
    return spec


def curve_matrix(spec: CurveSpec, params_list: Sequence[Sequence[float]], times) -> np.ndarray:
    """Evaluate every parameter vector on ``times``; rows are subjects."""
    times = np.asarray(times, dtype=float)
    if len(params_list) == 0:
        return np.empty((0, times.size))
    thetas = np.asarray(params_list, dtype=float)
    try:
        return np.atleast_2d(spec.eval(thetas, times))
    except DegenerateParams:
        for i, theta in enumerate(thetas):
            try:
                spec.eval(theta, times)
            except DegenerateParams as e:
                raise DegenerateParams(e.detail, subject_index=i) from e
        raise
