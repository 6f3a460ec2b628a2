"""Synthetic subject data for the simulation scenarios.

Subjects get parameters from a group-level Normal(mu, V); each observed series is
the curve plus AR(1) noise started from its stationary distribution.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import lfilter

from ..errors import ConfigurationError, InvalidArgument, NonPSDCovariance, UnknownScenario
from ..models import DistributionConfig, GridConfig, SimScenario
from .curves import PIECEWISE, CurveSpec, get_curve
from .fitting import SubjectSeries
from .utils import child_seed

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = "logistic_vwp.json"

# desk-scale grids; 401 points reproduces the full-scale runs
LOGISTIC_GRID = GridConfig(start=0.0, stop=1600.0, n_points=101)
PIECEWISE_GRID = GridConfig(start=-1.0, stop=1.0, n_points=101)


@dataclass(frozen=True, eq=False)
class GroupDistribution:
    mu: np.ndarray
    cov: np.ndarray
    spec: CurveSpec

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        k = self.spec.n_params
        if mu.shape != (k,) or cov.shape != (k, k):
            raise NonPSDCovariance(
                f"{self.spec.name} needs a mean of length {k} and a {k}x{k} covariance, "
                f"got {mu.shape} and {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-14):
            raise NonPSDCovariance("covariance is not symmetric")
        vals = np.linalg.eigvalsh(cov)
        if vals.min() < -1e-10 * max(1.0, float(np.abs(vals).max())):
            raise NonPSDCovariance(f"covariance has a negative eigenvalue ({vals.min():.3g})")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def from_sd(cls, mu: Sequence[float], sd: Sequence[float], spec: CurveSpec) -> "GroupDistribution":
        """Independent components with the given standard deviations."""
        sd = np.asarray(sd, dtype=float)
        return cls(mu=np.asarray(mu, dtype=float), cov=np.diag(sd ** 2), spec=spec)

    @classmethod
    def from_config(cls, cfg: DistributionConfig) -> "GroupDistribution":
        spec = get_curve(cfg.curve)
        missing = [name for name in spec.param_names if name not in cfg.mu]
        extra = sorted(set(cfg.mu) - set(spec.param_names))
        if missing or extra:
            raise ConfigurationError(
                f"distribution for {spec.name} must name exactly {', '.join(spec.param_names)}")
        return cls.from_sd([cfg.mu[n] for n in spec.param_names], [cfg.sd[n] for n in spec.param_names], spec)

    def index(self, name: str) -> int:
        try:
            return self.spec.param_names.index(name)
        except ValueError:
            raise ConfigurationError(f"{self.spec.name} has no parameter '{name}'")

    def shifted(self, name: str, offset: float) -> "GroupDistribution":
        mu = self.mu.copy()
        mu[self.index(name)] += offset
        return GroupDistribution(mu=mu, cov=self.cov, spec=self.spec)

    def with_sd(self, name: str, sd: float) -> "GroupDistribution":
        """Replace one component's standard deviation, keeping its correlations."""
        j = self.index(name)
        cov = self.cov.copy()
        old = np.sqrt(cov[j, j])
        if old > 0:
            scale = np.ones(len(self.mu))
            scale[j] = sd / old
            cov = cov * np.outer(scale, scale)
        else:
            cov[j, :] = cov[:, j] = 0.0
            cov[j, j] = sd ** 2
        return GroupDistribution(mu=self.mu, cov=cov, spec=self.spec)


@dataclass(frozen=True)
class ErrorConfig:
    phi: float = 0.0
    sigma: float = 0.025
    trials: int = 1

    def __post_init__(self):
        if not 0.0 <= self.phi < 1.0:
            raise InvalidArgument(f"AR(1) coefficient must be in [0, 1), got {self.phi}")
        if self.sigma <= 0.0:
            raise InvalidArgument(f"noise sd must be positive, got {self.sigma}")
        if self.trials < 1:
            raise InvalidArgument(f"trials must be at least 1, got {self.trials}")


class Pairing(str, Enum):
    NONE = "none"
    IDENTICAL = "identical"
    NOISY = "noisy"


@dataclass(frozen=True)
class PairedMode:
    kind: Pairing = Pairing.NONE
    noise_scale: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "kind", Pairing(self.kind))
        if self.kind == Pairing.NOISY and self.noise_scale <= 0.0:
            raise InvalidArgument(f"noisy pairing needs a positive noise scale, got {self.noise_scale}")


def load_default_distribution() -> GroupDistribution:
    """The shipped logistic distribution (bdots/configs/logistic_vwp.json)."""
    text = resources.files("bdots.configs").joinpath(DEFAULT_CONFIG).read_text(encoding="utf-8")
    return GroupDistribution.from_config(DistributionConfig.model_validate_json(text))


def _factor(cov: np.ndarray) -> np.ndarray:
    """Square root F with F F^T = cov; diagonal covariances keep their component order."""
    if np.count_nonzero(cov - np.diag(np.diag(cov))) == 0:
        return np.diag(np.sqrt(np.clip(np.diag(cov), 0.0, None)))
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _mvn(mu: np.ndarray, cov: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((size, mu.size))
    return mu + z @ _factor(cov).T


def draw_subject_params(dist: GroupDistribution, n: int, homogeneous: bool,
                        rng: np.random.Generator) -> np.ndarray:
    """(n, k) parameter vectors; homogeneous groups repeat a single draw."""
    if n < 1:
        raise InvalidArgument(f"need at least one subject, got {n}")
    if homogeneous:
        return np.tile(_mvn(dist.mu, dist.cov, 1, rng), (n, 1))
    return _mvn(dist.mu, dist.cov, n, rng)


def ar1_noise(size: int, err: ErrorConfig, rng: np.random.Generator) -> np.ndarray:
    w = rng.normal(0.0, err.sigma, size)
    if err.phi == 0.0:
        return w
    w[0] /= np.sqrt(1.0 - err.phi ** 2)
    return lfilter([1.0], [1.0, -err.phi], w)


def gen_series(theta, spec: CurveSpec, times, err: ErrorConfig, rng: np.random.Generator,
               subject_id: str = "", group: str = "", pair_id: Optional[str] = None) -> SubjectSeries:
    """Curve at ``theta`` plus AR(1) noise, averaged over ``err.trials`` realizations."""
    times = np.asarray(times, dtype=float)
    mean = np.asarray(spec.eval(np.asarray(theta, dtype=float), times), dtype=float)
    noise = np.mean([ar1_noise(times.size, err, rng) for _ in range(err.trials)], axis=0)
    return SubjectSeries(subject_id=subject_id, group=group, times=times, values=mean + noise, pair_id=pair_id)


def _series(params: np.ndarray, spec: CurveSpec, times, err: ErrorConfig, rng: np.random.Generator,
            group: str, pair_ids: Optional[List[str]] = None) -> List[SubjectSeries]:
    out = []
    for i, theta in enumerate(params):
        pair = pair_ids[i] if pair_ids is not None else None
        out.append(gen_series(theta, spec, times, err, rng, subject_id=f"{group}-{i + 1:03d}",
                              group=group, pair_id=pair))
    return out


def pair_ids_for(n: int) -> List[str]:
    return [f"p{i + 1:03d}" for i in range(n)]


def gen_paired_groups(dist: GroupDistribution, n: int, mode: PairedMode, spec: CurveSpec, times,
                      err: ErrorConfig, rng: np.random.Generator, homogeneous: bool = False,
                      labels: Tuple[str, str] = ("g1", "g2"),
                      offset: Optional[Sequence[float]] = None) -> Tuple[List[SubjectSeries], List[SubjectSeries]]:
    """Two groups sharing pair ids.

    identical: theta_i2 = theta_i1 (+ offset); noisy: theta_i2 = theta_i1 + Normal(0, scale V) (+ offset).
    Each group gets its own noise realization.
    """
    if mode.kind == Pairing.NONE:
        raise InvalidArgument("gen_paired_groups needs an identical or noisy pairing mode")
    param_seq, noise_seq, s1, s2 = np.random.SeedSequence(child_seed(rng)).spawn(4)
    param_rng = np.random.default_rng(param_seq)
    theta1 = draw_subject_params(dist, n, homogeneous, param_rng)
    theta2 = theta1.copy()
    if mode.kind == Pairing.NOISY:
        theta2 = theta2 + _mvn(np.zeros_like(dist.mu), mode.noise_scale * dist.cov, n,
                               np.random.default_rng(noise_seq))
    if offset is not None:
        theta2 = theta2 + np.asarray(offset, dtype=float)
    ids = pair_ids_for(n)
    return (_series(theta1, spec, times, err, np.random.default_rng(s1), labels[0], ids),
            _series(theta2, spec, times, err, np.random.default_rng(s2), labels[1], ids))


@dataclass
class ScenarioData:
    spec: CurveSpec
    times: np.ndarray
    group1: List[SubjectSeries]
    group2: List[SubjectSeries]
    null_region: np.ndarray
    effect_region: np.ndarray
    paired: bool = False
    distributions: Tuple[GroupDistribution, ...] = field(default=(), repr=False)

    @property
    def labels(self) -> Tuple[str, str]:
        return self.group1[0].group, self.group2[0].group


def scenario_grid(sc: SimScenario) -> np.ndarray:
    grid = sc.grid or (PIECEWISE_GRID if sc.kind == "power_piecewise" else LOGISTIC_GRID)
    return np.linspace(grid.start, grid.stop, grid.n_points)


def error_config(sc: SimScenario) -> ErrorConfig:
    return ErrorConfig(phi=sc.phi if sc.ar1_error else 0.0, sigma=sc.sigma, trials=sc.trials)


def paired_mode(sc: SimScenario) -> PairedMode:
    return PairedMode(kind=Pairing(sc.paired), noise_scale=sc.noise_scale)


def _logistic_distribution(sc: SimScenario) -> GroupDistribution:
    if sc.distribution is not None:
        return GroupDistribution.from_config(sc.distribution)
    return load_default_distribution()


def _two_groups(dist1: GroupDistribution, dist2: GroupDistribution, sc: SimScenario, times,
                err: ErrorConfig, rng: np.random.Generator, labels: Tuple[str, str]):
    """Unpaired groups. Homogeneous cells use one standard-normal vector for every subject of
    both groups, so parameters with equal distributions take equal values across groups."""
    param_seq, s1, s2 = np.random.SeedSequence(child_seed(rng)).spawn(3)
    param_rng = np.random.default_rng(param_seq)
    n = sc.n_subjects
    if sc.heterogeneous:
        theta1 = draw_subject_params(dist1, n, False, param_rng)
        theta2 = draw_subject_params(dist2, n, False, param_rng)
    else:
        z = param_rng.standard_normal(dist1.mu.size)
        theta1 = np.tile(dist1.mu + _factor(dist1.cov) @ z, (n, 1))
        theta2 = np.tile(dist2.mu + _factor(dist2.cov) @ z, (n, 1))
    spec = dist1.spec
    return (_series(theta1, spec, times, err, np.random.default_rng(s1), labels[0]),
            _series(theta2, spec, times, err, np.random.default_rng(s2), labels[1]))


def scenario_fwer_logistic(sc: SimScenario, rng: np.random.Generator) -> ScenarioData:
    """Both groups from the same logistic distribution; every detection is an error."""
    dist = _logistic_distribution(sc)
    times = scenario_grid(sc)
    err = error_config(sc)
    labels = ("g1", "g2")
    mode = paired_mode(sc)
    if mode.kind == Pairing.NONE:
        g1, g2 = _two_groups(dist, dist, sc, times, err, rng, labels)
    else:
        g1, g2 = gen_paired_groups(dist, sc.n_subjects, mode, dist.spec, times, err, rng,
                                   homogeneous=not sc.heterogeneous, labels=labels)
    return ScenarioData(spec=dist.spec, times=times, group1=g1, group2=g2,
                        null_region=np.ones(times.size, dtype=bool),
                        effect_region=np.zeros(times.size, dtype=bool),
                        paired=mode.kind != Pairing.NONE, distributions=(dist, dist))


def scenario_power_piecewise(sc: SimScenario, rng: np.random.Generator) -> ScenarioData:
    """Flat 'no_effect' group against an 'effect' group whose slope starts at t = 0."""
    times = scenario_grid(sc)
    err = error_config(sc)
    labels = ("no_effect", "effect")
    flat = GroupDistribution.from_sd([0.0, 0.0], [sc.baseline_sd, 0.0], PIECEWISE)
    rising = GroupDistribution.from_sd([0.0, sc.slope_mean], [sc.baseline_sd, sc.slope_sd], PIECEWISE)
    mode = paired_mode(sc)
    if mode.kind == Pairing.NONE:
        g1, g2 = _two_groups(flat, rising, sc, times, err, rng, labels)
    else:
        # pairs share a baseline; the effect group's slope is drawn on top
        slope_seq, rest = np.random.SeedSequence(child_seed(rng)).spawn(2)
        slopes = draw_subject_params(rising, sc.n_subjects, not sc.heterogeneous,
                                     np.random.default_rng(slope_seq))[:, 1]
        g1, g2 = gen_paired_groups(flat, sc.n_subjects, mode, PIECEWISE, times, err,
                                   np.random.default_rng(rest), homogeneous=not sc.heterogeneous,
                                   labels=labels)
        g2 = [SubjectSeries(subject_id=s.subject_id, group=s.group, times=s.times,
                            values=s.values + m * np.where(s.times >= 0, s.times, 0.0), pair_id=s.pair_id)
              for s, m in zip(g2, slopes)]
    return ScenarioData(spec=PIECEWISE, times=times, group1=g1, group2=g2,
                        null_region=times < 0, effect_region=times >= 0,
                        paired=mode.kind != Pairing.NONE, distributions=(flat, rising))


def scenario_power_shift(sc: SimScenario, rng: np.random.Generator) -> ScenarioData:
    """Logistic groups whose crossover means differ by ``sc.shift``."""
    base = _logistic_distribution(sc).with_sd("crossover", sc.crossover_sd)
    moved = base.shifted("crossover", sc.shift)
    times = scenario_grid(sc)
    err = error_config(sc)
    labels = ("base", "shifted")
    mode = paired_mode(sc)
    if mode.kind == Pairing.NONE:
        g1, g2 = _two_groups(base, moved, sc, times, err, rng, labels)
    else:
        g1, g2 = gen_paired_groups(base, sc.n_subjects, mode, base.spec, times, err, rng,
                                   homogeneous=not sc.heterogeneous, labels=labels,
                                   offset=moved.mu - base.mu)
    return ScenarioData(spec=base.spec, times=times, group1=g1, group2=g2,
                        null_region=np.zeros(times.size, dtype=bool),
                        effect_region=np.ones(times.size, dtype=bool),
                        paired=mode.kind != Pairing.NONE, distributions=(base, moved))


SCENARIOS: Dict[str, Callable[[SimScenario, np.random.Generator], ScenarioData]] = {
    "fwer_logistic": scenario_fwer_logistic,
    "power_piecewise": scenario_power_piecewise,
    "power_shift": scenario_power_shift,
}


def generate_scenario(sc: SimScenario, rng: np.random.Generator) -> ScenarioData:
    try:
        build = SCENARIOS[sc.kind]
    except KeyError:
        raise UnknownScenario(f"Unknown scenario kind '{sc.kind}'. Choose one of: {', '.join(SCENARIOS)}.")
    data = build(sc, rng)
    logger.debug("scenario %s: %d + %d subjects on %d time points", sc.kind, len(data.group1),
                 len(data.group2), data.times.size)
    return data
