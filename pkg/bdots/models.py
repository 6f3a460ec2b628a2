from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = "1.0"

METHODS = ("homboot", "hetboot", "perm")
PAIRINGS = ("none", "identical", "noisy")

# Pydantic models for files read and written by the command line


# --- fits.json ---

class SubjectFitRecord(BaseModel):
    subject_id: str
    group: str
    pair_id: Optional[str] = None
    params: Dict[str, float]
    se: Dict[str, float]
    phi: float
    sigma: float
    converged: bool
    rss: float
    n_iter: int
    cov: Optional[List[List[float]]] = None


class FitFile(BaseModel):
    schema_version: str = SCHEMA_VERSION
    curve: str
    ar1: bool
    times: List[float]
    fits: List[SubjectFitRecord]
    warnings: List[str] = []


# --- report.json ---

class Interval(BaseModel):
    start: float
    end: float


class AdjustedAlphaRecord(BaseModel):
    alpha: float
    alpha_star: float
    rho: float
    T: int


class PermutationRecord(BaseModel):
    threshold: float
    p_value: float
    n_permutations: int
    redraw_observed: bool = False


class AnalysisReport(BaseModel):
    schema_version: str = SCHEMA_VERSION
    method: str
    paired: bool
    alpha: float
    seed: int
    groups: List[str]
    times: List[float]
    stats: List[float]
    threshold: float
    adjusted_alpha: Optional[AdjustedAlphaRecord] = None
    permutation: Optional[PermutationRecord] = None
    intervals: List[Interval]


# --- scenario.json ---

class DistributionConfig(BaseModel):
    """Group-level parameter distribution with independent components."""
    model_config = ConfigDict(extra="forbid")

    curve: str = "logistic4"
    description: Optional[str] = None
    mu: Dict[str, float]
    sd: Dict[str, float]

    @model_validator(mode="after")
    def _same_parameters(self):
        if set(self.mu) != set(self.sd):
            raise ValueError("mu and sd must name the same parameters")
        if any(v < 0 for v in self.sd.values()):
            raise ValueError("sd entries must be non-negative")
        return self


class GridConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    start: float
    stop: float
    n_points: int = Field(ge=10)

    @model_validator(mode="after")
    def _ordered(self):
        if self.stop <= self.start:
            raise ValueError("grid stop must exceed start")
        return self


class SimScenario(BaseModel):
    """One cell of the simulation factorial."""
    model_config = ConfigDict(extra="forbid")

    kind: str = "fwer_logistic"
    name: Optional[str] = None
    heterogeneous: bool = True
    ar1_error: bool = True
    ar1_fit: bool = True
    paired: str = "none"
    noise_scale: float = Field(default=0.05, gt=0)
    methods: List[str] = list(METHODS)
    n_subjects: int = Field(default=25, ge=3)
    grid: Optional[GridConfig] = None
    replicates: int = Field(default=200, ge=1)
    alpha: float = Field(default=0.05, gt=0, lt=1)
    seed: int = 0
    B: int = Field(default=1000, ge=100)
    P: int = Field(default=1000, ge=100)
    phi: float = Field(default=0.8, ge=0, lt=1)
    sigma: float = Field(default=0.025, gt=0)
    trials: int = Field(default=1, ge=1)
    distribution: Optional[DistributionConfig] = None
    # piecewise power cell
    slope_mean: float = 0.25
    slope_sd: float = Field(default=0.05, ge=0)
    baseline_sd: float = Field(default=0.05, ge=0)
    # crossover-shift power cell
    shift: float = 150.0
    crossover_sd: float = Field(default=120.0, ge=0)
    # replicate retention
    min_converged: float = Field(default=0.8, gt=0, le=1)
    max_redraws: int = Field(default=10, ge=0)

    @field_validator("paired")
    @classmethod
    def _known_pairing(cls, v):
        if v not in PAIRINGS:
            raise ValueError(f"paired must be one of {', '.join(PAIRINGS)}")
        return v

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, v):
        unknown = [m for m in v if m not in METHODS]
        if unknown or not v:
            raise ValueError(f"methods must be a non-empty subset of {', '.join(METHODS)}")
        return v

    @model_validator(mode="after")
    def _pairing_needs_heterogeneity(self):
        # identical-parameter pairing is its own cell even under homogeneous means
        if self.paired == "noisy" and not self.heterogeneous:
            raise ValueError("noisy pairing is only defined under heterogeneous means")
        return self


class ScenarioFile(BaseModel):
    scenarios: List[SimScenario]


# --- simulation report ---

class PowerRecord(BaseModel):
    alpha: float
    beta: float
    power: float
    onset_q1: Optional[float] = None
    onset_median: Optional[float] = None
    onset_q3: Optional[float] = None


class MethodReport(BaseModel):
    method: str
    fwer: float
    median_pcer: float
    per_time_rate: List[float]
    power: Optional[PowerRecord] = None
    degenerate_replicates: int = 0


class ReplicateRow(BaseModel):
    replicate: int
    method: str
    null_detection: bool
    any_detection: bool
    onset: Optional[float] = None
    n_significant: int


class SimReport(BaseModel):
    schema_version: str = SCHEMA_VERSION
    scenario: SimScenario
    times: List[float]
    replicates: int
    nonconverged_subjects: int
    redrawn_replicates: int
    methods: Dict[str, MethodReport]
    replicate_rows: List[ReplicateRow] = []
