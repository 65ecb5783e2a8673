"""Data models for the DPRP toolkit."""

import difflib
import hashlib
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import MECHANISM_FAMILIES, R_GRID, settings
from .exceptions import DataValidationError, PreconditionError


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class ProjectionKind(str, Enum):
    """Distributions of the public projection operator."""
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    VERY_SPARSE = "very_sparse"
    OPORP = "oporp"


class MechanismFamily(str, Enum):
    """Mechanism families exposed by the toolkit."""
    DP_RP = "dp_rp"
    SIGN = "sign"
    IDP = "idp"
    BASELINE = "baseline"


class SensitivityMode(str, Enum):
    """How a dense-projection sensitivity is obtained."""
    EXACT = "exact"
    ANALYTIC = "analytic"


class SensitivityBasis(str, Enum):
    """Provenance of a sensitivity value."""
    EXACT_FROM_MATRIX = "exact_from_matrix"
    CLOSED_FORM = "closed_form"
    HIGH_PROBABILITY_BOUND = "high_probability_bound"


class NoiseDistribution(str, Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"


class FlipDerivation(str, Enum):
    """How per-bit keep probabilities were derived."""
    RR = "rr"
    SMOOTH = "smooth"
    OPORP_RR = "oporp_rr"
    OPORP_SMOOTH = "oporp_smooth"
    IDP_RR = "idp_rr"


class NPlusFlavor(str, Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"


class PrivacyScope(str, Enum):
    """What an audit certifies."""
    DP_PER_BIT = "dp_per_bit"
    DP_COMPOSED = "dp_composed"
    IDP = "idp"


class ViolationKind(str, Enum):
    OUT_OF_BOUND = "out of bound"
    ZERO_NORM = "zero-norm row"
    DIMENSION_MISMATCH = "dimension mismatch"


class DataVector(BaseModel):
    """A dense data vector with entries in [-C, C] and nonzero norm."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray = Field(description="Entries of the vector (length p)")
    bound: float = Field(default=1.0, gt=0, description="Entry bound C")

    @field_validator("values", mode="before")
    @classmethod
    def _coerce_values(cls, value: Any) -> np.ndarray:
        array = np.array(value, dtype=np.float64)
        if array.ndim != 1 or array.size == 0:
            raise ValueError("values must be a nonempty one-dimensional sequence")
        if not np.all(np.isfinite(array)):
            raise ValueError("values must be finite")
        return _readonly(array)

    @model_validator(mode="after")
    def _check_invariants(self) -> "DataVector":
        worst = float(np.max(np.abs(self.values)))
        if worst > self.bound:
            raise ValueError(f"entry {worst} out of bound C={self.bound}")
        if not np.any(self.values):
            raise ValueError("zero-norm vector")
        return self

    @property
    def p(self) -> int:
        return int(self.values.size)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


class Dataset(BaseModel):
    """Rows of data vectors sharing one bound C.

    Construction does not enforce the row invariants; ``validate_dataset``
    reports violations so that ingestion errors can be listed per row.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rows: List[np.ndarray] = Field(description="Row vectors")
    bound: float = Field(default=1.0, gt=0, description="Entry bound C")
    row_ids: Optional[List[str]] = Field(default=None, description="Optional row identifiers")

    @field_validator("rows", mode="before")
    @classmethod
    def _coerce_rows(cls, value: Any) -> List[np.ndarray]:
        if isinstance(value, np.ndarray) and value.ndim == 2:
            value = list(value)
        rows = []
        for row in value:
            array = np.array(row, dtype=np.float64).ravel()
            rows.append(_readonly(array))
        if not rows:
            raise ValueError("dataset has no rows")
        return rows

    @model_validator(mode="after")
    def _check_ids(self) -> "Dataset":
        if self.row_ids is not None and len(self.row_ids) != len(self.rows):
            raise ValueError("row_ids length does not match number of rows")
        return self

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, bound: float = 1.0,
                    row_ids: Optional[List[str]] = None) -> "Dataset":
        return cls(rows=np.asarray(matrix, dtype=np.float64), bound=bound, row_ids=row_ids)

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def p(self) -> int:
        return int(self.rows[0].size)

    @property
    def matrix(self) -> np.ndarray:
        if any(row.size != self.p for row in self.rows):
            raise DataValidationError("dataset rows have mismatched dimensions")
        return np.vstack(self.rows)

    def ids(self) -> List[str]:
        return self.row_ids if self.row_ids is not None else [str(i) for i in range(self.n)]

    def vector(self, index: int) -> DataVector:
        return DataVector(values=self.rows[index], bound=self.bound)


class RowViolation(BaseModel):
    """A single data-model violation found during validation."""
    row: int = Field(description="Row index")
    kind: ViolationKind = Field(description="Violation kind")
    detail: str = Field(default="", description="Human-readable detail")


class ValidationReport(BaseModel):
    """Outcome of dataset validation."""
    valid: bool = Field(description="True iff no violations were found")
    n_rows: int = Field(description="Number of rows inspected")
    violations: List[RowViolation] = Field(default=[], description="Per-row violations")

    def raise_if_invalid(self) -> None:
        if not self.valid:
            head = "; ".join(f"row {v.row}: {v.kind.value} {v.detail}".strip() for v in self.violations[:5])
            raise DataValidationError(f"{len(self.violations)} violation(s): {head}")


class PrivacyBudget(BaseModel):
    """(epsilon, delta) with the adjacency bound beta and repetitions t."""
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(gt=0, allow_inf_nan=False, description="Privacy parameter epsilon")
    delta: float = Field(default=0.0, ge=0, lt=1, description="Privacy parameter delta")
    beta: float = Field(default=1.0, gt=0, allow_inf_nan=False, description="Adjacency bound")
    repetitions: int = Field(default=1, ge=1, description="Independent repetitions t")

    @property
    def is_pure(self) -> bool:
        return self.delta == 0.0

    def require_pure(self, mechanism: str) -> None:
        if not self.is_pure:
            raise PreconditionError(f"{mechanism} is a pure epsilon-DP mechanism and requires delta=0")

    def split(self, parts: int) -> "PrivacyBudget":
        """Budget of one of ``parts`` equal shares."""
        return PrivacyBudget(epsilon=self.epsilon / parts, delta=self.delta / parts,
                             beta=self.beta, repetitions=1)


class ProjectionSpec(BaseModel):
    """Deterministic description of a public projection operator."""
    model_config = ConfigDict(frozen=True)

    kind: ProjectionKind = Field(description="Entry distribution or OPORP")
    p: int = Field(ge=1, description="Input dimension")
    k: int = Field(ge=1, description="Number of projections / bins")
    seed: int = Field(default=0, ge=0, lt=2**64, description="Seed of the projection stream")
    sparsity: float = Field(default=1.0, ge=1.0, description="s for very_sparse entries")

    @model_validator(mode="after")
    def _check_kind(self) -> "ProjectionSpec":
        if self.kind == ProjectionKind.OPORP and self.k > self.p:
            raise ValueError(f"oporp requires k <= p (k={self.k}, p={self.p})")
        return self

    @classmethod
    def rademacher(cls, p: int, k: int, seed: int = 0) -> "ProjectionSpec":
        return cls(kind=ProjectionKind.VERY_SPARSE, p=p, k=k, seed=seed, sparsity=1.0)

    @property
    def is_rademacher(self) -> bool:
        return self.kind == ProjectionKind.VERY_SPARSE and self.sparsity == 1.0

    @property
    def is_scaled(self) -> bool:
        """Dense projections carry the 1/sqrt(k) factor, OPORP does not."""
        return self.kind != ProjectionKind.OPORP

    @property
    def recorded_sparsity(self) -> Optional[float]:
        return self.sparsity if self.kind == ProjectionKind.VERY_SPARSE else None

    @property
    def fourth_moment(self) -> float:
        """E[w^4] of a single projection entry."""
        if self.kind == ProjectionKind.GAUSSIAN:
            return 3.0
        if self.kind == ProjectionKind.UNIFORM:
            return 9.0 / 5.0
        if self.kind == ProjectionKind.VERY_SPARSE:
            return float(self.sparsity)
        return 1.0

    def digest(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()[:16]


class Sensitivity(BaseModel):
    """l1 and l2 sensitivities and how they were obtained."""
    model_config = ConfigDict(frozen=True)

    l1: float = Field(ge=0, description="Delta_1")
    l2: float = Field(ge=0, description="Delta_2")
    basis: SensitivityBasis = Field(description="How the values were computed")
    delta_share: float = Field(default=0.0, ge=0, lt=1, description="Failure probability of a bound")

    @model_validator(mode="after")
    def _check_norms(self) -> "Sensitivity":
        if self.l2 > self.l1 * (1 + 1e-12) + 1e-15:
            raise ValueError(f"l2 sensitivity {self.l2} exceeds l1 sensitivity {self.l1}")
        return self


class NoiseCalibration(BaseModel):
    """Noise distribution and scale that realize an (epsilon, delta) guarantee."""
    model_config = ConfigDict(frozen=True)

    distribution: NoiseDistribution = Field(description="Gaussian or Laplace")
    scale: float = Field(gt=0, description="sigma for Gaussian, lambda for Laplace")
    epsilon: float = Field(gt=0)
    delta: float = Field(ge=0, lt=1)
    sensitivity: Sensitivity = Field(description="Sensitivity the scale was calibrated for")

    @model_validator(mode="after")
    def _check_laplace(self) -> "NoiseCalibration":
        if self.distribution == NoiseDistribution.LAPLACE and self.delta != 0:
            raise ValueError("laplace calibration requires delta=0")
        return self

    @property
    def noise_std(self) -> float:
        if self.distribution == NoiseDistribution.LAPLACE:
            return float(np.sqrt(2.0) * self.scale)
        return self.scale


class SketchProvenance(BaseModel):
    """Everything needed to interpret and combine a sketch."""
    model_config = ConfigDict(frozen=True)

    mechanism: str = Field(description="Mechanism name, e.g. dp_rp:rp_g_opt")
    spec_digest: Optional[str] = Field(default=None, description="ProjectionSpec digest (None for raw data)")
    projection_kind: Optional[ProjectionKind] = Field(default=None)
    scaled: bool = Field(default=True, description="Whether the 1/sqrt(k) factor is applied")
    sparsity: Optional[float] = Field(default=None, description="s of a very_sparse projection")
    private: bool = Field(default=True)
    epsilon: Optional[float] = Field(default=None)
    delta: Optional[float] = Field(default=None)
    beta: Optional[float] = Field(default=None)
    repetitions: int = Field(default=1)
    noise_distribution: Optional[NoiseDistribution] = Field(default=None)
    noise_scale: Optional[float] = Field(default=None, description="sigma or lambda")
    noise_std: Optional[float] = Field(default=None)
    sensitivity_l1: Optional[float] = Field(default=None)
    sensitivity_l2: Optional[float] = Field(default=None)
    sensitivity_basis: Optional[SensitivityBasis] = Field(default=None)
    n_plus: Optional[int] = Field(default=None, description="N+ or the iDP count")
    n_plus_capped: bool = Field(default=False, description="N+ fell back to k")
    eps_prime: Optional[float] = Field(default=None, description="Uniform per-bit epsilon when defined")
    lj_histogram: Optional[Dict[int, int]] = Field(default=None)
    zero_flags: List[int] = Field(default=[], description="Indices of exact zero projections")
    vacuous_budget: bool = Field(default=False)
    seed: Optional[int] = Field(default=None)
    row_id: Optional[str] = Field(default=None)


class Sketch(BaseModel):
    """A real-valued or sign sketch with its provenance."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    payload: np.ndarray = Field(description="Real vector or +/-1 vector")
    is_sign: bool = Field(default=False)
    provenance: SketchProvenance

    @model_validator(mode="before")
    @classmethod
    def _coerce_payload(cls, data: Any) -> Any:
        if isinstance(data, dict) and "payload" in data:
            dtype = np.int8 if data.get("is_sign") else np.float64
            data = {**data, "payload": _readonly(np.array(data["payload"], dtype=dtype))}
        return data

    @model_validator(mode="after")
    def _check_payload(self) -> "Sketch":
        if self.payload.ndim != 1:
            raise ValueError("payload must be one-dimensional")
        if self.is_sign and not np.all(np.abs(self.payload) == 1):
            raise ValueError("sign payload may only contain -1 and +1")
        return self

    @property
    def k(self) -> int:
        return int(self.payload.size)


class FlipPlan(BaseModel):
    """Per-bit keep probabilities of a randomized-response step."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    keep_probabilities: np.ndarray = Field(description="Probability of keeping each sign")
    eps_prime: np.ndarray = Field(description="Per-bit epsilon (inf for exact bits)")
    derivation: FlipDerivation
    coin_mask: np.ndarray = Field(description="Bits emitted as a fair coin (empty OPORP bins)")
    lj: Optional[np.ndarray] = Field(default=None, description="Smooth multipliers L_j")

    @model_validator(mode="after")
    def _check_probabilities(self) -> "FlipPlan":
        keep = self.keep_probabilities
        if keep.shape != self.coin_mask.shape or keep.shape != self.eps_prime.shape:
            raise ValueError("flip plan arrays must share one shape")
        if np.any(keep[~self.coin_mask] <= 0.5) or np.any(keep > 1.0):
            raise ValueError("keep probabilities must lie in (1/2, 1]")
        return self

    @property
    def flip_probabilities(self) -> np.ndarray:
        return 1.0 - self.keep_probabilities


class NoiseIndicatorSet(BaseModel):
    """Projections whose sign some beta-neighbor could change."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    indicators: np.ndarray = Field(description="Boolean I_j per projection")

    @property
    def active(self) -> np.ndarray:
        """The set A as sorted indices."""
        return np.flatnonzero(self.indicators)

    @property
    def n_plus(self) -> int:
        return int(np.count_nonzero(self.indicators))


class TailBoundResult(BaseModel):
    """A tail threshold and the probability bound beyond it."""
    threshold: float = Field(description="Threshold value")
    probability: float = Field(ge=0, le=1, description="Upper bound on the exceedance probability")


class ProbabilityEstimate(BaseModel):
    """An approximate probability with an optional accuracy warning."""
    value: float = Field(ge=0, le=1)
    method: str = Field(description="How the value was obtained")
    warning: Optional[str] = Field(default=None)


class NPlusBound(BaseModel):
    """Bound on the number of signs one neighbor change can affect."""
    value: int = Field(ge=0, description="Integer bound, at most k")
    k: int = Field(ge=1)
    f: Optional[float] = Field(default=None, description="Per-projection probability F")
    capped: bool = Field(default=False, description="Bound reached the trivial cap k")
    precondition_violated: bool = Field(default=False, description="beta exceeded the norm")


class EstimateReport(BaseModel):
    """A similarity estimate with its theoretical variance."""
    estimate: float = Field(description="Point estimate")
    theoretical_variance: Optional[float] = Field(default=None, ge=0,
                                                  description="None when unavailable")
    estimator_id: str = Field(description="Estimator name")
    inputs_digest: str = Field(description="Digest of the input sketches")
    flags: List[str] = Field(default=[], description="Warnings such as outside_range")


# Variants that are pure epsilon-DP (or epsilon-iDP); their delta defaults to 0
PURE_VARIANTS = {
    ("dp_rp", "rp_l"),
    ("sign", "rr_smooth"),
    ("sign", "oporp_rr"),
    ("sign", "oporp_rr_smooth"),
    ("idp", "rr"),
}


class MechanismConfig(BaseModel):
    """Selection and parameters of one privatization mechanism."""

    family: MechanismFamily = Field(default=MechanismFamily.DP_RP)
    variant: str = Field(description="Variant name within the family")
    epsilon: float = Field(gt=0, allow_inf_nan=False)
    delta: float = Field(default_factory=lambda: settings.default_delta, ge=0, lt=1)
    beta: float = Field(default_factory=lambda: settings.default_beta, gt=0)
    repetitions: int = Field(default_factory=lambda: settings.default_repetitions, ge=1)
    k: int = Field(default=256, ge=1, description="Sketch length")
    kind: ProjectionKind = Field(default=ProjectionKind.GAUSSIAN)
    sparsity: float = Field(default=1.0, ge=1.0)
    norm_lower_bound: float = Field(default=0.0, ge=0, description="m for DP-SignRP-RR")
    sensitivity_mode: SensitivityMode = Field(default=SensitivityMode.EXACT)
    allow_gaussian: bool = Field(default=False, description="Permit Gaussian projections for iDP")

    @model_validator(mode="before")
    @classmethod
    def _pure_variants_default_delta(cls, data: Any) -> Any:
        if isinstance(data, dict) and "delta" not in data:
            family = data.get("family", MechanismFamily.DP_RP.value)
            family = family.value if isinstance(family, MechanismFamily) else str(family)
            if (family, data.get("variant")) in PURE_VARIANTS:
                data = {**data, "delta": 0.0}
        return data

    @model_validator(mode="after")
    def _check_variant(self) -> "MechanismConfig":
        known = MECHANISM_FAMILIES[self.family.value]
        if self.variant not in known:
            everything = [v for variants in MECHANISM_FAMILIES.values() for v in variants]
            suggestions = difflib.get_close_matches(self.variant, everything, n=3, cutoff=0.3)
            hint = f"; did you mean: {', '.join(suggestions)}" if suggestions else ""
            raise ValueError(f"unknown {self.family.value} variant '{self.variant}'{hint}; "
                             f"valid: {', '.join(known)}")
        return self

    @property
    def name(self) -> str:
        return f"{self.family.value}:{self.variant}"

    @property
    def is_sign(self) -> bool:
        return self.family in (MechanismFamily.SIGN, MechanismFamily.IDP) or self.variant == "signrp_plain"

    def budget(self) -> PrivacyBudget:
        return PrivacyBudget(epsilon=self.epsilon, delta=self.delta, beta=self.beta,
                             repetitions=self.repetitions)

    def projection_spec(self, p: int, seed: int) -> Optional[ProjectionSpec]:
        """Public projection for this mechanism, None for raw-data noise."""
        if self.family == MechanismFamily.DP_RP and self.variant == "raw_g_opt":
            return None
        if self.family == MechanismFamily.IDP or self.variant == "rp_g_opt_b":
            if self.family == MechanismFamily.IDP and self.allow_gaussian and self.kind == ProjectionKind.GAUSSIAN:
                return ProjectionSpec(kind=ProjectionKind.GAUSSIAN, p=p, k=self.k, seed=seed)
            return ProjectionSpec.rademacher(p=p, k=self.k, seed=seed)
        if self.variant in ("oporp", "oporp_rr", "oporp_rr_smooth"):
            return ProjectionSpec(kind=ProjectionKind.OPORP, p=p, k=self.k, seed=seed)
        return ProjectionSpec(kind=self.kind, p=p, k=self.k, seed=seed, sparsity=self.sparsity)


class RunConfig(MechanismConfig):
    """A JSON run configuration: one mechanism plus benchmark grids."""

    seed: int = Field(default_factory=lambda: settings.default_seed, ge=0, lt=2**64)
    n_seeds: int = Field(default=10, ge=1, description="Benchmark repetitions")
    epsilons: Optional[List[float]] = Field(default=None, description="Epsilon grid (defaults to [epsilon])")
    ks: Optional[List[int]] = Field(default=None, description="Sketch-length grid (defaults to [k])")
    compare: List[MechanismConfig] = Field(default=[], description="Further mechanisms to benchmark")
    r_grid: List[int] = Field(default_factory=lambda: list(R_GRID))
    gold_size: int = Field(default_factory=lambda: settings.gold_standard_size, ge=1)
    database: Optional[str] = Field(default=None, description="Dataset path; synthetic data when absent")
    queries: Optional[str] = Field(default=None)
    n_database: int = Field(default=2000, ge=1)
    n_queries: int = Field(default=200, ge=1)
    p: int = Field(default=256, ge=1)
    norms: List[float] = Field(default=[1.0, 5.0, 10.0])
    knn_neighbors: int = Field(default=5, ge=1)

    @field_validator("epsilons")
    @classmethod
    def _positive_epsilons(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and any(eps <= 0 for eps in value):
            raise ValueError("every epsilon must be positive")
        return value

    def mechanisms(self) -> List[MechanismConfig]:
        head = MechanismConfig(**self.model_dump(include=set(MechanismConfig.model_fields)))
        return [head] + list(self.compare)


class RetrievalTask(BaseModel):
    """Database, queries and exact-cosine gold neighbors."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    database: Dataset
    queries: Dataset
    gold_size: int = Field(default_factory=lambda: settings.gold_standard_size, ge=1)
    r_grid: List[int] = Field(default_factory=lambda: list(R_GRID))
    gold: Optional[List[List[int]]] = Field(default=None, description="Gold row indices per query")


class AuditCase(BaseModel):
    """A small instance, a mechanism and the guarantee it claims."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    u: DataVector
    mechanism: MechanismConfig
    spec_seed: int = Field(default=0, ge=0, lt=2**64)
    scope: PrivacyScope = Field(default=PrivacyScope.DP_PER_BIT)
    grid_points: int = Field(default_factory=lambda: settings.audit_grid_points, ge=2)
    coordinates: Optional[List[int]] = Field(default=None, description="Coordinates to perturb (all by default)")
    mutation: Optional[str] = Field(default=None, description="Deliberate defect injected for mutation tests")


class AuditReport(BaseModel):
    """Worst-case outcome of an audit over all neighbors."""
    mechanism: str
    scope: PrivacyScope
    claimed_epsilon: float
    claimed_delta: float
    passed: bool
    margin: float = Field(description="Worst violation margin; PASS iff <= tolerance")
    max_log_ratio: float = Field(description="Largest observed privacy loss")
    worst_coordinate: Optional[int] = None
    worst_perturbation: Optional[float] = None
    n_neighbors: int = 0
    mutation: Optional[str] = None
    notes: List[str] = Field(default=[])


class OracleResult(BaseModel):
    """Monte Carlo estimate with its standard error."""
    target: str
    params: Dict[str, Any] = Field(default={})
    estimate: float
    standard_error: float = Field(ge=0)
    n: int


class RunManifest(BaseModel):
    """Provenance record written next to every run's outputs."""
    tool_version: str
    subcommand: str
    config: Dict[str, Any] = Field(default={})
    seeds: List[int] = Field(default=[])
    input_digests: Dict[str, str] = Field(default={})
    output_digests: Dict[str, str] = Field(default={})
    wall_clock: float = Field(description="Elapsed seconds")
    created_at: datetime = Field(default_factory=datetime.now)


class PrivatizationResult(BaseModel):
    """Result of privatizing a dataset."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    success: bool = Field(description="Whether every row was privatized")
    sketches: List[Sketch] = Field(default=[], description="Per-row sketches")
    failed_rows: List[int] = Field(default=[])
    error_message: Optional[str] = Field(default=None)
    processing_time: float = Field(description="Processing time in seconds")

    def payload_matrix(self) -> np.ndarray:
        return np.vstack([sketch.payload for sketch in self.sketches])
