"""Individual-DP sign mechanisms for one fixed data vector.

Only projections whose sign some beta-neighbor of u could change (the set A)
are perturbed. A is derived from u and is never written to provenance.
"""

import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy import special

from ..core.projections import ProjectionOperator, materialize, sign_with_zero_flags
from ..core.randomness import RngStream, as_generator
from ..exceptions import DataValidationError, PreconditionError, UnsupportedMechanismError
from ..models import (
    DataVector, FlipDerivation, FlipPlan, NoiseDistribution, NoiseIndicatorSet, PrivacyBudget,
    ProjectionKind, ProjectionSpec, Sketch, SketchProvenance
)
from .calibration import optimal_gaussian_sigma
from .dp_sign import apply_flip_plan, keep_probability, output_probabilities

logger = logging.getLogger(__name__)


def noise_indicators(x: Union[Sketch, np.ndarray], beta: float, k: int,
                     column_max: Optional[np.ndarray] = None,
                     gaussian_threshold: bool = False) -> NoiseIndicatorSet:
    """I_j = 1 iff beta/sqrt(k) >= |x_j|.

    With ``gaussian_threshold`` the per-projection threshold is beta times
    ``column_max`` (max_i |W_ij| / sqrt(k), in the sketch's scaling).
    """
    if isinstance(x, Sketch):
        provenance = x.provenance
        if x.is_sign:
            raise PreconditionError("noise indicators need the real-valued projection, not signs")
        if provenance.projection_kind == ProjectionKind.GAUSSIAN and not gaussian_threshold:
            raise UnsupportedMechanismError("Gaussian projections need gaussian_threshold=True")
        if provenance.projection_kind not in (ProjectionKind.VERY_SPARSE, ProjectionKind.GAUSSIAN) \
                or not provenance.scaled:
            raise UnsupportedMechanismError(
                f"noise indicators need a scaled Rademacher projection, got {provenance.projection_kind}")
        # Entries of size sqrt(s)/sqrt(k) exceed the beta/sqrt(k) threshold
        if provenance.projection_kind == ProjectionKind.VERY_SPARSE and provenance.sparsity != 1.0:
            raise UnsupportedMechanismError(
                f"noise indicators need a Rademacher projection (sparsity 1), got sparsity {provenance.sparsity}")
        values = x.payload
    else:
        values = np.asarray(x, dtype=np.float64)
    if values.size != k:
        raise DataValidationError(f"dimension mismatch: sketch length {values.size}, expected k={k}")

    if gaussian_threshold:
        if column_max is None:
            raise PreconditionError("gaussian_threshold needs the column maxima of the projection")
        threshold = beta * np.asarray(column_max, dtype=np.float64)
    else:
        threshold = beta / math.sqrt(k)
    return NoiseIndicatorSet(indicators=threshold >= np.abs(values))


def sign_changeable_count(matrix: np.ndarray, u: np.ndarray, beta: float) -> int:
    """Projections whose sign a worst-case beta-neighbor of u can change.

    ``matrix`` is the scaled p x k embedding. Sign j can change iff moving one
    coordinate by at most beta can reach the other side of zero (or zero itself).
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    projected = np.asarray(u, dtype=np.float64) @ matrix
    reach = beta * np.max(np.abs(matrix), axis=0)
    return int(np.count_nonzero(reach >= np.abs(projected)))


class IdpMechanism:
    """Shared plumbing: projection, indicator set and provenance."""

    name = "idp"

    def __init__(self, spec: ProjectionSpec, budget: PrivacyBudget, allow_gaussian: bool = False,
                 operator: Optional[ProjectionOperator] = None):
        if spec.kind == ProjectionKind.GAUSSIAN:
            if not allow_gaussian:
                raise UnsupportedMechanismError("iDP on Gaussian projections requires allow_gaussian")
        elif not spec.is_rademacher:
            raise UnsupportedMechanismError(f"iDP mechanisms need a Rademacher projection, got {spec.kind.value}")
        self.spec = spec
        self.budget = budget
        self.gaussian_threshold = spec.kind == ProjectionKind.GAUSSIAN
        self.operator = operator or materialize(spec)
        self.column_max = self.operator.column_max_abs() if self.gaussian_threshold else None

    def indicators(self, projected: np.ndarray) -> NoiseIndicatorSet:
        return noise_indicators(projected, self.budget.beta, self.spec.k, column_max=self.column_max,
                                gaussian_threshold=self.gaussian_threshold)

    def project_values(self, values: np.ndarray) -> np.ndarray:
        return self.operator.project_array(values)

    def _check_dimension(self, u: DataVector) -> None:
        if u.p != self.spec.p:
            raise DataValidationError(f"dimension mismatch: got {u.p}, expected {self.spec.p}")

    def _provenance(self, seed, row_id, **fields) -> SketchProvenance:
        return SketchProvenance(mechanism=self.name, spec_digest=self.spec.digest(),
                                projection_kind=self.spec.kind, scaled=True,
                                sparsity=self.spec.recorded_sparsity, private=True,
                                epsilon=self.budget.epsilon, delta=self.budget.delta,
                                beta=self.budget.beta, seed=seed, row_id=row_id, **fields)


class IdpSignRPGaussian(IdpMechanism):
    """iDP-SignRP-G: Gaussian noise on the projections in A only."""

    name = "idp:g"

    def __init__(self, spec: ProjectionSpec, budget: PrivacyBudget, allow_gaussian: bool = False,
                 operator: Optional[ProjectionOperator] = None):
        if not 0.0 < budget.delta < 1.0:
            raise PreconditionError(f"iDP-SignRP-G needs 0 < delta < 1 (delta={budget.delta})")
        super().__init__(spec, budget, allow_gaussian, operator)

    def sensitivity(self, indicator_set: NoiseIndicatorSet) -> float:
        """Delta_2 restricted to A: beta sqrt(N/k) for Rademacher projections."""
        if not self.gaussian_threshold:
            return self.budget.beta * math.sqrt(indicator_set.n_plus / self.spec.k)
        restricted = self.operator.embedding[:, indicator_set.indicators]
        return self.budget.beta * float(np.max(np.linalg.norm(restricted, axis=1)))

    def calibrate(self, values: np.ndarray) -> Tuple[np.ndarray, NoiseIndicatorSet, Optional[float]]:
        projected = self.project_values(values)
        indicator_set = self.indicators(projected)
        if indicator_set.n_plus == 0:
            return projected, indicator_set, None
        sigma = optimal_gaussian_sigma(self.sensitivity(indicator_set), self.budget.epsilon, self.budget.delta)
        return projected, indicator_set, sigma

    def output_probabilities(self, values: np.ndarray, reference: Optional[np.ndarray] = None) -> np.ndarray:
        """Pr(bit = +1) for ``values`` with A and sigma fixed by ``reference``."""
        values = np.asarray(values, dtype=np.float64)
        _, indicator_set, sigma = self.calibrate(values if reference is None else reference)
        projected = self.project_values(values)
        exact = np.where(projected >= 0, 1.0, 0.0)
        if sigma is None:
            return exact
        return np.where(indicator_set.indicators, special.ndtr(projected / sigma), exact)

    def expected_flip_fraction(self, values: np.ndarray) -> float:
        projected, indicator_set, sigma = self.calibrate(np.asarray(values, dtype=np.float64))
        if sigma is None:
            return 0.0
        flips = np.where(indicator_set.indicators, special.ndtr(-np.abs(projected) / sigma), 0.0)
        return float(np.mean(flips))

    def privatize(self, u: DataVector, rng, row_id: Optional[str] = None) -> Sketch:
        self._check_dimension(u)
        projected, indicator_set, sigma = self.calibrate(u.values)
        generator = as_generator(rng)
        # Draw for every projection so the number of draws does not depend on A
        noise = generator.standard_normal(self.spec.k)
        noisy = projected.copy()
        if sigma is not None:
            noisy[indicator_set.indicators] += sigma * noise[indicator_set.indicators]
        signs, _ = sign_with_zero_flags(noisy)
        seed = rng.seed if isinstance(rng, RngStream) else None
        provenance = self._provenance(seed, row_id, n_plus=indicator_set.n_plus,
                                      noise_distribution=NoiseDistribution.GAUSSIAN if sigma else None,
                                      noise_scale=sigma, noise_std=sigma,
                                      vacuous_budget=indicator_set.n_plus == 0)
        return Sketch(payload=signs, is_sign=True, provenance=provenance)


class IdpSignRPRandomizedResponse(IdpMechanism):
    """iDP-SignRP-RR: bits in A flipped with probability 1/(e^(eps/N)+1); pure eps-iDP."""

    name = "idp:rr"

    def flip_plan(self, values: np.ndarray, reference: Optional[np.ndarray] = None) -> Tuple[np.ndarray, FlipPlan]:
        projected = self.project_values(values)
        signs, _ = sign_with_zero_flags(projected)
        basis = projected if reference is None else self.project_values(reference)
        indicator_set = self.indicators(basis)
        eps = np.full(self.spec.k, np.inf)
        if indicator_set.n_plus > 0:
            eps[indicator_set.indicators] = self.budget.epsilon / indicator_set.n_plus
        plan = FlipPlan(keep_probabilities=keep_probability(eps), eps_prime=eps,
                        derivation=FlipDerivation.IDP_RR, coin_mask=np.zeros(self.spec.k, dtype=bool))
        return signs, plan

    def output_probabilities(self, values: np.ndarray, reference: Optional[np.ndarray] = None) -> np.ndarray:
        """Pr(bit = +1) for ``values`` with A and eps' fixed by ``reference``."""
        values = np.asarray(values, dtype=np.float64)
        reference = None if reference is None else np.asarray(reference, dtype=np.float64)
        signs, plan = self.flip_plan(values, reference)
        return output_probabilities(signs, plan)

    def expected_flip_fraction(self, values: np.ndarray) -> float:
        _, plan = self.flip_plan(np.asarray(values, dtype=np.float64))
        return float(np.mean(plan.flip_probabilities))

    def privatize(self, u: DataVector, rng, row_id: Optional[str] = None) -> Sketch:
        self._check_dimension(u)
        signs, plan = self.flip_plan(u.values)
        noisy = apply_flip_plan(signs, plan, as_generator(rng))
        n_plus = int(np.count_nonzero(np.isfinite(plan.eps_prime)))
        eps_prime = self.budget.epsilon / n_plus if n_plus else None
        if not n_plus:
            logger.debug("No sign of this row can change; output is exact")
        seed = rng.seed if isinstance(rng, RngStream) else None
        provenance = self._provenance(seed, row_id, n_plus=n_plus, eps_prime=eps_prime,
                                      vacuous_budget=n_plus == 0)
        return Sketch(payload=noisy, is_sign=True, provenance=provenance)


def _rademacher_spec(u: DataVector, k: int, spec: Optional[ProjectionSpec]) -> ProjectionSpec:
    if spec is not None:
        return spec
    return ProjectionSpec.rademacher(p=u.p, k=k)


def idp_signrp_g(u: DataVector, budget: PrivacyBudget, k: int, rng,
                 spec: Optional[ProjectionSpec] = None, allow_gaussian: bool = False) -> Sketch:
    return IdpSignRPGaussian(_rademacher_spec(u, k, spec), budget, allow_gaussian).privatize(u, rng)


def idp_signrp_rr(u: DataVector, budget: PrivacyBudget, k: int, rng,
                  spec: Optional[ProjectionSpec] = None, allow_gaussian: bool = False) -> Sketch:
    return IdpSignRPRandomizedResponse(_rademacher_spec(u, k, spec), budget, allow_gaussian).privatize(u, rng)
