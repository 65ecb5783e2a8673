"""Sign-output DP mechanisms built on randomized response.

Each mechanism turns a data vector into exact signs plus a ``FlipPlan``; the
plan holds the per-bit keep probabilities, so the same code path drives
sampling (``privatize``) and the exact output distribution used by audits
(``output_probabilities``).
"""

import logging
import math
from collections import Counter
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import special

from ..analysis.analytic import n_plus_bound
from ..core.projections import ProjectionOperator, materialize, sign_with_zero_flags
from ..core.randomness import RngStream, as_generator
from ..exceptions import DataValidationError, PreconditionError, UnsupportedMechanismError
from ..models import (
    DataVector, FlipDerivation, FlipPlan, NPlusFlavor, PrivacyBudget, ProjectionKind,
    ProjectionSpec, Sketch, SketchProvenance
)
from .calibration import PrivacyAccountant

logger = logging.getLogger(__name__)


def keep_probability(eps_prime) -> np.ndarray:
    """e^eps' / (e^eps' + 1); equals 1 for eps' = inf."""
    return special.expit(np.asarray(eps_prime, dtype=np.float64))


def smooth_multipliers(values: np.ndarray, column_max: np.ndarray, beta: float) -> np.ndarray:
    """L_j = ceil(|x_j| / (beta max_i |M_ij|)), at least 1.

    ``values`` and ``column_max`` must come from the same scaling of the matrix.
    """
    ratio = np.abs(values) / (beta * np.asarray(column_max, dtype=np.float64))
    return np.maximum(np.ceil(ratio), 1.0).astype(np.int64)


def lj_histogram(lj: np.ndarray) -> Dict[int, int]:
    return {int(value): int(count) for value, count in sorted(Counter(lj.tolist()).items())}


def rr_plan(k: int, eps_prime: float, derivation: FlipDerivation = FlipDerivation.RR) -> FlipPlan:
    eps = np.full(k, float(eps_prime))
    return FlipPlan(keep_probabilities=keep_probability(eps), eps_prime=eps,
                    derivation=derivation, coin_mask=np.zeros(k, dtype=bool))


def apply_flip_plan(signs: np.ndarray, plan: FlipPlan, generator: np.random.Generator) -> np.ndarray:
    """Sample the randomized signs; one uniform draw per bit."""
    draws = generator.random(signs.size)
    kept = np.where(draws < plan.keep_probabilities, signs, -signs)
    coins = np.where(draws < 0.5, 1, -1)
    return np.where(plan.coin_mask, coins, kept).astype(np.int8)


def output_probabilities(signs: np.ndarray, plan: FlipPlan) -> np.ndarray:
    """Exact Pr(output bit = +1) for every bit."""
    keep = plan.keep_probabilities
    positive = np.where(signs > 0, keep, 1.0 - keep)
    return np.where(plan.coin_mask, 0.5, positive)


class SignMechanism:
    """Base class: exact signs, a flip plan and randomized output."""

    name = "sign"
    derivation = FlipDerivation.RR

    def __init__(self, spec: ProjectionSpec, budget: PrivacyBudget,
                 operator: Optional[ProjectionOperator] = None):
        self.spec = spec
        self.budget = budget
        self.operator = operator or materialize(spec)

    @property
    def per_bit_epsilon(self) -> float:
        """Largest per-bit privacy loss the mechanism claims."""
        raise NotImplementedError

    @property
    def composed_epsilon(self) -> float:
        return self.budget.epsilon

    def project_values(self, values: np.ndarray) -> np.ndarray:
        return self.operator.project_array(values)

    def flip_plan(self, values: np.ndarray) -> Tuple[np.ndarray, FlipPlan]:
        """Exact signs of the projection of ``values`` and their flip plan."""
        raise NotImplementedError

    def output_probabilities(self, values: np.ndarray, reference: Optional[np.ndarray] = None) -> np.ndarray:
        signs, plan = self.flip_plan(np.asarray(values, dtype=np.float64))
        return output_probabilities(signs, plan)

    def expected_flip_fraction(self, values: np.ndarray) -> float:
        """Mean probability that an output bit differs from the exact sign."""
        _, plan = self.flip_plan(np.asarray(values, dtype=np.float64))
        flips = np.where(plan.coin_mask, 0.5, plan.flip_probabilities)
        return float(np.mean(flips))

    def _provenance(self, plan: FlipPlan, seed: Optional[int], row_id: Optional[str],
                    **extra) -> SketchProvenance:
        finite = plan.eps_prime[np.isfinite(plan.eps_prime)]
        uniform = finite.size > 0 and np.all(finite == finite[0]) and plan.lj is None
        fields = dict(
            mechanism=self.name,
            spec_digest=self.spec.digest(),
            projection_kind=self.spec.kind,
            scaled=self.spec.is_scaled,
            sparsity=self.spec.recorded_sparsity,
            private=True,
            epsilon=self.budget.epsilon,
            delta=self.budget.delta,
            beta=self.budget.beta,
            repetitions=self.budget.repetitions,
            eps_prime=float(finite[0]) if uniform else None,
            lj_histogram=lj_histogram(plan.lj) if plan.lj is not None else None,
            seed=seed,
            row_id=row_id,
        )
        fields.update(extra)
        return SketchProvenance(**fields)

    def _check_dimension(self, u: DataVector) -> None:
        if u.p != self.spec.p:
            raise DataValidationError(f"dimension mismatch: got {u.p}, expected {self.spec.p}")

    def provenance_extra(self) -> dict:
        return {}

    def privatize(self, u: DataVector, rng, row_id: Optional[str] = None) -> Sketch:
        self._check_dimension(u)
        signs, plan = self.flip_plan(u.values)
        noisy = apply_flip_plan(signs, plan, as_generator(rng))
        seed = rng.seed if isinstance(rng, RngStream) else None
        provenance = self._provenance(plan, seed, row_id, **self.provenance_extra())
        return Sketch(payload=noisy, is_sign=True, provenance=provenance)


def _require_dense(spec: ProjectionSpec, mechanism: str) -> None:
    if spec.kind == ProjectionKind.OPORP:
        raise UnsupportedMechanismError(f"{mechanism} needs a dense projection, got oporp")


class SignRPRandomizedResponse(SignMechanism):
    """DP-SignRP-RR: every sign kept with probability e^eps'/(e^eps'+1), eps' = eps/N+."""

    name = "sign:rr"

    def __init__(self, spec: ProjectionSpec, budget: PrivacyBudget, norm_lower_bound: float = 0.0,
                 operator: Optional[ProjectionOperator] = None):
        _require_dense(spec, "DP-SignRP-RR")
        if norm_lower_bound < 0:
            raise PreconditionError(f"norm lower bound m must be nonnegative (m={norm_lower_bound})")
        super().__init__(spec, budget, operator)
        self.norm_lower_bound = norm_lower_bound

        if norm_lower_bound < budget.beta:
            # Pure-epsilon mode: every bit may change
            self.n_plus, self.capped = spec.k, True
            logger.info(f"m={norm_lower_bound} below beta={budget.beta}; N+ = k = {spec.k}")
        else:
            if budget.is_pure:
                raise PreconditionError("DP-SignRP-RR with m >= beta bounds N+ with probability 1-delta "
                                        "and needs delta > 0")
            if spec.kind == ProjectionKind.GAUSSIAN:
                flavor = NPlusFlavor.GAUSSIAN
            elif spec.is_rademacher:
                flavor = NPlusFlavor.RADEMACHER
            else:
                raise UnsupportedMechanismError(f"no N+ bound for {spec.kind.value} projections; "
                                                "use gaussian or rademacher, or set m < beta")
            bound = n_plus_bound(norm_lower_bound, budget.beta, budget.delta, spec.k, spec.p,
                                 flavor=flavor, strict=False)
            self.n_plus, self.capped = bound.value, bound.capped
        self.eps_prime = budget.epsilon / self.n_plus

    @property
    def per_bit_epsilon(self) -> float:
        return self.eps_prime

    @property
    def composed_epsilon(self) -> float:
        # N+ signs change except with probability delta
        return self.eps_prime * self.n_plus

    def flip_plan(self, values: np.ndarray) -> Tuple[np.ndarray, FlipPlan]:
        signs, _ = sign_with_zero_flags(self.project_values(values))
        return signs, rr_plan(self.spec.k, self.eps_prime)

    def provenance_extra(self) -> dict:
        return {"n_plus": self.n_plus, "n_plus_capped": self.capped}

    def privatize(self, u: DataVector, rng, row_id: Optional[str] = None) -> Sketch:
        if u.norm < self.norm_lower_bound:
            raise PreconditionError(f"row norm {u.norm:.6g} below the declared lower bound m={self.norm_lower_bound}")
        return super().privatize(u, rng, row_id=row_id)


class SignRPSmooth(SignMechanism):
    """DP-SignRP-RR-smooth: per-bit eps'_j = (L_j / k) eps."""

    name = "sign:rr_smooth"
    derivation = FlipDerivation.SMOOTH

    def __init__(self, spec: ProjectionSpec, budget: PrivacyBudget,
                 operator: Optional[ProjectionOperator] = None):
        _require_dense(spec, "DP-SignRP-RR-smooth")
        budget.require_pure("DP-SignRP-RR-smooth")
        super().__init__(spec, budget, operator)
        self.column_max = self.operator.column_max_abs()

    @property
    def per_bit_epsilon(self) -> float:
        return self.budget.epsilon / self.spec.k

    def flip_plan(self, values: np.ndarray) -> Tuple[np.ndarray, FlipPlan]:
        projected = self.project_values(values)
        signs, _ = sign_with_zero_flags(projected)
        lj = smooth_multipliers(projected, self.column_max, self.budget.beta)
        eps = lj * (self.budget.epsilon / self.spec.k)
        plan = FlipPlan(keep_probabilities=keep_probability(eps), eps_prime=eps,
                        derivation=FlipDerivation.SMOOTH, coin_mask=np.zeros(self.spec.k, dtype=bool), lj=lj)
        return signs, plan


class SignOPORPMechanism(SignMechanism):
    """DP-SignOPORP (RR or smooth) with t independent runs of k/t bins at eps/t each."""

    def __init__(self, spec: ProjectionSpec, budget: PrivacyBudget, smooth: bool = False,
                 repetitions: Optional[int] = None):
        if spec.kind != ProjectionKind.OPORP:
            raise UnsupportedMechanismError(f"DP-SignOPORP needs an oporp projection, got {spec.kind.value}")
        budget.require_pure("DP-SignOPORP")
        t = repetitions or budget.repetitions
        if t < 1 or spec.k % t != 0:
            raise PreconditionError(f"repetitions t={t} must divide k={spec.k}")
        self.smooth = smooth
        self.name = "sign:oporp_rr_smooth" if smooth else "sign:oporp_rr"
        self.derivation = FlipDerivation.OPORP_SMOOTH if smooth else FlipDerivation.OPORP_RR
        self.spec = spec
        self.budget = budget
        self.repetitions = t

        self.run_specs = self._run_specs(spec, t)
        self.operators = [materialize(run_spec) for run_spec in self.run_specs]
        self.operator = self.operators[0]

        self.accountant = PrivacyAccountant(budget.epsilon)
        self.run_epsilon = self.accountant.split_evenly(t, label="oporp-run")[0][0]

    @staticmethod
    def _run_specs(spec: ProjectionSpec, t: int) -> List[ProjectionSpec]:
        if t == 1:
            return [spec]
        parent = RngStream(seed=spec.seed)
        return [ProjectionSpec(kind=ProjectionKind.OPORP, p=spec.p, k=spec.k // t,
                               seed=parent.child_seed("oporp-run", index)) for index in range(t)]

    @property
    def per_bit_epsilon(self) -> float:
        return self.run_epsilon

    def bins_of(self, coordinate: int) -> List[int]:
        """Output positions receiving a coordinate, one per run."""
        width = self.spec.k // self.repetitions
        return [index * width + operator.bin_of(coordinate) for index, operator in enumerate(self.operators)]

    def project_values(self, values: np.ndarray) -> np.ndarray:
        return np.concatenate([operator.project_array(values) for operator in self.operators], axis=-1)

    def flip_plan(self, values: np.ndarray) -> Tuple[np.ndarray, FlipPlan]:
        projected = self.project_values(values)
        signs, zeros = sign_with_zero_flags(projected)
        coin_mask = np.zeros(self.spec.k, dtype=bool)
        coin_mask[zeros] = True
        lj = None
        if self.smooth:
            # OPORP bins hold unit weights, so max_i |M_ij| = 1
            lj = smooth_multipliers(projected, np.ones(self.spec.k), self.budget.beta)
            eps = lj * self.run_epsilon
        else:
            eps = np.full(self.spec.k, self.run_epsilon)
        keep = keep_probability(eps)
        plan = FlipPlan(keep_probabilities=keep, eps_prime=eps, derivation=self.derivation,
                        coin_mask=coin_mask, lj=lj)
        return signs, plan

    def provenance_extra(self) -> dict:
        return {"repetitions": self.repetitions}


def expected_flip_fraction(mechanism: SignMechanism, u: DataVector) -> float:
    return mechanism.expected_flip_fraction(u.values)


def signrp_rr(spec: ProjectionSpec, u: DataVector, budget: PrivacyBudget, m: float, rng,
              row_id: Optional[str] = None) -> Sketch:
    return SignRPRandomizedResponse(spec, budget, norm_lower_bound=m).privatize(u, rng, row_id=row_id)


def signrp_rr_smooth(spec: ProjectionSpec, u: DataVector, budget: PrivacyBudget, rng,
                     row_id: Optional[str] = None) -> Sketch:
    return SignRPSmooth(spec, budget).privatize(u, rng, row_id=row_id)


def signoporp(spec: ProjectionSpec, u: DataVector, budget: PrivacyBudget, variant: str = "rr",
              t: int = 1, rng=None, row_id: Optional[str] = None) -> Sketch:
    if variant not in ("rr", "rr_smooth"):
        raise UnsupportedMechanismError(f"unknown DP-SignOPORP variant '{variant}' (expected rr or rr_smooth)")
    mechanism = SignOPORPMechanism(spec, budget, smooth=variant == "rr_smooth", repetitions=t)
    return mechanism.privatize(u, rng, row_id=row_id)


def fallback_flip_probability(epsilon: float, k: int) -> float:
    """Flip probability of the pure-epsilon RR fallback, 1/(e^(eps/k) + 1)."""
    return 1.0 / (math.exp(epsilon / k) + 1.0)
