"""Full-precision DP mechanisms on raw data, random projections and OPORP.

Variants:
    raw_g_opt   optimal Gaussian noise on the raw vector (Delta_2 = beta)
    rp_g        classic Gaussian noise on a dense projection
    rp_g_opt    optimal Gaussian noise on a dense projection
    rp_l        Laplace noise on a dense projection (exact Delta_1 of the realized matrix)
    rp_g_opt_b  optimal Gaussian noise on a Rademacher projection (Delta_2 = beta)
    oporp       optimal Gaussian noise on an OPORP sketch (Delta_2 = beta)
"""

import logging
import math
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.projections import ProjectionOperator, materialize
from ..core.randomness import RngStream, as_generator
from ..exceptions import DataValidationError
from ..models import (
    DataVector, NoiseCalibration, NoiseDistribution, PrivacyBudget, ProjectionKind,
    ProjectionSpec, Sensitivity, SensitivityBasis, SensitivityMode, Sketch, SketchProvenance
)
from .calibration import (
    analytic_dp_rp_g_sigma, classic_gaussian_sigma, laplace_lambda, optimal_gaussian_sigma,
    sensitivity_from_matrix, sensitivity_l1_bound, sensitivity_l2_bound
)

logger = logging.getLogger(__name__)


class DpRpVariant(str, Enum):
    RAW_G_OPT = "raw_g_opt"
    RP_G = "rp_g"
    RP_G_OPT = "rp_g_opt"
    RP_L = "rp_l"
    RP_G_OPT_B = "rp_g_opt_b"
    OPORP = "oporp"


_DENSE_VARIANTS = {DpRpVariant.RP_G, DpRpVariant.RP_G_OPT, DpRpVariant.RP_L}


class DpRpConfig(BaseModel):
    """Variant, public projection, budget and sensitivity mode of a DP-RP mechanism."""
    model_config = ConfigDict(frozen=True)

    variant: DpRpVariant = Field(description="Mechanism variant")
    spec: Optional[ProjectionSpec] = Field(default=None, description="Projection (absent for raw)")
    budget: PrivacyBudget = Field(description="Privacy budget")
    sensitivity_mode: SensitivityMode = Field(default=SensitivityMode.EXACT)

    @model_validator(mode="after")
    def _check_compatibility(self) -> "DpRpConfig":
        variant, spec, delta = self.variant, self.spec, self.budget.delta

        if variant == DpRpVariant.RAW_G_OPT:
            if spec is not None:
                raise ValueError("raw_g_opt adds noise to the raw vector and takes no projection spec")
        elif spec is None:
            raise ValueError(f"{variant.value} needs a projection spec")

        if variant == DpRpVariant.RP_L:
            if delta != 0:
                raise ValueError("rp_l is pure epsilon-DP and requires delta=0")
            if self.sensitivity_mode == SensitivityMode.ANALYTIC:
                raise ValueError("rp_l always calibrates on the exact Delta_1 of the realized matrix")
        elif variant == DpRpVariant.RP_G:
            if not 0.0 < delta < 0.5:
                raise ValueError(f"delta out of range for classic mechanism (delta={delta}, need 0 < delta < 1/2)")
        elif not 0.0 < delta < 1.0:
            raise ValueError(f"{variant.value} needs 0 < delta < 1 (delta={delta})")

        if variant == DpRpVariant.RP_G_OPT_B and not spec.is_rademacher:
            raise ValueError("rp_g_opt_b requires a Rademacher projection (very_sparse with s=1)")
        if variant == DpRpVariant.OPORP and spec.kind != ProjectionKind.OPORP:
            raise ValueError("variant oporp requires an oporp projection spec")
        if variant in _DENSE_VARIANTS and spec.kind == ProjectionKind.OPORP:
            raise ValueError(f"{variant.value} requires a dense projection spec")
        if self.sensitivity_mode == SensitivityMode.ANALYTIC and (
                variant not in (DpRpVariant.RP_G, DpRpVariant.RP_G_OPT) or spec.kind != ProjectionKind.GAUSSIAN):
            raise ValueError("analytic sensitivity bounds apply to rp_g / rp_g_opt with Gaussian projections")
        return self


def audit_noise_scale(cfg: DpRpConfig, operator: Optional[ProjectionOperator] = None) -> NoiseCalibration:
    """The calibration ``privatize`` uses for this config and matrix realization."""
    budget = cfg.budget
    eps, delta, beta = budget.epsilon, budget.delta, budget.beta
    variant = cfg.variant

    if variant == DpRpVariant.RAW_G_OPT:
        sensitivity = Sensitivity(l1=beta, l2=beta, basis=SensitivityBasis.CLOSED_FORM)
        sigma = optimal_gaussian_sigma(sensitivity.l2, eps, delta)
        return NoiseCalibration(distribution=NoiseDistribution.GAUSSIAN, scale=sigma,
                                epsilon=eps, delta=delta, sensitivity=sensitivity)

    spec = cfg.spec
    if variant in (DpRpVariant.RP_G_OPT_B, DpRpVariant.OPORP):
        # One coordinate moves each Rademacher output by beta/sqrt(k), or one OPORP bin by beta
        l1 = beta * math.sqrt(spec.k) if variant == DpRpVariant.RP_G_OPT_B else beta
        sensitivity = Sensitivity(l1=l1, l2=beta, basis=SensitivityBasis.CLOSED_FORM)
        sigma = optimal_gaussian_sigma(beta, eps, delta)
        return NoiseCalibration(distribution=NoiseDistribution.GAUSSIAN, scale=sigma,
                                epsilon=eps, delta=delta, sensitivity=sensitivity)

    if cfg.sensitivity_mode == SensitivityMode.ANALYTIC:
        share = delta / 2.0
        l2 = sensitivity_l2_bound(spec.p, spec.k, beta, share)
        l1 = max(sensitivity_l1_bound(spec.p, spec.k, beta, share), l2)
        sensitivity = Sensitivity(l1=l1, l2=l2, basis=SensitivityBasis.HIGH_PROBABILITY_BOUND, delta_share=share)
        if variant == DpRpVariant.RP_G:
            sigma = analytic_dp_rp_g_sigma(spec.p, spec.k, beta, eps, delta)
        else:
            sigma = optimal_gaussian_sigma(l2, eps, share)
        return NoiseCalibration(distribution=NoiseDistribution.GAUSSIAN, scale=sigma,
                                epsilon=eps, delta=delta, sensitivity=sensitivity)

    operator = operator or materialize(spec)
    sensitivity = sensitivity_from_matrix(operator.matrix, spec.k, beta)
    if variant == DpRpVariant.RP_L:
        return NoiseCalibration(distribution=NoiseDistribution.LAPLACE, scale=laplace_lambda(sensitivity.l1, eps),
                                epsilon=eps, delta=0.0, sensitivity=sensitivity)
    if variant == DpRpVariant.RP_G:
        sigma = classic_gaussian_sigma(sensitivity.l2, eps, delta)
    else:
        sigma = optimal_gaussian_sigma(sensitivity.l2, eps, delta)
    return NoiseCalibration(distribution=NoiseDistribution.GAUSSIAN, scale=sigma,
                            epsilon=eps, delta=delta, sensitivity=sensitivity)


class DpRpMechanism:
    """A calibrated DP-RP mechanism; reusable across the rows of a dataset."""

    def __init__(self, cfg: DpRpConfig, operator: Optional[ProjectionOperator] = None):
        self.cfg = cfg
        self.operator = None if cfg.spec is None else (operator or materialize(cfg.spec))
        self.calibration = audit_noise_scale(cfg, self.operator)
        logger.info(f"Calibrated dp_rp:{cfg.variant.value} eps={cfg.budget.epsilon} delta={cfg.budget.delta}: "
                    f"{self.calibration.distribution.value} scale={self.calibration.scale:.6g} "
                    f"(Delta_2={self.calibration.sensitivity.l2:.6g})")

    @property
    def name(self) -> str:
        return f"dp_rp:{self.cfg.variant.value}"

    @property
    def output_dimension(self) -> int:
        return self.cfg.spec.k if self.cfg.spec is not None else None

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Non-private part: the raw vector or its projection."""
        values = np.asarray(values, dtype=np.float64)
        if self.operator is None:
            return values.copy()
        return self.operator.project_array(values)

    def noise(self, shape, generator: np.random.Generator) -> np.ndarray:
        if self.calibration.distribution == NoiseDistribution.LAPLACE:
            return generator.laplace(0.0, self.calibration.scale, size=shape)
        return generator.normal(0.0, self.calibration.scale, size=shape)

    def provenance(self, seed: Optional[int] = None, row_id: Optional[str] = None) -> SketchProvenance:
        spec, calibration, budget = self.cfg.spec, self.calibration, self.cfg.budget
        return SketchProvenance(
            mechanism=self.name,
            spec_digest=spec.digest() if spec is not None else None,
            projection_kind=spec.kind if spec is not None else None,
            scaled=spec.is_scaled if spec is not None else False,
            sparsity=spec.recorded_sparsity if spec is not None else None,
            private=True,
            epsilon=budget.epsilon, delta=budget.delta, beta=budget.beta,
            noise_distribution=calibration.distribution,
            noise_scale=calibration.scale,
            noise_std=calibration.noise_std,
            sensitivity_l1=calibration.sensitivity.l1,
            sensitivity_l2=calibration.sensitivity.l2,
            sensitivity_basis=calibration.sensitivity.basis,
            seed=seed, row_id=row_id,
        )

    def privatize(self, u: DataVector, rng, row_id: Optional[str] = None) -> Sketch:
        expected = self.cfg.spec.p if self.cfg.spec is not None else u.p
        if u.p != expected:
            raise DataValidationError(f"dimension mismatch: got {u.p}, expected {expected}")
        clean = self.transform(u.values)
        noisy = clean + self.noise(clean.shape, as_generator(rng))
        seed = rng.seed if isinstance(rng, RngStream) else None
        return Sketch(payload=noisy, provenance=self.provenance(seed=seed, row_id=row_id))


def privatize(cfg: DpRpConfig, u: DataVector, rng, row_id: Optional[str] = None) -> Sketch:
    """Privatize one vector: projection (or raw data) plus calibrated noise."""
    return DpRpMechanism(cfg).privatize(u, rng, row_id=row_id)
