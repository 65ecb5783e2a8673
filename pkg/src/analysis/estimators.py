"""Similarity estimators on real and sign sketches."""

import hashlib
import logging
import math
from typing import Optional

import numpy as np

from ..exceptions import DataValidationError, PreconditionError, ProvenanceMismatchError, UnsupportedMechanismError
from ..models import DataVector, EstimateReport, ProjectionKind, ProjectionSpec, Sketch
from .analytic import debias_rr_collision, inner_product_variance, rr_angle_variance, signrp_angle_variance

logger = logging.getLogger(__name__)

_FOURTH_MOMENTS = {
    ProjectionKind.GAUSSIAN: 3.0,
    ProjectionKind.UNIFORM: 9.0 / 5.0,
    ProjectionKind.VERY_SPARSE: 1.0,
    ProjectionKind.OPORP: 1.0,
}

# Sign mechanisms with one eps' shared by every bit
_RR_DEBIASABLE = {"sign:rr", "baseline:signrp_plain"}


def _digest(*sketches: Sketch) -> str:
    digest = hashlib.sha256()
    for sketch in sketches:
        digest.update((sketch.provenance.spec_digest or "raw").encode("utf-8"))
        digest.update(sketch.payload.tobytes())
    return digest.hexdigest()[:16]


def _family(mechanism: str) -> str:
    return mechanism.split(":", 1)[0]


def _check_pair(x: Sketch, y: Sketch, want_sign: bool) -> None:
    if x.is_sign != want_sign or y.is_sign != want_sign:
        kind = "sign" if want_sign else "real"
        raise PreconditionError(f"estimator needs two {kind} sketches")
    if x.k != y.k:
        raise DataValidationError(f"dimension mismatch: sketch lengths {x.k} and {y.k}")
    px, py = x.provenance, y.provenance
    if px.spec_digest != py.spec_digest:
        raise ProvenanceMismatchError(f"sketches come from different projections "
                                      f"({px.spec_digest} vs {py.spec_digest})")
    if _family(px.mechanism) != _family(py.mechanism):
        raise ProvenanceMismatchError(f"sketches come from different mechanism families "
                                      f"({px.mechanism} vs {py.mechanism})")


def inner_product(x: Sketch, y: Sketch, u: Optional[DataVector] = None, v: Optional[DataVector] = None,
                  spec: Optional[ProjectionSpec] = None) -> EstimateReport:
    """Sum of x_j y_j over two real sketches.

    The theoretical variance needs the original vectors; pass ``u`` and ``v``
    when they are known (benchmarks, tests), otherwise it is unavailable.
    """
    _check_pair(x, y, want_sign=False)
    estimate = float(np.dot(x.payload, y.payload))
    provenance = x.provenance
    flags = []

    variance = None
    if u is not None and v is not None:
        sigma = provenance.noise_std or 0.0
        if provenance.projection_kind is None:
            kind, fourth = "raw", 1.0
        else:
            kind = "oporp" if provenance.projection_kind == ProjectionKind.OPORP else "rp"
            fourth = spec.fourth_moment if spec is not None else _FOURTH_MOMENTS[provenance.projection_kind]
        variance = inner_product_variance(kind, u, v, x.k, sigma, fourth_moment=fourth)
    else:
        flags.append("variance_unavailable")
    return EstimateReport(estimate=estimate, theoretical_variance=variance,
                          estimator_id="inner_product", inputs_digest=_digest(x, y), flags=flags)


def cosine_normalized(x: Sketch, y: Sketch) -> EstimateReport:
    """x^T y / (||x|| ||y||), clipped to [-1, 1]; no theoretical variance."""
    _check_pair(x, y, want_sign=False)
    norm_x, norm_y = float(np.linalg.norm(x.payload)), float(np.linalg.norm(y.payload))
    if norm_x == 0 or norm_y == 0:
        raise PreconditionError("cosine of a zero-norm sketch is undefined")
    estimate = float(np.dot(x.payload, y.payload)) / (norm_x * norm_y)
    return EstimateReport(estimate=float(np.clip(estimate, -1.0, 1.0)), theoretical_variance=None,
                          estimator_id="cosine_normalized", inputs_digest=_digest(x, y))


def collision_fraction(s1: Sketch, s2: Sketch) -> float:
    return float(np.mean(s1.payload == s2.payload))


def angle_from_signs(s1: Sketch, s2: Sketch) -> EstimateReport:
    """pi (1 - collision fraction), with the plug-in variance theta (pi - theta) / k."""
    _check_pair(s1, s2, want_sign=True)
    theta = math.pi * (1.0 - collision_fraction(s1, s2))
    theta = min(max(theta, 0.0), math.pi)
    return EstimateReport(estimate=theta, theoretical_variance=signrp_angle_variance(theta, s1.k),
                          estimator_id="angle_from_signs", inputs_digest=_digest(s1, s2))


def angle_from_rr_signs(s1: Sketch, s2: Sketch, eps_prime: Optional[float] = None) -> EstimateReport:
    """Debiased angle from randomized-response signs sharing one eps'.

    The estimate is not clamped to [0, pi]; out-of-range values are flagged.
    """
    _check_pair(s1, s2, want_sign=True)
    for sketch in (s1, s2):
        mechanism = sketch.provenance.mechanism
        if mechanism not in _RR_DEBIASABLE:
            raise UnsupportedMechanismError(f"no debiased angle estimator for {mechanism} sketches; "
                                            "rank by Hamming distance instead")

    recorded = {s.provenance.eps_prime for s in (s1, s2) if s.provenance.eps_prime is not None}
    if len(recorded) > 1:
        raise ProvenanceMismatchError(f"sketches were perturbed with different eps' {sorted(recorded)}")
    if eps_prime is None:
        if not recorded:
            raise PreconditionError("eps' is neither given nor recorded in provenance")
        eps_prime = recorded.pop()
    elif recorded and not math.isclose(recorded.pop(), eps_prime, rel_tol=1e-12):
        raise ProvenanceMismatchError(f"eps'={eps_prime} does not match the sketches' provenance")
    if eps_prime <= 0:
        raise PreconditionError(f"eps' must be positive (eps'={eps_prime})")

    collision = debias_rr_collision(collision_fraction(s1, s2), eps_prime)
    theta = math.pi * (1.0 - collision)
    flags = []
    if not 0.0 <= theta <= math.pi:
        flags.append("outside_range")
        logger.warning(f"Debiased angle {theta:.4f} outside [0, pi] (k={s1.k}, eps'={eps_prime})")
    plug_in = min(max(theta, 0.0), math.pi)
    return EstimateReport(estimate=theta, theoretical_variance=rr_angle_variance(plug_in, s1.k, eps_prime),
                          estimator_id="angle_from_rr_signs", inputs_digest=_digest(s1, s2), flags=flags)
