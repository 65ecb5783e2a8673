"""Exact privacy audits on small instances.

For every neighbor u' on a grid (one coordinate moved by a perturbation in
[-beta, beta]) the audit compares exact output distributions:

* sign mechanisms: per-bit Pr(b | u) against Pr(b | u') for b = +/-1; the
  composed and iDP scopes sum the per-bit losses over the output vector;
* Gaussian-noise mechanisms: the exact hockey-stick divergence of the two
  output Gaussians at the claimed epsilon, cross-checked on a 1-D output grid;
* Laplace mechanisms: the worst log density ratio ||x - x'||_1 / lambda.

Mutations inject known defects so the audit can be shown to fail.
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy import integrate, stats

from ..config import settings
from ..core.processing_engine import build_mechanism
from ..core.randomness import as_generator
from ..exceptions import PreconditionError, UnsupportedMechanismError
from ..mechanisms.calibration import gaussian_delta_for_sigma
from ..mechanisms.dp_rp import DpRpMechanism
from ..mechanisms.dp_sign import SignMechanism
from ..mechanisms.idp_sign import IdpMechanism, IdpSignRPGaussian, IdpSignRPRandomizedResponse
from ..models import (
    AuditCase, AuditReport, DataVector, MechanismConfig, MechanismFamily, NoiseDistribution, PrivacyScope
)

logger = logging.getLogger(__name__)

MUTATIONS = ("halved_flip", "dropped_coin")


def neighbor_grid(u: DataVector, beta: float, points: int,
                  coordinates: Optional[List[int]] = None) -> List[Tuple[int, float, np.ndarray]]:
    """(coordinate, perturbation, u') for every grid neighbor inside [-C, C]."""
    neighbors = []
    for coordinate in coordinates if coordinates is not None else range(u.p):
        for shift in np.linspace(-beta, beta, points):
            if shift == 0:
                continue
            value = u.values[coordinate] + shift
            if abs(value) > u.bound:
                continue
            neighbor = u.values.copy()
            neighbor[coordinate] = value
            neighbors.append((coordinate, float(shift), neighbor))
    return neighbors


def _sign_probabilities(mechanism, values: np.ndarray, reference: np.ndarray,
                        mutation: Optional[str]) -> np.ndarray:
    """Pr(bit = +1), with A and eps' fixed by ``reference`` for iDP mechanisms."""
    if isinstance(mechanism, IdpSignRPRandomizedResponse):
        signs, plan = mechanism.flip_plan(values, reference)
    elif isinstance(mechanism, IdpSignRPGaussian):
        if mutation:
            raise UnsupportedMechanismError(f"mutation '{mutation}' does not apply to {mechanism.name}")
        return mechanism.output_probabilities(values, reference)
    else:
        signs, plan = mechanism.flip_plan(values)

    keep = plan.keep_probabilities
    if mutation == "halved_flip":
        keep = 1.0 - plan.flip_probabilities / 2.0
    positive = np.where(signs > 0, keep, 1.0 - keep)
    coin = 1.0 if mutation == "dropped_coin" else 0.5
    return np.where(plan.coin_mask, coin, positive)


def _bit_losses(base: np.ndarray, other: np.ndarray) -> np.ndarray:
    """max over b of |log Pr(b | u) - log Pr(b | u')| per bit; inf when supports differ."""
    losses = np.zeros(base.size)
    for first, second in ((base, other), (1.0 - base, 1.0 - other)):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.abs(np.log(first) - np.log(second))
        both_zero = (first == 0) & (second == 0)
        ratio = np.where(both_zero, 0.0, ratio)
        losses = np.maximum(losses, ratio)
    return losses


def _report(case: AuditCase, mechanism_name: str, claimed_eps: float, claimed_delta: float,
            worst: Tuple[float, float, Optional[int], Optional[float]], n_neighbors: int,
            notes: List[str], extra_fail: bool = False) -> AuditReport:
    margin, observed, coordinate, shift = worst
    passed = margin <= settings.audit_tolerance and not extra_fail
    logger.info(f"Audit {mechanism_name} [{case.scope.value}] claimed eps={claimed_eps:.6g}: "
                f"{'PASS' if passed else 'FAIL'} (margin {margin:.3e}, {n_neighbors} neighbors)")
    return AuditReport(mechanism=mechanism_name, scope=case.scope, claimed_epsilon=claimed_eps,
                       claimed_delta=claimed_delta, passed=passed, margin=margin, max_log_ratio=observed,
                       worst_coordinate=coordinate, worst_perturbation=shift, n_neighbors=n_neighbors,
                       mutation=case.mutation, notes=notes)


def _audit_signs(case: AuditCase, mechanism) -> AuditReport:
    u = case.u.values
    scope = case.scope
    if isinstance(mechanism, IdpMechanism):
        if scope != PrivacyScope.IDP:
            raise PreconditionError("iDP mechanisms are audited with scope idp")
        claimed = mechanism.budget.epsilon
    elif scope == PrivacyScope.DP_PER_BIT:
        claimed = mechanism.per_bit_epsilon
    else:
        claimed = mechanism.composed_epsilon

    if isinstance(mechanism, IdpSignRPGaussian):
        return _audit_idp_gaussian(case, mechanism)

    base = _sign_probabilities(mechanism, u, u, case.mutation)
    worst = (-math.inf, 0.0, None, None)
    notes: List[str] = []
    isolation_failures = 0
    neighbors = neighbor_grid(case.u, mechanism.budget.beta, case.grid_points, case.coordinates)

    for coordinate, shift, neighbor in neighbors:
        other = _sign_probabilities(mechanism, neighbor, u, case.mutation)
        losses = _bit_losses(base, other)
        if hasattr(mechanism, "bins_of"):
            outside = np.ones(losses.size, dtype=bool)
            outside[mechanism.bins_of(coordinate)] = False
            if np.any(losses[outside] != 0):
                isolation_failures += 1
        observed = float(np.max(losses)) if scope == PrivacyScope.DP_PER_BIT else float(np.sum(losses))
        margin = observed - claimed
        if margin > worst[0]:
            worst = (margin, observed, coordinate, shift)

    if isolation_failures:
        notes.append(f"{isolation_failures} neighbor(s) changed bits outside the perturbed coordinate's bins")
    if not neighbors:
        notes.append("no neighbor inside the data domain")
        worst = (0.0, 0.0, None, None)
    return _report(case, mechanism.name, claimed, mechanism.budget.delta, worst, len(neighbors), notes,
                   extra_fail=isolation_failures > 0)


def gaussian_delta_on_grid(shift: float, sigma: float, eps: float, points: int = 20001) -> float:
    """Hockey-stick divergence of N(0, s^2) from N(shift, s^2) by trapezoid integration."""
    span = 12.0 * sigma + abs(shift)
    grid = np.linspace(-span, span, points)
    first = stats.norm.pdf(grid, loc=shift, scale=sigma)
    second = stats.norm.pdf(grid, loc=0.0, scale=sigma)
    return float(integrate.trapezoid(np.maximum(first - math.exp(eps) * second, 0.0), grid))


def _gaussian_check(shifts: List[Tuple[int, float, float]], sigma: float, eps: float,
                    claimed_delta: float, notes: List[str]):
    worst = (-math.inf, 0.0, None, None)
    largest = None
    for coordinate, perturbation, distance in shifts:
        achieved = gaussian_delta_for_sigma(distance, eps, sigma) if distance > 0 else 0.0
        margin = achieved - claimed_delta
        if margin > worst[0]:
            worst = (margin, achieved, coordinate, perturbation)
            largest = distance
    if largest:
        numeric = gaussian_delta_on_grid(largest, sigma, eps)
        analytic = gaussian_delta_for_sigma(largest, eps, sigma)
        notes.append(f"grid cross-check of the worst shift: analytic delta {analytic:.3e}, grid {numeric:.3e}")
    notes.append("margin and max_log_ratio are in delta units for Gaussian noise")
    return worst


def _audit_idp_gaussian(case: AuditCase, mechanism: IdpSignRPGaussian) -> AuditReport:
    u = case.u.values
    projected, indicator_set, sigma = mechanism.calibrate(u)
    active = indicator_set.indicators
    notes: List[str] = []
    shifts = []
    unstable = 0
    neighbors = neighbor_grid(case.u, mechanism.budget.beta, case.grid_points, case.coordinates)
    for coordinate, shift, neighbor in neighbors:
        other = mechanism.project_values(neighbor)
        if np.any((other[~active] >= 0) != (projected[~active] >= 0)):
            unstable += 1
        shifts.append((coordinate, shift, float(np.linalg.norm(other[active] - projected[active]))))
    if unstable:
        notes.append(f"{unstable} neighbor(s) flipped a sign outside the noise-indicator set")
    if sigma is None:
        worst = (0.0, 0.0, None, None)
        notes.append("no projection needs noise")
    else:
        worst = _gaussian_check(shifts, sigma, mechanism.budget.epsilon, mechanism.budget.delta, notes)
    return _report(case, mechanism.name, mechanism.budget.epsilon, mechanism.budget.delta, worst,
                   len(neighbors), notes, extra_fail=unstable > 0)


def _audit_dp_rp(case: AuditCase, mechanism: DpRpMechanism) -> AuditReport:
    if case.mutation:
        raise UnsupportedMechanismError(f"mutation '{case.mutation}' does not apply to {mechanism.name}")
    calibration = mechanism.calibration
    u = case.u.values
    base = mechanism.transform(u)
    notes: List[str] = []
    neighbors = neighbor_grid(case.u, mechanism.cfg.budget.beta, case.grid_points, case.coordinates)
    differences = [(coordinate, shift, mechanism.transform(neighbor) - base)
                   for coordinate, shift, neighbor in neighbors]

    if calibration.distribution == NoiseDistribution.LAPLACE:
        worst = (-math.inf, 0.0, None, None)
        for coordinate, shift, difference in differences:
            observed = float(np.sum(np.abs(difference))) / calibration.scale
            if observed - calibration.epsilon > worst[0]:
                worst = (observed - calibration.epsilon, observed, coordinate, shift)
    else:
        shifts = [(coordinate, shift, float(np.linalg.norm(difference)))
                  for coordinate, shift, difference in differences]
        worst = _gaussian_check(shifts, calibration.scale, calibration.epsilon, calibration.delta, notes)
    if not neighbors:
        worst = (0.0, 0.0, None, None)
    return _report(case, mechanism.name, calibration.epsilon, calibration.delta, worst, len(neighbors), notes)


def audit_privacy(case: AuditCase) -> AuditReport:
    """Worst-case privacy loss of the mechanism over all grid neighbors of u."""
    if case.mutation is not None and case.mutation not in MUTATIONS:
        raise PreconditionError(f"unknown mutation '{case.mutation}' (known: {', '.join(MUTATIONS)})")
    cfg = case.mechanism
    if cfg.family == MechanismFamily.BASELINE:
        raise UnsupportedMechanismError(f"{cfg.name} is not private and cannot be audited")
    spec = cfg.projection_spec(case.u.p, case.spec_seed)
    mechanism = build_mechanism(cfg, spec)
    if isinstance(mechanism, DpRpMechanism):
        return _audit_dp_rp(case, mechanism)
    if isinstance(mechanism, (SignMechanism, IdpMechanism)):
        return _audit_signs(case, mechanism)
    raise UnsupportedMechanismError(f"no exact audit for {cfg.name}")


def _audit_vector(p: int, rng, scale: float, bound: float = 2.0) -> DataVector:
    values = as_generator(rng).uniform(-scale, scale, size=p)
    return DataVector(values=values, bound=bound)


def default_audit_matrix(seed: int = 0, epsilon: float = 1.0, mutation: Optional[str] = None) -> List[AuditCase]:
    """Small instances covering every shipped private mechanism.

    Entries stay within [-1, 1] and C = 2, so every beta = 1 grid neighbor lies
    in the data domain.
    """
    small = _audit_vector(4, seed, 0.3)
    wide = _audit_vector(4, seed + 1, 0.9)
    # One zero coordinate per OPORP bin of size one gives an empty bin
    sparse = DataVector(values=[0.0, 0.2, -0.25, 0.15], bound=2.0)

    def config(family, variant, **fields):
        return MechanismConfig(family=family, variant=variant, epsilon=epsilon, **fields)

    cases = [
        AuditCase(u=small, mechanism=config("sign", "rr_smooth", k=8), scope=PrivacyScope.DP_PER_BIT),
        AuditCase(u=small, mechanism=config("sign", "rr_smooth", k=8, kind="very_sparse"),
                  scope=PrivacyScope.DP_PER_BIT),
        AuditCase(u=small, mechanism=config("sign", "rr", k=8, delta=0.0), scope=PrivacyScope.DP_PER_BIT),
        AuditCase(u=small, mechanism=config("sign", "rr", k=8, delta=0.0), scope=PrivacyScope.DP_COMPOSED),
    ]
    for variant in ("oporp_rr", "oporp_rr_smooth"):
        for t in (1, 2, 4):
            cases.append(AuditCase(u=sparse, mechanism=config("sign", variant, k=4, repetitions=t),
                                   scope=PrivacyScope.DP_PER_BIT))
    for variant in ("rr", "g"):
        cases.append(AuditCase(u=wide, mechanism=config("idp", variant, k=8), scope=PrivacyScope.IDP))
    for variant in ("raw_g_opt", "rp_g", "rp_g_opt", "rp_g_opt_b"):
        cases.append(AuditCase(u=small, mechanism=config("dp_rp", variant, k=8), scope=PrivacyScope.DP_COMPOSED))
    cases.append(AuditCase(u=sparse, mechanism=config("dp_rp", "oporp", k=4), scope=PrivacyScope.DP_COMPOSED))
    cases.append(AuditCase(u=small, mechanism=config("dp_rp", "rp_l", k=8), scope=PrivacyScope.DP_COMPOSED))

    for case in cases:
        case.spec_seed = seed
        case.mutation = mutation
    if mutation == "halved_flip":
        cases = [case for case in cases if case.mechanism.family == MechanismFamily.SIGN]
    elif mutation == "dropped_coin":
        # Only single-run OPORP on the sparse vector has an empty bin
        cases = [case for case in cases if case.mechanism.variant.startswith("oporp")
                 and case.mechanism.repetitions == 1]
    return cases
