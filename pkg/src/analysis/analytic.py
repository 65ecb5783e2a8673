"""Closed-form and numerically evaluated quantities for projection privacy.

Tail bounds, the P+ integral and the N+ bound, bivariate-normal conditional
quantities, estimator variances and the variance-ratio diagnostic. All
functions are pure.
"""

import logging
import math
from typing import Union

import numpy as np
from scipy import integrate, special

from ..config import settings
from ..exceptions import DataValidationError, IntegrationError, PreconditionError
from ..models import DataVector, NPlusBound, NPlusFlavor, ProbabilityEstimate, TailBoundResult

logger = logging.getLogger(__name__)

VectorLike = Union[DataVector, np.ndarray]

# Below this dimension the CLT form of P+ for Rademacher projections is coarse
RADEMACHER_CLT_MIN_P = 20


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise PreconditionError(message)


def chi_square_tail(n: int, t: float) -> TailBoundResult:
    """Pr(chi2_n >= n + 2 sqrt(n t) + 2t) <= exp(-t)."""
    _require(n >= 1 and t > 0, f"chi_square_tail needs n >= 1 and t > 0 (n={n}, t={t})")
    threshold = n + 2.0 * math.sqrt(n * t) + 2.0 * t
    return TailBoundResult(threshold=threshold, probability=math.exp(-t))


def half_normal_tail(n: int, t: float) -> TailBoundResult:
    """Tail of a sum of n half-normals: Pr(Z >= sqrt(2 n^2 log 2 + 2 n t)) <= exp(-t)."""
    _require(n >= 1 and t > 0, f"half_normal_tail needs n >= 1 and t > 0 (n={n}, t={t})")
    threshold = math.sqrt(2.0 * n * n * math.log(2.0) + 2.0 * n * t)
    return TailBoundResult(threshold=threshold, probability=math.exp(-t))


def binomial_tail(n: int, p: float, eta: float) -> TailBoundResult:
    """Chernoff bound Pr(X >= (1+eta) mu) <= exp(-eta^2 mu / (eta + 2))."""
    _require(n >= 0 and 0.0 <= p <= 1.0 and eta >= 0,
             f"binomial_tail needs n >= 0, p in [0,1], eta >= 0 (n={n}, p={p}, eta={eta})")
    mu = n * p
    return TailBoundResult(threshold=(1.0 + eta) * mu, probability=math.exp(-eta * eta * mu / (eta + 2.0)))


def _check_correlation(r: float, rho: float) -> None:
    _require(r > 0, f"r must be positive (r={r})")
    _require(-1.0 < rho < 1.0, f"rho must lie in (-1, 1) (rho={rho})")


def _atan_sum(r: float, rho: float) -> float:
    root = math.sqrt(1.0 - rho * rho)
    return math.atan((r - rho) / root) + math.atan((r + rho) / root)


def abs_exceed_prob(r: float, rho: float) -> float:
    """Pr(|X| > |Y|) for a bivariate normal with sigma_x / sigma_y = r and correlation rho."""
    _check_correlation(r, rho)
    return _atan_sum(r, rho) / math.pi


def conditional_abs_expectation(r: float, rho: float, sigma_x: float) -> float:
    """E[|X| given |X| > |Y|]."""
    _check_correlation(r, rho)
    _require(sigma_x > 0, f"sigma_x must be positive (sigma_x={sigma_x})")
    numerator = ((r - rho) / math.sqrt(1.0 + r * r - 2.0 * r * rho)
                 + (r + rho) / math.sqrt(1.0 + r * r + 2.0 * r * rho))
    return sigma_x * math.sqrt(math.pi / 2.0) * numerator / _atan_sum(r, rho)


def conditional_tail_bound(t: float, sigma_x: float) -> float:
    """Pr(|X| > t given |X| > |Y|) <= exp(-t^2 / (2 sigma_x^2))."""
    _require(t >= 0 and sigma_x > 0, f"conditional_tail_bound needs t >= 0, sigma_x > 0 (t={t})")
    return math.exp(-t * t / (2.0 * sigma_x * sigma_x))


def _p_plus_integrand(t: float, r: float, p: int) -> float:
    root2 = math.sqrt(2.0)
    max_term = math.exp(special.xlogy(p - 1, special.erf(t / root2)))
    return 2.0 * p * max_term * special.erf(r * t / root2) * math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)


def p_plus_gaussian(r: float, p: int, tolerance: float = None) -> float:
    """Probability that a Gaussian projection's sign can be changed by a beta-neighbor.

    Integral over t in [0, inf) of 2p [2 Phi(t) - 1]^(p-1) [2 Phi(r t) - 1] phi(t),
    truncated at sqrt(2 log p) + 10 where the integrand is below double precision.
    """
    _require(0 < r <= 1.0, f"p_plus_gaussian needs 0 < r <= 1 (r={r})")
    _require(p >= 1, f"p_plus_gaussian needs p >= 1 (p={p})")
    tolerance = tolerance or settings.quadrature_tolerance

    peak = math.sqrt(2.0 * math.log(p))
    upper = peak + 10.0
    points = [peak] if peak > 0 else None
    value, abserr = integrate.quad(_p_plus_integrand, 0.0, upper, args=(r, int(p)),
                                   epsabs=tolerance / 10.0, epsrel=1e-10, limit=500, points=points)
    if abserr > tolerance:
        raise IntegrationError(f"P+ quadrature residual {abserr:.3e} exceeds {tolerance:.1e} (r={r}, p={p})")
    return float(min(max(value, 0.0), 1.0))


def p_plus_rademacher(r: float, p: int) -> ProbabilityEstimate:
    """CLT approximation 2 Phi(r) - 1 for Rademacher projections (independent of p)."""
    _require(r > 0, f"p_plus_rademacher needs r > 0 (r={r})")
    warning = None
    if p < RADEMACHER_CLT_MIN_P:
        warning = f"CLT approximation is coarse for p={p} < {RADEMACHER_CLT_MIN_P}"
        logger.warning(warning)
    return ProbabilityEstimate(value=float(special.erf(r / math.sqrt(2.0))),
                               method="clt_approximation", warning=warning)


def n_plus_bound(norm_u: float, beta: float, delta: float, k: int, p: int,
                 flavor: NPlusFlavor = NPlusFlavor.GAUSSIAN, strict: bool = True) -> NPlusBound:
    """High-probability bound on the number of signs a beta-neighbor can change.

    With F = P+(beta/||u||, p) the bound is
    min{F k + (log(1/delta) + sqrt(log(1/delta)^2 + 8 F k log(1/delta))) / 2, k},
    rounded up. It needs beta <= ||u||; with ``strict=False`` that case returns
    the trivial cap k and is flagged instead of raising.
    """
    _require(norm_u > 0 and beta > 0, "norm_u and beta must be positive")
    _require(0.0 < delta < 1.0, f"n_plus_bound needs 0 < delta < 1 (delta={delta})")
    _require(k >= 1 and p >= 1, "k and p must be positive")
    flavor = NPlusFlavor(flavor)

    if beta > norm_u:
        if strict:
            raise PreconditionError(f"n_plus_bound requires beta <= ||u|| (beta={beta}, norm={norm_u})")
        logger.warning(f"beta={beta} exceeds norm {norm_u}; N+ falls back to k={k}")
        return NPlusBound(value=k, k=k, f=None, capped=True, precondition_violated=True)

    ratio = beta / norm_u
    if flavor == NPlusFlavor.GAUSSIAN:
        f = p_plus_gaussian(ratio, p)
    else:
        f = p_plus_rademacher(ratio, p).value

    log_term = math.log(1.0 / delta)
    bound = f * k + 0.5 * (log_term + math.sqrt(log_term ** 2 + 8.0 * f * k * log_term))
    value = int(min(math.ceil(bound), k))
    return NPlusBound(value=value, k=k, f=f, capped=value == k)


def signrp_angle_variance(theta: float, k: int) -> float:
    """Variance theta (pi - theta) / k of the sign-collision angle estimator."""
    _require(0.0 <= theta <= math.pi and k >= 1, f"need theta in [0, pi] and k >= 1 (theta={theta})")
    return theta * (math.pi - theta) / k


def rr_angle_variance(theta: float, k: int, eps_prime: float) -> float:
    """V_RR / k for the debiased angle estimator on randomized-response signs."""
    _require(0.0 <= theta <= math.pi and k >= 1, f"need theta in [0, pi] and k >= 1 (theta={theta})")
    _require(eps_prime > 0, f"eps_prime must be positive (eps_prime={eps_prime})")
    # e/(e-1)^2 written with exp(-eps') so large eps' does not overflow
    a = math.exp(-eps_prime)
    gap = -math.expm1(-eps_prime)
    first = a / gap ** 2
    second = a * a / gap ** 4
    v_rr = theta * (math.pi - theta) + 2.0 * math.pi ** 2 * first + 4.0 * math.pi ** 2 * second
    return v_rr / k


def rr_collision_probability(collision: float, eps_prime: float) -> float:
    """Collision probability of two RR-perturbed signs given the true collision probability."""
    _require(eps_prime > 0, f"eps_prime must be positive (eps_prime={eps_prime})")
    tau = math.tanh(eps_prime / 2.0)
    return collision * tau * tau + 0.5 * (1.0 - tau * tau)


def debias_rr_collision(observed: float, eps_prime: float) -> float:
    """Invert ``rr_collision_probability``; the result is not clamped to [0, 1]."""
    _require(eps_prime > 0, f"eps_prime must be positive (eps_prime={eps_prime})")
    tau2 = math.tanh(eps_prime / 2.0) ** 2
    return observed / tau2 - 0.5 * (1.0 - tau2) / tau2


def _values(vector: VectorLike) -> np.ndarray:
    return np.asarray(vector.values if isinstance(vector, DataVector) else vector, dtype=np.float64)


def inner_product_variance(kind: str, u: VectorLike, v: VectorLike, k: int, sigma: float,
                           fourth_moment: float = 1.0) -> float:
    """Variance of the inner-product estimator from noisy data, RP or OPORP sketches.

    ``sigma`` is the standard deviation of the additive noise. ``fourth_moment``
    is E[w^4] of the projection entries (1 for Rademacher, 3 for Gaussian).
    """
    u_values, v_values = _values(u), _values(v)
    if u_values.shape != v_values.shape:
        raise DataValidationError(f"dimension mismatch: {u_values.size} vs {v_values.size}")
    _require(sigma >= 0, f"sigma must be nonnegative (sigma={sigma})")
    p = u_values.size
    s2 = sigma * sigma
    noise = s2 * float(np.sum(u_values ** 2 + v_values ** 2))

    if kind == "raw":
        return noise + p * s2 * s2

    _require(k >= 1, f"k must be positive (k={k})")
    cross = float(np.sum(u_values ** 2 * v_values ** 2))
    projection = (float(np.dot(u_values, u_values) * np.dot(v_values, v_values))
                  + float(np.dot(u_values, v_values)) ** 2
                  + (fourth_moment - 3.0) * cross) / k

    if kind == "rp":
        return noise + k * s2 * s2 + projection
    if kind == "oporp":
        _require(k <= p, f"oporp needs k <= p (k={k}, p={p})")
        reduction = (p - k) / (p - 1) if p > 1 else 0.0
        return noise + k * s2 * s2 + projection * reduction
    raise PreconditionError(f"unknown variance kind '{kind}' (expected raw, rp or oporp)")


def variance_ratio(p: int, k: int, sigma: float) -> float:
    """Raw-data over RP variance, (2 s^2 + p s^4) / (2 s^2 + k s^4 + 1/k)."""
    _require(p >= 1 and k >= 1 and sigma > 0, "variance_ratio needs p, k >= 1 and sigma > 0")
    s2 = sigma * sigma
    return (2.0 * s2 + p * s2 * s2) / (2.0 * s2 + k * s2 * s2 + 1.0 / k)


def optimal_k_star(theta: float, epsilon: float, f: float) -> float:
    """Order-of-magnitude optimum epsilon theta (pi - theta) / F for DP-SignRP-RR (asymptotic)."""
    _require(f > 0, "F must be positive")
    _require(epsilon > 0, f"epsilon must be positive (epsilon={epsilon})")
    return epsilon * theta * (math.pi - theta) / f
