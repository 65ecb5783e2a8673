"""Noise calibration: sensitivities, Gaussian and Laplace mechanisms, composition."""

import logging
import math
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, special

from ..config import settings
from ..exceptions import ConvergenceError, PreconditionError
from ..models import PrivacyBudget, Sensitivity, SensitivityBasis

logger = logging.getLogger(__name__)

BudgetLike = Union[PrivacyBudget, Tuple[float, float]]


def sensitivity_from_matrix(matrix: np.ndarray, k: int, beta: float) -> Sensitivity:
    """Exact l1/l2 sensitivities of x = (1/sqrt(k)) W^T u under beta-adjacency.

    A single coordinate change of at most beta moves x by beta/sqrt(k) times a
    row of W, so the sensitivities are the largest row norms scaled by beta/sqrt(k).
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise PreconditionError("sensitivity_from_matrix needs a nonempty p x k matrix")
    if k < 1 or beta <= 0:
        raise PreconditionError(f"k must be positive and beta > 0 (k={k}, beta={beta})")
    root_k = math.sqrt(k)
    l1 = float(np.max(np.sum(np.abs(matrix), axis=1)))
    l2 = float(np.max(np.linalg.norm(matrix, axis=1)))
    return Sensitivity(l1=beta * (l1 / root_k), l2=beta * (l2 / root_k),
                       basis=SensitivityBasis.EXACT_FROM_MATRIX)


def _check_bound_inputs(p: int, k: int, beta: float, delta_share: float) -> None:
    if p < 1 or k < 1 or beta <= 0 or not 0.0 < delta_share < 1.0:
        raise PreconditionError(f"need p, k >= 1, beta > 0 and delta in (0,1) "
                                f"(p={p}, k={k}, beta={beta}, delta={delta_share})")


def sensitivity_l2_bound(p: int, k: int, beta: float, delta_share: float) -> float:
    """Bound on Delta_2 for a Gaussian matrix holding with probability >= 1 - delta_share."""
    _check_bound_inputs(p, k, beta, delta_share)
    ratio = math.log(p / delta_share) / k
    return beta * math.sqrt(1.0 + 2.0 * math.sqrt(ratio) + 2.0 * ratio)


def sensitivity_l1_bound(p: int, k: int, beta: float, delta_share: float) -> float:
    """Bound on Delta_1 for a Gaussian matrix holding with probability >= 1 - delta_share."""
    _check_bound_inputs(p, k, beta, delta_share)
    return beta * math.sqrt(2.0 * k * math.log(2.0) + 2.0 * math.log(p / delta_share))


def classic_gaussian_sigma(delta2: float, eps: float, delta: float) -> float:
    """sigma = Delta_2 sqrt(2 (log(1/delta) + eps)) / eps, valid for 0 < delta < 1/2."""
    if delta2 <= 0 or eps <= 0:
        raise PreconditionError(f"Delta_2 and epsilon must be positive (Delta_2={delta2}, eps={eps})")
    if not 0.0 < delta < 0.5:
        raise PreconditionError(f"delta out of range for classic mechanism (delta={delta}, need 0 < delta < 1/2)")
    return delta2 * math.sqrt(2.0 * (math.log(1.0 / delta) + eps)) / eps


def gaussian_delta_for_sigma(delta2: float, eps: float, sigma: float) -> float:
    """Exact delta(eps) of the Gaussian mechanism with scale sigma and sensitivity Delta_2.

    Phi(D/(2s) - eps s/D) - e^eps Phi(-D/(2s) - eps s/D); strictly decreasing in sigma.
    """
    if delta2 <= 0 or sigma <= 0 or eps < 0:
        raise PreconditionError("Delta_2 and sigma must be positive and epsilon nonnegative")
    half = delta2 / (2.0 * sigma)
    shift = eps * sigma / delta2
    upper = special.ndtr(half - shift)
    lower = math.exp(eps + special.log_ndtr(-half - shift))
    return float(upper - lower)


def optimal_gaussian_sigma(delta2: float, eps: float, delta: float) -> float:
    """Smallest Gaussian scale that is exactly (eps, delta)-DP for sensitivity Delta_2.

    Bisection on sigma/Delta_2, so the result scales exactly linearly in Delta_2.
    The returned root is nudged upward until the achieved delta is at most the target.
    """
    if delta2 <= 0 or eps <= 0:
        raise PreconditionError(f"Delta_2 and epsilon must be positive (Delta_2={delta2}, eps={eps})")
    if not 0.0 < delta < 1.0:
        raise PreconditionError(f"delta must lie in (0, 1) (delta={delta})")

    def excess(ratio: float) -> float:
        return gaussian_delta_for_sigma(1.0, eps, ratio) - delta

    lower = 1e-6
    upper = math.sqrt(2.0 * (math.log(1.0 / delta) + eps)) / eps + 1.0
    for _ in range(64):
        if excess(upper) <= 0:
            break
        upper *= 2.0
    else:
        raise ConvergenceError(f"could not bracket the optimal sigma (eps={eps}, delta={delta})")
    if excess(lower) <= 0:
        raise ConvergenceError(f"optimal sigma below the bracket floor (eps={eps}, delta={delta})")

    try:
        ratio = optimize.bisect(excess, lower, upper, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                maxiter=settings.sigma_max_iterations)
    except RuntimeError as e:
        raise ConvergenceError(f"bisection did not converge: {e}") from e

    for _ in range(64):
        if excess(ratio) <= 0:
            break
        ratio = float(np.nextafter(ratio, np.inf))

    residual = abs(excess(ratio))
    if residual >= settings.sigma_residual_tolerance:
        raise ConvergenceError(f"optimal sigma residual {residual:.3e} above tolerance (eps={eps}, delta={delta})")
    return ratio * delta2


def analytic_dp_rp_g_sigma(p: int, k: int, beta: float, eps: float, delta: float) -> float:
    """Classic sigma on the high-probability Delta_2 bound, splitting delta in halves."""
    bound = sensitivity_l2_bound(p, k, beta, delta / 2.0)
    return classic_gaussian_sigma(bound, eps, delta / 2.0)


def laplace_lambda(delta1: float, eps: float) -> float:
    """Laplace scale Delta_1 / eps."""
    if delta1 <= 0 or eps <= 0:
        raise PreconditionError(f"Delta_1 and epsilon must be positive (Delta_1={delta1}, eps={eps})")
    return delta1 / eps


def _as_pair(budget: BudgetLike) -> Tuple[float, float]:
    if isinstance(budget, PrivacyBudget):
        return budget.epsilon, budget.delta
    eps, delta = budget
    return float(eps), float(delta)


def compose(budgets: Iterable[BudgetLike]) -> Tuple[float, float]:
    """Basic composition: epsilons and deltas add up."""
    pairs = [_as_pair(budget) for budget in budgets]
    return math.fsum(eps for eps, _ in pairs), math.fsum(delta for _, delta in pairs)


class PrivacyAccountant:
    """Ledger of budget spent against a total (eps, delta)."""

    def __init__(self, epsilon: float, delta: float = 0.0):
        if epsilon <= 0 or not 0.0 <= delta < 1.0:
            raise PreconditionError(f"invalid total budget (eps={epsilon}, delta={delta})")
        self.total_epsilon = epsilon
        self.total_delta = delta
        self.ledger: List[Tuple[str, float, float]] = []

    def spend(self, epsilon: float, delta: float = 0.0, label: str = "") -> None:
        eps_spent, delta_spent = compose([(e, d) for _, e, d in self.ledger] + [(epsilon, delta)])
        slack = 1e-12 * max(1.0, self.total_epsilon)
        if eps_spent > self.total_epsilon + slack or delta_spent > self.total_delta + 1e-15:
            raise PreconditionError(f"budget overdraft on '{label}': spent ({eps_spent}, {delta_spent}) "
                                    f"of ({self.total_epsilon}, {self.total_delta})")
        self.ledger.append((label, epsilon, delta))
        logger.debug(f"Spent ({epsilon}, {delta}) on '{label}'")

    @property
    def spent(self) -> Tuple[float, float]:
        return compose([(e, d) for _, e, d in self.ledger])

    @property
    def remaining(self) -> Tuple[float, float]:
        eps_spent, delta_spent = self.spent
        return max(self.total_epsilon - eps_spent, 0.0), max(self.total_delta - delta_spent, 0.0)

    def split_evenly(self, parts: int, label: str = "run") -> Sequence[Tuple[float, float]]:
        """Spend the whole budget in ``parts`` equal shares and return them."""
        if parts < 1:
            raise PreconditionError("parts must be positive")
        eps_left, delta_left = self.remaining
        share = (eps_left / parts, delta_left / parts)
        for index in range(parts):
            self.spend(share[0], share[1], label=f"{label}-{index}")
        return [share] * parts
