"""Monte Carlo oracle: seeded sampling estimates of analytic quantities.

Each target samples the quantity directly from its definition and returns an
estimate with its standard error. Targets are registered by name; their
parameters come from a dict with per-target defaults.
"""

import difflib
import logging
import math
from typing import Any, Callable, Dict, Iterator, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..analysis.analytic import binomial_tail, chi_square_tail, half_normal_tail, n_plus_bound
from ..config import settings
from ..core.randomness import RngStream, label_to_id
from ..exceptions import PreconditionError
from ..mechanisms.calibration import sensitivity_l1_bound, sensitivity_l2_bound
from ..mechanisms.idp_sign import sign_changeable_count
from ..models import NPlusFlavor, OracleResult

logger = logging.getLogger(__name__)

ORACLE_TARGETS: Dict[str, Dict[str, Any]] = {}
_SAMPLERS: Dict[str, Callable] = {}

DEFAULT_BATCH = 10_000


def oracle_target(name: str, **defaults):
    """Register a target with its default parameters."""
    def register(function):
        ORACLE_TARGETS[name] = defaults
        _SAMPLERS[name] = function
        return function
    return register


def _batches(n: int, size: int) -> Iterator[int]:
    full, rest = divmod(n, size)
    for _ in range(full):
        yield size
    if rest:
        yield rest


def _mean_and_se(values: np.ndarray) -> Tuple[float, float]:
    count = values.size
    if count < 2:
        return float(np.mean(values)) if count else math.nan, math.inf
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(count))


def _rademacher(generator: np.random.Generator, shape) -> np.ndarray:
    return 2.0 * generator.integers(0, 2, size=shape) - 1.0


def unit_pair(params: Dict[str, Any]) -> Tuple[np.ndarray, np.ndarray]:
    """Unit vectors u, v in R^p with u^T v = rho, fixed by data_seed."""
    p, rho = int(params["p"]), float(params["rho"])
    generator = RngStream(seed=int(params["data_seed"]), stream_id=label_to_id("oracle-data")).generator()
    basis, _ = np.linalg.qr(generator.standard_normal((p, 2)))
    u = basis[:, 0]
    v = rho * basis[:, 0] + math.sqrt(1.0 - rho * rho) * basis[:, 1]
    return u, v


def _oporp_batch(values: np.ndarray, permutations: np.ndarray, weights: np.ndarray, k: int) -> np.ndarray:
    size, p = permutations.shape
    width = -(-p // k)
    padded = np.zeros((size, k * width))
    padded[:, :p] = values[permutations] * weights
    return padded.reshape(size, k, width).sum(axis=2)


def _inner_product_draws(params: Dict[str, Any], generator: np.random.Generator, size: int) -> np.ndarray:
    u, v = unit_pair(params)
    kind, k, sigma = params["kind"], int(params["k"]), float(params["sigma"])
    p = u.size
    if kind == "raw":
        a = sigma * generator.standard_normal((size, p))
        b = sigma * generator.standard_normal((size, p))
        return np.einsum("bp,bp->b", u + a, v + b)
    if kind == "rp":
        shape = (size, p, k)
        if params["projection"] == "gaussian":
            matrix = generator.standard_normal(shape)
        else:
            matrix = _rademacher(generator, shape)
        x = np.einsum("p,bpk->bk", u, matrix) / math.sqrt(k)
        y = np.einsum("p,bpk->bk", v, matrix) / math.sqrt(k)
    elif kind == "oporp":
        permutations = np.argsort(generator.random((size, p)), axis=1)
        weights = _rademacher(generator, (size, p))
        x = _oporp_batch(u, permutations, weights, k)
        y = _oporp_batch(v, permutations, weights, k)
    else:
        raise PreconditionError(f"unknown inner product kind '{kind}' (expected raw, rp or oporp)")
    x = x + sigma * generator.standard_normal(x.shape)
    y = y + sigma * generator.standard_normal(y.shape)
    return np.einsum("bk,bk->b", x, y)


@oracle_target("collision", theta=math.pi / 2)
def _collision(params, generator, size):
    theta = float(params["theta"])
    z = generator.standard_normal((size, 2))
    x = z[:, 0]
    y = math.cos(theta) * z[:, 0] + math.sin(theta) * z[:, 1]
    return (np.where(x >= 0, 1, -1) == np.where(y >= 0, 1, -1)).astype(np.float64)


@oracle_target("p_plus_gaussian", r=0.5, p=100)
def _p_plus_gaussian(params, generator, size):
    r, p = float(params["r"]), int(params["p"])
    z = np.abs(generator.standard_normal(size))
    largest = np.max(np.abs(generator.standard_normal((size, p))), axis=1)
    return (z <= r * largest).astype(np.float64)


@oracle_target("p_plus_rademacher", r=0.5, p=1000, data_seed=0)
def _p_plus_rademacher(params, generator, size):
    r, p = float(params["r"]), int(params["p"])
    direction = RngStream(seed=int(params["data_seed"]), stream_id=label_to_id("oracle-u")).generator()
    u = direction.standard_normal(p)
    u /= np.linalg.norm(u)
    return (np.abs(_rademacher(generator, (size, p)) @ u) <= r).astype(np.float64)


def _correlated(params, generator, size):
    r, rho = float(params["r"]), float(params["rho"])
    sigma_x = float(params.get("sigma_x", r))
    sigma_y = sigma_x / r
    z1, z2 = generator.standard_normal(size), generator.standard_normal(size)
    x = sigma_x * z1
    y = sigma_y * (rho * z1 + math.sqrt(1.0 - rho * rho) * z2)
    return x, y


@oracle_target("abs_exceed", r=1.0, rho=0.0)
def _abs_exceed(params, generator, size):
    x, y = _correlated(params, generator, size)
    return (np.abs(x) > np.abs(y)).astype(np.float64)


@oracle_target("conditional_expectation", r=1.0, rho=0.0, sigma_x=1.0)
def _conditional_expectation(params, generator, size):
    x, y = _correlated(params, generator, size)
    return np.abs(x[np.abs(x) > np.abs(y)])


@oracle_target("inner_product", kind="rp", p=64, k=16, sigma=0.0, rho=0.5, projection="rademacher", data_seed=0)
def _inner_product(params, generator, size):
    return _inner_product_draws(params, generator, size)


@oracle_target("inner_product_variance", kind="rp", p=64, k=16, sigma=0.0, rho=0.5,
               projection="rademacher", data_seed=0)
def _inner_product_variance(params, generator, size):
    return _inner_product_draws(params, generator, size)


@oracle_target("oporp_rp_variance_ratio", p=64, k=16, rho=0.5, data_seed=0)
def _variance_ratio(params, generator, size):
    common = {**params, "sigma": 0.0, "projection": "rademacher"}
    oporp = _inner_product_draws({**common, "kind": "oporp"}, generator, size)
    rp = _inner_product_draws({**common, "kind": "rp"}, generator, size)
    return np.stack([oporp, rp])


@oracle_target("n_plus_coverage", p=256, k=128, norm=10.0, beta=1.0, delta=0.01, data_seed=0)
def _n_plus_coverage(params, generator, size):
    p, k = int(params["p"]), int(params["k"])
    beta, norm = float(params["beta"]), float(params["norm"])
    direction = RngStream(seed=int(params["data_seed"]), stream_id=label_to_id("oracle-u")).generator()
    u = direction.standard_normal(p)
    u *= norm / np.linalg.norm(u)
    bound = n_plus_bound(norm, beta, float(params["delta"]), k, p, flavor=NPlusFlavor.GAUSSIAN).value
    counts = np.array([sign_changeable_count(generator.standard_normal((p, k)) / math.sqrt(k), u, beta)
                       for _ in range(size)])
    return (counts > bound).astype(np.float64)


@oracle_target("sensitivity_coverage", p=64, k=16, beta=1.0, delta_share=0.01, norm="l2")
def _sensitivity_coverage(params, generator, size):
    p, k, beta = int(params["p"]), int(params["k"]), float(params["beta"])
    share = float(params["delta_share"])
    matrices = generator.standard_normal((size, p, k))
    if params["norm"] == "l1":
        realized = beta * np.max(np.sum(np.abs(matrices), axis=2), axis=1) / math.sqrt(k)
        bound = sensitivity_l1_bound(p, k, beta, share)
    else:
        realized = beta * np.max(np.linalg.norm(matrices, axis=2), axis=1) / math.sqrt(k)
        bound = sensitivity_l2_bound(p, k, beta, share)
    return (realized > bound).astype(np.float64)


@oracle_target("chi_square_tail", dof=10, t=2.0)
def _chi_square_tail(params, generator, size):
    dof = int(params["dof"])
    threshold = chi_square_tail(dof, float(params["t"])).threshold
    return (generator.chisquare(dof, size) >= threshold).astype(np.float64)


@oracle_target("half_normal_tail", dof=10, t=2.0)
def _half_normal_tail(params, generator, size):
    dof = int(params["dof"])
    threshold = half_normal_tail(dof, float(params["t"])).threshold
    sums = np.sum(np.abs(generator.standard_normal((size, dof))), axis=1)
    return (sums >= threshold).astype(np.float64)


@oracle_target("binomial_tail", trials=100, prob=0.1, eta=0.5)
def _binomial_tail(params, generator, size):
    trials, prob = int(params["trials"]), float(params["prob"])
    threshold = binomial_tail(trials, prob, float(params["eta"])).threshold
    return (generator.binomial(trials, prob, size) >= threshold).astype(np.float64)


def _variance_estimate(values: np.ndarray) -> Tuple[float, float]:
    """Sample variance and its standard error from the fourth central moment."""
    count = values.size
    centered = values - np.mean(values)
    variance = float(np.sum(centered ** 2) / (count - 1))
    fourth = float(np.mean(centered ** 4))
    return variance, math.sqrt(max(fourth - variance ** 2, 0.0) / count)


def _ratio_estimate(chunks) -> Tuple[float, float]:
    """Ratio of variances over all draws; standard error from per-batch ratios."""
    oporp = np.concatenate([chunk[0] for chunk in chunks])
    rp = np.concatenate([chunk[1] for chunk in chunks])
    ratios = np.array([np.var(chunk[0], ddof=1) / np.var(chunk[1], ddof=1)
                       for chunk in chunks if chunk.shape[1] >= 10])
    estimate = float(np.var(oporp, ddof=1) / np.var(rp, ddof=1))
    return estimate, float(np.std(ratios, ddof=1) / math.sqrt(len(ratios)))


def monte_carlo_oracle(target: str, n: int, params: Optional[Dict[str, Any]] = None,
                       seed: int = None, batch_size: int = None, progress: bool = False) -> OracleResult:
    """Seeded sampling estimate of ``target`` from ``n`` draws."""
    if target not in _SAMPLERS:
        suggestions = difflib.get_close_matches(target, list(_SAMPLERS), n=3, cutoff=0.3)
        hint = f"; did you mean: {', '.join(suggestions)}" if suggestions else ""
        raise PreconditionError(f"unknown oracle target '{target}'{hint}")
    if n < settings.oracle_min_samples:
        raise PreconditionError(f"oracle needs n >= {settings.oracle_min_samples} samples (n={n})")

    merged = {**ORACLE_TARGETS[target], **(params or {})}
    seed = settings.default_seed if seed is None else seed
    generator = RngStream(seed=seed, stream_id=label_to_id("oracle", target)).generator()
    sampler = _SAMPLERS[target]

    if target == "oporp_rp_variance_ratio":
        # At least 10 batches for the batch-ratio standard error
        batch_size = min(batch_size or DEFAULT_BATCH, max(n // 10, 2))
    else:
        batch_size = batch_size or DEFAULT_BATCH

    chunks = [sampler(merged, generator, size)
              for size in tqdm(list(_batches(n, batch_size)), desc=target, disable=not progress)]

    if target == "oporp_rp_variance_ratio":
        estimate, standard_error = _ratio_estimate(chunks)
    elif target == "inner_product_variance":
        estimate, standard_error = _variance_estimate(np.concatenate(chunks))
    else:
        estimate, standard_error = _mean_and_se(np.concatenate(chunks))

    logger.info(f"Oracle {target} n={n}: {estimate:.6g} +/- {standard_error:.3g}")
    return OracleResult(target=target, params=merged, estimate=estimate, standard_error=standard_error, n=n)
