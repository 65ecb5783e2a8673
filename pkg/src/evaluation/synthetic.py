"""Synthetic benchmark data."""

import logging
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..config import SYNTHETIC_DEFAULTS, settings
from ..core.randomness import as_generator
from ..models import Dataset, RetrievalTask

logger = logging.getLogger(__name__)


def _bound_for(matrix: np.ndarray) -> float:
    """Smallest integer C >= max |entry| (at least 1)."""
    return float(max(math.ceil(float(np.max(np.abs(matrix)))), 1))


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


def sphere_dataset(n: int, p: int, norms: Sequence[float], rng, prefix: str = "row",
                   centers: Optional[np.ndarray] = None, spread: float = 1.0) -> Dataset:
    """Rows with uniform random directions, scaled to norms cycled from ``norms``.

    With ``centers`` the directions are drawn around the given unit centers
    (row i uses center i mod len(centers)) with isotropic spread.
    """
    generator = as_generator(rng)
    directions = generator.standard_normal((n, p))
    if centers is not None:
        directions = spread * _unit_rows(directions) + centers[np.arange(n) % len(centers)]
    scale = np.resize(np.asarray(norms, dtype=np.float64), n)
    matrix = _unit_rows(directions) * scale[:, np.newaxis]
    return Dataset.from_matrix(matrix, bound=_bound_for(matrix), row_ids=[f"{prefix}-{i}" for i in range(n)])


def random_centers(n_classes: int, p: int, rng) -> np.ndarray:
    return _unit_rows(as_generator(rng).standard_normal((n_classes, p)))


def clustered_dataset(n: int, p: int, n_classes: int, norm: Union[float, Sequence[float]], rng,
                      spread: float = 1.0, centers: Optional[np.ndarray] = None,
                      prefix: str = "row") -> Tuple[Dataset, np.ndarray]:
    """Labeled rows around ``n_classes`` random centers; returns the dataset and labels.

    ``norm`` may be a sequence, cycled over the rows like ``sphere_dataset`` norms.
    """
    generator = as_generator(rng)
    centers = random_centers(n_classes, p, generator) if centers is None else centers
    labels = generator.integers(0, n_classes, size=n)
    noise = _unit_rows(generator.standard_normal((n, p)))
    scale = np.resize(np.atleast_1d(np.asarray(norm, dtype=np.float64)), n)
    matrix = _unit_rows(centers[labels] + spread * noise) * scale[:, np.newaxis]
    dataset = Dataset.from_matrix(matrix, bound=_bound_for(matrix), row_ids=[f"{prefix}-{i}" for i in range(n)])
    return dataset, labels


def retrieval_task(n_database: int = None, n_queries: int = None, p: int = None,
                   norms: Sequence[float] = None, rng=0, gold_size: int = None,
                   n_classes: int = None) -> RetrievalTask:
    """Database and queries sharing cluster centers, so cosine neighbors are meaningful."""
    n_database = n_database or SYNTHETIC_DEFAULTS["n_database"]
    n_queries = n_queries or SYNTHETIC_DEFAULTS["n_queries"]
    p = p or SYNTHETIC_DEFAULTS["p"]
    norms = norms or SYNTHETIC_DEFAULTS["norms"]
    n_classes = n_classes or SYNTHETIC_DEFAULTS["n_classes"]
    generator = as_generator(rng)

    centers = random_centers(n_classes, p, generator)
    database = sphere_dataset(n_database, p, norms, generator, prefix="db", centers=centers)
    queries = sphere_dataset(n_queries, p, norms, generator, prefix="q", centers=centers)
    # Both sets share one entry bound
    bound = max(database.bound, queries.bound)
    database = Dataset(rows=database.rows, bound=bound, row_ids=database.row_ids)
    queries = Dataset(rows=queries.rows, bound=bound, row_ids=queries.row_ids)
    logger.info(f"Synthetic retrieval task: {n_database} database rows, {n_queries} queries, p={p}, norms={list(norms)}")
    return RetrievalTask(database=database, queries=queries,
                         gold_size=min(gold_size or settings.gold_standard_size, n_database))
