"""Retrieval benchmark (precision/recall@R) and k-NN classification on sketches."""

import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..config import ORDERING_BENCHMARK, settings
from ..core.processing_engine import build_mechanism, sketch_matrix
from ..core.randomness import RngStream
from ..exceptions import DPRPError, PreconditionError
from ..models import Dataset, MechanismConfig, RetrievalTask
from ..utils.serialization import hamming_distances, pack_signs

logger = logging.getLogger(__name__)


def cosine_matrix(queries: np.ndarray, database: np.ndarray) -> np.ndarray:
    """Pairwise cosines; zero rows get cosine 0."""
    def unit(matrix):
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return matrix / norms
    return unit(np.asarray(queries, dtype=np.float64)) @ unit(np.asarray(database, dtype=np.float64)).T


def build_gold_standard(task: RetrievalTask) -> RetrievalTask:
    """Top-G database rows per query by exact cosine; ties broken by row id."""
    similarities = cosine_matrix(task.queries.matrix, task.database.matrix)
    ids = task.database.ids()
    id_rank = np.empty(len(ids), dtype=np.int64)
    id_rank[np.argsort(np.array(ids), kind="stable")] = np.arange(len(ids))
    gold_size = min(task.gold_size, task.database.n)

    gold = []
    for row in similarities:
        order = np.lexsort((id_rank, -row))
        gold.append(order[:gold_size].tolist())
    return task.model_copy(update={"gold": gold})


def precision_recall_at(retrieved: Sequence, gold: Iterable, R: int) -> Tuple[float, float]:
    """precision@R = hits in the top R / R and recall@R = hits / |gold|."""
    gold = set(gold)
    if R < 1:
        raise PreconditionError(f"R must be positive (R={R})")
    if not gold:
        raise PreconditionError("gold set is empty")
    hits = len(set(list(retrieved)[:R]) & gold)
    return hits / R, hits / len(gold)


def rank_database(query_payloads: np.ndarray, database_payloads: np.ndarray, is_sign: bool,
                  depth: int) -> np.ndarray:
    """Top ``depth`` database indices per query: cosine for real sketches, Hamming for signs."""
    depth = min(depth, database_payloads.shape[0])
    if is_sign:
        packed_db = pack_signs(database_payloads)
        packed_q = pack_signs(query_payloads)
        scores = np.vstack([hamming_distances(query, packed_db) for query in packed_q]).astype(np.float64)
    else:
        scores = -cosine_matrix(query_payloads, database_payloads)
    return np.argsort(scores, axis=1, kind="stable")[:, :depth]


def _with(cfg: MechanismConfig, epsilon: float, k: int) -> MechanismConfig:
    return MechanismConfig(**{**cfg.model_dump(), "epsilon": epsilon, "k": k})


def _sketch_pair(cfg: MechanismConfig, database: Dataset, queries: Dataset, seed: int):
    stream = RngStream(seed=seed)
    spec = cfg.projection_spec(database.p, stream.child_seed("projection"))
    mechanism = build_mechanism(cfg, spec)
    db = sketch_matrix(mechanism, cfg, database, seed)
    q = sketch_matrix(mechanism, cfg, queries, stream.child_seed("queries"))
    return db, q


def _retrieval_cell(args) -> List[Dict]:
    cfg, task, seed = args
    base = {"mechanism": cfg.name, "epsilon": cfg.epsilon, "k": cfg.k, "seed": seed}
    try:
        db, q = _sketch_pair(cfg, task.database, task.queries, seed)
        ranked = rank_database(q, db, cfg.is_sign, max(task.r_grid))
        rows = []
        for R in task.r_grid:
            pairs = [precision_recall_at(ranked[i], task.gold[i], R) for i in range(len(task.gold))]
            precision, recall = np.mean(pairs, axis=0)
            rows.append({**base, "R": R, "precision": float(precision), "recall": float(recall), "error": None})
        return rows
    except (DPRPError, ValueError) as e:
        logger.error(f"Retrieval cell {cfg.name} eps={cfg.epsilon} k={cfg.k} seed={seed} failed: {e}")
        return [{**base, "R": R, "precision": np.nan, "recall": np.nan, "error": str(e)} for R in task.r_grid]


def _run_cells(worker, tasks: List, jobs: int, progress: bool, desc: str) -> List[Dict]:
    rows: List[Dict] = []
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for cell_rows in tqdm(pool.map(worker, tasks), total=len(tasks), desc=desc, disable=not progress):
                rows.extend(cell_rows)
    else:
        for task in tqdm(tasks, desc=desc, disable=not progress):
            rows.extend(worker(task))
    return rows


def _summarize(frame: pd.DataFrame, keys: List[str], metrics: List[str]) -> pd.DataFrame:
    grouped = frame.groupby(keys, sort=True)
    summary = grouped[metrics].mean()
    for metric in metrics:
        summary[f"{metric}_std"] = grouped[metric].std(ddof=1)
    summary["n_seeds"] = grouped[metrics[0]].count()
    return summary.reset_index()


def ordering_mechanisms(names: Optional[Iterable[str]] = None, epsilon: float = 1.0) -> List[MechanismConfig]:
    """Configs of the ordering benchmark; epsilon is a placeholder for the run's grid."""
    names = list(names) if names is not None else list(ORDERING_BENCHMARK)
    unknown = [name for name in names if name not in ORDERING_BENCHMARK]
    if unknown:
        raise PreconditionError(f"no ordering benchmark entry for {', '.join(unknown)}")
    return [MechanismConfig(epsilon=epsilon, **ORDERING_BENCHMARK[name]) for name in names]


def run_retrieval(task: RetrievalTask, mechanisms: Sequence[MechanismConfig], seeds: Sequence[int],
                  epsilons: Optional[Sequence[float]] = None, ks: Optional[Sequence[int]] = None,
                  jobs: int = None, progress: bool = False, per_seed: bool = False) -> pd.DataFrame:
    """Mean precision/recall@R per (mechanism, epsilon, k, R) over seeds."""
    start_time = time.time()
    if task.gold is None:
        task = build_gold_standard(task)
    jobs = jobs or settings.jobs

    cells = []
    for cfg in mechanisms:
        for epsilon, k, seed in itertools.product(epsilons or [cfg.epsilon], ks or [cfg.k], seeds):
            cells.append((_with(cfg, epsilon, k), task, int(seed)))
    logger.info(f"Running {len(cells)} retrieval cells on {jobs} worker(s)")

    frame = pd.DataFrame(_run_cells(_retrieval_cell, cells, jobs, progress, "retrieval"))
    frame = frame.sort_values(["mechanism", "epsilon", "k", "seed", "R"]).reset_index(drop=True)
    logger.info(f"Retrieval benchmark finished in {time.time() - start_time:.2f}s")
    if per_seed:
        return frame
    return _summarize(frame, ["mechanism", "epsilon", "k", "R"], ["precision", "recall"])


def knn_classify(train: np.ndarray, labels: np.ndarray, test: np.ndarray, k: int = 5,
                 metric: str = "cosine") -> np.ndarray:
    """Majority vote of the k nearest training rows; ties go to the smallest label."""
    labels = np.asarray(labels, dtype=np.int64)
    if metric not in ("cosine", "hamming"):
        raise PreconditionError(f"unknown metric '{metric}' (expected cosine or hamming)")
    neighbors = rank_database(test, train, is_sign=metric == "hamming", depth=k)
    n_labels = int(labels.max()) + 1
    return np.array([np.argmax(np.bincount(labels[row], minlength=n_labels)) for row in neighbors])


def _classification_cell(args) -> List[Dict]:
    cfg, train, train_labels, test, test_labels, neighbors, seed = args
    base = {"mechanism": cfg.name, "epsilon": cfg.epsilon, "k": cfg.k, "seed": seed}
    try:
        train_sketch, test_sketch = _sketch_pair(cfg, train, test, seed)
        metric = "hamming" if cfg.is_sign else "cosine"
        predicted = knn_classify(train_sketch, train_labels, test_sketch, k=neighbors, metric=metric)
        return [{**base, "accuracy": float(np.mean(predicted == test_labels)), "error": None}]
    except (DPRPError, ValueError) as e:
        logger.error(f"Classification cell {cfg.name} eps={cfg.epsilon} seed={seed} failed: {e}")
        return [{**base, "accuracy": np.nan, "error": str(e)}]


def run_classification(train: Dataset, train_labels: np.ndarray, test: Dataset, test_labels: np.ndarray,
                       mechanisms: Sequence[MechanismConfig], seeds: Sequence[int],
                       epsilons: Optional[Sequence[float]] = None, ks: Optional[Sequence[int]] = None,
                       neighbors: int = 5, jobs: int = None, progress: bool = False) -> pd.DataFrame:
    """k-NN accuracy per (mechanism, epsilon, k) averaged over seeds."""
    jobs = jobs or settings.jobs
    cells = []
    for cfg in mechanisms:
        for epsilon, k, seed in itertools.product(epsilons or [cfg.epsilon], ks or [cfg.k], seeds):
            cells.append((_with(cfg, epsilon, k), train, np.asarray(train_labels), test,
                          np.asarray(test_labels), neighbors, int(seed)))
    logger.info(f"Running {len(cells)} classification cells on {jobs} worker(s)")
    frame = pd.DataFrame(_run_cells(_classification_cell, cells, jobs, progress, "knn"))
    return _summarize(frame, ["mechanism", "epsilon", "k"], ["accuracy"])
