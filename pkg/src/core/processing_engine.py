"""Main processing engine that orchestrates dataset privatization."""

import time
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Iterable, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .dataset import validate_dataset
from .projections import materialize, project, take_signs
from .randomness import RngStream
from ..config import settings
from ..exceptions import DataValidationError, DPRPError, UnsupportedMechanismError
from ..mechanisms.dp_rp import DpRpConfig, DpRpMechanism
from ..mechanisms.dp_sign import SignOPORPMechanism, SignRPRandomizedResponse, SignRPSmooth
from ..mechanisms.idp_sign import IdpSignRPGaussian, IdpSignRPRandomizedResponse
from ..models import (
    DataVector, Dataset, MechanismConfig, MechanismFamily, PrivatizationResult, ProjectionSpec, Sketch
)

logger = logging.getLogger(__name__)


class PlainProjection:
    """Non-private RP or SignRP baseline."""

    def __init__(self, spec: ProjectionSpec, signs: bool):
        self.spec = spec
        self.signs = signs
        self.operator = materialize(spec)
        self.name = "baseline:signrp_plain" if signs else "baseline:rp_plain"

    def privatize(self, u: DataVector, rng=None, row_id: Optional[str] = None) -> Sketch:
        sketch = project(self.operator, u)
        provenance = sketch.provenance.model_copy(update={"mechanism": self.name, "row_id": row_id})
        sketch = Sketch(payload=sketch.payload, provenance=provenance)
        return take_signs(sketch) if self.signs else sketch


def build_mechanism(cfg: MechanismConfig, spec: Optional[ProjectionSpec]):
    """Instantiate the mechanism a config names on a given public projection."""
    budget = cfg.budget()
    family, variant = cfg.family, cfg.variant

    if family == MechanismFamily.DP_RP:
        return DpRpMechanism(DpRpConfig(variant=variant, spec=spec, budget=budget,
                                        sensitivity_mode=cfg.sensitivity_mode))
    if family == MechanismFamily.SIGN:
        if variant == "rr":
            return SignRPRandomizedResponse(spec, budget, norm_lower_bound=cfg.norm_lower_bound)
        if variant == "rr_smooth":
            return SignRPSmooth(spec, budget)
        return SignOPORPMechanism(spec, budget, smooth=variant == "oporp_rr_smooth",
                                  repetitions=cfg.repetitions)
    if family == MechanismFamily.IDP:
        if variant == "g":
            return IdpSignRPGaussian(spec, budget, allow_gaussian=cfg.allow_gaussian)
        return IdpSignRPRandomizedResponse(spec, budget, allow_gaussian=cfg.allow_gaussian)
    if family == MechanismFamily.BASELINE:
        return PlainProjection(spec, signs=variant == "signrp_plain")
    raise UnsupportedMechanismError(f"no mechanism for {cfg.name}")


def _privatize_chunk(args: Tuple) -> Tuple[List[Tuple[int, Sketch]], List[Tuple[int, str]]]:
    cfg, spec, dataset, indices, seed = args
    mechanism = build_mechanism(cfg, spec)
    return _privatize_rows(mechanism, cfg, dataset, indices, seed)


def _privatize_rows(mechanism, cfg: MechanismConfig, dataset: Dataset, indices: Iterable[int], seed: int):
    root = RngStream(seed=seed)
    ids = dataset.ids()
    done, failed = [], []
    for index in indices:
        row_id = ids[index]
        try:
            stream = root.derive("noise", cfg.name, row_id)
            done.append((index, mechanism.privatize(dataset.vector(index), stream, row_id=row_id)))
        except (DPRPError, ValueError) as e:
            failed.append((index, str(e)))
    return done, failed


class PrivatizationEngine:
    """Privatizes every row of a dataset with one mechanism.

    The projection spec is derived from the top-level seed, and each row draws
    its noise from its own stream (seed, "noise", mechanism, row id), so the
    output does not depend on the number of workers.
    """

    def __init__(self, cfg: MechanismConfig, seed: int = None, jobs: int = None):
        self.cfg = cfg
        self.seed = settings.default_seed if seed is None else seed
        self.jobs = jobs or settings.jobs

    def projection_spec(self, p: int) -> Optional[ProjectionSpec]:
        return self.cfg.projection_spec(p, RngStream(seed=self.seed).child_seed("projection"))

    def privatize_dataset(self, dataset: Dataset, progress: bool = False) -> PrivatizationResult:
        start_time = time.time()

        try:
            logger.info(f"Privatizing {dataset.n} rows with {self.cfg.name} "
                        f"(eps={self.cfg.epsilon}, delta={self.cfg.delta}, k={self.cfg.k})")
            report = validate_dataset(dataset)
            report.raise_if_invalid()

            spec = self.projection_spec(dataset.p)
            mechanism = build_mechanism(self.cfg, spec)

            indices = list(range(dataset.n))
            if self.jobs > 1 and dataset.n > 1:
                chunks = [indices[i::self.jobs] for i in range(self.jobs)]
                done, failed = [], []
                with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                    tasks = [(self.cfg, spec, dataset, chunk, self.seed) for chunk in chunks if chunk]
                    for chunk_done, chunk_failed in pool.map(_privatize_chunk, tasks):
                        done.extend(chunk_done)
                        failed.extend(chunk_failed)
            else:
                rows = tqdm(indices, desc=self.cfg.name, disable=not progress)
                done, failed = _privatize_rows(mechanism, self.cfg, dataset, rows, self.seed)

            for index, message in failed:
                logger.error(f"Failed to privatize row {index}: {message}")

            done.sort(key=lambda item: item[0])
            failed_rows = sorted(index for index, _ in failed)
            processing_time = time.time() - start_time
            logger.info(f"Privatized {len(done)}/{dataset.n} rows in {processing_time:.2f}s")

            return PrivatizationResult(
                success=not failed_rows,
                sketches=[sketch for _, sketch in done],
                failed_rows=failed_rows,
                error_message=f"{len(failed_rows)} row(s) failed" if failed_rows else None,
                processing_time=processing_time
            )

        except DataValidationError as e:
            logger.error(f"Privatization failed: {e}")
            return PrivatizationResult(
                success=False,
                error_message=str(e),
                processing_time=time.time() - start_time
            )


def sketch_matrix(mechanism, cfg: MechanismConfig, dataset: Dataset, seed: int) -> np.ndarray:
    """Payload matrix of every row; raises on the first failed row."""
    done, failed = _privatize_rows(mechanism, cfg, dataset, range(dataset.n), seed)
    if failed:
        index, message = failed[0]
        raise DataValidationError(f"row {index}: {message}")
    return np.vstack([sketch.payload for _, sketch in done])
