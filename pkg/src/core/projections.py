"""Public projection operators: dense random projections, OPORP and sign extraction.

Dense kinds compute x = (1/sqrt(k)) W^T u. OPORP permutes the coordinates,
zero-pads to a multiple of k, splits into k fixed-length bins and returns the
per-bin dot products with a Rademacher vector w, without the 1/sqrt(k) factor.
"""

import logging
from functools import lru_cache
from typing import Optional

import numpy as np

from ..exceptions import DataValidationError, PreconditionError
from ..models import DataVector, ProjectionKind, ProjectionSpec, Sketch, SketchProvenance
from .randomness import RngStream, label_to_id

logger = logging.getLogger(__name__)


class ProjectionOperator:
    """A materialized, immutable projection operator."""

    def __init__(self, spec: ProjectionSpec, matrix: Optional[np.ndarray] = None,
                 permutation: Optional[np.ndarray] = None, w: Optional[np.ndarray] = None):
        self.spec = spec
        self.scale = 1.0 / np.sqrt(spec.k) if spec.is_scaled else 1.0

        if spec.kind == ProjectionKind.OPORP:
            if permutation is None or w is None:
                raise PreconditionError("oporp operator needs a permutation and a projection vector")
            self.permutation = np.asarray(permutation, dtype=np.int64)
            self.w = np.asarray(w, dtype=np.float64)
            if sorted(self.permutation.tolist()) != list(range(spec.p)) or self.w.size != spec.p:
                raise PreconditionError("permutation must be a bijection on [p] and w must have length p")
            self.bin_size = -(-spec.p // spec.k)
            self.matrix = self._oporp_embedding()
        else:
            if matrix is None or matrix.shape != (spec.p, spec.k):
                raise PreconditionError(f"dense operator needs a {spec.p}x{spec.k} matrix")
            self.permutation = None
            self.w = None
            self.bin_size = None
            self.matrix = np.asarray(matrix, dtype=np.float64)

        self.matrix.setflags(write=False)
        # Scaled embedding M with x = M^T u for every kind
        self.embedding = self.matrix * self.scale
        self.embedding.setflags(write=False)

    def _oporp_embedding(self) -> np.ndarray:
        p, k = self.spec.p, self.spec.k
        embedding = np.zeros((p, k), dtype=np.float64)
        positions = np.arange(p)
        embedding[self.permutation, positions // self.bin_size] = self.w
        return embedding

    def bin_of(self, coordinate: int) -> int:
        """Output bin receiving an input coordinate (OPORP only)."""
        if self.permutation is None:
            raise PreconditionError("bin_of is only defined for oporp operators")
        position = int(np.flatnonzero(self.permutation == coordinate)[0])
        return position // self.bin_size

    def project_array(self, values: np.ndarray) -> np.ndarray:
        """Project one vector or a matrix of row vectors."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != self.spec.p:
            raise DataValidationError(f"dimension mismatch: got {values.shape[-1]}, expected {self.spec.p}")
        return values @ self.embedding

    def column_max_abs(self) -> np.ndarray:
        """max_i |M_ij| per output in the same scaling as the projected values."""
        column_max = np.max(np.abs(self.embedding), axis=0)
        # Bins made only of padding carry no data; any positive value keeps L_j = 1
        column_max[column_max == 0] = self.scale
        return column_max

    def row_norms(self, order: int) -> np.ndarray:
        """Row norms of the unscaled matrix."""
        return np.linalg.norm(self.matrix, ord=order, axis=1)


def _dense_entries(spec: ProjectionSpec, generator: np.random.Generator) -> np.ndarray:
    shape = (spec.p, spec.k)
    if spec.kind == ProjectionKind.GAUSSIAN:
        return generator.standard_normal(shape)
    if spec.kind == ProjectionKind.UNIFORM:
        return np.sqrt(3.0) * generator.uniform(-1.0, 1.0, size=shape)
    s = spec.sparsity
    tail = 1.0 / (2.0 * s)
    return np.sqrt(s) * generator.choice([-1.0, 0.0, 1.0], size=shape, p=[tail, 1.0 - 2.0 * tail, tail])


@lru_cache(maxsize=32)
def materialize(spec: ProjectionSpec) -> ProjectionOperator:
    """Deterministic operator for a spec; equal specs give identical operators."""
    generator = RngStream(seed=spec.seed, stream_id=label_to_id("projection")).generator()
    if spec.kind == ProjectionKind.OPORP:
        permutation = generator.permutation(spec.p)
        w = generator.choice([-1.0, 1.0], size=spec.p)
        operator = ProjectionOperator(spec, permutation=permutation, w=w)
    else:
        operator = ProjectionOperator(spec, matrix=_dense_entries(spec, generator))
    logger.debug(f"Materialized {spec.kind.value} projection p={spec.p} k={spec.k} digest={spec.digest()}")
    return operator


def _plain_provenance(spec: ProjectionSpec, mechanism: str) -> SketchProvenance:
    return SketchProvenance(mechanism=mechanism, spec_digest=spec.digest(), projection_kind=spec.kind,
                            scaled=spec.is_scaled, sparsity=spec.recorded_sparsity, private=False)


def project(operator: ProjectionOperator, u: DataVector) -> Sketch:
    """Non-private dense projection x = (1/sqrt(k)) W^T u."""
    if operator.spec.kind == ProjectionKind.OPORP:
        return oporp(operator.spec, u, operator=operator)
    payload = operator.project_array(u.values)
    return Sketch(payload=payload, provenance=_plain_provenance(operator.spec, "baseline:rp_plain"))


def oporp(spec: ProjectionSpec, u: DataVector, operator: Optional[ProjectionOperator] = None) -> Sketch:
    """Non-private OPORP sketch (per-bin dot products, unscaled)."""
    if spec.kind != ProjectionKind.OPORP:
        raise PreconditionError(f"oporp requires an oporp spec, got {spec.kind.value}")
    operator = operator or materialize(spec)
    if u.p != spec.p:
        raise DataValidationError(f"dimension mismatch: got {u.p}, expected {spec.p}")
    padded = np.zeros(spec.k * operator.bin_size)
    padded[:spec.p] = u.values[operator.permutation]
    weights = np.zeros_like(padded)
    weights[:spec.p] = operator.w
    payload = (padded * weights).reshape(spec.k, operator.bin_size).sum(axis=1)
    return Sketch(payload=payload, provenance=_plain_provenance(spec, "baseline:oporp_plain"))


def sign_with_zero_flags(values: np.ndarray):
    """Entrywise sign with sign(0) = +1, plus the indices of exact zeros."""
    values = np.asarray(values)
    return np.where(values >= 0, 1, -1).astype(np.int8), np.flatnonzero(values == 0)


def take_signs(sketch: Sketch) -> Sketch:
    """Sign sketch of a real sketch; exact zeros map to +1 and are flagged."""
    if sketch.is_sign:
        raise PreconditionError("sketch already holds signs")
    signs, zeros = sign_with_zero_flags(sketch.payload)
    provenance = sketch.provenance.model_copy(update={"zero_flags": zeros.tolist()})
    return Sketch(payload=signs, is_sign=True, provenance=provenance)
