"""Dataset validation, normalization and ingestion."""

import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from ..config import MATRIX_MAGIC_F32, MATRIX_MAGIC_F64
from ..exceptions import DataValidationError
from ..models import Dataset, RowViolation, ValidationReport, ViolationKind
from ..utils.serialization import read_matrix

logger = logging.getLogger(__name__)


def validate_dataset(dataset: Dataset) -> ValidationReport:
    """Report per-row violations of the data model; never raises."""
    violations: List[RowViolation] = []
    p = dataset.p

    for index, row in enumerate(dataset.rows):
        if row.size != p:
            violations.append(RowViolation(
                row=index, kind=ViolationKind.DIMENSION_MISMATCH,
                detail=f"length {row.size}, expected {p}"
            ))
            continue
        if not np.all(np.isfinite(row)):
            violations.append(RowViolation(row=index, kind=ViolationKind.OUT_OF_BOUND,
                                           detail="non-finite entry"))
            continue
        worst = float(np.max(np.abs(row))) if row.size else 0.0
        if worst > dataset.bound:
            column = int(np.argmax(np.abs(row)))
            violations.append(RowViolation(
                row=index, kind=ViolationKind.OUT_OF_BOUND,
                detail=f"entry {row[column]} at column {column} exceeds C={dataset.bound}"
            ))
        if not np.any(row):
            violations.append(RowViolation(row=index, kind=ViolationKind.ZERO_NORM))

    report = ValidationReport(valid=not violations, n_rows=dataset.n, violations=violations)
    if violations:
        logger.warning(f"Dataset validation found {len(violations)} violation(s) in {dataset.n} rows")
    return report


def max_normalize(dataset: Dataset) -> Dataset:
    """Divide each column by its maximum absolute value; C becomes 1.

    All-zero columns are left unchanged.
    """
    matrix = dataset.matrix
    scale = np.max(np.abs(matrix), axis=0)
    scale[scale == 0] = 1.0
    return Dataset.from_matrix(matrix / scale, bound=1.0, row_ids=dataset.row_ids)


def _looks_like_header(path: Path) -> bool:
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline()
    for token in first.strip().split(","):
        try:
            float(token)
        except ValueError:
            return True
    return False


def read_csv(path: str, bound: float = 1.0) -> Dataset:
    """One vector per row, header optional. Ragged rows are kept for validation."""
    path = Path(path)
    header = 0 if _looks_like_header(path) else None
    # A wide names range keeps ragged rows instead of raising a tokenizing error
    with open(path, "r", encoding="utf-8") as handle:
        width = max((line.count(",") + 1 for line in handle if line.strip()), default=1)
    frame = pd.read_csv(path, header=None, skiprows=1 if header == 0 else 0,
                        names=range(width), dtype=np.float64, skip_blank_lines=True)
    rows = []
    for values in frame.to_numpy():
        present = np.flatnonzero(~np.isnan(values))
        length = int(present[-1]) + 1 if present.size else 0
        rows.append(values[:length])
    logger.info(f"Read {len(rows)} rows from {path.name}")
    return Dataset(rows=rows, bound=bound)


def load_dataset(path: str, bound: float = 1.0) -> Dataset:
    """Load a dataset from CSV or the binary matrix format (by magic bytes)."""
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"dataset not found: {path}")
    with open(path, "rb") as handle:
        magic = handle.read(8)
    if magic in (MATRIX_MAGIC_F64, MATRIX_MAGIC_F32):
        matrix = read_matrix(path)
        logger.info(f"Read {matrix.shape[0]}x{matrix.shape[1]} binary matrix from {path.name}")
        return Dataset.from_matrix(matrix, bound=bound)
    return read_csv(str(path), bound=bound)


def write_csv(dataset: Dataset, path: str, header: Optional[List[str]] = None) -> str:
    frame = pd.DataFrame(dataset.matrix, columns=header)
    frame.to_csv(path, index=False, header=header is not None, float_format="%.17g")
    return str(path)
