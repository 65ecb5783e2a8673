"""Binary formats for datasets and sketches.

Real matrices: 8-byte magic, u32 rows, u32 cols (little-endian), then
row-major floats (64-bit for DPRPMAT1, 32-bit for the lossy DPRPMAS1).
Sign matrices: magic DPRPSGN1, u32 rows, u32 k, then ceil(k/8) bytes per row
with bit 1 meaning +1 (numpy big-endian bit order).
"""

import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from ..config import MATRIX_MAGIC_F32, MATRIX_MAGIC_F64, SIGN_MAGIC
from ..exceptions import DataValidationError

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<8sII")

PathLike = Union[str, Path]


def _read_header(path: PathLike) -> Tuple[bytes, int, int, bytes]:
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < _HEADER.size:
        raise DataValidationError(f"{path}: file shorter than the 16-byte header")
    magic, rows, cols = _HEADER.unpack_from(blob)
    return magic, rows, cols, blob[_HEADER.size:]


def write_matrix(matrix: np.ndarray, path: PathLike, single_precision: bool = False) -> str:
    """Write a real matrix; ``single_precision`` is an explicit lossy option."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    magic, dtype = (MATRIX_MAGIC_F32, "<f4") if single_precision else (MATRIX_MAGIC_F64, "<f8")
    rows, cols = matrix.shape
    with open(path, "wb") as handle:
        handle.write(_HEADER.pack(magic, rows, cols))
        handle.write(np.ascontiguousarray(matrix, dtype=dtype).tobytes())
    return str(path)


def read_matrix(path: PathLike) -> np.ndarray:
    magic, rows, cols, body = _read_header(path)
    if magic == MATRIX_MAGIC_F64:
        dtype = "<f8"
    elif magic == MATRIX_MAGIC_F32:
        dtype = "<f4"
    else:
        raise DataValidationError(f"{path}: unknown matrix magic {magic!r}")
    expected = rows * cols * np.dtype(dtype).itemsize
    if len(body) != expected:
        raise DataValidationError(f"{path}: expected {expected} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype=dtype).astype(np.float64).reshape(rows, cols)


def pack_signs(signs: np.ndarray) -> np.ndarray:
    """Pack a (rows, k) matrix of +/-1 into bytes, 8 signs per byte."""
    signs = np.atleast_2d(signs)
    return np.packbits(signs > 0, axis=1)


def unpack_signs(packed: np.ndarray, k: int) -> np.ndarray:
    bits = np.unpackbits(np.atleast_2d(packed), axis=1, count=k)
    return np.where(bits == 1, 1, -1).astype(np.int8)


def write_sign_matrix(signs: np.ndarray, path: PathLike) -> str:
    signs = np.atleast_2d(signs)
    rows, k = signs.shape
    with open(path, "wb") as handle:
        handle.write(_HEADER.pack(SIGN_MAGIC, rows, k))
        handle.write(pack_signs(signs).tobytes())
    return str(path)


def read_sign_matrix(path: PathLike) -> np.ndarray:
    magic, rows, k, body = _read_header(path)
    if magic != SIGN_MAGIC:
        raise DataValidationError(f"{path}: not a sign matrix (magic {magic!r})")
    width = (k + 7) // 8
    if len(body) != rows * width:
        raise DataValidationError(f"{path}: expected {rows * width} packed bytes, found {len(body)}")
    packed = np.frombuffer(body, dtype=np.uint8).reshape(rows, width)
    return unpack_signs(packed, k)


def hamming_distances(query: np.ndarray, database: np.ndarray) -> np.ndarray:
    """Hamming distance between one packed query and packed database rows."""
    xor = np.bitwise_xor(database, query[np.newaxis, :])
    return np.unpackbits(xor, axis=1).sum(axis=1)


def file_digest(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_sidecar(sketch_path: PathLike, provenance: Dict[str, Any]) -> str:
    """JSON provenance next to a sketch file (``<file>.json``)."""
    sidecar = Path(f"{sketch_path}.json")
    with open(sidecar, "w", encoding="utf-8") as handle:
        json.dump(provenance, handle, indent=2, sort_keys=True, default=str)
    logger.info(f"Wrote provenance sidecar {sidecar.name}")
    return str(sidecar)


def read_sidecar(sketch_path: PathLike) -> Dict[str, Any]:
    sidecar = Path(f"{sketch_path}.json")
    if not sidecar.exists():
        raise DataValidationError(f"missing provenance sidecar {sidecar}")
    with open(sidecar, "r", encoding="utf-8") as handle:
        return json.load(handle)
