"""On-disk formats: BSM matrices, DSF factorizations and CSV tables.

BSM: b"BSM1", rows u32 LE, cols u32 LE, rows*cols float32 LE row-major.
DSF: b"DSF1", m, n, b, k, s as u32 LE, then per block: dictionary (K*B f32),
indices (M*S u16), values (M*S f32), all little-endian row-major.

Writers go through a sibling ``.tmp`` file and ``os.replace`` so a failed
write never leaves a partial output behind.
"""
from __future__ import annotations

import csv
import io
import os
import struct
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Sequence

import numpy as np

from dsfactor.core.factorization import BlockPlan, DSFactorization
from dsfactor.core.ksvd import BlockFactor
from dsfactor.core.omp import SparseCoefficients
from dsfactor.utils.errors import FormatError, ValidationError

BSM_MAGIC = b"BSM1"
DSF_MAGIC = b"DSF1"
_BSM_HEADER = struct.Struct("<4sII")
_DSF_HEADER = struct.Struct("<4sIIIII")
_F32 = np.dtype("<f4")
_U16 = np.dtype("<u2")
_U32_MAX = 2**32 - 1


@contextmanager
def atomic_write(path: str | Path, mode: str = "wb", **kwargs) -> Iterator[io.IOBase]:
    path = str(path)
    tmp = path + ".tmp"
    try:
        with open(tmp, mode, **kwargs) as f:
            yield f
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: expected {n} bytes of {what}, got {len(buf)}")
    return buf


# ---- BSM -------------------------------------------------------------------

def encode_bsm(matrix: np.ndarray) -> bytes:
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValidationError(f"BSM needs a non-empty 2-D matrix, got shape {a.shape}")
    if max(a.shape) > _U32_MAX:
        raise ValidationError(f"dims {a.shape} overflow the u32 header")
    return _BSM_HEADER.pack(BSM_MAGIC, a.shape[0], a.shape[1]) + a.astype(_F32).tobytes(order="C")


def write_bsm(matrix: np.ndarray, path: str | Path) -> None:
    payload = encode_bsm(matrix)
    with atomic_write(path) as f:
        f.write(payload)


def read_bsm(path: str | Path) -> np.ndarray:
    """Returns a float32 matrix; callers upcast for computation."""
    with open(path, "rb") as f:
        head = f.read(_BSM_HEADER.size)
        if len(head) < 4 or head[:4] != BSM_MAGIC:
            raise FormatError(f"{path}: not a BSM file")
        if len(head) != _BSM_HEADER.size:
            raise FormatError(f"{path}: truncated BSM header")
        _, rows, cols = _BSM_HEADER.unpack(head)
        if rows == 0 or cols == 0:
            raise FormatError(f"{path}: BSM header has zero dimension ({rows}x{cols})")
        count = rows * cols
        if count * _F32.itemsize >= 2**63:
            raise FormatError(f"{path}: dims {rows}x{cols} overflow")
        body = _read_exact(f, count * _F32.itemsize, "BSM payload")
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after BSM payload")
    return np.frombuffer(body, dtype=_F32).reshape(rows, cols).copy()


# ---- DSF -------------------------------------------------------------------

def dsf_payload_bytes(m: int, plan: BlockPlan, n_blocks: int) -> int:
    per_block = plan.k * plan.b * _F32.itemsize + m * plan.s * (_U16.itemsize + _F32.itemsize)
    return n_blocks * per_block


def encode_dsf(f: DSFactorization) -> bytes:
    p = f.plan
    if p.k - 1 > np.iinfo(_U16).max:
        raise ValidationError(f"K={p.k} does not fit u16 atom indices")
    parts = [_DSF_HEADER.pack(DSF_MAGIC, f.m, f.n, p.b, p.k, p.s)]
    for blk in f.blocks:
        parts.append(blk.dictionary.astype(_F32).tobytes(order="C"))
        parts.append(blk.coeffs.indices.astype(_U16).tobytes(order="C"))
        parts.append(blk.coeffs.values.astype(_F32).tobytes(order="C"))
    return b"".join(parts)


def serialize_dsf(f: DSFactorization, path: str | Path) -> None:
    payload = encode_dsf(f)
    with atomic_write(path) as out:
        out.write(payload)


def deserialize_dsf(path: str | Path) -> DSFactorization:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != DSF_MAGIC:
        raise FormatError(f"{path}: not a DSF file")
    if len(data) < _DSF_HEADER.size:
        raise FormatError(f"{path}: truncated DSF header")
    _, m, n, b, k, s = _DSF_HEADER.unpack_from(data)
    if min(m, n, b, k, s) == 0 or n % b:
        raise FormatError(f"{path}: corrupt DSF header (m={m}, n={n}, b={b}, k={k}, s={s})")
    plan = BlockPlan(b=b, k=k, s=s)
    n_blocks = n // b
    expected = _DSF_HEADER.size + dsf_payload_bytes(m, plan, n_blocks)
    if len(data) != expected:
        raise FormatError(f"{path}: length {len(data)} does not match header (expected {expected})")

    blocks: List[BlockFactor] = []
    off = _DSF_HEADER.size
    for _ in range(n_blocks):
        dictionary = np.frombuffer(data, _F32, k * b, off).reshape(k, b).astype(np.float64)
        off += k * b * _F32.itemsize
        indices = np.frombuffer(data, _U16, m * s, off).reshape(m, s).astype(np.int64)
        off += m * s * _U16.itemsize
        values = np.frombuffer(data, _F32, m * s, off).reshape(m, s).astype(np.float64)
        off += m * s * _F32.itemsize
        try:
            coeffs = SparseCoefficients(indices, values, k)
        except ValidationError as e:
            raise FormatError(f"{path}: corrupt block: {e}") from None
        blocks.append(BlockFactor(coeffs, dictionary, []))
    return DSFactorization(m, n, plan, blocks)


# ---- CSV -------------------------------------------------------------------

def write_csv(rows: Iterable[Dict[str, object]], path: str | Path, columns: Sequence[str]) -> None:
    with atomic_write(path, "w", newline="", encoding="utf-8") as f:
        write_csv_stream(rows, f, columns)


def write_csv_stream(rows: Iterable[Dict[str, object]], stream, columns: Sequence[str]) -> None:
    writer = csv.DictWriter(stream, fieldnames=list(columns), extrasaction="ignore",
                            lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: _fmt(row.get(key)) for key in columns})


def _fmt(v: object) -> object:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path: str | Path) -> List[Dict[str, str]]:
    with open(path, "r", newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
