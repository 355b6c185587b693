"""Dense matrix helpers shared by every other module.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64, row-major
(C order). Files hold float32 payloads; see :mod:`dsfactor.store`.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.linalg

from dsfactor.utils.errors import NumericError, ValidationError

log = logging.getLogger(__name__)


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """PCG64 behind numpy's Generator; the seed is a 64-bit unsigned integer."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    if not 0 <= int(seed) < 2**64:
        raise ValidationError(f"seed must fit in 64 unsigned bits, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(seed: int, *path: int) -> np.random.SeedSequence:
    """Independent child stream for e.g. (seed, block index)."""
    return np.random.SeedSequence([int(seed), *map(int, path)])


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must have positive dims, got {arr.shape}")
    return arr


def check_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{what} produced non-finite values")
    return a


def svd(a: np.ndarray, compute_uv: bool = True):
    """Thin SVD via LAPACK gesdd, retried with gesvd when gesdd fails to converge."""
    try:
        return scipy.linalg.svd(a, full_matrices=False, compute_uv=compute_uv,
                                check_finite=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        log.debug("gesdd did not converge on a %dx%d matrix, retrying with gesvd", *a.shape)
        return scipy.linalg.svd(a, full_matrices=False, compute_uv=compute_uv,
                                check_finite=False, lapack_driver="gesvd")


def matmul_dense(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One BLAS call. Bitwise repeatable for a fixed BLAS build and BLAS thread
    count; the fan-out in :mod:`dsfactor.utils.parallel` never splits it."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValidationError(
            f"matmul dimension mismatch: a is {a.shape[0]}x{a.shape[1]}, "
            f"b is {b.shape[0]}x{b.shape[1]} (a.cols must equal b.rows)"
        )
    return a @ b


def frobenius_error(w: np.ndarray, w_hat: np.ndarray, relative: bool = True) -> float:
    """||w - w_hat||_F, divided by ||w||_F when ``relative``."""
    w = as_matrix(w, "w")
    w_hat = as_matrix(w_hat, "w_hat")
    if w.shape != w_hat.shape:
        raise ValidationError(f"shape mismatch: {w.shape} vs {w_hat.shape}")
    err = float(np.linalg.norm(w - w_hat))
    if not relative:
        return err
    ref = float(np.linalg.norm(w))
    if ref == 0.0:
        raise ValidationError("relative error undefined for a zero-norm reference")
    return err / ref


def _random_orthonormal(rng: np.random.Generator, n: int, r: int) -> np.ndarray:
    q, tri = np.linalg.qr(rng.standard_normal((n, r)))
    # sign fix makes the factor a deterministic function of the draw
    return q * np.sign(np.where(np.diag(tri) == 0, 1.0, np.diag(tri)))


def heavy_tailed_spectrum(n: int, decay: float) -> np.ndarray:
    return np.arange(1, n + 1, dtype=np.float64) ** (-decay)


def random_heavy_tailed(rows: int, cols: int, decay: float, rng: np.random.Generator) -> np.ndarray:
    """U diag(i^-decay) V^T with Haar-like orthonormal U, V."""
    if rows < 1 or cols < 1:
        raise ValidationError(f"dims must be positive, got {rows}x{cols}")
    if not 0.0 < decay <= 1.0:
        raise ValidationError(f"decay must lie in (0, 1], got {decay}")
    r = min(rows, cols)
    u = _random_orthonormal(rng, rows, r)
    v = _random_orthonormal(rng, cols, r)
    return (u * heavy_tailed_spectrum(r, decay)) @ v.T
