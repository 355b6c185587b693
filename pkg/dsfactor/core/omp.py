"""Orthogonal Matching Pursuit with an exact per-row sparsity of ``s``.

Rows of the target are encoded independently but in lock-step: at step t every
row owns a support of size t, so the least-squares refits run as one batched SVD.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from dsfactor.core.matrix import as_matrix, svd
from dsfactor.utils.errors import ValidationError

log = logging.getLogger(__name__)

RANK_TOL = 1e-12


@dataclass(frozen=True)
class SparseRow:
    indices: np.ndarray
    values: np.ndarray
    rank_deficient: bool = False

    def __post_init__(self):
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValidationError("indices and values must be aligned 1-D arrays")
        if self.indices.size > 1 and np.any(np.diff(self.indices) <= 0):
            raise ValidationError("row indices must be strictly increasing")


@dataclass
class OmpDiagnostics:
    # residual_norms[j, t] is ||residual|| of row j after t atoms (t = 0..s)
    residual_norms: np.ndarray
    rank_deficient: np.ndarray


@dataclass
class SparseCoefficients:
    """M x K matrix with exactly ``s`` stored entries per row.

    ``indices`` and ``values`` are (M, s) arrays; indices ascend within a row.
    """

    indices: np.ndarray
    values: np.ndarray
    k: int
    diagnostics: Optional[OmpDiagnostics] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.validate()

    @property
    def m(self) -> int:
        return self.indices.shape[0]

    @property
    def s(self) -> int:
        return self.indices.shape[1]

    def validate(self) -> None:
        if self.indices.ndim != 2 or self.indices.shape != self.values.shape:
            raise ValidationError(
                f"indices {self.indices.shape} and values {self.values.shape} must be equal (M, s) shapes"
            )
        if not 1 <= self.s <= self.k:
            raise ValidationError(f"per-row sparsity {self.s} outside [1, k={self.k}]")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.k):
            raise ValidationError(f"atom index outside [0, {self.k})")
        if self.s > 1 and np.any(np.diff(self.indices, axis=1) <= 0):
            raise ValidationError("indices must be strictly increasing within each row")

    def row(self, j: int) -> SparseRow:
        deficient = bool(self.diagnostics.rank_deficient[j]) if self.diagnostics else False
        return SparseRow(self.indices[j].copy(), self.values[j].copy(), deficient)

    @property
    def rows(self) -> Iterator[SparseRow]:
        return (self.row(j) for j in range(self.m))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.m, self.k))
        np.put_along_axis(out, self.indices, self.values, axis=1)
        return out

    def times(self, dictionary: np.ndarray) -> np.ndarray:
        """S @ D using only the stored entries."""
        return np.einsum("mt,mtb->mb", self.values, dictionary[self.indices])

    def pattern_equals(self, other: "SparseCoefficients") -> bool:
        return self.k == other.k and np.array_equal(self.indices, other.indices)


def _batched_lstsq(atoms: np.ndarray, targets: np.ndarray, tol: float):
    """min_c ||targets[j] - c @ atoms[j]|| for every j; minimum-norm on rank loss."""
    stacked = atoms.transpose(0, 2, 1)
    try:
        u, sv, vh = np.linalg.svd(stacked, full_matrices=False)
    except np.linalg.LinAlgError:
        parts = [svd(a) for a in stacked]
        u, sv, vh = (np.stack(p) for p in zip(*parts))
    cutoff = tol * sv[:, :1]
    keep = sv > cutoff
    inv = np.divide(1.0, sv, out=np.zeros_like(sv), where=keep)
    proj = np.einsum("mbt,mb->mt", u, targets) * inv
    coef = np.einsum("mts,ms->mt", vh.transpose(0, 2, 1), proj)
    return coef, ~keep.all(axis=1)


def _check_inputs(targets: np.ndarray, dictionary: np.ndarray, s: int) -> None:
    k, b = dictionary.shape
    if targets.shape[1] != b:
        raise ValidationError(f"target width {targets.shape[1]} != dictionary width {b}")
    if s > k:
        raise ValidationError(f"sparsity s={s} exceeds dictionary size k={k}")
    if not 1 <= s <= b:
        raise ValidationError(f"sparsity s={s} must lie in [1, min(k, B)={min(k, b)}]")
    if not np.any(dictionary):
        raise ValidationError("dictionary rows are all zero")


def omp_encode_block(targets: np.ndarray, dictionary: np.ndarray, s: int,
                     tol: float = RANK_TOL) -> SparseCoefficients:
    targets = as_matrix(targets, "targets")
    dictionary = as_matrix(dictionary, "dictionary")
    _check_inputs(targets, dictionary, s)
    m = targets.shape[0]
    k = dictionary.shape[0]

    # selection runs against unit-norm atoms, coefficients against the raw ones
    norms = np.linalg.norm(dictionary, axis=1)
    unit = np.divide(dictionary, norms[:, None], out=np.zeros_like(dictionary), where=norms[:, None] > 0)

    support = np.empty((m, s), dtype=np.int64)
    chosen = np.zeros((m, k), dtype=bool)
    history = np.empty((m, s + 1))
    history[:, 0] = np.linalg.norm(targets, axis=1)
    residual = targets.copy()
    coef = np.zeros((m, 0))
    deficient = np.zeros(m, dtype=bool)
    rows = np.arange(m)

    for t in range(s):
        corr = np.abs(residual @ unit.T)
        corr[chosen] = -1.0
        pick = np.argmax(corr, axis=1)  # first maximum -> lowest index on ties
        support[:, t] = pick
        chosen[rows, pick] = True
        atoms = dictionary[support[:, : t + 1]]
        coef, deficient = _batched_lstsq(atoms, targets, tol)
        residual = targets - np.einsum("mt,mtb->mb", coef, atoms)
        history[:, t + 1] = np.linalg.norm(residual, axis=1)

    if deficient.any():
        log.warning("OMP: %d of %d rows had a rank-deficient support; used minimum-norm fit",
                    int(deficient.sum()), m)

    order = np.argsort(support, axis=1)
    return SparseCoefficients(
        indices=np.take_along_axis(support, order, axis=1),
        values=np.take_along_axis(coef, order, axis=1),
        k=k,
        diagnostics=OmpDiagnostics(residual_norms=history, rank_deficient=deficient),
    )


def omp_encode_row(target: np.ndarray, dictionary: np.ndarray, s: int,
                   tol: float = RANK_TOL) -> SparseRow:
    target = np.asarray(target, dtype=np.float64)
    if target.ndim != 1:
        raise ValidationError(f"target must be a vector, got shape {target.shape}")
    return omp_encode_block(target[None, :], dictionary, s, tol).row(0)


def least_squares_values(targets: np.ndarray, dictionary: np.ndarray, indices: np.ndarray,
                         tol: float = RANK_TOL) -> np.ndarray:
    """Best coefficients for a fixed support pattern."""
    coef, _ = _batched_lstsq(dictionary[indices], targets, tol)
    return coef
