"""Batch K-SVD for one M x B block, plus the truncated-SVD low-rank baseline."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np

from dsfactor.core.matrix import as_matrix, check_finite, derive_seed, make_rng, svd
from dsfactor.core.omp import SparseCoefficients, least_squares_values, omp_encode_block
from dsfactor.utils.errors import ValidationError

log = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 50
DEFAULT_REL_TOL = 1e-5
FLOAT_BYTES = 4


@dataclass(frozen=True)
class KsvdConfig:
    max_iters: int = DEFAULT_MAX_ITERS
    rel_tol: float = DEFAULT_REL_TOL
    atom_replacement_threshold: int = 1
    seed: int = 0
    stream: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol < 0:
            raise ValidationError(f"rel_tol must be >= 0, got {self.rel_tol}")

    def rng(self) -> np.random.Generator:
        return make_rng(derive_seed(self.seed, *self.stream))

    def for_block(self, index: int) -> "KsvdConfig":
        return replace(self, stream=self.stream + (index,))


@dataclass
class BlockFactor:
    coeffs: SparseCoefficients
    dictionary: np.ndarray
    objective_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        if self.coeffs.k != self.dictionary.shape[0]:
            raise ValidationError(
                f"coefficient width {self.coeffs.k} != dictionary rows {self.dictionary.shape[0]}"
            )

    @property
    def m(self) -> int:
        return self.coeffs.m

    @property
    def k(self) -> int:
        return self.dictionary.shape[0]

    @property
    def b(self) -> int:
        return self.dictionary.shape[1]

    @property
    def s(self) -> int:
        return self.coeffs.s

    def reconstruct(self) -> np.ndarray:
        return self.coeffs.times(self.dictionary)


def _unit_rows(a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    norms = np.linalg.norm(a, axis=1)
    dead = norms == 0
    if dead.any():
        a[dead] = rng.standard_normal((int(dead.sum()), a.shape[1]))
        norms[dead] = np.linalg.norm(a[dead], axis=1)
    return a / norms[:, None]


def _init_dictionary(w: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m, b = w.shape
    take = min(m, k)
    picked = w[np.sort(rng.choice(m, size=take, replace=False))]
    if take < k:
        picked = np.vstack([picked, rng.standard_normal((k - take, b))])
    return _unit_rows(picked.copy(), rng)


def _row_errors(w: np.ndarray, coeffs: SparseCoefficients, dictionary: np.ndarray) -> np.ndarray:
    r = w - coeffs.times(dictionary)
    return np.einsum("mb,mb->m", r, r)


def _recode(w: np.ndarray, dictionary: np.ndarray, s: int, current: SparseCoefficients) -> SparseCoefficients:
    # OMP is greedy: a fresh code can be worse than the one a row already has
    fresh = omp_encode_block(w, dictionary, s)
    better = _row_errors(w, fresh, dictionary) < _row_errors(w, current, dictionary)
    indices = np.where(better[:, None], fresh.indices, current.indices)
    values = np.where(better[:, None], fresh.values, current.values)
    return SparseCoefficients(indices, values, current.k)


def _update_atoms(w: np.ndarray, dictionary: np.ndarray, coeffs: SparseCoefficients,
                  threshold: int, rng: np.random.Generator) -> Tuple[np.ndarray, SparseCoefficients]:
    dictionary = dictionary.copy()
    indices = coeffs.indices
    values = coeffs.values.copy()
    residual = w - np.einsum("mt,mtb->mb", values, dictionary[indices])
    dead = []

    for j in range(dictionary.shape[0]):
        rows, slots = np.nonzero(indices == j)
        if rows.size < threshold:
            dead.append((j, rows))
        if rows.size == 0:
            continue
        restricted = residual[rows] + np.outer(values[rows, slots], dictionary[j])
        u, sigma, vt = svd(restricted)
        atom = vt[0]
        coef = sigma[0] * u[:, 0]
        dictionary[j] = atom
        values[rows, slots] = coef
        residual[rows] = restricted - np.outer(coef, atom)

    if dead:
        worst = np.argsort(-np.einsum("mb,mb->m", residual, residual), kind="stable")
        for (j, rows), r in zip(dead, worst):
            source = w[r]
            if np.any(source):
                dictionary[j] = source / np.linalg.norm(source)
            else:
                dictionary[j] = _unit_rows(rng.standard_normal((1, w.shape[1])), rng)[0]
            if rows.size:
                values[rows] = least_squares_values(w[rows], dictionary, indices[rows])
        log.debug("reseeded %d under-used atoms", len(dead))

    return dictionary, SparseCoefficients(indices, values, coeffs.k)


def ksvd_factor(w_block: np.ndarray, k: int, s: int, cfg: KsvdConfig = KsvdConfig()) -> BlockFactor:
    """Alternate OMP coding and rank-1 atom updates to minimise ||W - S D||_F^2.

    ``objective_history[0]`` is the objective after the first coding pass; each
    later entry follows one full iteration (coding + atom sweep).
    """
    w = as_matrix(w_block, "w_block")
    m, b = w.shape
    if k < 1 or not 1 <= s <= min(k, b):
        raise ValidationError(f"need 1 <= s <= min(k, B); got s={s}, k={k}, B={b}")
    if k <= b:
        log.warning("k=%d <= B=%d: the dictionary cannot span the block", k, b)
    if m < k:
        log.warning("M=%d < k=%d: more atoms than rows to learn them from", m, k)
    rng = cfg.rng()

    if not np.any(w):
        dictionary = _unit_rows(rng.standard_normal((k, b)), rng)
        zeros = SparseCoefficients(np.tile(np.arange(s), (m, 1)), np.zeros((m, s)), k)
        return BlockFactor(zeros, dictionary, [0.0])

    dictionary = _init_dictionary(w, k, rng)
    coeffs = omp_encode_block(w, dictionary, s)
    history = [float(_row_errors(w, coeffs, dictionary).sum())]

    for it in range(1, cfg.max_iters + 1):
        if it > 1:
            coeffs = _recode(w, dictionary, s, coeffs)
        dictionary, coeffs = _update_atoms(w, dictionary, coeffs, cfg.atom_replacement_threshold, rng)
        objective = float(_row_errors(w, coeffs, dictionary).sum())
        prev = history[-1]
        history.append(objective)
        log.debug("ksvd iter %d objective %.6e", it, objective)
        if objective == 0.0 or prev - objective < cfg.rel_tol * prev:
            break

    log.info("ksvd: %dx%d block, k=%d s=%d, %d iters, rel err %.4e",
             m, b, k, s, len(history) - 1, np.sqrt(history[-1]) / np.linalg.norm(w))
    check_finite(dictionary, "ksvd dictionary")
    return BlockFactor(coeffs, dictionary, history)


# ---- Low-rank baseline ------------------------------------------------------

def lowrank_factor(w: np.ndarray, rank: int) -> Tuple[np.ndarray, np.ndarray]:
    """Truncated SVD: returns (U sigma, V^T) of shapes M x r and r x N."""
    w = as_matrix(w, "w")
    if not 1 <= rank <= min(w.shape):
        raise ValidationError(f"rank must lie in [1, {min(w.shape)}], got {rank}")
    u, sigma, vt = svd(w)
    return u[:, :rank] * sigma[:rank], vt[:rank].copy()


def lowrank_error(w: np.ndarray, rank: int) -> float:
    """Eckart-Young: sqrt of the tail singular-value energy."""
    sigma = svd(as_matrix(w, "w"), compute_uv=False)
    return float(np.sqrt(np.sum(sigma[rank:] ** 2)))


def lowrank_bytes(m: int, n: int, rank: int) -> int:
    return FLOAT_BYTES * rank * (m + n)
