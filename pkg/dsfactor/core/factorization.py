"""Block-wise dense-sparse factorization of a whole weight matrix.

W (M x N) is cut into N/B column blocks W_i (M x B); each is approximated
as S_i D_i with S_i row-sparse (M x K, exactly S nonzeros per row) and D_i
dense (K x B).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.linalg import block_diag

from dsfactor.core.ksvd import BlockFactor, KsvdConfig, ksvd_factor
from dsfactor.core.matrix import as_matrix
from dsfactor.utils.errors import PlanError, ValidationError
from dsfactor.utils.parallel import map_ordered

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BlockPlan:
    b: int
    k: int
    s: int

    @property
    def delta(self) -> float:
        return self.s / self.b

    def gamma(self, m: int) -> float:
        return self.k / m

    def validate(self, m: int, n: int, strict: bool = True) -> None:
        if self.b < 1 or self.k < 1 or self.s < 1:
            raise PlanError("B, K, S >= 1", f"got B={self.b}, K={self.k}, S={self.s}")
        if n % self.b:
            raise PlanError("N % B == 0", f"N={n} is not a multiple of B={self.b}")
        if not strict:
            return
        if self.k <= self.b:
            raise PlanError("B < K", f"K={self.k} must exceed B={self.b} so D_i can have full rank")
        if self.k > m:
            raise PlanError("K <= M", f"K={self.k} exceeds M={m}")
        if self.s >= self.b:
            raise PlanError("S < B", f"S={self.s} must be smaller than B={self.b}")
        if self.k > m / 2:
            log.warning("K=%d is above M/2=%g; the factorization is barely compact", self.k, m / 2)

    @classmethod
    def from_ratios(cls, m: int, b: int, gamma: float, delta: float) -> Tuple["BlockPlan", List[str]]:
        """K = round(gamma M), S = round(delta B), with a note for every inexact rounding."""
        notes = []
        exact_k, exact_s = gamma * m, delta * b
        k, s = math.floor(exact_k + 0.5), math.floor(exact_s + 0.5)
        if k != exact_k:
            notes.append(f"gamma*M = {exact_k:g} rounded to K = {k}")
        if s != exact_s:
            notes.append(f"delta*B = {exact_s:g} rounded to S = {s}")
        return cls(b=b, k=k, s=s), notes


@dataclass
class DSFactorization:
    m: int
    n: int
    plan: BlockPlan
    blocks: List[BlockFactor]

    def __post_init__(self):
        if self.n % self.plan.b or len(self.blocks) != self.n // self.plan.b:
            raise ValidationError(
                f"expected {self.n // self.plan.b} blocks for N={self.n}, B={self.plan.b}; got {len(self.blocks)}"
            )
        for i, blk in enumerate(self.blocks):
            if (blk.m, blk.k, blk.b, blk.s) != (self.m, self.plan.k, self.plan.b, self.plan.s):
                raise ValidationError(
                    f"block {i} has (M, K, B, S)={(blk.m, blk.k, blk.b, blk.s)}, "
                    f"plan wants {(self.m, self.plan.k, self.plan.b, self.plan.s)}"
                )

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def column_range(self, i: int) -> slice:
        return slice(i * self.plan.b, (i + 1) * self.plan.b)


def factorize(w: np.ndarray, plan: BlockPlan, cfg: KsvdConfig = KsvdConfig(),
              threads: int = 1, strict: bool = True) -> DSFactorization:
    w = as_matrix(w, "w")
    m, n = w.shape
    plan.validate(m, n, strict=strict)
    n_blocks = n // plan.b
    log.info("factorizing %dx%d into %d blocks (B=%d, K=%d, S=%d)", m, n, n_blocks, plan.b, plan.k, plan.s)

    def one(i: int) -> BlockFactor:
        return ksvd_factor(w[:, i * plan.b:(i + 1) * plan.b], plan.k, plan.s, cfg.for_block(i))

    return DSFactorization(m, n, plan, map_ordered(one, range(n_blocks), threads))


def reconstruct(f: DSFactorization) -> np.ndarray:
    return np.hstack([blk.reconstruct() for blk in f.blocks])


def stacked_view(f: DSFactorization) -> Tuple[np.ndarray, np.ndarray]:
    """Horizontally stacked S (M x NK/B) and block-diagonal D (NK/B x N)."""
    s_wide = np.hstack([blk.coeffs.to_dense() for blk in f.blocks])
    d_diag = block_diag(*[blk.dictionary for blk in f.blocks])
    return s_wide, d_diag


def block_errors(w: np.ndarray, f: DSFactorization) -> np.ndarray:
    """Squared Frobenius error of every block."""
    w = as_matrix(w, "w")
    return np.array([
        float(np.sum((w[:, f.column_range(i)] - blk.reconstruct()) ** 2))
        for i, blk in enumerate(f.blocks)
    ])
