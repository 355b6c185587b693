"""Factorized weights inside a training loop.

``STFLayer`` implements the Straight-Through Factorizer: the forward pass
re-codes S_i by OMP against the current latent weight and dictionary and
returns S_i D_i; the backward pass hands the upstream gradient to the latent
weight unchanged and moves each D_i by one gradient step on
1/2 ||W_i - S_i D_i||^2, whose gradient is S_i^T (S_i D_i - W_i). S gets none.

``FixedPatternLayer`` is the FT-F-FT alternative: the support pattern from
the one-shot factorization is frozen and only the stored values of S_i and
the dictionaries are trained.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from dsfactor.core.factorization import BlockPlan, DSFactorization
from dsfactor.core.matrix import as_matrix
from dsfactor.core.omp import SparseCoefficients, omp_encode_block
from dsfactor.utils.errors import STFStateError, ValidationError
from dsfactor.utils.parallel import map_ordered

log = logging.getLogger(__name__)


def dictionary_gradient(w_block: np.ndarray, coeffs: SparseCoefficients, dictionary: np.ndarray) -> np.ndarray:
    """d/dD of 1/2 ||W - S D||^2."""
    return coeffs.to_dense().T @ (coeffs.times(dictionary) - w_block)


def _check_dictionaries(m: int, n: int, plan: BlockPlan, dictionaries: List[np.ndarray]) -> None:
    plan.validate(m, n, strict=False)
    if len(dictionaries) != n // plan.b:
        raise ValidationError(f"need {n // plan.b} dictionaries, got {len(dictionaries)}")
    for i, d in enumerate(dictionaries):
        if d.shape != (plan.k, plan.b):
            raise ValidationError(f"dictionary {i} has shape {d.shape}, expected {(plan.k, plan.b)}")


@dataclass
class STFLayer:
    w_latent: np.ndarray
    dictionaries: List[np.ndarray]
    plan: BlockPlan
    d_learning_rate: float = 1e-2
    # None: never re-code after the first (or seeded) coding
    refactor_stride: Optional[int] = 1
    # cap on ||eta * gradD||_F relative to ||W_i||_F; None disables
    d_step_clip: Optional[float] = 1e-2
    threads: int = 1
    coeffs: List[SparseCoefficients] = field(default_factory=list)
    calls: int = 0
    _pending_backward: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.w_latent = as_matrix(self.w_latent, "w_latent").copy()
        self.dictionaries = [as_matrix(d, "dictionary").copy() for d in self.dictionaries]
        _check_dictionaries(*self.w_latent.shape, self.plan, self.dictionaries)
        if self.refactor_stride is not None and self.refactor_stride < 1:
            raise ValidationError(f"refactor_stride must be >= 1 or None, got {self.refactor_stride}")

    @classmethod
    def from_factorization(cls, w_latent: np.ndarray, f: DSFactorization, **kwargs) -> "STFLayer":
        layer = cls(w_latent, [blk.dictionary for blk in f.blocks], f.plan, **kwargs)
        layer.coeffs = [SparseCoefficients(blk.coeffs.indices.copy(), blk.coeffs.values.copy(), blk.k)
                        for blk in f.blocks]
        return layer

    @property
    def n_blocks(self) -> int:
        return len(self.dictionaries)

    def block(self, i: int) -> np.ndarray:
        return self.w_latent[:, i * self.plan.b:(i + 1) * self.plan.b]

    def _recode(self) -> None:
        self.coeffs = map_ordered(
            lambda i: omp_encode_block(self.block(i), self.dictionaries[i], self.plan.s),
            range(self.n_blocks), self.threads,
        )

    def effective(self) -> np.ndarray:
        """S_i D_i from the cached codes, without re-coding."""
        if not self.coeffs:
            raise STFStateError("no cached coefficients; run forward() first")
        return np.hstack([c.times(d) for c, d in zip(self.coeffs, self.dictionaries)])

    def forward(self) -> np.ndarray:
        due = self.refactor_stride is not None and self.calls % self.refactor_stride == 0
        if due or not self.coeffs:
            self._recode()
        self.calls += 1
        self._pending_backward = True
        return self.effective()

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        if not self._pending_backward:
            raise STFStateError("backward() called without a preceding forward()")
        if upstream.shape != self.w_latent.shape:
            raise ValidationError(f"upstream gradient {upstream.shape} != weight {self.w_latent.shape}")
        for i, (c, d) in enumerate(zip(self.coeffs, self.dictionaries)):
            w = self.block(i)
            step = self.d_learning_rate * dictionary_gradient(w, c, d)
            if self.d_step_clip is not None:
                limit = self.d_step_clip * np.linalg.norm(w)
                size = np.linalg.norm(step)
                if size > limit > 0:
                    step *= limit / size
            d -= step
        self._pending_backward = False
        return upstream

    def block_errors(self) -> np.ndarray:
        """Relative error of S_i D_i against each latent block."""
        out = []
        for i, (c, d) in enumerate(zip(self.coeffs, self.dictionaries)):
            w = self.block(i)
            ref = np.linalg.norm(w)
            out.append(np.linalg.norm(w - c.times(d)) / ref if ref else 0.0)
        return np.array(out)


def stf_forward(state: STFLayer) -> np.ndarray:
    return state.forward()


def stf_backward(state: STFLayer, upstream: np.ndarray) -> np.ndarray:
    return state.backward(upstream)


@dataclass
class FixedPatternLayer:
    plan: BlockPlan
    coeffs: List[SparseCoefficients]
    dictionaries: List[np.ndarray]
    reference: np.ndarray  # the dense weight the factorization approximated

    @classmethod
    def from_factorization(cls, w: np.ndarray, f: DSFactorization) -> "FixedPatternLayer":
        coeffs = [SparseCoefficients(blk.coeffs.indices.copy(), blk.coeffs.values.copy(), blk.k)
                  for blk in f.blocks]
        return cls(f.plan, coeffs, [blk.dictionary.copy() for blk in f.blocks], as_matrix(w).copy())

    def effective(self) -> np.ndarray:
        return np.hstack([c.times(d) for c, d in zip(self.coeffs, self.dictionaries)])

    def parameters(self, prefix: str) -> Dict[str, np.ndarray]:
        params = {}
        for i, (c, d) in enumerate(zip(self.coeffs, self.dictionaries)):
            params[f"{prefix}.values.{i}"] = c.values
            params[f"{prefix}.dict.{i}"] = d
        return params

    def gradients(self, prefix: str, upstream: np.ndarray) -> Dict[str, np.ndarray]:
        """Chain rule through W_i = S_i D_i, restricted to the stored entries of S_i."""
        grads = {}
        b = self.plan.b
        for i, (c, d) in enumerate(zip(self.coeffs, self.dictionaries)):
            g = upstream[:, i * b:(i + 1) * b]
            grads[f"{prefix}.values.{i}"] = np.take_along_axis(g @ d.T, c.indices, axis=1)
            grads[f"{prefix}.dict.{i}"] = c.to_dense().T @ g
        return grads

    def block_errors(self) -> np.ndarray:
        b = self.plan.b
        out = []
        for i, (c, d) in enumerate(zip(self.coeffs, self.dictionaries)):
            w = self.reference[:, i * b:(i + 1) * b]
            ref = np.linalg.norm(w)
            out.append(np.linalg.norm(w - c.times(d)) / ref if ref else 0.0)
        return np.array(out)
