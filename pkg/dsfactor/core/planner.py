"""Byte, flop and cache-intensity accounting for dense-sparse factorizations."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

from dsfactor.core.factorization import BlockPlan
from dsfactor.utils.errors import NumericError, ValidationError

log = logging.getLogger(__name__)

FLOAT_BYTES = 4
FILE_INDEX_BYTES = 2  # u16 indices in DSF files
CLOSED_FORM_TOL = 1e-12


@dataclass(frozen=True)
class CompressionReport:
    m: int
    n: int
    plan: BlockPlan
    dense_bytes: int
    ds_bytes_packed: float
    ds_bytes_file: int
    cr: float
    cr_closed_form: float
    cr_file: float
    inverse_cr: float
    flops_ratio: float

    def as_row(self) -> Dict[str, object]:
        return {
            "m": self.m, "n": self.n, "b": self.plan.b, "k": self.plan.k, "s": self.plan.s,
            "gamma": self.plan.gamma(self.m), "delta": self.plan.delta,
            "dense_bytes": self.dense_bytes, "ds_bytes_packed": self.ds_bytes_packed,
            "ds_bytes_file": self.ds_bytes_file, "cr": self.cr, "inverse_cr": self.inverse_cr,
            "cr_file": self.cr_file, "flops_ratio": self.flops_ratio,
        }


def block_bytes_packed(m: int, plan: BlockPlan) -> float:
    # 4KB dictionary + (4 + log2(K)/8) bytes per stored coefficient
    return FLOAT_BYTES * plan.k * plan.b + (FLOAT_BYTES + math.log2(plan.k) / 8) * plan.s * m


def block_bytes_file(m: int, plan: BlockPlan) -> int:
    return FLOAT_BYTES * plan.k * plan.b + (FLOAT_BYTES + FILE_INDEX_BYTES) * plan.s * m


def closed_form_cr(m: int, gamma: float, delta: float) -> float:
    return gamma + (1 + (math.log2(gamma) + math.log2(m)) / 32) * delta


def flops_count(m: int, n: int, plan: BlockPlan, seq_len: int) -> Tuple[int, int]:
    """(dense, dense-sparse) flops for W @ X with X of shape N x L."""
    if seq_len < 1:
        raise ValidationError(f"sequence length must be >= 1, got {seq_len}")
    plan.validate(m, n, strict=False)
    dense = 2 * m * n * seq_len
    per_block = 2 * plan.k * plan.b * seq_len + 2 * plan.s * m * seq_len
    return dense, (n // plan.b) * per_block


def compression_report(m: int, n: int, plan: BlockPlan, strict: bool = True) -> CompressionReport:
    """Byte accounting for one matrix. ``strict=False`` waives the B < K, K <= M, S < B checks
    for diagnostic points such as gamma = delta = 1."""
    plan.validate(m, n, strict=strict)
    n_blocks = n // plan.b
    dense = FLOAT_BYTES * m * n
    packed = n_blocks * block_bytes_packed(m, plan)
    file_bytes = n_blocks * block_bytes_file(m, plan)
    cr = packed / dense
    closed = closed_form_cr(m, plan.gamma(m), plan.delta)
    if not math.isclose(cr, closed, rel_tol=CLOSED_FORM_TOL, abs_tol=0.0):
        raise NumericError(f"byte-count CR {cr!r} disagrees with closed form {closed!r}")
    dense_flops, ds_flops = flops_count(m, n, plan, 1)
    return CompressionReport(
        m=m, n=n, plan=plan,
        dense_bytes=dense, ds_bytes_packed=packed, ds_bytes_file=file_bytes,
        cr=cr, cr_closed_form=closed, cr_file=file_bytes / dense,
        inverse_cr=1.0 / cr, flops_ratio=ds_flops / dense_flops,
    )


# ---- Whole-architecture accounting -----------------------------------------

@dataclass(frozen=True)
class Component:
    name: str
    m: int
    n: int
    count: int


@dataclass(frozen=True)
class Architecture:
    name: str
    layers: int
    components: Tuple[Component, ...]

    @property
    def dense_bytes(self) -> int:
        return sum(FLOAT_BYTES * c.m * c.n * c.count for c in self.components) * self.layers


def load_architecture(path: str | Path) -> Architecture:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    try:
        comps = tuple(Component(c["name"], int(c["m"]), int(c["n"]), int(c.get("count", 1)))
                      for c in data["components"])
        return Architecture(data["name"], int(data["layers"]), comps)
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"malformed architecture file {path}: {e!r}") from None


@dataclass(frozen=True)
class AggregateReport:
    architecture: str
    dense_bytes: int
    ds_bytes_packed: float
    ds_bytes_file: int
    per_component: Tuple[CompressionReport, ...]

    @property
    def cr(self) -> float:
        return self.ds_bytes_packed / self.dense_bytes

    @property
    def inverse_cr(self) -> float:
        return 1.0 / self.cr


def aggregate_report(arch: Architecture, plans: Dict[str, BlockPlan]) -> AggregateReport:
    """Sum the factorized bytes of every listed weight matrix over all layers.

    Only the matrices named in ``arch`` are counted (no embeddings, biases or heads).
    """
    missing = [c.name for c in arch.components if c.name not in plans]
    if missing:
        raise ValidationError(f"no plan for components: {', '.join(missing)}")
    reports = tuple(compression_report(c.m, c.n, plans[c.name]) for c in arch.components)
    packed = sum(r.ds_bytes_packed * c.count for r, c in zip(reports, arch.components)) * arch.layers
    file_bytes = sum(r.ds_bytes_file * c.count for r, c in zip(reports, arch.components)) * arch.layers
    return AggregateReport(arch.name, arch.dense_bytes, packed, file_bytes, reports)


# ---- Cache model -----------------------------------------------------------

@dataclass(frozen=True)
class CacheModel:
    cache_bytes: int
    element_bytes: int
    k: int
    s: int

    def __post_init__(self):
        if min(self.cache_bytes, self.element_bytes, self.k, self.s) <= 0:
            raise ValidationError("cache model fields must all be positive")

    @property
    def capacity(self) -> int:
        return self.cache_bytes // self.element_bytes

    def load(self, p: int, q: int) -> int:
        return p * q + p * self.s + self.k * q

    def max_p(self, q: int) -> int:
        return (self.capacity - self.k * q) // (q + self.s)

    def max_q(self, p: int) -> int:
        return (self.capacity - p * self.s) // (p + self.k)


@dataclass(frozen=True)
class TilePlan:
    p: int
    q: int
    ci: float
    p_real: float
    q_real: float


def intensity(p: int, q: int, k: int, s: int) -> float:
    return p * q * s / (p * q + p * s + k * q)


def stationary_tile(model: CacheModel) -> Tuple[float, float]:
    """Real maximiser of PQS on PQ + PS + KQ = C: P = tK, Q = tS (so QK = PS)."""
    ks = model.k * model.s
    t = -1.0 + math.sqrt(1.0 + model.capacity / ks)
    return t * model.k, t * model.s


def _band_rows(model: CacheModel, q: int) -> Tuple[int, int]:
    """Range of P with |QK - PS| <= S + K for this Q."""
    band = model.k + model.s
    return -((band - q * model.k) // model.s), (q * model.k + band) // model.s


def optimal_tile(model: CacheModel) -> TilePlan:
    """Largest PQ on the Lagrange band that fits the cache.

    Scans Q upward from a few steps below the stationary point, taking the
    largest in-band P that fits for each Q, until no in-band P fits. Below the
    start of the scan P is band-limited, so PQ only grows with Q there.
    """
    c = model.capacity
    if c <= 2 * max(model.k, model.s) or model.load(1, 1) > c:
        raise ValidationError(
            f"cache of {c} elements cannot hold a tile for K={model.k}, S={model.s}"
        )
    p_real, q_real = stationary_tile(model)
    q0 = max(1, math.floor(q_real))

    pool = []
    q = max(1, q0 - 2 - math.ceil(model.s / model.k))
    while True:
        low, high = _band_rows(model, q)
        p = min(model.max_p(q), high)
        if p < max(1, low):
            if q > q0:
                break
        else:
            pool.append((p, q))
        q += 1
    if not pool:
        raise ValidationError(f"no feasible tile for cache of {c} elements")
    p, q = max(pool, key=lambda pq: (pq[0] * pq[1], -abs(pq[1] * model.k - pq[0] * model.s), -pq[0]))
    return TilePlan(p=p, q=q, ci=intensity(p, q, model.k, model.s), p_real=p_real, q_real=q_real)
