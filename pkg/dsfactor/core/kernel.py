"""Inference product W X = sum_i S_i (D_i X_i).

The dense stage D_i X_i is a plain matmul. The sparse stage O = S Xbar gets a
cache-blocked loop: the output is cut into P x Q tiles; for each tile the K x Q
panel of Xbar stays resident while the P x S slice of the coefficients streams
through row-wise. Every output element accumulates its S products in ascending
atom-index order, which makes the result independent of the tiling.
"""
from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from dsfactor.core.factorization import DSFactorization
from dsfactor.core.matrix import as_matrix, matmul_dense
from dsfactor.core.omp import SparseCoefficients
from dsfactor.utils.errors import ValidationError
from dsfactor.utils.parallel import map_ordered

log = logging.getLogger(__name__)

MODES = ("reference", "blocked")
DEFAULT_WARMUP = 3


@dataclass(frozen=True)
class KernelConfig:
    tile_p: int = 64
    tile_q: int = 64
    mode: str = "blocked"
    threads: int = 1

    def __post_init__(self):
        if self.tile_p < 1 or self.tile_q < 1:
            raise ValidationError(f"tiles must be >= 1, got ({self.tile_p}, {self.tile_q})")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def label(self) -> str:
        return self.mode if self.mode == "reference" else f"blocked-{self.tile_p}x{self.tile_q}"


@dataclass
class MacCounter:
    total: int = 0
    per_tile: List[int] = field(default_factory=list)

    def add(self, macs: int, tile: bool = False) -> None:
        self.total += macs
        if tile:
            self.per_tile.append(macs)


def _sparse_reference(sc: SparseCoefficients, xbar: np.ndarray, counter: Optional[MacCounter]) -> np.ndarray:
    out = np.zeros((sc.m, xbar.shape[1]))
    for j in range(sc.m):
        acc = out[j]
        for t in range(sc.s):
            acc += sc.values[j, t] * xbar[sc.indices[j, t]]
    if counter is not None:
        counter.add(sc.m * sc.s * xbar.shape[1])
    return out


def _sparse_tile(sc: SparseCoefficients, xbar: np.ndarray, out: np.ndarray,
                 rows: slice, cfg: KernelConfig) -> List[int]:
    idx = sc.indices[rows]
    vals = sc.values[rows]
    macs = []
    for c0 in range(0, xbar.shape[1], cfg.tile_q):
        cols = slice(c0, min(c0 + cfg.tile_q, xbar.shape[1]))
        panel = xbar[:, cols]
        acc = np.zeros((idx.shape[0], panel.shape[1]))
        for t in range(sc.s):
            acc += vals[:, t, None] * panel[idx[:, t]]
        out[rows, cols] = acc
        macs.append(acc.size * sc.s)
    return macs


def sparse_stage(sc: SparseCoefficients, xbar: np.ndarray, cfg: KernelConfig = KernelConfig(),
                 counter: Optional[MacCounter] = None) -> np.ndarray:
    xbar = as_matrix(xbar, "xbar")
    if sc.k != xbar.shape[0]:
        raise ValidationError(f"coefficients have K={sc.k} but xbar has {xbar.shape[0]} rows")
    if cfg.mode == "reference":
        return _sparse_reference(sc, xbar, counter)

    out = np.empty((sc.m, xbar.shape[1]))
    row_tiles = [slice(r0, min(r0 + cfg.tile_p, sc.m)) for r0 in range(0, sc.m, cfg.tile_p)]
    # row tiles write disjoint output rows
    tile_macs = map_ordered(lambda rows: _sparse_tile(sc, xbar, out, rows, cfg), row_tiles, cfg.threads)
    if counter is not None:
        for macs in tile_macs:
            for n in macs:
                counter.add(n, tile=True)
    return out


def ds_matmul(f: DSFactorization, x: np.ndarray, cfg: KernelConfig = KernelConfig(),
              counter: Optional[MacCounter] = None) -> np.ndarray:
    x = as_matrix(x, "x")
    if x.shape[0] != f.n:
        raise ValidationError(f"x has {x.shape[0]} rows, factorization expects N={f.n}")
    out = np.zeros((f.m, x.shape[1]))
    for i, blk in enumerate(f.blocks):
        xbar = matmul_dense(blk.dictionary, x[f.column_range(i)])
        if counter is not None:
            counter.add(blk.k * blk.b * x.shape[1])
        out += sparse_stage(blk.coeffs, xbar, cfg, counter)
    return out


# ---- Benchmark -------------------------------------------------------------

@dataclass(frozen=True)
class BenchRow:
    config: str
    tile_p: int
    tile_q: int
    time_ns_min: int
    time_ns_median: float
    macs: int
    macs_per_sec: float
    checksum: float

    def as_row(self) -> Dict[str, object]:
        return {
            "config": self.config, "tile_p": self.tile_p, "tile_q": self.tile_q,
            "time_ns_min": self.time_ns_min, "time_ns_median": self.time_ns_median,
            "macs": self.macs, "macs_per_sec": self.macs_per_sec,
        }


def bench_matmul(f: DSFactorization, x: np.ndarray, configs: List[KernelConfig],
                 repeats: int = 5, warmup: int = DEFAULT_WARMUP) -> List[BenchRow]:
    if repeats < 1:
        raise ValidationError(f"repeats must be >= 1, got {repeats}")
    rows = []
    for cfg in configs:
        for _ in range(warmup):
            ds_matmul(f, x, cfg)
        samples = []
        for _ in range(repeats):
            counter = MacCounter()
            start = time.perf_counter_ns()
            out = ds_matmul(f, x, cfg, counter)
            samples.append(time.perf_counter_ns() - start)
        best = min(samples)
        rows.append(BenchRow(
            config=cfg.label, tile_p=cfg.tile_p, tile_q=cfg.tile_q,
            time_ns_min=best, time_ns_median=statistics.median(samples),
            macs=counter.total, macs_per_sec=counter.total / (best * 1e-9) if best else float("inf"),
            checksum=float(np.sum(out)),
        ))
        log.info("bench %s: min %.3f ms, %.3g MAC/s", cfg.label, best / 1e6, rows[-1].macs_per_sec)
    return rows
