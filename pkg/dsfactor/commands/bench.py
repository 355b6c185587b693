"""bench-error and bench-matmul."""
from __future__ import annotations

import logging

import numpy as np

from dsfactor.commands.common import (
    FORMATTER, add_ksvd_flags, add_seed, emit_rows, ksvd_config, load_matrix, parse_ints, parse_plans,
)
from dsfactor.core.curves import CURVE_COLUMNS, dominance, error_curve
from dsfactor.core.kernel import KernelConfig, bench_matmul
from dsfactor.core.matrix import make_rng
from dsfactor.store import deserialize_dsf
from dsfactor.utils.errors import NumericError, ValidationError

log = logging.getLogger(__name__)

BENCH_COLUMNS = ("config", "tile_p", "tile_q", "time_ns_min", "time_ns_median", "macs", "macs_per_sec")


def setup(sub, settings) -> None:
    p = sub.add_parser("bench-error", help="approximation error vs bytes, dense-sparse against low-rank",
                       formatter_class=FORMATTER)
    p.add_argument("--input", required=True, help="BSM matrix to approximate")
    p.add_argument("--plans", required=True, help="comma-separated B:K:S plans, e.g. 64:192:12,64:96:8")
    p.add_argument("--ranks", help="comma-separated low-rank ranks; default: one matched rank per plan")
    p.add_argument("--output", help="CSV file (columns method,bytes,cr,rel_error); stdout if omitted")
    add_ksvd_flags(p)
    add_seed(p, settings)
    p.set_defaults(handler=run_error)

    p = sub.add_parser("bench-matmul", help="time reference and blocked dense-sparse products",
                       formatter_class=FORMATTER)
    p.add_argument("--factors", required=True, help="DSF factorization")
    p.add_argument("--x", help="BSM input X; random N x L when omitted")
    p.add_argument("--seq-len", type=int, default=128, help="L for a random X")
    p.add_argument("--tiles", default="16x16,64x64,128x32", help="comma-separated PxQ blocked configs")
    p.add_argument("--repeats", type=int, default=5, help="timed runs per config")
    p.add_argument("--warmup", type=int, default=3, help="untimed runs before timing")
    p.add_argument("--output", help="CSV file; stdout if omitted")
    add_seed(p, settings)
    p.set_defaults(handler=run_matmul)


def run_error(args) -> int:
    w = load_matrix(args.input)
    ranks = parse_ints(args.ranks, "--ranks") if args.ranks else None
    points = error_curve(w, parse_plans(args.plans), ranks, ksvd_config(args), args.threads)
    emit_rows((pt.as_row() for pt in points), CURVE_COLUMNS, args.output)
    for ds, rival, wins in dominance(points):
        if rival is not None:
            log.info("budget %.0f bytes: ds %.5f vs lowrank %.5f -> %s",
                     ds.bytes, ds.rel_error, rival.rel_error, "ds" if wins else "lowrank")
    return 0


def _tile_configs(spec: str, threads: int):
    configs = [KernelConfig(mode="reference")]
    for item in filter(None, (t.strip() for t in spec.split(","))):
        try:
            p, q = (int(v) for v in item.lower().split("x"))
        except ValueError:
            raise ValidationError(f"tile {item!r} is not PxQ") from None
        configs.append(KernelConfig(tile_p=p, tile_q=q, mode="blocked", threads=threads))
    return configs


def run_matmul(args) -> int:
    f = deserialize_dsf(args.factors)
    if args.x:
        x = load_matrix(args.x)
    else:
        x = make_rng(args.seed).standard_normal((f.n, args.seq_len))
    rows = bench_matmul(f, x, _tile_configs(args.tiles, args.threads), args.repeats, args.warmup)
    if len({r.checksum for r in rows}) != 1:
        raise NumericError("kernel configurations disagree on the output checksum")
    emit_rows((r.as_row() for r in rows), BENCH_COLUMNS, args.output)
    return 0
