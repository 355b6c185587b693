from __future__ import annotations

import argparse

from dsfactor.commands.common import FORMATTER, add_plan_flags, emit_rows, plan_from_args
from dsfactor.core.factorization import BlockPlan
from dsfactor.core.planner import (
    CacheModel, aggregate_report, compression_report, load_architecture, optimal_tile,
)
from dsfactor.utils.errors import ValidationError

COLUMNS = ("m", "n", "b", "k", "s", "gamma", "delta", "dense_bytes", "ds_bytes_packed",
           "ds_bytes_file", "cr", "inverse_cr", "cr_file", "flops_ratio", "tile_p", "tile_q", "ci")


def setup(sub, settings) -> None:
    p = sub.add_parser("plan", help="compression ratio, flops and cache tile for a plan",
                       formatter_class=FORMATTER,
                       description="Byte accounting for one M x N matrix, optionally the "
                                   "cache-optimal P x Q tile of the sparse product and an aggregate "
                                   "over a JSON-described architecture.")
    p.add_argument("--m", type=int, required=True, help="rows M of the weight matrix")
    p.add_argument("--n", type=int, required=True, help="columns N of the weight matrix")
    add_plan_flags(p)
    p.add_argument("--cache-bytes", type=int, help="cache size C in bytes; enables the tile solver")
    p.add_argument("--elem-bytes", type=int, default=4, help="bytes per cached element")
    p.add_argument("--architecture", help="JSON architecture file (see data/architectures/) to aggregate over; "
                                          "every component uses the same gamma, delta and B")
    p.add_argument("--csv", help="also write the report as a one-row CSV here")
    p.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    plan = plan_from_args(args, args.m)
    report = compression_report(args.m, args.n, plan)
    row = report.as_row()
    print(f"plan: M={args.m} N={args.n} B={plan.b} K={plan.k} S={plan.s} "
          f"(gamma={plan.gamma(args.m):.6g}, delta={plan.delta:.6g})")
    print(f"dense bytes:          {report.dense_bytes}")
    print(f"ds bytes (bit-packed): {report.ds_bytes_packed:.1f}  cr={report.cr:.6f}  ({report.inverse_cr:.3f}x smaller)")
    print(f"ds bytes (u16 file):   {report.ds_bytes_file}  cr={report.cr_file:.6f}")
    print(f"flops ratio:          {report.flops_ratio:.6f}")

    if args.cache_bytes is not None:
        tile = optimal_tile(CacheModel(args.cache_bytes, args.elem_bytes, plan.k, plan.s))
        row.update(tile_p=tile.p, tile_q=tile.q, ci=tile.ci)
        print(f"tile: P={tile.p} Q={tile.q} CI={tile.ci:.4f} "
              f"(stationary point P={tile.p_real:.2f}, Q={tile.q_real:.2f})")

    if args.architecture:
        arch = load_architecture(args.architecture)
        if args.gamma is None or args.delta is None:
            raise ValidationError("--architecture needs --gamma and --delta so each component can size K and S")
        plans = {c.name: BlockPlan.from_ratios(c.m, args.b, args.gamma, args.delta)[0] for c in arch.components}
        agg = aggregate_report(arch, plans)
        print(f"{arch.name}: dense {agg.dense_bytes} bytes, ds {agg.ds_bytes_packed:.1f} bytes, "
              f"cr={agg.cr:.6f} ({agg.inverse_cr:.3f}x smaller)")

    if args.csv:
        emit_rows([row], COLUMNS, args.csv)
    return 0
