from __future__ import annotations

from dsfactor.commands.common import FORMATTER, load_matrix
from dsfactor.core.kernel import MODES, KernelConfig, ds_matmul
from dsfactor.core.planner import CacheModel, optimal_tile
from dsfactor.store import deserialize_dsf, write_bsm


def setup(sub, settings) -> None:
    p = sub.add_parser("matmul", help="compute W X from a DSF factorization", formatter_class=FORMATTER)
    p.add_argument("--factors", required=True, help="DSF factorization of W (M x N)")
    p.add_argument("--x", required=True, help="BSM input X (N x L)")
    p.add_argument("--output", required=True, help="BSM file for W X (M x L)")
    p.add_argument("--mode", choices=MODES, default="blocked",
                   help="reference loops row by row; blocked tiles the sparse stage")
    p.add_argument("--tile-p", type=int, default=64, help="output-row tile P")
    p.add_argument("--tile-q", type=int, default=64, help="output-column tile Q")
    p.add_argument("--cache-bytes", type=int, help="derive P, Q from the cache model instead")
    p.add_argument("--elem-bytes", type=int, default=4, help="bytes per element in the cache model")
    p.set_defaults(handler=run)


def kernel_config(args, k: int, s: int) -> KernelConfig:
    p, q = args.tile_p, args.tile_q
    if args.cache_bytes is not None:
        tile = optimal_tile(CacheModel(args.cache_bytes, args.elem_bytes, k, s))
        p, q = tile.p, tile.q
    return KernelConfig(tile_p=p, tile_q=q, mode=args.mode, threads=args.threads)


def run(args) -> int:
    f = deserialize_dsf(args.factors)
    x = load_matrix(args.x)
    out = ds_matmul(f, x, kernel_config(args, f.plan.k, f.plan.s))
    write_bsm(out, args.output)
    return 0
