from __future__ import annotations

from dsfactor.commands.common import FORMATTER, add_seed
from dsfactor.core.matrix import make_rng, random_heavy_tailed
from dsfactor.store import write_bsm


def setup(sub, settings) -> None:
    p = sub.add_parser("generate", help="write a heavy-tailed surrogate weight matrix (BSM)",
                       formatter_class=FORMATTER,
                       description="Random matrix with singular values proportional to i^-decay.")
    p.add_argument("--rows", type=int, required=True, help="M, rows of the matrix")
    p.add_argument("--cols", type=int, required=True, help="N, columns of the matrix")
    p.add_argument("--decay", type=float, default=0.5, help="spectral decay in (0, 1]")
    p.add_argument("--output", required=True, help="BSM file to write")
    add_seed(p, settings)
    p.set_defaults(handler=run)


def run(args) -> int:
    w = random_heavy_tailed(args.rows, args.cols, args.decay, make_rng(args.seed))
    write_bsm(w, args.output)
    return 0
