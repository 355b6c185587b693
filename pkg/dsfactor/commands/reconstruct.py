from __future__ import annotations

from dsfactor.commands.common import FORMATTER, load_matrix
from dsfactor.core.factorization import reconstruct
from dsfactor.core.matrix import frobenius_error
from dsfactor.store import deserialize_dsf, write_bsm


def setup(sub, settings) -> None:
    p = sub.add_parser("reconstruct", help="rebuild W-hat from a DSF file", formatter_class=FORMATTER)
    p.add_argument("--input", required=True, help="DSF factorization")
    p.add_argument("--output", required=True, help="BSM file for the reconstructed matrix")
    p.add_argument("--reference", help="original BSM matrix; prints the relative Frobenius error")
    p.set_defaults(handler=run)


def run(args) -> int:
    w_hat = reconstruct(deserialize_dsf(args.input))
    write_bsm(w_hat, args.output)
    if args.reference:
        print(f"rel_error {frobenius_error(load_matrix(args.reference), w_hat)!r}")
    return 0
