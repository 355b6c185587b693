from __future__ import annotations

import logging

from dsfactor.commands.common import (
    FORMATTER, add_ksvd_flags, add_plan_flags, add_seed, ksvd_config, load_matrix, plan_from_args,
)
from dsfactor.core.factorization import factorize, reconstruct
from dsfactor.core.matrix import frobenius_error
from dsfactor.store import serialize_dsf

log = logging.getLogger(__name__)


def setup(sub, settings) -> None:
    p = sub.add_parser("factorize", help="dense-sparse factorize a BSM matrix into a DSF file",
                       formatter_class=FORMATTER)
    p.add_argument("--input", required=True, help="BSM weight matrix W (M x N)")
    p.add_argument("--output", required=True, help="DSF file to write")
    add_plan_flags(p)
    add_ksvd_flags(p)
    add_seed(p, settings)
    p.set_defaults(handler=run)


def run(args) -> int:
    w = load_matrix(args.input)
    plan = plan_from_args(args, w.shape[0])
    f = factorize(w, plan, ksvd_config(args), args.threads)
    serialize_dsf(f, args.output)
    print(f"rel_error {frobenius_error(w, reconstruct(f))!r}")
    return 0
