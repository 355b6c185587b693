"""Flag helpers shared by the subcommands."""
from __future__ import annotations

import argparse
import sys
from typing import Dict, Iterable, List, Sequence

import numpy as np

from dsfactor.core.factorization import BlockPlan
from dsfactor.core.ksvd import DEFAULT_MAX_ITERS, DEFAULT_REL_TOL, KsvdConfig
from dsfactor.store import read_bsm, write_csv, write_csv_stream
from dsfactor.utils.errors import ValidationError

FORMATTER = argparse.ArgumentDefaultsHelpFormatter


def add_seed(p: argparse.ArgumentParser, settings) -> None:
    p.add_argument("--seed", type=int, default=settings.seed, help="PCG64 RNG seed (env DSFACTOR_SEED)")


def add_plan_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--b", type=int, required=True, help="block width B (must divide N)")
    g = p.add_argument_group("dictionary size (one of)")
    g.add_argument("--k", type=int, help="dictionary size K")
    g.add_argument("--gamma", type=float, help="K as a fraction of M")
    g = p.add_argument_group("per-row sparsity (one of)")
    g.add_argument("--s", type=int, help="nonzeros per row S")
    g.add_argument("--delta", type=float, help="S as a fraction of B")


def add_ksvd_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS, help="K-SVD iteration cap")
    p.add_argument("--rel-tol", type=float, default=DEFAULT_REL_TOL,
                   help="stop when the relative objective decrease falls below this")


def ksvd_config(args) -> KsvdConfig:
    return KsvdConfig(max_iters=args.max_iters, rel_tol=args.rel_tol, seed=args.seed)


def plan_from_args(args, m: int) -> BlockPlan:
    """Builds K and S from --k/--gamma and --s/--delta, echoing any rounding."""
    if (args.k is None) == (args.gamma is None):
        raise ValidationError("give exactly one of --k and --gamma")
    if (args.s is None) == (args.delta is None):
        raise ValidationError("give exactly one of --s and --delta")
    rounded, notes = BlockPlan.from_ratios(
        m, args.b,
        args.gamma if args.gamma is not None else args.k / m,
        args.delta if args.delta is not None else args.s / args.b,
    )
    k = args.k if args.k is not None else rounded.k
    s = args.s if args.s is not None else rounded.s
    for note in notes:
        if note.startswith("gamma") and args.gamma is not None or note.startswith("delta") and args.delta is not None:
            print(f"note: {note}")
    return BlockPlan(args.b, k, s)


def parse_plans(spec: str) -> List[BlockPlan]:
    """Parse "64:192:12,64:128:8" (B:K:S items) into plans."""
    plans = []
    for item in filter(None, (x.strip() for x in spec.split(","))):
        try:
            b, k, s = (int(v) for v in item.split(":"))
        except ValueError:
            raise ValidationError(f"plan {item!r} is not B:K:S") from None
        plans.append(BlockPlan(b, k, s))
    if not plans:
        raise ValidationError("no plans given")
    return plans


def parse_ints(spec: str, what: str) -> List[int]:
    try:
        return [int(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"{what} must be comma-separated integers, got {spec!r}") from None


def emit_rows(rows: Iterable[Dict[str, object]], columns: Sequence[str], path: str | None) -> None:
    if path:
        write_csv(rows, path, columns)
    else:
        write_csv_stream(rows, sys.stdout, columns)


def load_matrix(path: str) -> np.ndarray:
    return read_bsm(path).astype(np.float64)
