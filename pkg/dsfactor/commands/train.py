from __future__ import annotations

from dsfactor.commands.common import FORMATTER, add_seed, emit_rows
from dsfactor.core.factorization import BlockPlan
from dsfactor.core.ksvd import KsvdConfig
from dsfactor.stf.schedule import METRIC_COLUMNS, SCHEDULES, TrainConfig, run_schedule


def setup(sub, settings) -> None:
    p = sub.add_parser("train-demo", help="FT / FT-F-FT / FT-F-STF on the toy attention network",
                       formatter_class=FORMATTER,
                       description="Writes per-epoch metrics: " + ",".join(METRIC_COLUMNS))
    p.add_argument("--schedule", choices=SCHEDULES, default="ftfstf",
                   help="ft trains dense only; ftfft refines a frozen pattern; ftfstf re-selects it")
    p.add_argument("--b", type=int, default=8, help="block width B")
    p.add_argument("--k", type=int, default=16, help="dictionary size K")
    p.add_argument("--s", type=int, default=2, help="nonzeros per row S")
    p.add_argument("--dense-epochs", type=int, default=30, help="epochs of dense training before factorizing")
    p.add_argument("--refine-epochs", type=int, default=20, help="epochs after factorizing")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    p.add_argument("--batch-size", type=int, default=32, help="sequences per Adam step")
    p.add_argument("--d-lr", type=float, default=1e-2, help="STF dictionary step size")
    p.add_argument("--refactor-stride", type=int, default=1,
                   help="re-run OMP every this many forward passes; 0 = never after the first")
    p.add_argument("--ksvd-iters", type=int, default=30, help="K-SVD iterations per block when factorizing")
    p.add_argument("--samples", type=int, default=512, help="synthetic sequences in the task")
    p.add_argument("--width", type=int, default=32, help="model width d")
    p.add_argument("--ffn-width", type=int, default=64, help="hidden width of the FFN")
    p.add_argument("--seq-len", type=int, default=8, help="tokens per sequence")
    p.add_argument("--noise", type=float, default=1.0, help="per-token Gaussian noise of the synthetic task")
    p.add_argument("--output", help="CSV file; stdout if omitted")
    add_seed(p, settings)
    p.set_defaults(handler=run)


def run(args) -> int:
    cfg = TrainConfig(
        schedule=args.schedule,
        plan=BlockPlan(args.b, args.k, args.s),
        dense_epochs=args.dense_epochs,
        refine_epochs=args.refine_epochs,
        lr=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        d_learning_rate=args.d_lr,
        refactor_stride=args.refactor_stride or None,
        ksvd=KsvdConfig(max_iters=args.ksvd_iters),
        samples=args.samples,
        d=args.width,
        ffn=args.ffn_width,
        seq_len=args.seq_len,
        noise=args.noise,
        threads=args.threads,
    )
    result = run_schedule(cfg)
    emit_rows((r.as_row() for r in result.rows), METRIC_COLUMNS, args.output)
    return 0
