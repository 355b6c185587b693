"""Training schedules on the toy network.

FT        dense training only.
FT_F_FT   dense training, one-shot K-SVD factorization of every factorizable
          weight, then training of the stored S values and D with the
          support pattern frozen.
FT_F_STF  same first two stages; the third trains latent weights through STF.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from dsfactor.core.factorization import BlockPlan, factorize, reconstruct
from dsfactor.core.ksvd import KsvdConfig
from dsfactor.core.matrix import derive_seed, make_rng
from dsfactor.stf.data import Task, make_task
from dsfactor.stf.layer import FixedPatternLayer, STFLayer
from dsfactor.stf.optim import Adam
from dsfactor.stf.toy import FACTORED, ToyModel, accuracy, cross_entropy, toy_backward, toy_forward
from dsfactor.utils.errors import ValidationError

log = logging.getLogger(__name__)

SCHEDULES = ("ft", "ftfft", "ftfstf")
METRIC_COLUMNS = ("stage", "epoch", "step", "loss", "accuracy", "mean_block_recon_err")


@dataclass(frozen=True)
class TrainConfig:
    schedule: str = "ftfstf"
    plan: BlockPlan = BlockPlan(b=8, k=16, s=2)
    dense_epochs: int = 30
    refine_epochs: int = 20
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    d_learning_rate: float = 1e-2
    refactor_stride: int | None = 1
    ksvd: KsvdConfig = field(default_factory=lambda: KsvdConfig(max_iters=30))
    samples: int = 512
    d: int = 32
    ffn: int = 64
    heads: int = 2
    seq_len: int = 8
    classes: int = 4
    noise: float = 1.0
    threads: int = 1

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise ValidationError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.dense_epochs < 0 or self.refine_epochs < 0:
            raise ValidationError("stage epochs must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.noise < 0:
            raise ValidationError(f"noise must be >= 0, got {self.noise}")


@dataclass(frozen=True)
class MetricRow:
    stage: str
    epoch: int
    step: int
    loss: float
    accuracy: float
    mean_block_recon_err: float

    def as_row(self) -> Dict[str, object]:
        return {c: getattr(self, c) for c in METRIC_COLUMNS}


@dataclass
class ScheduleResult:
    rows: List[MetricRow]
    model: ToyModel
    layers: Dict[str, object] = field(default_factory=dict)

    @property
    def final(self) -> MetricRow:
        return self.rows[-1]

    def stage_rows(self, stage: str) -> List[MetricRow]:
        return [r for r in self.rows if r.stage == stage]


def _evaluate(params, task: Task, heads: int):
    logits, _ = toy_forward(params, task.x, heads)
    loss, _ = cross_entropy(logits, task.y)
    return loss, accuracy(logits, task.y)


def _batches(rng: np.random.Generator, n: int, size: int):
    order = rng.permutation(n)
    for start in range(0, n, size):
        yield order[start:start + size]


class _Trainer:
    def __init__(self, cfg: TrainConfig, task: Task, model: ToyModel, rng: np.random.Generator):
        self.cfg = cfg
        self.task = task
        self.model = model
        self.rng = rng
        self.step = 0
        self.rows: List[MetricRow] = []

    def record(self, stage: str, epoch: int, weights: Dict[str, np.ndarray], recon: float) -> None:
        loss, acc = _evaluate(self.model.with_weights(weights), self.task, self.model.heads)
        self.rows.append(MetricRow(stage, epoch, self.step, loss, acc, recon))
        log.info("%s epoch %d step %d: loss %.4f acc %.3f recon %.4f", stage, epoch, self.step, loss, acc, recon)

    def grads(self, weights: Dict[str, np.ndarray], idx: np.ndarray) -> Dict[str, np.ndarray]:
        params = self.model.with_weights(weights)
        logits, cache = toy_forward(params, self.task.x[idx], self.model.heads)
        _, dlogits = cross_entropy(logits, self.task.y[idx])
        return toy_backward(params, cache, dlogits, self.model.heads)

    def dense_stage(self) -> None:
        opt = Adam(self.cfg.lr)
        params = self.model.params
        for epoch in range(1, self.cfg.dense_epochs + 1):
            for idx in _batches(self.rng, len(self.task.y), self.cfg.batch_size):
                g = self.grads({}, idx)
                g.pop("x")
                opt.step(params, g)
                self.step += 1
            self.record("ft", epoch, {}, 0.0)

    def factorize_stage(self):
        factors = {}
        for li, name in enumerate(FACTORED):
            ksvd = KsvdConfig(self.cfg.ksvd.max_iters, self.cfg.ksvd.rel_tol,
                              self.cfg.ksvd.atom_replacement_threshold, self.cfg.seed, (li,))
            factors[name] = factorize(self.model.params[name], self.cfg.plan, ksvd, self.cfg.threads, strict=False)
        weights = {name: reconstruct(f) for name, f in factors.items()}
        errs = [np.linalg.norm(self.model.params[n][:, f.column_range(i)] - blk.reconstruct())
                / max(np.linalg.norm(self.model.params[n][:, f.column_range(i)]), 1e-300)
                for n, f in factors.items() for i, blk in enumerate(f.blocks)]
        self.record("f", 0, weights, float(np.mean(errs)))
        return factors

    def fixed_pattern_stage(self, factors) -> Dict[str, FixedPatternLayer]:
        layers = {n: FixedPatternLayer.from_factorization(self.model.params[n], f) for n, f in factors.items()}
        opt = Adam(self.cfg.lr)
        trainable = {k: v for k, v in self.model.params.items() if k not in FACTORED}
        for n, layer in layers.items():
            trainable.update(layer.parameters(n))
        for epoch in range(1, self.cfg.refine_epochs + 1):
            for idx in _batches(self.rng, len(self.task.y), self.cfg.batch_size):
                g = self.grads({n: l.effective() for n, l in layers.items()}, idx)
                grads = {k: v for k, v in g.items() if k in trainable}
                for n, layer in layers.items():
                    grads.update(layer.gradients(n, g[n]))
                opt.step(trainable, grads)
                self.step += 1
            recon = float(np.mean(np.concatenate([l.block_errors() for l in layers.values()])))
            self.record("ft2", epoch, {n: l.effective() for n, l in layers.items()}, recon)
        return layers

    def stf_stage(self, factors) -> Dict[str, STFLayer]:
        layers = {
            n: STFLayer.from_factorization(self.model.params[n], f, d_learning_rate=self.cfg.d_learning_rate,
                                           refactor_stride=self.cfg.refactor_stride, threads=self.cfg.threads)
            for n, f in factors.items()
        }
        opt = Adam(self.cfg.lr)
        trainable = {k: v for k, v in self.model.params.items() if k not in FACTORED}
        trainable.update({n: l.w_latent for n, l in layers.items()})
        for epoch in range(1, self.cfg.refine_epochs + 1):
            for idx in _batches(self.rng, len(self.task.y), self.cfg.batch_size):
                g = self.grads({n: l.forward() for n, l in layers.items()}, idx)
                for n, layer in layers.items():
                    g[n] = layer.backward(g[n])
                g.pop("x")
                opt.step(trainable, g)
                self.step += 1
            recon = float(np.mean(np.concatenate([l.block_errors() for l in layers.values()])))
            self.record("stf", epoch, {n: l.effective() for n, l in layers.items()}, recon)
        return layers


def run_schedule(cfg: TrainConfig, model: ToyModel | None = None, task: Task | None = None) -> ScheduleResult:
    """Run FT, FT-F-FT or FT-F-STF and collect per-epoch metrics.

    Model and data default to draws from ``cfg.seed``; both schedules then share
    the same first two stages bit for bit.
    """
    rng = make_rng(derive_seed(cfg.seed, 0))
    if task is None:
        task = make_task(make_rng(derive_seed(cfg.seed, 1)), cfg.samples, cfg.d, cfg.seq_len, cfg.classes,
                         cfg.noise)
    if model is None:
        model = ToyModel.init(make_rng(derive_seed(cfg.seed, 2)), cfg.d, cfg.ffn, cfg.heads, task.classes)
    cfg.plan.validate(cfg.d, cfg.d, strict=False)
    cfg.plan.validate(cfg.ffn, cfg.ffn, strict=False)

    trainer = _Trainer(cfg, task, model, rng)
    trainer.dense_stage()
    if cfg.schedule == "ft":
        return ScheduleResult(trainer.rows, model)

    factors = trainer.factorize_stage()
    if cfg.schedule == "ftfft":
        layers = trainer.fixed_pattern_stage(factors)
    else:
        layers = trainer.stf_stage(factors)
    return ScheduleResult(trainer.rows, model, dict(layers))
