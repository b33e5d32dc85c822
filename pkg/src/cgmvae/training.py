"""Adam training loop with validation-based model selection.

A run is fully determined by (dataset, model config, train config): parameter
init, batch order, dropout masks and latent noise all come from named streams
of the run seed, so two identical invocations produce bit-identical
parameters and logs.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import data as data_mod
from . import rng
from .autodiff import Tape
from .data import Dataset
from .errors import ConfigError, NumericDomainError, TrainingAborted
from .losses import total_objective
from .metrics import MetricsReport, compute_report
from .model import ModelConfig, ModelParams, check_compatible, predict

LOSS_KEYS = ("kl", "recon", "contrastive", "ce", "total")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 100
    weight_decay: float = 0.0
    seed: int = 0
    train_fraction: float = 1.0
    selection_metric: str = "example_f1"
    threshold: float = 0.5
    kl_warmup_epochs: int = 20   # linear KL ramp; 0 disables

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError(f"train fraction must be in (0, 1], got {self.train_fraction}")
        if self.selection_metric not in ("ha", "example_f1", "micro_f1", "macro_f1",
                                         "precision_at_1"):
            raise ConfigError(f"unknown selection metric {self.selection_metric!r}")
        if self.kl_warmup_epochs < 0:
            raise ConfigError(f"kl warm-up epochs must be >= 0, got {self.kl_warmup_epochs}")


class Adam:
    """Bias-corrected Adam with decoupled weight decay.

    The decay shrinks the parameter before the Adam delta is applied, so it
    never leaks into the moment estimates.
    """

    def __init__(self, params: ModelParams, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in params.items()}

    def zero_grad(self):
        self.params.zero_grad()

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if not np.isfinite(g).all():
                raise NumericDomainError(f"non-finite gradient in parameter {name!r}")
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class EpochRecord:
    epoch: int
    losses: dict
    val: dict
    is_best: bool


@dataclass
class RunLog:
    seed: int
    config: dict
    n_train_rows: int
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    wall_clock: list[float] = field(default_factory=list)  # seconds; kept out of the JSONL

    def to_jsonl(self) -> str:
        """Line-delimited JSON: run header, one line per epoch, summary line.

        Timing is reported separately so the serialized log is bit-identical
        across reruns of the same manifest.
        """
        lines = [json.dumps({"record": "run", "seed": self.seed, "config": self.config,
                             "n_train_rows": self.n_train_rows}, sort_keys=True)]
        for r in self.records:
            lines.append(json.dumps({"record": "epoch", "epoch": r.epoch, "losses": r.losses,
                                     "val": r.val, "is_best": r.is_best}, sort_keys=True))
        lines.append(json.dumps({"record": "summary", "best_epoch": self.best_epoch},
                                sort_keys=True))
        return "\n".join(lines) + "\n"


@dataclass
class TrainResult:
    best_params: ModelParams
    last_params: ModelParams
    runlog: RunLog
    dataset: Dataset   # effective dataset (after any train-fraction subsampling)


def evaluate(params: ModelParams, config: ModelConfig, ds: Dataset, split_name: str,
             threshold: float = 0.5) -> MetricsReport:
    """Deterministic predict + threshold + all five metrics on one split."""
    check_compatible(config, ds.n_features, ds.n_labels)
    rows = ds.rows(split_name)
    probs = predict(params, config, ds.normalized(rows))
    return compute_report(probs, ds.labels[rows], threshold)


def _val_metrics(report: MetricsReport) -> dict:
    d = report.to_dict()
    d.pop("per_class")
    return d


def train(ds: Dataset, model_config: ModelConfig, train_config: TrainConfig) -> TrainResult:
    """Run the full loop and keep the parameters of the best validation epoch.

    Raises :class:`TrainingAborted` on a non-finite loss or gradient; the
    exception carries the run log and the best/last-good parameters seen so
    far.
    """
    seed = train_config.seed
    if train_config.train_fraction < 1.0:
        ds = data_mod.subsample_train(ds, train_config.train_fraction, seed)
    if ds.rows("train").size == 0 or ds.rows("val").size == 0:
        raise ConfigError("training requires non-empty train and val splits")
    check_compatible(model_config, ds.n_features, ds.n_labels)

    params = ModelParams.init(model_config, seed)
    opt = Adam(params, lr=train_config.learning_rate,
               weight_decay=train_config.weight_decay)
    dropout_rng = rng.stream(seed, "dropout")
    sample_rng = rng.stream(seed, "sampling")

    runlog = RunLog(
        seed=seed,
        config={**asdict(model_config), **asdict(train_config)},
        n_train_rows=int(ds.rows("train").size),
    )
    best_metric = -np.inf
    best_snap = None
    best_epoch = -1
    last_good = params.snapshot()

    def _abort(message: str) -> TrainingAborted:
        params.restore(last_good)
        err = TrainingAborted(message)
        err.runlog = runlog
        err.dataset = ds
        err.last_good_params = params
        err.best_params = None
        if best_snap is not None:
            err.best_params = ModelParams.from_arrays(best_snap)
        return err

    for epoch in range(1, train_config.epochs + 1):
        tic = time.perf_counter()
        sums = dict.fromkeys(LOSS_KEYS, 0.0)
        n_batches = 0
        if train_config.kl_warmup_epochs > 0:
            kl_scale = min(1.0, epoch / train_config.kl_warmup_epochs)
        else:
            kl_scale = 1.0
        for batch in data_mod.batches(ds, "train", train_config.batch_size, seed, epoch):
            opt.zero_grad()
            try:
                with Tape() as tape:
                    bd = total_objective(batch, params, model_config,
                                         sample_rng, dropout_rng, training=True,
                                         kl_scale=kl_scale)
            except NumericDomainError as e:
                raise _abort(f"epoch {epoch}: {e}") from None
            if not np.isfinite(bd.total):
                raise _abort(f"non-finite loss {bd.total} at epoch {epoch}")
            tape.backward(bd.nodes["total"])
            try:
                opt.step()
            except NumericDomainError as e:
                raise _abort(f"epoch {epoch}: {e}") from None
            for k in LOSS_KEYS:
                sums[k] += getattr(bd, k)
            n_batches += 1

        val_report = evaluate(params, model_config, ds, "val", train_config.threshold)
        val = _val_metrics(val_report)
        metric = val[train_config.selection_metric]
        is_best = metric > best_metric
        if is_best:
            best_metric = metric
            best_snap = params.snapshot()
            best_epoch = epoch
        last_good = params.snapshot()
        runlog.records.append(EpochRecord(
            epoch=epoch,
            losses={k: sums[k] / n_batches for k in LOSS_KEYS},
            val=val,
            is_best=is_best,
        ))
        runlog.wall_clock.append(time.perf_counter() - tic)

    runlog.best_epoch = best_epoch
    best_params = ModelParams.from_arrays(best_snap)
    return TrainResult(best_params=best_params, last_params=params, runlog=runlog, dataset=ds)
