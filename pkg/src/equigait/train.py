"""Dataset assembly and the training loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import ClassWeights, Gait, Label, Split, SplitAssignment, Stride, compute_class_weights, count_labels
from .nn.loss import weighted_bce
from .nn.model import ArchConfig, ModelParams, compute_norm_stats, init_params, model_backward, model_forward, stack_strides
from .nn.optim import AdamState, PlateauScheduler, adam_step
from .segmentation import SegmentedSession

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    gait: Gait = Gait.TROT
    epochs: int = 100
    batch_size: int = 64
    initial_lr: float = 1e-3
    min_lr: float = 1e-6
    lr_factor: float = 0.5
    lr_patience: int = 3
    seed: int = 0
    arch: ArchConfig = field(default_factory=ArchConfig)
    class_weighting: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for batch norm")
        if not self.initial_lr > 0:
            raise ValueError("initial_lr must be positive")


@dataclass
class Datasets:
    train: list[Stride]
    val: list[Stride]
    test: list[Stride]
    class_weights: ClassWeights
    norm_mean: np.ndarray
    norm_std: np.ndarray
    gait: Gait = Gait.TROT

    def split(self, which: Split) -> list[Stride]:
        return {Split.TRAIN: self.train, Split.VALIDATION: self.val, Split.TEST: self.test}[which]


def build_datasets(
    segmented: Sequence[SegmentedSession],
    split: SplitAssignment,
    gait: Gait = Gait.TROT,
) -> Datasets:
    """Collect ``gait`` strides per split; weights and normalization come from train only."""
    parts: dict[Split, list[Stride]] = {s: [] for s in Split}
    for item in segmented:
        sid = item.session.session_id
        if item.session.label is Label.UNKNOWN:
            raise ValueError(f"session {sid} is unlabeled and cannot be used for training")
        if sid not in split.assignment:
            raise ValueError(f"session {sid} is missing from the split assignment")
        parts[split.assignment[sid]].extend(s for s in item.strides if s.gait is gait)
    for which, strides in parts.items():
        counts = count_labels(strides)
        if counts.sound == 0 or counts.lame == 0:
            raise ValueError(
                f"{which.value} split lacks a label for gait {gait.value} (sound={counts.sound}, lame={counts.lame})"
            )
    mean, std = compute_norm_stats(parts[Split.TRAIN])
    return Datasets(
        train=parts[Split.TRAIN],
        val=parts[Split.VALIDATION],
        test=parts[Split.TEST],
        class_weights=compute_class_weights(parts[Split.TRAIN]),
        norm_mean=mean,
        norm_std=std,
        gait=gait,
    )


def targets(strides: Sequence[Stride]) -> np.ndarray:
    return np.array([s.label.target for s in strides], dtype=np.float64)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    learning_rate: float
    seconds: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,val_accuracy,learning_rate,seconds"]
        for r in self.records:
            lines.append(
                f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.val_accuracy!r},{r.learning_rate!r},{r.seconds:.3f}"
            )
        return "\n".join(lines) + "\n"

    @property
    def learning_rates(self) -> list[float]:
        return [r.learning_rate for r in self.records]


def evaluate_loss(params: ModelParams, x: np.ndarray, mask: np.ndarray, y: np.ndarray, batch_size: int = 512) -> tuple[float, np.ndarray]:
    """Unweighted inference-mode BCE and the probabilities."""
    probs = np.concatenate(
        [model_forward(x[i : i + batch_size], mask[i : i + batch_size], params)[0] for i in range(0, len(x), batch_size)]
    )
    return weighted_bce(probs, y)[0], probs


def train_model(
    datasets: Datasets,
    cfg: TrainConfig = TrainConfig(),
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[ModelParams, TrainLog]:
    """Adam on class-weighted BCE with plateau LR halving; returns the best-validation-loss weights."""
    shuffle_seq, dropout_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)

    params = init_params(cfg.seed, cfg.arch)
    params.norm_mean = datasets.norm_mean.copy()
    params.norm_std = datasets.norm_std.copy()
    params.gait = datasets.gait
    weights = datasets.class_weights if cfg.class_weighting else ClassWeights()

    x_tr, m_tr = stack_strides(datasets.train, params.norm_mean, params.norm_std)
    y_tr = targets(datasets.train)
    x_val, m_val = stack_strides(datasets.val, params.norm_mean, params.norm_std)
    y_val = targets(datasets.val)

    adam = AdamState(learning_rate=cfg.initial_lr)
    scheduler = PlateauScheduler(factor=cfg.lr_factor, patience=cfg.lr_patience, min_lr=cfg.min_lr)
    learnable = params.learnable()
    best: ModelParams | None = None
    best_loss = math.inf
    train_log = TrainLog()
    n = len(x_tr)

    for epoch in range(1, cfg.epochs + 1):
        tic = time.perf_counter()
        order = shuffle_rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if len(idx) < 2:
                continue
            probs, caches = model_forward(x_tr[idx], m_tr[idx], params, train=True, rng=dropout_rng)
            loss, dlogits = weighted_bce(probs, y_tr[idx], weights)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}, batch starting {start}")
            adam_step(learnable, model_backward(dlogits, caches), adam)
            total += loss * len(idx)
            seen += len(idx)

        val_loss, val_probs = evaluate_loss(params, x_val, m_val, y_val)
        if not math.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        val_acc = float(np.mean((val_probs >= 0.5) == (y_val > 0.5)))
        record = EpochRecord(epoch, total / max(seen, 1), val_loss, val_acc, adam.learning_rate, time.perf_counter() - tic)
        train_log.records.append(record)
        if val_loss < best_loss:
            best_loss = val_loss
            best = params.copy()
            train_log.best_epoch = epoch
        adam.learning_rate = scheduler.step(val_loss, adam.learning_rate)
        log.debug("epoch %d train %.4f val %.4f acc %.3f lr %.2e", epoch, record.train_loss, val_loss, val_acc, record.learning_rate)
        if on_epoch is not None:
            on_epoch(record)

    assert best is not None
    return best.round_to_float32(), train_log
