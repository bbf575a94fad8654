"""Mini-batch Adam training with early stopping on validation accuracy."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import Dataset, assert_disjoint
from .errors import DataValidationError, NumericError
from .layers import softmax_cross_entropy
from .model import argmax_lowest
from .numeric import Adam, Rng


@dataclass
class TrainConfig:
    lr: float = 0.01
    max_epochs: int = 300
    patience: int = 20
    batch_size: int = 64
    dropout: float = 0.2
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batchnorm needs batch statistics)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float


@dataclass
class TrainReport:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    best_val_acc: float = float("-inf")
    wall_time: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "best_epoch": self.best_epoch,
            "stopped_epoch": self.stopped_epoch,
            "best_val_acc": self.best_val_acc,
            "history": [asdict(r) for r in self.history],
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d


class EarlyStopping:
    """Tracks the best score; only a strict improvement resets patience."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = float("-inf")
        self.best_epoch = 0

    def update(self, epoch: int, score: float) -> bool:
        """Record ``score`` for ``epoch``; returns True when it is a new best."""
        if score > self.best:
            self.best = score
            self.best_epoch = epoch
            return True
        return False

    def should_stop(self, epoch: int) -> bool:
        return epoch - self.best_epoch >= self.patience


def batch_bounds(n: int, batch_size: int) -> list[tuple[int, int]]:
    """Batch ``[start, stop)`` ranges; a trailing single sample joins the previous batch."""
    bounds = [(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] < 2:
        last = bounds.pop()
        bounds[-1] = (bounds[-1][0], last[1])
    return bounds


def evaluate_split(model, split: Dataset, batch_size: int = 256) -> float:
    """Fraction of windows whose inference-mode prediction equals the label."""
    if len(split) == 0:
        raise DataValidationError("cannot evaluate an empty split")
    pred = model.predict_windows(split.values, batch_size)
    return float(np.mean(pred == split.labels))


def train(model, train_split: Dataset, val_split: Dataset, cfg: TrainConfig,
          log=print):
    """Train ``model`` in place and return ``(best_model, report)``.

    The returned model is a snapshot taken at the epoch with the highest
    validation accuracy, batchnorm running statistics included.
    """
    if len(train_split) == 0 or len(val_split) == 0:
        raise DataValidationError("training and validation splits must be non-empty")
    if len(train_split) < 2:
        raise DataValidationError("need at least two training windows for batch statistics")
    assert_disjoint(train_split, val_split)

    root = Rng(cfg.seed)
    shuffle_rng = root.derive(1)
    dropout_rng = root.derive(2)
    optimizer = Adam(model.params, lr=cfg.lr)
    stopper = EarlyStopping(cfg.patience)
    report = TrainReport()
    best = model.copy()
    start = time.perf_counter()

    x_all = model.prepare(train_split.values)
    y_all = train_split.labels
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_split))
        loss_sum = 0.0
        correct = 0
        for b, (lo, hi) in enumerate(batch_bounds(len(order), cfg.batch_size)):
            idx = order[lo:hi]
            logits = model.forward(x_all[idx], training=True, rng=dropout_rng)
            loss, grad = softmax_cross_entropy(logits, y_all[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            grads = model.backward(grad)
            try:
                optimizer.step(model.params, grads)
            except NumericError as exc:
                raise NumericError(f"{exc} at epoch {epoch}, batch {b}") from exc
            loss_sum += loss * len(idx)
            correct += int(np.sum(argmax_lowest(logits) == y_all[idx]))
        val_acc = evaluate_split(model, val_split)
        record = EpochRecord(epoch, loss_sum / len(order), correct / len(order), val_acc)
        report.history.append(record)
        if stopper.update(epoch, val_acc):
            best = model.copy()
        log(f"epoch {epoch:3d}  train_loss {record.train_loss:.4f}  "
            f"train_acc {record.train_acc:.4f}  val_acc {val_acc:.4f}")
        report.stopped_epoch = epoch
        if stopper.should_stop(epoch):
            break
    report.best_epoch = stopper.best_epoch
    report.best_val_acc = stopper.best
    report.wall_time = time.perf_counter() - start
    return best, report
