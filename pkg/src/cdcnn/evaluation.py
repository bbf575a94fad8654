"""Confusion matrices and channel-wise permutation feature importance.

Importance of channel ``f`` is the accuracy drop when the channel is shuffled
across windows: ``I_f = A_base - A_f_perm``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, channel_group
from .errors import DataValidationError
from .numeric import Rng


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class
    label_names: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def precision(self) -> np.ndarray:
        predicted = self.counts.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(predicted > 0, np.diag(self.counts) / predicted, 0.0)

    def recall(self) -> np.ndarray:
        support = self.support
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(support > 0, np.diag(self.counts) / support, 0.0)


def confusion_from_predictions(labels, predictions, label_names) -> ConfusionMatrix:
    k = len(label_names)
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (np.asarray(labels), np.asarray(predictions)), 1)
    return ConfusionMatrix(counts, tuple(label_names))


def confusion_matrix(model, split: Dataset) -> ConfusionMatrix:
    if len(split) == 0:
        raise DataValidationError("cannot evaluate an empty split")
    return confusion_from_predictions(split.labels, model.predict_windows(split.values),
                                      split.label_names)


def permute_channel(split: Dataset, channel: int, rng: Rng,
                    per_timestep: bool = False) -> Dataset:
    """Copy of ``split`` with channel ``channel`` shuffled across windows.

    By default each window receives another window's entire series for that
    channel.  ``per_timestep=True`` draws an independent permutation for every
    time step instead.  The input split is never modified.
    """
    f = split.num_channels
    if not 0 <= channel < f:
        raise IndexError(f"channel {channel} out of range 0..{f - 1}")
    values = np.array(split.values, dtype=np.float32, copy=True)
    n = len(split)
    if per_timestep:
        for t in range(split.time_steps):
            values[:, t, channel] = values[rng.permutation(n), t, channel]
    else:
        perm = rng.permutation(n)
        values[:, :, channel] = values[perm, :, channel]
    return split.with_values(values)


@dataclass
class ImportanceReport:
    baseline_accuracy: float
    channel_names: tuple[str, ...]
    perm_accuracies: np.ndarray  # (channels, repeats)
    seed: int
    per_timestep: bool = False

    @property
    def importances(self) -> np.ndarray:
        return self.baseline_accuracy - self.perm_accuracies

    @property
    def importance_mean(self) -> np.ndarray:
        return self.baseline_accuracy - self.perm_accuracies.mean(axis=1)

    @property
    def importance_std(self) -> np.ndarray:
        return self.importances.std(axis=1)

    @property
    def groups(self) -> list[str]:
        return [channel_group(n) for n in self.channel_names]

    def group_sums(self) -> dict[str, float]:
        sums: dict[str, float] = {}
        for g, v in zip(self.groups, self.importance_mean):
            sums[g] = sums.get(g, 0.0) + float(v)
        return sums

    def ranking(self) -> list[int]:
        """Channel indices by decreasing mean importance (stable on ties)."""
        return [int(i) for i in np.argsort(-self.importance_mean, kind="stable")]


def permutation_importance(model, split: Dataset, repeats: int = 5, seed: int = 0,
                           per_timestep: bool = False) -> ImportanceReport:
    """Accuracy drop per channel, averaged over ``repeats`` fresh shuffles.

    Each (channel, repeat) pair shuffles with its own derived stream, so the
    result does not depend on evaluation order.
    """
    if len(split) == 0:
        raise DataValidationError("cannot compute importance on an empty split")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    root = Rng(seed)
    base = float(np.mean(model.predict_windows(split.values) == split.labels))
    perm_acc = np.zeros((split.num_channels, repeats))
    for f in range(split.num_channels):
        for r in range(repeats):
            shuffled = permute_channel(split, f, root.derive(f, r), per_timestep)
            pred = model.predict_windows(shuffled.values)
            perm_acc[f, r] = np.mean(pred == split.labels)
    return ImportanceReport(base, split.channel_names, perm_acc, seed, per_timestep)
