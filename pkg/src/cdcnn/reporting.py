"""Plot-ready CSV/JSON writers with fixed 6-significant-digit floats."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .evaluation import ConfusionMatrix, ImportanceReport


def fmt(x: float) -> str:
    return f"{float(x):.6g}"


def _rounded(obj):
    if isinstance(obj, dict):
        return {str(k): _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _rounded(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(fmt(obj))
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_rounded(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def dataset_fingerprint(path) -> dict:
    path = Path(path)
    return {name: sha256_file(path / name) for name in ("meta.json", "labels.csv", "windows.f32")}


def confusion_csv(cm: ConfusionMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["true\\predicted", *cm.label_names])
    for name, row in zip(cm.label_names, cm.counts.tolist()):
        w.writerow([name, *row])
    return buf.getvalue()


def confusion_dict(cm: ConfusionMatrix) -> dict:
    precision, recall = cm.precision(), cm.recall()
    return {
        "accuracy": cm.accuracy,
        "num_samples": cm.total,
        "label_names": list(cm.label_names),
        "confusion": cm.counts.tolist(),
        "per_class": {
            name: {"precision": precision[i], "recall": recall[i], "support": int(cm.support[i])}
            for i, name in enumerate(cm.label_names)
        },
    }


def importance_csv(rep: ImportanceReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["channel_name", "group", "I_mean", "I_std", "A_perm_mean"])
    perm_mean = rep.perm_accuracies.mean(axis=1)
    for name, group, m, s, a in zip(rep.channel_names, rep.groups, rep.importance_mean,
                                    rep.importance_std, perm_mean):
        w.writerow([name, group, fmt(m), fmt(s), fmt(a)])
    return buf.getvalue()


def importance_dict(rep: ImportanceReport) -> dict:
    return {
        "baseline_accuracy": rep.baseline_accuracy,
        "repeats": int(rep.perm_accuracies.shape[1]),
        "seed": rep.seed,
        "per_timestep": rep.per_timestep,
        "group_sums": rep.group_sums(),
        "ranking": [rep.channel_names[i] for i in rep.ranking()],
        "channels": [
            {"channel_name": name, "group": group, "I_mean": m, "I_std": s,
             "A_perm": acc}
            for name, group, m, s, acc in zip(rep.channel_names, rep.groups, rep.importance_mean,
                                              rep.importance_std, rep.perm_accuracies.tolist())
        ],
    }
