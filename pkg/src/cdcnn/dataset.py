"""Smart-insole window datasets: disk format, splits, standardization, synthesis.

A dataset directory holds three files::

    meta.json     {version, num_samples, time_steps, channels, channel_names,
                   label_names, units}
    windows.f32   little-endian float32, laid out [sample][time][channel]
    labels.csv    header ``sample_id,subject_id,label`` (label as its name)
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataValidationError
from .numeric import Rng

FORMAT_VERSION = 1
TIME_STEPS = 160
LABEL_NAMES = ("Sitting", "Standing", "Tandem", "Walking")
CHANNEL_NAMES = tuple(
    [f"pressure_{i}" for i in range(18)]
    + ["accel_x", "accel_y", "accel_z", "gyro_x", "gyro_y", "gyro_z"]
)
DEFAULT_UNITS = {"pressure": "raw", "accel": "g", "gyro": "raw"}

# windows per subject, columns in LABEL_NAMES order
SUBJECT_CLASS_COUNTS = {
    1: (0, 404, 0, 426),
    10: (0, 392, 0, 412),
    12: (0, 430, 0, 358),
    13: (0, 358, 0, 360),
    14: (396, 396, 0, 147),
    15: (566, 398, 590, 406),
    16: (548, 368, 215, 370),
    17: (504, 153, 564, 418),
    18: (342, 0, 0, 0),
    19: (592, 388, 594, 240),
    22: (408, 390, 510, 386),
    23: (330, 372, 546, 368),
    24: (230, 360, 514, 366),
    30: (384, 382, 550, 410),
    31: (442, 372, 420, 406),
    32: (324, 396, 540, 328),
}


def channel_group(name: str) -> str:
    for prefix in ("pressure", "accel", "gyro"):
        if name.startswith(prefix):
            return prefix
    return "other"


@dataclass(frozen=True)
class SensorWindow:
    values: np.ndarray  # (T, F)
    label: int
    subject_id: int
    sample_id: int


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray
    constant_channels: tuple[int, ...] = ()

    def apply(self, values: np.ndarray) -> np.ndarray:
        return ((values - self.mean) / self.std).astype(np.float32)


@dataclass
class Dataset:
    values: np.ndarray          # (N, T, F) float32
    labels: np.ndarray          # (N,) int64
    subjects: np.ndarray        # (N,) int64
    sample_ids: np.ndarray      # (N,) int64
    label_names: tuple[str, ...] = LABEL_NAMES
    channel_names: tuple[str, ...] = CHANNEL_NAMES
    units: dict = field(default_factory=lambda: dict(DEFAULT_UNITS))
    normalizer: Normalizer | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.subjects = np.asarray(self.subjects, dtype=np.int64)
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        self.label_names = tuple(self.label_names)
        self.channel_names = tuple(self.channel_names)
        n = len(self.labels)
        if self.values.ndim != 3 or len(self.values) != n:
            raise DataValidationError(f"values shape {self.values.shape} does not hold {n} windows")
        if self.values.shape[2] != len(self.channel_names):
            raise DataValidationError(f"{self.values.shape[2]} channels but "
                                      f"{len(self.channel_names)} channel names")
        if len(self.subjects) != n or len(self.sample_ids) != n:
            raise DataValidationError("labels, subjects and sample_ids differ in length")
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.label_names)):
            raise DataValidationError("label index out of range")
        if len(np.unique(self.sample_ids)) != n:
            raise DataValidationError("duplicate sample_id")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def time_steps(self) -> int:
        return self.values.shape[1]

    @property
    def num_channels(self) -> int:
        return self.values.shape[2]

    def window(self, i: int) -> SensorWindow:
        return SensorWindow(self.values[i], int(self.labels[i]), int(self.subjects[i]),
                            int(self.sample_ids[i]))

    def subject_ids(self) -> list[int]:
        return sorted(int(s) for s in np.unique(self.subjects))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, values=_take(self.values, idx), labels=self.labels[idx],
                       subjects=self.subjects[idx], sample_ids=self.sample_ids[idx])

    def with_values(self, values: np.ndarray, normalizer: Normalizer | None = None) -> "Dataset":
        return replace(self, values=values, normalizer=normalizer or self.normalizer)


def _take(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
    if values.strides[0] == 0:
        # every window is the same broadcast view; avoid materializing it
        return np.broadcast_to(values[:1], (len(idx),) + values.shape[1:])
    return values[idx]


# --- disk format -------------------------------------------------------------

def write_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": FORMAT_VERSION,
        "num_samples": len(ds),
        "time_steps": ds.time_steps,
        "channels": ds.num_channels,
        "channel_names": list(ds.channel_names),
        "label_names": list(ds.label_names),
        "units": ds.units,
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    nbytes = ds.values.size * 4
    with open(path / "windows.f32", "wb") as fh:
        if ds.values.size and not any(ds.values.strides) and float(ds.values.flat[0]) == 0.0:
            fh.truncate(nbytes)  # all-zero broadcast payload: write a sparse file
        else:
            fh.write(np.ascontiguousarray(ds.values, dtype="<f4").tobytes())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "subject_id", "label"])
    for sid, subj, lab in zip(ds.sample_ids.tolist(), ds.subjects.tolist(), ds.labels.tolist()):
        writer.writerow([sid, subj, ds.label_names[lab]])
    (path / "labels.csv").write_text(buf.getvalue())


def _read_meta(path: Path) -> dict:
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise DataValidationError(f"missing file {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
        for key in ("num_samples", "time_steps", "channels", "channel_names", "label_names"):
            meta[key]
    except (ValueError, KeyError, TypeError) as exc:
        raise DataValidationError(f"cannot parse {meta_path}: {exc}") from exc
    if len(meta["channel_names"]) != meta["channels"]:
        raise DataValidationError(f"{meta_path}: channel_names length != channels")
    return meta


def load_dataset(path, mmap: bool = False, chunk: int = 4096) -> Dataset:
    """Load and validate a dataset directory.

    With ``mmap=True`` the window payload is memory-mapped read-only instead of
    being read into memory; validation still scans it once, chunk by chunk.
    """
    path = Path(path)
    meta = _read_meta(path)
    n, t, f = int(meta["num_samples"]), int(meta["time_steps"]), int(meta["channels"])
    label_names = tuple(meta["label_names"])
    lookup = {name: i for i, name in enumerate(label_names)}

    labels_path = path / "labels.csv"
    if not labels_path.exists():
        raise DataValidationError(f"missing file {labels_path}")
    with open(labels_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id", "subject_id", "label"]:
            raise DataValidationError(f"{labels_path}: bad header {header}")
        rows = [r for r in reader if r]
    sample_ids, subjects, labels = [], [], []
    for lineno, row in enumerate(rows, start=2):
        try:
            sid, subj, name = int(row[0]), int(row[1]), row[2]
        except (ValueError, IndexError) as exc:
            raise DataValidationError(f"{labels_path}:{lineno}: malformed row {row}") from exc
        if name not in lookup:
            raise DataValidationError(f"{labels_path}:{lineno}: label {name!r} out of range "
                                      f"(known: {', '.join(label_names)})")
        sample_ids.append(sid)
        subjects.append(subj)
        labels.append(lookup[name])
    if len(rows) != n:
        raise DataValidationError(f"meta.json declares {n} samples, labels.csv has {len(rows)}")
    if len(set(sample_ids)) != len(sample_ids):
        raise DataValidationError(f"{labels_path}: duplicate sample_id")

    win_path = path / "windows.f32"
    if not win_path.exists():
        raise DataValidationError(f"missing file {win_path}")
    expected = n * t * f * 4
    actual = os.path.getsize(win_path)
    if actual != expected:
        raise DataValidationError(f"{win_path}: expected {expected} bytes "
                                  f"({n}x{t}x{f} float32), found {actual}")
    if n == 0:
        values = np.zeros((0, t, f), np.float32)
    elif mmap:
        values = np.memmap(win_path, dtype="<f4", mode="r", shape=(n, t, f))
    else:
        values = np.fromfile(win_path, dtype="<f4").astype(np.float32).reshape(n, t, f)
    for start in range(0, n, chunk):
        if not np.all(np.isfinite(values[start:start + chunk])):
            raise DataValidationError(f"{win_path}: non-finite value in windows "
                                      f"{start}..{min(n, start + chunk) - 1}")
    return Dataset(values, labels, subjects, sample_ids, label_names,
                   tuple(meta["channel_names"]), meta.get("units", {}))


# --- splits --------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train: frozenset
    val: frozenset
    test: frozenset

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, frozenset(int(s) for s in getattr(self, name)))
        overlap = (self.train & self.val) | (self.train & self.test) | (self.val & self.test)
        if overlap:
            raise DataValidationError(f"subjects assigned to more than one split: {sorted(overlap)}")

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        try:
            return cls(d["train"], d.get("val", []), d.get("test", []))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataValidationError):
                raise
            raise DataValidationError(f"bad split spec: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "SplitSpec":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise DataValidationError(f"cannot read split spec {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {"train": sorted(self.train), "val": sorted(self.val), "test": sorted(self.test)}

    def subjects_for(self, split: str) -> frozenset:
        return getattr(self, split)


def default_split() -> SplitSpec:
    """The reference subject assignment shipped as ``paper_split.json``."""
    text = resources.files("cdcnn").joinpath("data/paper_split.json").read_text()
    return SplitSpec.from_dict(json.loads(text))


def split_by_subject(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    present = set(ds.subject_ids())
    uncovered = present - (spec.train | spec.val | spec.test)
    if uncovered:
        raise DataValidationError(f"subjects not assigned to any split: {sorted(uncovered)}")
    parts = []
    for members in (spec.train, spec.val, spec.test):
        mask = np.isin(ds.subjects, sorted(members))
        parts.append(ds.subset(np.flatnonzero(mask)))
    assert_disjoint(*parts)
    return tuple(parts)


def assert_disjoint(*splits: Dataset) -> None:
    seen: dict[int, int] = {}
    for k, part in enumerate(splits):
        for s in part.subject_ids():
            if s in seen and seen[s] != k:
                raise DataValidationError(f"subject {s} appears in splits {seen[s]} and {k}")
            seen[s] = k


# --- standardization -------------------------------------------------------------

def fit_normalizer(train: Dataset, chunk: int = 2048) -> Normalizer:
    """Per-channel z-score statistics over every (window, time) entry."""
    if len(train) == 0:
        raise DataValidationError("cannot fit a normalizer on an empty training split")
    f = train.num_channels
    total = np.zeros(f)
    count = 0
    for start in range(0, len(train), chunk):
        block = np.asarray(train.values[start:start + chunk], np.float64).reshape(-1, f)
        total += block.sum(axis=0)
        count += len(block)
    mean = total / count
    sq = np.zeros(f)
    for start in range(0, len(train), chunk):
        block = np.asarray(train.values[start:start + chunk], np.float64).reshape(-1, f)
        sq += ((block - mean) ** 2).sum(axis=0)
    std = np.sqrt(sq / count)
    constant = std <= 1e-12
    std[constant] = 1.0
    return Normalizer(mean.astype(np.float32), std.astype(np.float32),
                      tuple(int(i) for i in np.flatnonzero(constant)))


def apply_normalizer(ds: Dataset, norm: Normalizer) -> Dataset:
    return ds.with_values(norm.apply(np.asarray(ds.values)), normalizer=norm)


def prepare_splits(ds: Dataset, spec: SplitSpec, standardize: bool = True):
    """Split by subject and, optionally, standardize all parts with train statistics."""
    train, val, test = split_by_subject(ds, spec)
    if not standardize:
        return train, val, test, None
    norm = fit_normalizer(train)
    return (apply_normalizer(train, norm), apply_normalizer(val, norm),
            apply_normalizer(test, norm), norm)


# --- statistics ------------------------------------------------------------------

@dataclass
class SubjectClassTable:
    subjects: list[int]
    label_names: tuple[str, ...]
    counts: np.ndarray  # (subjects, classes)

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def column_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row(self, subject: int) -> tuple[int, ...]:
        r = self.counts[self.subjects.index(subject)]
        return tuple(int(v) for v in r) + (int(r.sum()),)

    def format(self) -> str:
        names = list(self.label_names)
        width = max([len(n) for n in names] + [7])
        head = f"{'Subject':>8} " + " ".join(f"{n:>{width}}" for n in names + ["Total"])
        lines = [head]
        for s, r in zip(self.subjects, self.counts):
            cells = [int(v) for v in r] + [int(r.sum())]
            lines.append(f"{s:>8} " + " ".join(f"{v:>{width}}" for v in cells))
        cells = [int(v) for v in self.column_totals] + [self.total]
        lines.append(f"{'Total':>8} " + " ".join(f"{v:>{width}}" for v in cells))
        return "\n".join(lines)


def subject_class_table(ds: Dataset) -> SubjectClassTable:
    subjects = ds.subject_ids()
    k = len(ds.label_names)
    counts = np.zeros((len(subjects), k), dtype=np.int64)
    pos = {s: i for i, s in enumerate(subjects)}
    for s, lab in zip(ds.subjects.tolist(), ds.labels.tolist()):
        counts[pos[s], lab] += 1
    return SubjectClassTable(subjects, ds.label_names, counts)


def subject_count_fixture(time_steps: int = TIME_STEPS) -> Dataset:
    """Label-only dataset with the reference per-subject/class window counts.

    Window values are a single all-zero broadcast view, so the fixture costs
    almost no memory even at 21,069 windows.
    """
    subjects, labels = [], []
    for subj, row in SUBJECT_CLASS_COUNTS.items():
        for lab, count in enumerate(row):
            subjects += [subj] * count
            labels += [lab] * count
    n = len(labels)
    values = np.broadcast_to(np.zeros((1, 1, 1), np.float32), (n, time_steps, len(CHANNEL_NAMES)))
    return Dataset(values, labels, subjects, np.arange(n))


# --- synthetic generator ---------------------------------------------------------------

SAMPLE_RATE_HZ = 100.0
_TANDEM_SENSORS = np.arange(1, 18, 3)  # a narrow central line of the sensor grid


def generate_synthetic(num_subjects: int, windows_per_subject_per_class: int, seed: int = 0,
                       time_steps: int = TIME_STEPS, noise: float = 0.03) -> Dataset:
    """Class-conditioned gait windows with per-subject offsets and gains.

    * Walking: heel-to-toe pressure wave at a subject cadence of 1.5-2.5 Hz,
      oscillating accelerometer and gyroscope.
    * Standing: high static pressure, accelerometer near (0, 0, 1) g.
    * Sitting: near-zero pressure, slightly tilted, low-variance inertial signals.
    * Tandem: pressure on a narrow subset of sensors plus low-frequency gyro sway.

    Subjects are numbered 1..num_subjects.  Windows are ordered by subject,
    then class, then window.
    """
    if num_subjects < 1 or windows_per_subject_per_class < 1:
        raise ValueError("num_subjects and windows_per_subject_per_class must be positive")
    root = Rng(seed)
    per = windows_per_subject_per_class
    t = np.arange(time_steps) / SAMPLE_RATE_HZ
    position = np.linspace(0.0, 1.0, 18)  # 0 = heel, 1 = toe
    blocks, labels, subjects = [], [], []
    for subj in range(1, num_subjects + 1):
        srng = root.derive(subj)
        gain = ((0.8 + 0.4 * srng.uniform()) * (1.0 + 0.15 * srng.normal(18))).clip(0.3)
        offset = 0.05 * srng.normal(18)
        cadence = 1.5 + srng.uniform()
        sway_hz = 0.3 + 0.5 * srng.uniform()
        accel_bias = 0.05 * srng.normal(3)
        gyro_gain = 0.8 + 0.4 * srng.uniform()
        for label, name in enumerate(LABEL_NAMES):
            wrng = srng.derive(1000 + label)
            phase = 2 * np.pi * wrng.uniform((per, 1))
            amp = 1.0 + 0.1 * wrng.normal((per, 1))
            x = np.zeros((per, time_steps, 24))
            pressure = x[:, :, :18]
            accel = x[:, :, 18:21]
            gyro = x[:, :, 21:24]
            if name == "Walking":
                theta = 2 * np.pi * cadence * t[None, :] + phase  # (per, T)
                wave = np.sin(theta[:, :, None] - 1.5 * position[None, None, :])
                pressure[:] = gain * np.maximum(wave, 0.0) * amp[:, :, None]
                accel[:] = np.stack([0.4 * np.sin(theta), 0.15 * np.sin(2 * theta),
                                     1.0 + 0.3 * np.cos(theta)], axis=-1)
                gyro[:] = gyro_gain * np.stack([1.5 * np.sin(theta + 0.5), 0.3 * np.sin(theta),
                                                0.2 * np.cos(theta)], axis=-1)
            elif name == "Standing":
                pressure[:] = 0.7 * gain * amp[:, :, None]
                accel[:] = (0.0, 0.0, 1.0)
            elif name == "Sitting":
                pressure[:] = 0.12 * gain * amp[:, :, None]
                accel[:] = (0.3, 0.0, 0.95)
            else:  # Tandem
                sway = np.sin(2 * np.pi * sway_hz * t[None, :] + phase)
                weights = np.full(18, 0.1)
                weights[_TANDEM_SENSORS] = 0.9
                pressure[:] = gain * weights * (amp + 0.05 * sway)[:, :, None]
                accel[:] = np.stack([0.05 * sway, 0.05 * np.cos(2 * np.pi * sway_hz * t + phase),
                                     np.ones_like(sway)], axis=-1)
                gyro[:] = 0.3 * gyro_gain * np.stack(
                    [sway, np.sin(2 * np.pi * sway_hz * t + phase + 1.0),
                     np.sin(2 * np.pi * sway_hz * t + phase + 2.0)], axis=-1)
            pressure += offset
            accel += accel_bias
            x += noise * wrng.normal(x.shape)
            blocks.append(x.astype(np.float32))
            labels += [label] * per
            subjects += [subj] * per
    values = np.concatenate(blocks)
    return Dataset(values, labels, subjects, np.arange(len(values)),
                   units={"pressure": "normalized", "accel": "g", "gyro": "rad/s"})
