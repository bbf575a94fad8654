"""The circular dilated CNN, the flattened linear baseline, and checkpoints."""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L
from .errors import (BadMagicError, CheckpointFormatError, NumericError, ShapeError,
                     TruncatedCheckpointError, VersionMismatchError)
from .numeric import Rng


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 24
    time_steps: int = 160
    hidden: int = 64
    kernel_size: int = 3
    dilations: tuple[int, ...] = (1, 2, 4, 8)
    dropout: float = 0.2
    num_classes: int = 4

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        for name in ("in_channels", "time_steps", "hidden", "kernel_size", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        if not self.dilations:
            raise ValueError("at least one block is required")
        if any(d != 2**i for i, d in enumerate(self.dilations)):
            raise ValueError(f"dilations must be 1, 2, 4, ..., got {self.dilations}")
        if self.time_steps <= self.dilations[-1] * (self.kernel_size - 1):
            raise ValueError("time_steps too short for the widest dilated kernel")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def receptive_field(self) -> int:
        return 1 + (self.kernel_size - 1) * sum(self.dilations)

    def conv_specs(self) -> list[L.ConvSpec]:
        specs = []
        c_in = self.in_channels
        for d in self.dilations:
            specs.append(L.ConvSpec(c_in, self.hidden, self.kernel_size, d))
            c_in = self.hidden
        return specs

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        for i, spec in enumerate(self.conv_specs()):
            shapes[f"block{i}.conv.weight"] = spec.weight_shape
            shapes[f"block{i}.bn.gamma"] = (self.hidden,)
            shapes[f"block{i}.bn.beta"] = (self.hidden,)
        shapes["head.weight"] = (self.num_classes, self.hidden)
        shapes["head.bias"] = (self.num_classes,)
        return shapes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d


def kaiming_uniform(shape, fan_in: int, rng: Rng, dtype=np.float32) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return ((2.0 * rng.uniform(shape) - 1.0) * bound).astype(dtype)


class _Classifier:
    """Shared pieces of the two models: parameter dicts, copies, prediction."""

    kind = ""

    def __init__(self, config, params: dict[str, np.ndarray],
                 buffers: dict[str, np.ndarray] | None = None):
        self.config = config
        self.params = params
        self.buffers = buffers if buffers is not None else {}
        self._cache = None

    def tensors(self) -> dict[str, np.ndarray]:
        """All learnable parameters and buffers, in a fixed order."""
        return {**self.params, **self.buffers}

    def num_parameters(self) -> int:
        return sum(int(p.size) for p in self.params.values())

    def copy(self):
        return type(self)(self.config, {k: v.copy() for k, v in self.params.items()},
                          {k: v.copy() for k, v in self.buffers.items()})

    def astype(self, dtype):
        return type(self)(self.config, {k: v.astype(dtype) for k, v in self.params.items()},
                          {k: v.astype(dtype) for k, v in self.buffers.items()})

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Argmax class in inference mode; ties go to the lowest index."""
        out = [argmax_lowest(self.forward(x[i:i + batch_size]))
               for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def predict_windows(self, windows: np.ndarray, batch_size: int = 256) -> np.ndarray:
        out = [argmax_lowest(self.forward(self.prepare(windows[i:i + batch_size])))
               for i in range(0, len(windows), batch_size)]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def argmax_lowest(logits: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index
    return np.argmax(logits, axis=1).astype(np.int64)


class CDCNN(_Classifier):
    """Four circular dilated conv blocks, global average pooling, linear head.

    Each block is conv -> batchnorm -> ReLU -> dropout.  Inputs are
    channels-first ``(N, F, T)``; use :meth:`prepare` to convert dataset
    windows stored as ``(N, T, F)``.
    """

    kind = "cdcnn"

    @classmethod
    def init(cls, config: ModelConfig, rng: Rng) -> "CDCNN":
        params: dict[str, np.ndarray] = {}
        buffers: dict[str, np.ndarray] = {}
        for i, spec in enumerate(config.conv_specs()):
            fan_in = spec.in_channels * spec.kernel_size
            params[f"block{i}.conv.weight"] = kaiming_uniform(spec.weight_shape, fan_in, rng)
            params[f"block{i}.bn.gamma"] = np.ones(config.hidden, np.float32)
            params[f"block{i}.bn.beta"] = np.zeros(config.hidden, np.float32)
            buffers[f"block{i}.bn.running_mean"] = np.zeros(config.hidden, np.float32)
            buffers[f"block{i}.bn.running_var"] = np.ones(config.hidden, np.float32)
        params["head.weight"] = kaiming_uniform((config.num_classes, config.hidden),
                                                config.hidden, rng)
        params["head.bias"] = np.zeros(config.num_classes, np.float32)
        return cls(config, params, buffers)

    @staticmethod
    def prepare(windows: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(np.asarray(windows).transpose(0, 2, 1))

    def _bn(self, i: int) -> L.BatchNormState:
        # views into the parameter dicts, so running-stat updates land in place
        return L.BatchNormState(self.params[f"block{i}.bn.gamma"], self.params[f"block{i}.bn.beta"],
                                self.buffers[f"block{i}.bn.running_mean"],
                                self.buffers[f"block{i}.bn.running_var"])

    def features(self, x: np.ndarray, training: bool = False, rng: Rng | None = None,
                 keep_cache: bool = False) -> np.ndarray:
        """Output of the last block, before pooling: ``(N, hidden, T)``."""
        cfg = self.config
        if x.ndim != 3 or x.shape[1:] != (cfg.in_channels, cfg.time_steps):
            raise ShapeError(f"expected input (N, {cfg.in_channels}, {cfg.time_steps}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite values in model input")
        cache = []
        h = x
        for i, d in enumerate(cfg.dilations):
            w = self.params[f"block{i}.conv.weight"]
            cols = L.im2col_circular(h, cfg.kernel_size, d)
            z = L.conv1d_circular_forward(h, w, d, cols=cols)
            b, bn_cache = L.batchnorm_forward(z, self._bn(i), training)
            r = L.relu_forward(b)
            out, mask = L.dropout_forward(r, cfg.dropout, rng, training)
            if keep_cache:
                cache.append((h, cols, bn_cache, r, mask))
            h = out
        self._cache = cache if keep_cache else None
        return h

    def forward(self, x: np.ndarray, training: bool = False, rng: Rng | None = None) -> np.ndarray:
        h = self.features(x, training, rng, keep_cache=training)
        pooled = L.global_avg_pool_forward(h)
        logits = L.linear_forward(pooled, self.params["head.weight"], self.params["head.bias"])
        if not np.all(np.isfinite(logits)):
            raise NumericError("non-finite logits")
        if training:
            self._cache.append(pooled)
        return logits

    def backward(self, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
        if self._cache is None:
            raise RuntimeError("backward() needs a preceding training-mode forward()")
        cfg = self.config
        *blocks, pooled = self._cache
        grads: dict[str, np.ndarray] = {}
        g, grads["head.weight"], grads["head.bias"] = L.linear_backward(
            grad_logits, pooled, self.params["head.weight"])
        g = L.global_avg_pool_backward(g, cfg.time_steps)
        for i in reversed(range(len(blocks))):
            h, cols, bn_cache, r, mask = blocks[i]
            g = L.dropout_backward(g, mask)
            g = L.relu_backward(g, r)
            g, grads[f"block{i}.bn.gamma"], grads[f"block{i}.bn.beta"] = L.batchnorm_backward(g, bn_cache)
            g, grads[f"block{i}.conv.weight"] = L.conv1d_circular_backward(
                g, h, self.params[f"block{i}.conv.weight"], cfg.dilations[i], cols=cols)
        self._cache = None
        return {k: grads[k] for k in self.params}


@dataclass(frozen=True)
class BaselineConfig:
    in_channels: int = 24
    time_steps: int = 160
    num_classes: int = 4

    @property
    def in_features(self) -> int:
        return self.in_channels * self.time_steps

    def to_dict(self) -> dict:
        return asdict(self)


class LinearBaseline(_Classifier):
    """Multinomial logistic regression on the flattened ``T*F`` window.

    Flattening follows the window layout: time-major, channel fastest.
    """

    kind = "linear"

    @classmethod
    def init(cls, config: BaselineConfig, rng: Rng | None = None) -> "LinearBaseline":
        return cls(config, {
            "head.weight": np.zeros((config.num_classes, config.in_features), np.float32),
            "head.bias": np.zeros(config.num_classes, np.float32),
        })

    @staticmethod
    def prepare(windows: np.ndarray) -> np.ndarray:
        windows = np.asarray(windows)
        return np.ascontiguousarray(windows.reshape(len(windows), -1))

    def forward(self, x: np.ndarray, training: bool = False, rng: Rng | None = None) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.config.in_features:
            raise ShapeError(f"expected flattened input (N, {self.config.in_features}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite values in model input")
        self._cache = x if training else None
        return L.linear_forward(x, self.params["head.weight"], self.params["head.bias"])

    def backward(self, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
        if self._cache is None:
            raise RuntimeError("backward() needs a preceding training-mode forward()")
        _, gw, gb = L.linear_backward(grad_logits, self._cache, self.params["head.weight"])
        self._cache = None
        return {"head.weight": gw, "head.bias": gb}


def forward(model, x, training: bool = False, rng: Rng | None = None) -> np.ndarray:
    return model.forward(x, training, rng)


def predict(model, x) -> np.ndarray:
    return model.predict(x)


# --- checkpoints -------------------------------------------------------------

MAGIC = b"CDCN"
VERSION = 1
_MODEL_KINDS = {"cdcnn": (CDCNN, ModelConfig), "linear": (LinearBaseline, BaselineConfig)}


@dataclass
class Checkpoint:
    model: _Classifier
    channel_names: list[str]
    label_names: list[str]
    normalizer_mean: np.ndarray | None = None
    normalizer_std: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def save_checkpoint(ckpt: Checkpoint) -> bytes:
    """Serialize to bytes: magic, version, u32 header length, JSON header, payload.

    Payload tensors are little-endian float32 in directory order.
    """
    tensors = dict(ckpt.model.tensors())
    if ckpt.normalizer_mean is not None:
        tensors["normalizer.mean"] = ckpt.normalizer_mean
        tensors["normalizer.std"] = ckpt.normalizer_std
    directory = []
    payload = []
    offset = 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset,
                          "nbytes": len(data)})
        payload.append(data)
        offset += len(data)
    header = {
        "kind": ckpt.model.kind,
        "config": ckpt.model.config.to_dict(),
        "params": list(ckpt.model.params),
        "channel_names": list(ckpt.channel_names),
        "label_names": list(ckpt.label_names),
        "normalizer": ckpt.normalizer_mean is not None,
        "extra": ckpt.extra,
        "tensors": directory,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + bytes([VERSION]) + struct.pack("<I", len(head)) + head + b"".join(payload)


def load_checkpoint(blob: bytes) -> Checkpoint:
    if len(blob) < 4:
        raise TruncatedCheckpointError("checkpoint shorter than its magic number")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 9:
        raise TruncatedCheckpointError("checkpoint truncated inside the preamble")
    if blob[4] != VERSION:
        raise VersionMismatchError(f"checkpoint version {blob[4]}, this reader supports {VERSION}")
    (head_len,) = struct.unpack("<I", blob[5:9])
    if len(blob) < 9 + head_len:
        raise TruncatedCheckpointError("checkpoint truncated inside the header")
    try:
        header = json.loads(blob[9:9 + head_len].decode("utf-8"))
        kind = header["kind"]
        model_cls, config_cls = _MODEL_KINDS[kind]
        config = config_cls(**header["config"])
        directory = header["tensors"]
        param_names = header["params"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"unreadable checkpoint header: {exc}") from exc

    payload = memoryview(blob)[9 + head_len:]
    expected_offset = 0
    tensors: dict[str, np.ndarray] = {}
    for entry in directory:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if entry["offset"] != expected_offset or entry["nbytes"] != nbytes:
            raise CheckpointFormatError(f"tensor {entry['name']} has inconsistent offset/length")
        if len(payload) < expected_offset + nbytes:
            raise TruncatedCheckpointError(f"payload truncated inside tensor {entry['name']}")
        raw = payload[expected_offset:expected_offset + nbytes]
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)
        expected_offset += nbytes
    if len(payload) != expected_offset:
        raise CheckpointFormatError(f"{len(payload) - expected_offset} trailing bytes after payload")

    mean = tensors.pop("normalizer.mean", None)
    std = tensors.pop("normalizer.std", None)
    if header.get("normalizer") and (mean is None or std is None):
        raise CheckpointFormatError("header declares a normalizer but its tensors are missing")
    params = {k: tensors.pop(k) for k in param_names if k in tensors}
    model = model_cls(config, params, tensors)
    _check_shapes(model)
    return Checkpoint(model, header["channel_names"], header["label_names"], mean, std,
                      header.get("extra", {}))


def _check_shapes(model) -> None:
    if isinstance(model, CDCNN):
        expected = dict(model.config.parameter_shapes())
        for i in range(len(model.config.dilations)):
            expected[f"block{i}.bn.running_mean"] = (model.config.hidden,)
            expected[f"block{i}.bn.running_var"] = (model.config.hidden,)
    else:
        expected = {"head.weight": (model.config.num_classes, model.config.in_features),
                    "head.bias": (model.config.num_classes,)}
    got = {k: v.shape for k, v in model.tensors().items()}
    if got != expected:
        missing = sorted(set(expected) ^ set(got)) or sorted(
            k for k in expected if expected[k] != got[k])
        raise CheckpointFormatError(f"tensor shapes do not match the config: {missing}")
