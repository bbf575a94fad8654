"""Forward and backward passes for the layers of the circular dilated CNN.

All functions keep the dtype of their inputs, so the same code runs in
float32 for training and in float64 for gradient checks.  Activations are laid
out ``(N, C, T)``: batch, channel, time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .numeric import Rng


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_size: int = 3
    dilation: int = 1

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.dilation < 1:
            raise ValueError(f"dilation must be >= 1, got {self.dilation}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")

    @property
    def pad(self) -> int:
        """Circular padding per side; keeps the output length equal to the input."""
        return self.dilation * (self.kernel_size - 1) // 2

    @property
    def span(self) -> int:
        return self.dilation * (self.kernel_size - 1) + 1

    @property
    def weight_shape(self) -> tuple[int, int, int]:
        return (self.out_channels, self.in_channels, self.kernel_size)


def tap_offsets(kernel_size: int, dilation: int) -> list[int]:
    half = (kernel_size - 1) // 2
    return [(j - half) * dilation for j in range(kernel_size)]


def _check_conv(x: np.ndarray, w: np.ndarray, dilation: int) -> None:
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError(f"expected x (N,C,T) and w (O,C,k), got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, weights expect {w.shape[1]}")
    k = w.shape[2]
    if k % 2 == 0:
        raise ShapeError(f"kernel size must be odd, got {k}")
    if dilation < 1:
        raise ShapeError(f"dilation must be >= 1, got {dilation}")
    if x.shape[2] <= dilation * (k - 1):
        raise ShapeError(f"sequence length {x.shape[2]} too short for kernel footprint "
                         f"{dilation * (k - 1) + 1}")


def im2col_circular(x: np.ndarray, kernel_size: int, dilation: int) -> np.ndarray:
    """Gather wrapped taps into a ``(C*k, N*T)`` matrix (channel-major, tap-minor)."""
    n, c, t = x.shape
    xt = np.ascontiguousarray(x.transpose(1, 0, 2))  # (C, N, T)
    cols = np.empty((c, kernel_size, n, t), dtype=x.dtype)
    for j, off in enumerate(tap_offsets(kernel_size, dilation)):
        # cols[..., t] = x[..., (t + off) mod T]
        cols[:, j] = np.roll(xt, -off, axis=2)
    return cols.reshape(c * kernel_size, n * t)


def conv1d_circular_forward(x: np.ndarray, w: np.ndarray, dilation: int = 1,
                            cols: np.ndarray | None = None) -> np.ndarray:
    """Bias-free dilated 1D convolution with wrap-around padding.

    ``y[n, o, t] = sum_{c, j} w[o, c, j] * x[n, c, (t + (j - (k-1)/2) * d) mod T]``
    """
    _check_conv(x, w, dilation)
    n, _, t = x.shape
    o, c, k = w.shape
    if cols is None:
        cols = im2col_circular(x, k, dilation)
    y = w.reshape(o, c * k) @ cols
    return np.ascontiguousarray(y.reshape(o, n, t).transpose(1, 0, 2))


def conv1d_circular_backward(grad_y: np.ndarray, x: np.ndarray, w: np.ndarray,
                             dilation: int = 1, cols: np.ndarray | None = None
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(grad_x, grad_w)`` for :func:`conv1d_circular_forward`."""
    _check_conv(x, w, dilation)
    n, c, t = x.shape
    o, _, k = w.shape
    if grad_y.shape != (n, o, t):
        raise ShapeError(f"grad_y has shape {grad_y.shape}, expected {(n, o, t)}")
    if cols is None:
        cols = im2col_circular(x, k, dilation)
    gy = np.ascontiguousarray(grad_y.transpose(1, 0, 2)).reshape(o, n * t)
    grad_w = (gy @ cols.T).reshape(o, c, k)
    gcols = (w.reshape(o, c * k).T @ gy).reshape(c, k, n, t)
    grad_xt = np.zeros((c, n, t), dtype=x.dtype)
    for j, off in enumerate(tap_offsets(k, dilation)):
        grad_xt += np.roll(gcols[:, j], off, axis=2)
    return np.ascontiguousarray(grad_xt.transpose(1, 0, 2)), grad_w


@dataclass
class BatchNormState:
    """Per-channel affine parameters and running statistics."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(np.ones(channels, dtype), np.zeros(channels, dtype),
                   np.zeros(channels, dtype), np.ones(channels, dtype))


def batchnorm_forward(x: np.ndarray, state: BatchNormState, training: bool):
    """Batch normalization over the batch and time axes.

    In training mode the batch statistics are used and the running statistics
    are updated in place (unbiased variance, as is conventional).  Returns
    ``(y, cache)``; the cache is only needed for :func:`batchnorm_backward`.
    """
    if x.ndim != 3 or x.shape[1] != state.gamma.shape[0]:
        raise ShapeError(f"batchnorm expects (N, {state.gamma.shape[0]}, T), got {x.shape}")
    g = state.gamma[None, :, None]
    b = state.beta[None, :, None]
    if training:
        count = x.shape[0] * x.shape[2]
        if count < 2:
            raise ShapeError("training-mode batchnorm needs at least two values per channel")
        mean = x.mean(axis=(0, 2))
        centered = x - mean[None, :, None]
        var = (centered * centered).mean(axis=(0, 2))
        inv_std = (1.0 / np.sqrt(var + state.eps)).astype(x.dtype)
        xhat = centered * inv_std[None, :, None]
        m = state.momentum
        state.running_mean[...] = (1 - m) * state.running_mean + m * mean
        state.running_var[...] = (1 - m) * state.running_var + m * var * (count / (count - 1))
        return xhat * g + b, (xhat, inv_std, state.gamma)
    if np.any(state.running_var < 0):
        raise ValueError("negative running variance")
    inv_std = (1.0 / np.sqrt(state.running_var + state.eps)).astype(x.dtype)
    xhat = (x - state.running_mean[None, :, None]) * inv_std[None, :, None]
    return xhat * g + b, (xhat, inv_std, state.gamma)


def batchnorm_backward(grad_y: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Training-mode gradient: returns ``(grad_x, grad_gamma, grad_beta)``."""
    xhat, inv_std, gamma = cache
    count = grad_y.shape[0] * grad_y.shape[2]
    grad_beta = grad_y.sum(axis=(0, 2))
    grad_gamma = (grad_y * xhat).sum(axis=(0, 2))
    gxhat = grad_y * gamma[None, :, None]
    grad_x = (inv_std / count)[None, :, None] * (
        count * gxhat
        - grad_beta[None, :, None] * gamma[None, :, None]
        - xhat * (grad_gamma * gamma)[None, :, None]
    )
    return grad_x, grad_gamma, grad_beta


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_y: np.ndarray, y: np.ndarray) -> np.ndarray:
    return grad_y * (y > 0)


def dropout_mask(shape, p: float, rng: Rng, dtype=np.float32) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability ``p``, survivors ``1/(1-p)``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    keep = rng.uniform(shape) >= p
    return keep.astype(dtype) * dtype(1.0 / (1.0 - p)) if p else np.ones(shape, dtype)


def dropout_forward(x: np.ndarray, p: float, rng: Rng | None, training: bool):
    """Returns ``(y, mask)``; ``mask`` is ``None`` when the layer is an identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs an Rng")
    mask = dropout_mask(x.shape, p, rng, x.dtype.type)
    return x * mask, mask


def dropout_backward(grad_y: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return grad_y if mask is None else grad_y * mask


def global_avg_pool_forward(x: np.ndarray) -> np.ndarray:
    if x.ndim != 3:
        raise ShapeError(f"global average pooling expects (N,C,T), got {x.shape}")
    return x.mean(axis=2)


def global_avg_pool_backward(grad_y: np.ndarray, time_steps: int) -> np.ndarray:
    scale = grad_y.dtype.type(1.0 / time_steps)
    return np.repeat((grad_y * scale)[:, :, None], time_steps, axis=2)


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or w.shape[1] != x.shape[1] or b.shape != (w.shape[0],):
        raise ShapeError(f"linear: x {x.shape}, w {w.shape}, b {b.shape} are incompatible")
    return x @ w.T + b


def linear_backward(grad_y: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Returns ``(grad_x, grad_w, grad_b)``."""
    return grad_y @ w, grad_y.T @ x, grad_y.sum(axis=0)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient ``(softmax - onehot) / N``."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} are incompatible")
    n, k = logits.shape
    if n and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in 0..{k - 1}")
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = float(-logp[rows, labels].astype(np.float64).mean())
    grad = np.exp(logp)
    grad[rows, labels] -= 1
    grad /= n
    return loss, grad
