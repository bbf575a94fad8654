"""Numeric substrate: a portable seeded generator and the Adam optimizer.

Tensors are plain ``numpy`` arrays (float32 by default).  Everything here is
deterministic: the generator is SplitMix64 evaluated in counter mode, so a
given ``(seed, counter)`` pair always yields the same 64-bit word regardless of
platform or numpy version.
"""
from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64_mix(z: int) -> int:
    """SplitMix64 finalizer on a Python int (reference scalar path)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class Rng:
    """Counter-based SplitMix64 stream.

    Draw ``i`` (1-based) of a stream seeded with ``s`` is
    ``mix(s + i * GOLDEN_GAMMA)``, which is exactly the sequential SplitMix64
    sequence.  Because each word depends only on its index, large blocks are
    produced with vectorized numpy and independent sub-streams are cheap
    (:meth:`derive`).
    """

    def __init__(self, seed: int = 0, counter: int = 0):
        self.seed = int(seed) & MASK64
        self.counter = int(counter)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, counter={self.counter})"

    def derive(self, *keys: int) -> "Rng":
        """Independent child stream keyed by integers; does not consume draws."""
        s = self.seed
        for k in keys:
            s = splitmix64_mix(s ^ splitmix64_mix((int(k) + GOLDEN_GAMMA) & MASK64))
        return Rng(s)

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        state = np.uint64(self.seed) + idx * np.uint64(GOLDEN_GAMMA)
        return _mix_array(state)

    def uniform(self, shape=()) -> np.ndarray:
        """Float64 draws in [0, 1) with 53 random bits each."""
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u.reshape(shape)

    def normal(self, shape=()) -> np.ndarray:
        """Standard normal draws via Box-Muller (two words per value)."""
        n = int(np.prod(shape, dtype=np.int64))
        u = self.uniform((2, n))
        radius = np.sqrt(-2.0 * np.log1p(-u[0]))
        return (radius * np.cos(2.0 * np.pi * u[1])).reshape(shape)

    def below(self, bound: int) -> int:
        """Unbiased integer in ``[0, bound)`` by rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            z = int(self.next_u64(1)[0])
            if z < limit:
                return z % bound

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of ``0..n-1`` (Fisher-Yates)."""
        if n < 0:
            raise ValueError("n must be non-negative")
        perm = np.arange(n, dtype=np.int64)
        if n < 2:
            return perm
        words = self.next_u64(n - 1).tolist()
        for pos, i in enumerate(range(n - 1, 0, -1)):
            bound = i + 1
            limit = (1 << 64) - ((1 << 64) % bound)
            z = words[pos]
            while z >= limit:
                z = int(self.next_u64(1)[0])
            j = z % bound
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def rng_permutation(rng: Rng, n: int) -> list[int]:
    return rng.permutation(n).tolist()


def check_finite(name: str, array: np.ndarray) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericError(f"non-finite values in {name}")


class Adam:
    """Adam with bias correction over a dict of named parameter arrays.

    Parameters are updated in place.  Moments live in the parameter dtype.
    """

    def __init__(self, params: dict[str, np.ndarray], lr: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        if set(grads) != set(self.m):
            raise ShapeError(f"gradient names {sorted(grads)} do not match parameters {sorted(self.m)}")
        for name, g in grads.items():
            if g.shape != params[name].shape or g.shape != self.m[name].shape:
                raise ShapeError(f"gradient for {name} has shape {g.shape}, "
                                 f"parameter has {params[name].shape}")
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {name}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, g in grads.items():
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: Adam) -> Adam:
    state.step(params, grads)
    return state
