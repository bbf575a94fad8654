"""Independent oracles shared by the test modules."""
import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64_reference(seed, n):
    """Plain sequential SplitMix64, written from the reference recurrence."""
    out = []
    state = seed & MASK64
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        out.append(z ^ (z >> 31))
    return out


def conv_direct(x, w, d):
    """Triple-loop circular dilated convolution."""
    n, c, t = x.shape
    o, _, k = w.shape
    half = (k - 1) // 2
    y = np.zeros((n, o, t))
    for b in range(n):
        for oc in range(o):
            for tt in range(t):
                acc = 0.0
                for ic in range(c):
                    for j in range(k):
                        acc += w[oc, ic, j] * x[b, ic, (tt + (j - half) * d) % t]
                y[b, oc, tt] = acc
    return y


def numeric_grad(f, x, h=1e-6):
    """Central finite differences of scalar ``f`` w.r.t. every element of ``x`` (float64)."""
    x = x.astype(np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        g[i] = (fp - fm) / (2 * h)
    return grad


def rel_error(analytic, numeric):
    """Max-norm relative error ``max|a - n| / max|n|``."""
    analytic = np.asarray(analytic, np.float64)
    numeric = np.asarray(numeric, np.float64)
    scale = max(np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def label_channel_dataset(per_class=40, channel=7, seed=0, subjects=4):
    """Pure-noise windows except ``channel``, whose level encodes the label."""
    from cdcnn.dataset import Dataset
    rng = np.random.default_rng(seed)
    n = 4 * per_class
    labels = np.repeat(np.arange(4), per_class)
    values = rng.normal(size=(n, 160, 24))
    values[:, :, channel] = (labels[:, None] - 1.5) + 0.2 * rng.normal(size=(n, 160))
    subj = np.arange(n) % subjects + 1
    return Dataset(values.astype(np.float32), labels, subj, np.arange(n))
