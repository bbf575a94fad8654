# %% [markdown]
# Circular convolution and gradient checks
# ========================================

# %%
import numpy as np

from cdcnn.layers import conv1d_circular_backward, conv1d_circular_forward

rng = np.random.default_rng(0)
x = rng.normal(size=(2, 3, 12))
w = rng.normal(size=(4, 3, 3))

# A dilated tap reaches `dilation` steps to each side and wraps around the ends.
y = conv1d_circular_forward(x, w, dilation=2)
print(y.shape)

# %%
# Written out with explicit loops, for comparison.
def conv_loop(x, w, d):
    n, c, t = x.shape
    k = w.shape[2]
    out = np.zeros((n, w.shape[0], t))
    for i in range(t):
        for j in range(k):
            src = (i + (j - k // 2) * d) % t
            out[:, :, i] += x[:, :, src] @ w[:, :, j].T
    return out

print(np.abs(y - conv_loop(x, w, 2)).max())

# %%
# Rolling the input rolls the output: there is no edge.
print(np.allclose(conv1d_circular_forward(np.roll(x, 5, axis=2), w, 2), np.roll(y, 5, axis=2)))

# %%
# Analytic gradient of sum(y * g) against central differences.
g = rng.normal(size=y.shape)
gx, gw = conv1d_circular_backward(g, x, w, dilation=2)

h = 1e-6
num = np.zeros_like(w)
for idx in np.ndindex(w.shape):
    wp, wm = w.copy(), w.copy()
    wp[idx] += h
    wm[idx] -= h
    num[idx] = ((conv1d_circular_forward(x, wp, 2) - conv1d_circular_forward(x, wm, 2)) * g).sum() / (2 * h)
print(np.abs(gw - num).max() / np.abs(num).max())

# %%
# Receptive field of the default network: 1 + 2 * (1 + 2 + 4 + 8).
from cdcnn import ModelConfig

print(ModelConfig().receptive_field)
