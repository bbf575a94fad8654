# %% [markdown]
# Which channels matter?
# ======================
#
# Shuffle one channel across windows, re-score, and see how much accuracy is lost.
# Here the label is written into one accelerometer channel and everything else
# is noise, so the answer is known in advance.

# %%
import numpy as np

from cdcnn import (CDCNN, CHANNEL_NAMES, Dataset, ModelConfig, Rng, SplitSpec, TrainConfig,
                   permutation_importance, prepare_splits, train)

rng = np.random.default_rng(3)
n = 160
labels = np.repeat(np.arange(4), n // 4)
subjects = np.tile([1, 2, 3, 4], n // 4)
values = rng.normal(size=(n, 160, 24)).astype(np.float32)
values[:, :, 19] = labels[:, None] * 1.5 + 0.1 * rng.normal(size=(n, 160))
ds = Dataset(values, labels, subjects, np.arange(n))

tr, va, te, _ = prepare_splits(ds, SplitSpec([1, 2], [3], [4]))
model = CDCNN.init(ModelConfig(hidden=8), Rng(0))
best, report = train(model, tr, va, TrainConfig(max_epochs=60, patience=15, batch_size=16),
                     log=lambda _m: None)
print("val acc", report.best_val_acc)

# %%
rep = permutation_importance(best, te, repeats=3, seed=0)
for c in rep.ranking()[:5]:
    print(f"{CHANNEL_NAMES[c]:12s} {rep.importance_mean[c]:.3f} +- {rep.importance_std[c]:.3f}")

# %%
print(rep.group_sums())
