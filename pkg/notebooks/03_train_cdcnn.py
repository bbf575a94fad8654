# %% [markdown]
# Training the dilated network
# ============================
#
# A small run on synthetic data: subject-wise split, standardization from the
# training subjects only, Adam with early stopping on validation accuracy.

# %%
from cdcnn import (CDCNN, ModelConfig, Rng, SplitSpec, TrainConfig, confusion_matrix, train,
                   generate_synthetic, prepare_splits)

ds = generate_synthetic(num_subjects=6, windows_per_subject_per_class=25, seed=1)
spec = SplitSpec(train=[1, 2, 3, 4], val=[5], test=[6])
train_split, val_split, test_split, norm = prepare_splits(ds, spec)
print(len(train_split), len(val_split), len(test_split))

# %%
# hidden=16 keeps this quick. The default width is 64 (42,244 parameters).
model = CDCNN.init(ModelConfig(hidden=16), Rng(0))
print(model.num_parameters())

cfg = TrainConfig(max_epochs=15, patience=5, batch_size=32, seed=0)
best, report = train(model, train_split, val_split, cfg)

# %%
print("best epoch", report.best_epoch, "val acc", report.best_val_acc)
cm = confusion_matrix(best, test_split)
print(cm.counts)
print("test accuracy", cm.accuracy)

# %%
# Checkpoints are plain bytes and reload bit-exactly.
from cdcnn import Checkpoint, load_checkpoint, save_checkpoint

blob = save_checkpoint(Checkpoint(best, list(ds.channel_names), list(ds.label_names),
                                  norm.mean, norm.std))
back = load_checkpoint(blob)
x = best.prepare(test_split.values[:8])
print(len(blob), (back.model.forward(x) == best.forward(x)).all())
