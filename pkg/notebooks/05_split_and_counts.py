# %% [markdown]
# The 16-subject layout
# =====================
#
# `subject_count_fixture()` rebuilds the per-subject class counts of the recorded
# dataset with all-zero windows, which is enough to check split sizes.

# %%
from cdcnn import default_split, split_by_subject, subject_class_table, subject_count_fixture

ds = subject_count_fixture()
table = subject_class_table(ds)
print(table.format())

# %%
spec = default_split()
print(spec.to_dict())
train, val, test = split_by_subject(ds, spec)
print(len(train), len(val), len(test))

# %%
# Subject 18 only ever sat down, so it contributes to one class only.
print(table.row(18))
