import json

import numpy as np
import pytest

from cdcnn import dataset as D
from cdcnn.errors import DataValidationError


@pytest.fixture(scope="module")
def counts():
    return D.subject_count_fixture()


def test_counts_fixture_class_totals(counts):
    table = D.subject_class_table(counts)
    totals = dict(zip(table.label_names, table.column_totals.tolist()))
    assert totals == {"Standing": 5559, "Walking": 5401, "Sitting": 5066, "Tandem": 5043}
    assert table.total == 21_069


def test_counts_fixture_subject_rows(counts):
    table = D.subject_class_table(counts)
    assert table.row(15) == (566, 398, 590, 406, 1960)
    assert table.row(18) == (342, 0, 0, 0, 342)
    assert dict(zip(table.subjects, table.row_totals.tolist()))[32] == 1588


def test_default_split_sizes(counts):
    train, val, test = D.split_by_subject(counts, D.default_split())
    assert (len(train), len(val), len(test)) == (14_047, 3_333, 3_689)
    assert set(val.subject_ids()) == {17, 22} and set(test.subject_ids()) == {13, 16, 24}


def test_shipped_split_files_agree():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1]
    assert D.SplitSpec.from_json(root / "paper_split.json") == D.default_split()


def test_all_in_train(counts):
    spec = D.SplitSpec(counts.subject_ids(), [], [])
    train, val, test = D.split_by_subject(counts, spec)
    assert (len(train), len(val), len(test)) == (21_069, 0, 0)


def test_split_errors(counts):
    with pytest.raises(DataValidationError, match="more than one"):
        D.SplitSpec([1, 2], [2], [])
    with pytest.raises(DataValidationError, match="not assigned"):
        D.split_by_subject(counts, D.SplitSpec([1, 10], [12], [13]))


def test_random_split_counts(small_synth):
    spec = D.SplitSpec([1, 3], [2], [4])
    parts = D.split_by_subject(small_synth, spec)
    assert sum(len(p) for p in parts) == len(small_synth)
    ids = [set(p.subject_ids()) for p in parts]
    assert not (ids[0] & ids[1]) and not (ids[0] & ids[2]) and not (ids[1] & ids[2])
    # order inside a split follows the original order
    assert np.all(np.diff(parts[0].sample_ids) > 0)


def test_write_load_round_trip(tmp_path, small_synth):
    D.write_dataset(small_synth, tmp_path / "ds")
    back = D.load_dataset(tmp_path / "ds")
    assert back.values.tobytes() == small_synth.values.tobytes()
    assert np.array_equal(back.labels, small_synth.labels)
    assert np.array_equal(back.subjects, small_synth.subjects)
    assert np.array_equal(back.sample_ids, small_synth.sample_ids)
    assert back.channel_names == D.CHANNEL_NAMES and back.label_names == D.LABEL_NAMES
    mapped = D.load_dataset(tmp_path / "ds", mmap=True)
    assert np.array_equal(np.asarray(mapped.values), small_synth.values)
    header = (tmp_path / "ds" / "labels.csv").read_text().splitlines()[:2]
    assert header == ["sample_id,subject_id,label", "0,1,Sitting"]


def test_counts_fixture_directory_loads_with_class_totals(tmp_path, counts):
    D.write_dataset(counts, tmp_path / "cf")
    back = D.load_dataset(tmp_path / "cf", mmap=True)
    counts = np.bincount(back.labels, minlength=4)
    assert dict(zip(back.label_names, counts.tolist())) == {
        "Sitting": 5066, "Standing": 5559, "Tandem": 5043, "Walking": 5401}


def test_empty_dataset(tmp_path):
    empty = D.Dataset(np.zeros((0, 160, 24), np.float32), [], [], [])
    D.write_dataset(empty, tmp_path / "e")
    back = D.load_dataset(tmp_path / "e")
    assert len(back) == 0
    table = D.subject_class_table(back)
    assert table.subjects == [] and table.total == 0


def _write(tmp_path, ds):
    path = tmp_path / "bad"
    D.write_dataset(ds, path)
    return path


def test_byte_count_error(tmp_path, small_synth):
    path = _write(tmp_path, small_synth)
    raw = (path / "windows.f32").read_bytes()
    (path / "windows.f32").write_bytes(raw[:-4])
    expected = len(small_synth) * 160 * 24 * 4
    with pytest.raises(DataValidationError, match=f"expected {expected} bytes.*found {expected - 4}"):
        D.load_dataset(path)


def test_nan_payload_error(tmp_path, small_synth):
    path = _write(tmp_path, small_synth)
    values = np.fromfile(path / "windows.f32", dtype="<f4")
    values[1000] = np.nan
    values.tofile(path / "windows.f32")
    with pytest.raises(DataValidationError, match="non-finite"):
        D.load_dataset(path)


def test_label_out_of_range(tmp_path, small_synth):
    path = _write(tmp_path, small_synth)
    text = (path / "labels.csv").read_text().replace("Walking", "Running", 1)
    (path / "labels.csv").write_text(text)
    with pytest.raises(DataValidationError, match="out of range"):
        D.load_dataset(path)


def test_duplicate_sample_id(tmp_path, small_synth):
    path = _write(tmp_path, small_synth)
    lines = (path / "labels.csv").read_text().splitlines()
    lines[2] = "0" + lines[2][lines[2].index(","):]
    (path / "labels.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(DataValidationError, match="duplicate"):
        D.load_dataset(path)


def test_missing_file_and_bad_meta(tmp_path, small_synth):
    path = _write(tmp_path, small_synth)
    (path / "labels.csv").unlink()
    with pytest.raises(DataValidationError, match="missing file"):
        D.load_dataset(path)
    (path / "meta.json").write_text("{not json")
    with pytest.raises(DataValidationError, match="meta.json"):
        D.load_dataset(path)


def test_normalizer_on_train_split(small_synth):
    train, val, _ = D.split_by_subject(small_synth, D.SplitSpec([1, 2], [3], [4]))
    norm = D.fit_normalizer(train)
    z = D.apply_normalizer(train, norm).values.reshape(-1, 24).astype(np.float64)
    assert np.all(np.abs(z.mean(axis=0)) < 1e-4)
    assert np.all(np.abs(z.std(axis=0) - 1) < 1e-3)
    assert D.apply_normalizer(train, norm).normalizer is norm


def test_normalizer_constant_channel(small_synth):
    values = small_synth.values.copy()
    values[:, :, 5] = 3.0
    norm = D.fit_normalizer(small_synth.with_values(values))
    assert norm.std[5] == 1.0 and norm.mean[5] == 3.0 and norm.constant_channels == (5,)
    out = norm.apply(values)
    assert np.all(out[:, :, 5] == 0.0)


def test_val_uses_train_statistics(small_synth):
    train, val, _ = D.split_by_subject(small_synth, D.SplitSpec([1, 2], [3], [4]))
    shifted = val.with_values(val.values + 5.0)
    own = D.fit_normalizer(shifted)
    norm = D.fit_normalizer(train)
    assert not np.allclose(own.mean, norm.mean)
    z = D.apply_normalizer(shifted, norm).values
    expected = ((shifted.values - norm.mean) / norm.std).astype(np.float32)
    assert np.array_equal(z, expected)


def test_empty_train_normalizer():
    with pytest.raises(DataValidationError):
        D.fit_normalizer(D.Dataset(np.zeros((0, 160, 24), np.float32), [], [], []))


def test_prepare_splits(small_synth):
    tr, va, te, norm = D.prepare_splits(small_synth, D.SplitSpec([1, 2], [3], [4]))
    assert norm is not None and tr.normalizer is norm and te.normalizer is norm
    tr2, _, _, none = D.prepare_splits(small_synth, D.SplitSpec([1, 2], [3], [4]), standardize=False)
    assert none is None and np.array_equal(tr2.values, small_synth.subset(np.arange(80)).values)


def test_synthetic_counts_and_determinism():
    a = D.generate_synthetic(4, 50, seed=9)
    b = D.generate_synthetic(4, 50, seed=9)
    assert len(a) == 800
    assert np.bincount(a.labels).tolist() == [200] * 4
    assert a.values.tobytes() == b.values.tobytes()
    assert a.values.shape == (800, 160, 24) and a.values.dtype == np.float32
    assert a.values.tobytes() != D.generate_synthetic(4, 50, seed=10).values.tobytes()


def test_synthetic_class_statistics():
    ds = D.generate_synthetic(3, 20, seed=1)
    pressure = ds.values[:, :, :18].sum(axis=2).mean(axis=1)
    sitting = pressure[ds.labels == D.LABEL_NAMES.index("Sitting")]
    standing = pressure[ds.labels == D.LABEL_NAMES.index("Standing")]
    assert sitting.mean() < standing.mean()
    gyro_var = ds.values[:, :, 21:].var(axis=1).sum(axis=1)
    tandem = gyro_var[ds.labels == D.LABEL_NAMES.index("Tandem")]
    assert tandem.mean() > gyro_var[ds.labels == D.LABEL_NAMES.index("Standing")].mean()


def test_synthetic_rejects_nonpositive():
    with pytest.raises(ValueError):
        D.generate_synthetic(0, 5)


def test_write_is_byte_identical(tmp_path, small_synth):
    D.write_dataset(small_synth, tmp_path / "a")
    D.write_dataset(small_synth, tmp_path / "b")
    for name in ("meta.json", "labels.csv", "windows.f32"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    assert meta["num_samples"] == 160 and meta["time_steps"] == 160 and meta["channels"] == 24


def test_channel_groups():
    groups = [D.channel_group(n) for n in D.CHANNEL_NAMES]
    assert groups.count("pressure") == 18 and groups[18:21] == ["accel"] * 3
    assert groups[21:] == ["gyro"] * 3
