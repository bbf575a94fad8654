import numpy as np
import pytest
from helpers import numeric_grad, rel_error
from hypothesis import given, settings
from hypothesis import strategies as st

from cdcnn.errors import (BadMagicError, CheckpointFormatError, ShapeError,
                          TruncatedCheckpointError, VersionMismatchError)
from cdcnn.layers import softmax, softmax_cross_entropy
from cdcnn.model import (CDCNN, BaselineConfig, Checkpoint, LinearBaseline, ModelConfig,
                         argmax_lowest, load_checkpoint, save_checkpoint)
from cdcnn.numeric import Adam, Rng


def enumerate_parameters(cfg: ModelConfig) -> int:
    """Shape-enumeration oracle, written independently of ModelConfig.parameter_shapes."""
    total = 0
    c_in = cfg.in_channels
    for _ in cfg.dilations:
        total += cfg.hidden * c_in * cfg.kernel_size  # bias-free conv
        total += 2 * cfg.hidden                      # batchnorm gamma and beta
        c_in = cfg.hidden
    return total + cfg.num_classes * cfg.hidden + cfg.num_classes


def small_config(**kw):
    base = dict(in_channels=3, time_steps=20, hidden=5, dilations=(1, 2, 4), dropout=0.0,
                num_classes=4)
    base.update(kw)
    return ModelConfig(**base)


def test_default_parameter_count():
    cfg = ModelConfig()
    model = CDCNN.init(cfg, Rng(0))
    assert model.num_parameters() == 42_244 == enumerate_parameters(cfg)
    assert 24 * 64 * 3 + 3 * (64 * 64 * 3) + 4 * (2 * 64) + 64 * 4 + 4 == 42_244


@settings(max_examples=20, deadline=None)
@given(f=st.integers(1, 30), h=st.integers(1, 40), k=st.sampled_from([1, 3, 5]),
       blocks=st.integers(1, 4), classes=st.integers(2, 6))
def test_parameter_count_property(f, h, k, blocks, classes):
    dil = tuple(2**i for i in range(blocks))
    cfg = ModelConfig(f, dil[-1] * (k - 1) + 4, h, k, dil, 0.1, classes)
    assert CDCNN.init(cfg, Rng(1)).num_parameters() == enumerate_parameters(cfg)


def test_receptive_field():
    assert ModelConfig().receptive_field == 31


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(dilations=(1, 3))
    with pytest.raises(ValueError):
        ModelConfig(kernel_size=4)
    with pytest.raises(ValueError):
        ModelConfig(time_steps=16)  # widest kernel spans 17
    with pytest.raises(ValueError):
        ModelConfig(dropout=1.0)


def test_init_deterministic_and_bounded():
    a = CDCNN.init(ModelConfig(), Rng(7))
    b = CDCNN.init(ModelConfig(), Rng(7))
    for k in a.tensors():
        assert np.array_equal(a.tensors()[k], b.tensors()[k])
    for i in range(4):
        w = a.params[f"block{i}.conv.weight"]
        bound = np.sqrt(6.0 / (w.shape[1] * w.shape[2]))
        assert np.abs(w).max() <= bound
        assert np.all(a.params[f"block{i}.bn.gamma"] == 1)
        assert np.all(a.params[f"block{i}.bn.beta"] == 0)
        assert np.all(a.buffers[f"block{i}.bn.running_var"] == 1)
    assert np.abs(a.params["head.weight"]).max() <= np.sqrt(6.0 / 64)
    assert np.all(a.params["head.bias"] == 0)
    assert all(v.dtype == np.float32 for v in a.tensors().values())


def test_forward_shape_and_softmax_rows():
    model = CDCNN.init(ModelConfig(), Rng(1))
    x = Rng(2).normal((3, 24, 160)).astype(np.float32)
    logits = model.forward(x)
    assert logits.shape == (3, 4)
    np.testing.assert_allclose(softmax(logits.astype(np.float64)).sum(axis=1), 1, atol=1e-6)


def test_forward_rejects_bad_input():
    model = CDCNN.init(ModelConfig(), Rng(1))
    with pytest.raises(ShapeError):
        model.forward(np.zeros((2, 160, 24), np.float32))
    x = np.zeros((1, 24, 160), np.float32)
    x[0, 0, 0] = np.nan
    with pytest.raises(ArithmeticError):
        model.forward(x)


def test_shift_37_invariance():
    model = CDCNN.init(ModelConfig(), Rng(3))
    x = Rng(4).normal((2, 24, 160)).astype(np.float32)
    np.testing.assert_allclose(model.forward(np.roll(x, 37, axis=2)), model.forward(x), atol=1e-5)


def test_zero_input_gives_head_bias():
    model = CDCNN.init(ModelConfig(), Rng(5))
    model.params["head.bias"][:] = [0.5, -1.0, 2.0, 0.25]
    logits = model.forward(np.zeros((2, 24, 160), np.float32))
    np.testing.assert_allclose(logits, np.tile(model.params["head.bias"], (2, 1)), atol=1e-6)


def test_inference_is_deterministic():
    model = CDCNN.init(ModelConfig(), Rng(6))
    x = Rng(8).normal((4, 24, 160)).astype(np.float32)
    assert model.forward(x).tobytes() == model.forward(x.copy()).tobytes()


def test_argmax_tie_break_and_shift_invariance():
    assert argmax_lowest(np.array([[0.1, 0.9, 0.3, 0.2]])).tolist() == [1]
    assert argmax_lowest(np.array([[0.7, 0.1, 0.7, 0.2]])).tolist() == [0]
    logits = Rng(1).normal((50, 4))
    assert np.array_equal(argmax_lowest(logits), argmax_lowest(logits + 3.5))


def test_full_model_gradient_matches_finite_differences():
    cfg = small_config(dropout=0.3)
    model = CDCNN.init(cfg, Rng(9)).astype(np.float64)
    x = Rng(10).normal((4, 3, 20))
    labels = np.array([0, 1, 2, 3])

    def loss_fn(name):
        def f(value):
            m = model.copy()
            m.params[name] = value
            return softmax_cross_entropy(m.forward(x, training=True, rng=Rng(11)), labels)[0]
        return f

    m = model.copy()
    _, g = softmax_cross_entropy(m.forward(x, training=True, rng=Rng(11)), labels)
    grads = m.backward(g)
    assert set(grads) == set(model.params)
    for name, value in model.params.items():
        assert rel_error(grads[name], numeric_grad(loss_fn(name), value)) < 1e-5, name


def test_backward_requires_training_forward():
    model = CDCNN.init(small_config(), Rng(0))
    model.forward(np.zeros((2, 3, 20), np.float32))
    with pytest.raises(RuntimeError):
        model.backward(np.zeros((2, 4), np.float32))


# --- checkpoints -----------------------------------------------------------------

def _checkpoint(model=None):
    model = model or CDCNN.init(ModelConfig(), Rng(12))
    return Checkpoint(model, [f"c{i}" for i in range(model.config.in_channels)],
                      ["Sitting", "Standing", "Tandem", "Walking"],
                      Rng(1).normal(model.config.in_channels).astype(np.float32),
                      (1 + Rng(2).uniform(model.config.in_channels)).astype(np.float32),
                      extra={"split": {"train": [1], "val": [2], "test": [3]}})


def test_checkpoint_round_trip_bit_exact():
    ckpt = _checkpoint()
    # run a training step so running stats are non-trivial
    x = Rng(3).normal((4, 24, 160)).astype(np.float32)
    ckpt.model.forward(x, training=True, rng=Rng(4))
    blob = save_checkpoint(ckpt)
    back = load_checkpoint(blob)
    assert blob[:5] == b"CDCN\x01"
    assert back.model.kind == "cdcnn" and back.model.config == ckpt.model.config
    for name, value in ckpt.model.tensors().items():
        assert back.model.tensors()[name].tobytes() == value.tobytes()
    assert back.normalizer_mean.tobytes() == ckpt.normalizer_mean.tobytes()
    assert back.normalizer_std.tobytes() == ckpt.normalizer_std.tobytes()
    assert back.channel_names == ckpt.channel_names and back.extra == ckpt.extra
    assert back.model.forward(x).tobytes() == ckpt.model.forward(x).tobytes()
    assert save_checkpoint(back) == blob


def test_checkpoint_baseline_round_trip():
    model = LinearBaseline.init(BaselineConfig())
    model.params["head.weight"][:] = Rng(5).normal(model.params["head.weight"].shape)
    back = load_checkpoint(save_checkpoint(Checkpoint(model, ["a"] * 24, ["x"] * 4)))
    assert isinstance(back.model, LinearBaseline)
    assert back.normalizer_mean is None
    assert back.model.params["head.weight"].tobytes() == model.params["head.weight"].tobytes()


def test_checkpoint_errors():
    blob = save_checkpoint(_checkpoint())
    with pytest.raises(BadMagicError):
        load_checkpoint(b"XDCN" + blob[4:])
    with pytest.raises(VersionMismatchError):
        load_checkpoint(blob[:4] + b"\x02" + blob[5:])
    with pytest.raises(TruncatedCheckpointError):
        load_checkpoint(blob[:-1])
    with pytest.raises(TruncatedCheckpointError):
        load_checkpoint(blob[:20])
    with pytest.raises(TruncatedCheckpointError):
        load_checkpoint(blob[:2])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(blob + b"\x00\x00\x00\x00")
    # distinct error classes
    kinds = {BadMagicError, VersionMismatchError, TruncatedCheckpointError, CheckpointFormatError}
    assert len(kinds) == 4


def test_checkpoint_shape_inconsistency():
    model = CDCNN.init(small_config(), Rng(0))
    model.params["head.bias"] = np.zeros(5, np.float32)
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(save_checkpoint(Checkpoint(model, ["a"] * 3, ["x"] * 4)))


# --- linear baseline ---------------------------------------------------------------

def test_baseline_zero_weights_uniform():
    model = LinearBaseline.init(BaselineConfig())
    x = model.prepare(Rng(1).normal((6, 160, 24)).astype(np.float32))
    assert x.shape == (6, 3840)
    loss, _ = softmax_cross_entropy(model.forward(x), [0, 1, 2, 3, 0, 1])
    assert loss == pytest.approx(np.log(4), abs=1e-6)
    assert model.predict(x).tolist() == [0] * 6  # all tied, lowest index wins


def test_baseline_flattening_order():
    windows = np.arange(2 * 160 * 24, dtype=np.float32).reshape(2, 160, 24)
    flat = LinearBaseline.prepare(windows)
    assert flat[1, 24 * 5 + 7] == windows[1, 5, 7]


def test_baseline_learns_separable_data():
    rng = Rng(21)
    cfg = BaselineConfig(in_channels=4, time_steps=10, num_classes=2)
    n = 200
    labels = (rng.uniform(n) < 0.5).astype(np.int64)
    x = rng.normal((n, cfg.in_features)).astype(np.float32)
    u = rng.normal(cfg.in_features)
    u /= np.linalg.norm(u)
    # replace the component along u by a signed offset of at least 1
    side = np.where(labels == 1, 1.0, -1.0) * (1.0 + np.abs(rng.normal(n)))
    x = (x - np.outer(x @ u, u) + np.outer(side, u)).astype(np.float32)
    model = LinearBaseline.init(cfg)
    opt = Adam(model.params, lr=0.01)
    for _ in range(300):
        _, g = softmax_cross_entropy(model.forward(x, training=True), labels)
        opt.step(model.params, model.backward(g))
    assert np.mean(model.predict(x) == labels) >= 0.99
