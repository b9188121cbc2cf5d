import dataclasses

import numpy as np
import pytest

from fdirlab import preprocess as pp
from fdirlab import simgen as sg
from fdirlab.errors import ConfigError, DataError, FormatError
from fdirlab.nnet import layers as L
from fdirlab.nnet import model as M
from fdirlab.nnet import (AdamState, EarlyStopping, ModelConfig, TrainConfig, adam_step,
                          fit_detector, load_model, predict_proba_track, predict_track,
                          save_model, train)
from tests.oracles import numerical_gradient

MINI = ModelConfig(window_length=16, branch_layers=((3, 2),), joint_layers=((3, 4),),
                   dense_units=(8,), dtype="float64")


def naive_conv(x, w, b):
    n, t, c = x.shape
    _, k, co = w.shape
    y = np.zeros((n, t - k + 1, co))
    for i in range(t - k + 1):
        for o in range(co):
            y[:, i, o] = np.einsum("nkc,ck->n", x[:, i:i + k, :], w[:, :, o]) + b[o]
    return y


@pytest.mark.parametrize("c,k,co", [(1, 3, 4), (6, 5, 2), (8, 1, 8), (12, 7, 3)])
def test_conv_matches_naive(c, k, co):
    rng = np.random.default_rng(c * 100 + k)
    x, w, b = rng.normal(size=(3, 20, c)), rng.normal(size=(c, k, co)), rng.normal(size=co)
    y, _ = L.conv1d_forward(x, w, b)
    np.testing.assert_allclose(y, naive_conv(x, w, b), rtol=1e-10, atol=1e-12)


def test_grouped_conv_keeps_features_apart():
    rng = np.random.default_rng(0)
    w = L.expand_grouped(rng.normal(size=(6, 1, 3, 2)))
    x = np.zeros((1, 10, 6))
    x[0, :, 2] = rng.normal(size=10)
    y, _ = L.conv1d_forward(x, w, np.zeros(12))
    assert np.all(y[..., :4] == 0) and np.all(y[..., 6:] == 0) and np.any(y[..., 4:6] != 0)


def test_collapse_inverts_expand():
    w = np.random.default_rng(1).normal(size=(6, 2, 3, 4))
    np.testing.assert_array_equal(L.collapse_grouped(L.expand_grouped(w), w.shape), w)


@pytest.mark.parametrize("cfg", [
    MINI,
    dataclasses.replace(MINI, activation="tanh", pooling="mean"),
    dataclasses.replace(MINI, branch_layers=((3, 2), (2, 3)), pool_last=4),
])
def test_gradient_check(cfg):
    rng = np.random.default_rng(42)
    params = M.init_params(cfg, seed=3)
    for name in params:
        if name.endswith(".b"):
            params[name] = rng.normal(0, 0.1, size=params[name].shape)
    xa = rng.normal(size=(5, cfg.window_length, 6))
    xi = rng.normal(size=(5, cfg.window_length, 6))
    t = (rng.random((5, 2)) < 0.5).astype(float)

    def f():
        logits = M.forward_logits(cfg, params, xa, xi)
        p = L.sigmoid(logits)
        return float(np.mean(np.sum(-(t * np.log(p) + (1 - t) * np.log1p(-p)), axis=1)))

    _, grads = M.loss_and_grad(cfg, params, xa, xi, t)
    for name, p in params.items():
        num = numerical_gradient(f, p, 1e-6)
        err = np.linalg.norm(num - grads[name]) / max(np.linalg.norm(num) + np.linalg.norm(grads[name]), 1e-12)
        assert err < 1e-4, name


def test_forward_shape_errors():
    params = M.init_params(MINI)
    with pytest.raises(DataError):
        M.forward(MINI, params, np.zeros((2, 15, 6)), np.zeros((2, 15, 6)))
    with pytest.raises(DataError):
        M.check_params(MINI, {k: v for k, v in params.items() if k != "head.b"})


@pytest.mark.parametrize("kw", [{"activation": "gelu"}, {"pooling": "sum"}, {"threshold": 1.0},
                                {"window_length": 10, "branch_layers": ((7, 2),),
                                 "joint_layers": ((5, 2),)}])
def test_model_config_errors(kw):
    with pytest.raises(ConfigError):
        ModelConfig(**kw)


def test_loss_clamps():
    assert M.loss((np.array([0.0]), np.array([1.0])), (np.array([1.0]), np.array([1.0]))) == \
        pytest.approx(-np.log(1e-7))


def test_adam_matches_hand_update():
    cfg = TrainConfig()
    p = {"w": np.array([1.0, -2.0])}
    g = {"w": np.array([0.5, 0.1])}
    state = AdamState.zeros_like(p)
    adam_step(p, g, state, cfg)
    # first step: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
    expected = np.array([1.0, -2.0]) - cfg.learning_rate * g["w"] / (np.abs(g["w"]) + cfg.adam_epsilon)
    np.testing.assert_allclose(p["w"], expected, rtol=1e-12)
    adam_step(p, g, state, cfg)
    assert state.step == 2


def test_early_stopping_patience():
    es = EarlyStopping(2)
    assert [es.update(e, v) for e, v in enumerate([3, 2, 2.5, 2.1], 1)] == \
        [False, False, False, True]
    assert es.best_epoch == 2


def _separable_dataset(n_traj=4, T=200, seed=0):
    """IMU axis 0 jumps to +3 where faulty; everything else is noise."""
    rng = np.random.default_rng(seed)
    streams, labels = [], []
    for _ in range(n_traj):
        y = np.zeros((T, 2), bool)
        s = int(rng.integers(40, T - 60))
        y[s:s + 40, 1] = True
        imu = rng.normal(0, 0.1, (T, 3))
        imu[y[:, 1], 0] = 3.0
        streams.append(sg.SensorStreamPair(rng.normal(0, 0.1, (T, 3)), imu, 0.1))
        labels.append(y)
    return sg.LabeledDataset(streams, labels, [])


def test_training_learns_and_is_deterministic():
    ds = _separable_dataset()
    cfg = dataclasses.replace(MINI, dtype="float32")
    tc = TrainConfig(learning_rate=1e-2, max_epochs=15, batch_size=64, rng_seed=5)
    a, ha = fit_detector(ds, None, cfg, tc, train_stride=2)
    b, hb = fit_detector(ds, None, cfg, tc, train_stride=2)
    assert ha["train_loss"][-1] < 0.5 * ha["train_loss"][0]
    assert all(a.weights[k].tobytes() == b.weights[k].tobytes() for k in a.weights)
    pred = predict_track(a, ds)
    truth = np.concatenate([y[:, 1] for y in ds.labels])
    got = np.concatenate([p[:, 1] for p in pred])
    assert np.mean(got == truth) > 0.9


def test_predict_track_zero_before_first_window():
    ds = _separable_dataset(1)
    params, _ = fit_detector(ds, None, MINI, TrainConfig(max_epochs=1, batch_size=64))
    prob = predict_proba_track(params, ds)[0]
    assert prob.shape == (200, 2)
    assert np.all(prob[:MINI.window_length - 1] == 0)
    assert np.all((prob[MINI.window_length - 1:] > 0) & (prob[MINI.window_length - 1:] < 1))


def test_predict_rejects_short_trajectory():
    ds = _separable_dataset(1)
    params, _ = fit_detector(ds, None, MINI, TrainConfig(max_epochs=1, batch_size=64))
    short = sg.LabeledDataset([sg.SensorStreamPair(np.zeros((10, 3)), np.zeros((10, 3)), 0.1)],
                              [np.zeros((10, 2), bool)], [])
    with pytest.raises(DataError):
        predict_track(params, short)


def test_train_rejects_mismatched_windows():
    ds = _separable_dataset(1)
    batch = pp.make_windows(ds, pp.fit_dataset_scaler(ds), pp.WindowConfig(20, 1))
    with pytest.raises(ConfigError):
        train(batch, None, MINI, TrainConfig(max_epochs=1))
    with pytest.raises(DataError):
        train(None, None, MINI, TrainConfig(max_epochs=1))


def test_model_round_trip(tmp_path):
    ds = _separable_dataset(2)
    params, _ = fit_detector(ds, None, MINI, TrainConfig(max_epochs=2, batch_size=64))
    path = save_model(params, tmp_path / "m.fdirmodel")
    back = load_model(path)
    assert back.config == params.config and back.scaler.equals(params.scaler)
    assert back.train_config == params.train_config
    assert all(np.array_equal(back.weights[k], params.weights[k]) for k in params.weights)
    assert all(np.array_equal(a, b) for a, b in zip(predict_proba_track(back, ds),
                                                    predict_proba_track(params, ds)))
    raw = path.read_bytes()
    path.write_bytes(raw[:-20])
    with pytest.raises(FormatError):
        load_model(path)
