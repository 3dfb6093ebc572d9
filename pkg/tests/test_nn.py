import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hanpron.nn import (
    LSTM,
    Adam,
    CheckpointError,
    Dense,
    Dropout,
    IndexOutOfRange,
    ShapeMismatch,
    grad_check,
    load_checkpoint,
    lstm_step,
    save_checkpoint,
    softmax,
    softmax_backward,
    softmax_xent,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_dense_identity():
    d = Dense(3, 3, rng())
    d.params["W"][:] = np.eye(3)
    d.params["b"][:] = 0
    x = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(d.forward(x), x)


def test_dense_l2_gradient():
    d = Dense(4, 2, rng(), l2=1e-4)
    d.forward(np.zeros((1, 4)))
    d.backward(np.zeros((1, 2)))
    assert np.allclose(d.grads["W"], 2e-4 * d.params["W"], rtol=0, atol=1e-18)
    assert d.penalty() == pytest.approx(1e-4 * np.sum(d.params["W"] ** 2))


def test_dense_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        Dense(3, 2, rng()).forward(np.zeros((2, 4)))


def test_dense_input_gradient_finite_difference():
    d = Dense(5, 3, rng(1))
    x = rng(2).normal(size=(4, 5))
    r = rng(3).normal(size=(4, 3))
    d.forward(x)
    dx = d.backward(r)
    h = 1e-6
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        num = (np.sum(d.forward(xp) * r) - np.sum(d.forward(xm) * r)) / (2 * h)
        assert abs(num - dx[idx]) < 1e-6


def test_lstm_step_zero_weights():
    layer = LSTM(2, 3, rng())
    for v in layer.params.values():
        v[:] = 0.0
    c_prev = np.array([[1.0, -2.0, 0.5]])
    h, c = lstm_step(layer, np.ones(2), np.zeros(3), c_prev)
    # all gates sigmoid(0) = 0.5, candidate tanh(0) = 0
    assert np.allclose(c, 0.5 * c_prev)
    assert np.allclose(h, 0.5 * np.tanh(0.5 * c_prev))


def test_lstm_forget_bias_initialised_to_one():
    layer = LSTM(2, 3, rng())
    b = layer.params["b"]
    assert b.sum() == 3.0 and np.all(b[3:6] == 1.0)
    U = layer.params["U"]
    assert np.allclose(U @ U.T, np.eye(3))


def test_lstm_forward_matches_step_function():
    layer = LSTM(3, 4, rng(5))
    x = rng(6).normal(size=(5, 2, 3))
    hs = layer.forward(x)
    h, c = np.zeros((2, 4)), np.zeros((2, 4))
    for t in range(5):
        h, c = lstm_step(layer, x[t], h, c)
        assert np.allclose(hs[t], h)


def _lstm_problem(seed, dropout):
    layer = LSTM(3, 4, rng(seed), input_dropout=dropout, recurrent_dropout=dropout)
    for v in layer.params.values():
        v += rng(seed + 1).normal(scale=0.3, size=v.shape)
    x = rng(seed + 2).normal(size=(6, 2, 3))
    r = rng(seed + 3).normal(size=(6, 2, 4))

    def loss_and_grads():
        layer.zero_grad()
        # a fresh generator per call keeps the dropout masks fixed
        hs = layer.forward(x, train=dropout > 0, rng=rng(99))
        layer.backward(r)
        return float(np.sum(hs * r)), layer.grads

    return layer, loss_and_grads


@pytest.mark.parametrize("dropout", [0.0, 0.4])
def test_lstm_bptt_finite_difference(dropout):
    layer, fn = _lstm_problem(10, dropout)
    report = grad_check(fn, layer.params, tolerance=1e-5)
    assert report.passed, report


def test_lstm_masks_constant_across_time():
    layer = LSTM(3, 4, rng(0), input_dropout=0.5, recurrent_dropout=0.5)
    x = rng(1).normal(size=(7, 5, 3))
    hs = layer.forward(x, train=True, rng=rng(2))
    cache = layer._cache
    mh, mx = cache["mh"], cache["mx"]
    assert mh.shape == (5, 4) and mx.shape == (5, 3)
    assert np.allclose(cache["hprev_in"][0], 0.0)
    for t in range(1, 7):
        assert np.allclose(cache["hprev_in"][t], hs[t - 1] * mh)
    assert np.allclose(cache["xin"], x * mx[None])


def test_softmax_uniform_and_saturation():
    loss, grad = softmax_xent(np.zeros(7), 2)
    assert loss == pytest.approx(np.log(7))
    assert grad.sum() == pytest.approx(0.0, abs=1e-15)
    loss, grad = softmax_xent(np.array([1e9, 0.0, -1e9]), 0)
    assert loss == 0.0 and np.all(np.isfinite(grad))
    loss, _ = softmax_xent(np.array([1e9, 0.0]), 1)
    assert loss == pytest.approx(1e9)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8), st.data())
@settings(max_examples=100, deadline=None)
def test_softmax_xent_gradient_properties(logits, data):
    z = np.array(logits)
    t = data.draw(st.integers(0, len(logits) - 1))
    loss, grad = softmax_xent(z, t)
    assert loss >= 0
    assert abs(grad.sum()) < 1e-12
    assert np.allclose(grad, softmax(z) - np.eye(len(z))[t])


def test_softmax_target_out_of_range():
    with pytest.raises(IndexOutOfRange):
        softmax_xent(np.zeros(3), 3)
    with pytest.raises(IndexOutOfRange):
        softmax_xent(np.zeros((2, 3)), np.array([0, -1]))


def test_softmax_backward_matches_jacobian():
    z = rng(0).normal(size=5)
    p = softmax(z)
    dp = rng(1).normal(size=5)
    J = np.diag(p) - np.outer(p, p)
    assert np.allclose(softmax_backward(p, dp), J @ dp)


def test_adam_three_steps():
    # hand-computed reference, lr 1e-3 and default betas
    p = {"w": np.array([1.0])}
    opt = Adam(lr=1e-3)
    expected = [
        (0.05, 0.00025, 0.99900000001999999960),
        (0.025, 0.00028975, 0.99865439418116510585),
        (0.0325, 0.00029946025, 0.99827500240835695416),
    ]
    for g, (m, v, value) in zip([0.5, -0.2, 0.1], expected):
        opt.step(p, {"w": np.array([g])})
        assert opt.m["w"][0] == pytest.approx(m, rel=1e-12)
        assert opt.v["w"][0] == pytest.approx(v, rel=1e-12)
        assert p["w"][0] == pytest.approx(value, rel=0, abs=1e-15)


@given(st.floats(-1e3, 1e3).filter(lambda g: abs(g) > 1e-3))
def test_adam_first_step_is_sign(g):
    p = {"w": np.array([0.0])}
    Adam(lr=0.01).step(p, {"w": np.array([g])})
    assert p["w"][0] == pytest.approx(-0.01 * np.sign(g), rel=1e-4)


def test_adam_zero_gradient_is_noop():
    p = {"w": np.array([3.0, -1.0])}
    Adam().step(p, {"w": np.zeros(2)})
    assert np.array_equal(p["w"], [3.0, -1.0])


def test_adam_shape_check():
    with pytest.raises(ShapeMismatch):
        Adam().step({"w": np.zeros(2)}, {"w": np.zeros(3)})


def test_grad_check_quadratic():
    A = rng(0).normal(size=(4, 4))
    params = {"x": rng(1).normal(size=4)}

    def fn():
        x = params["x"]
        return float(x @ A @ x), {"x": (A + A.T) @ x}

    assert grad_check(fn, params).max_rel_error < 1e-9

    def wrong():
        loss, g = fn()
        return loss, {"x": g["x"] * 1.1}

    assert not grad_check(wrong, params).passed


def test_checkpoint_roundtrip(tmp_path):
    tensors = {"a": rng(0).normal(size=(3, 2)), "b": np.arange(4.0), "s": np.array(2.5)}
    save_checkpoint(tmp_path / "x.ckpt", tensors, {"seed": 3, "name": "懾"})
    meta, back = load_checkpoint(tmp_path / "x.ckpt")
    assert meta == {"seed": 3, "name": "懾"}
    for k in tensors:
        assert back[k].shape == tensors[k].shape
        assert np.array_equal(back[k], tensors[k])


def test_checkpoint_bad_magic(tmp_path):
    (tmp_path / "x.ckpt").write_bytes(b"NOTACKPT" + bytes(20))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "x.ckpt")


def test_dropout_eval_identity_and_train_scaling():
    d = Dropout(0.5)
    x = np.ones((200, 200))
    assert d.forward(x, train=False, rng=None) is x
    y = d.forward(x, train=True, rng=rng(0))
    assert set(np.unique(y)) == {0.0, 2.0}
    assert abs(y.mean() - 1.0) < 0.02
    assert np.array_equal(d.backward(x), y)
    with pytest.raises(ValueError):
        Dropout(1.0)
