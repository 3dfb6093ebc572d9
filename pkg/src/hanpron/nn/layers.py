"""Dense, embedding, dropout and LSTM layers with hand-written backward passes.

All arrays are float64.  Layers keep their parameters in ``params`` and
accumulate gradients into ``grads`` (same keys, same shapes); callers zero
them between optimizer steps.
"""

from __future__ import annotations

from typing import Optional

import numpy as np


class ShapeMismatch(ValueError):
    pass


class NonFiniteValue(FloatingPointError):
    pass


def check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"non-finite values in {what}")
    return arr


def glorot_uniform(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_in, n_out))


def orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def penalty(self) -> float:
        return 0.0


class Dense(Layer):
    """y = x W + b, with an optional L2 penalty l2 * sum(W**2) on the kernel."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, l2: float = 0.0):
        if l2 < 0:
            raise ValueError("l2 must be >= 0")
        self.n_in, self.n_out, self.l2 = n_in, n_out, l2
        self.params = {"W": glorot_uniform(rng, n_in, n_out), "b": np.zeros(n_out)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._x: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeMismatch(f"Dense expects (batch, {self.n_in}), got {x.shape}")
        self._x = x
        return check_finite(x @ self.params["W"] + self.params["b"], "dense output")

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx, dW, db = dense_backward(self, self._x, dy)
        self.grads["W"] += dW
        self.grads["b"] += db
        return dx

    def penalty(self) -> float:
        return self.l2 * float(np.sum(self.params["W"] ** 2)) if self.l2 else 0.0


def dense_forward(layer: Dense, x: np.ndarray) -> np.ndarray:
    return layer.forward(x)


def dense_backward(layer: Dense, x: np.ndarray, dy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of a dense layer; dW includes the L2 term 2 * l2 * W."""
    if dy.shape != (x.shape[0], layer.n_out):
        raise ShapeMismatch(f"dy has shape {dy.shape}, expected {(x.shape[0], layer.n_out)}")
    W = layer.params["W"]
    dW = x.T @ dy
    if layer.l2:
        dW = dW + 2.0 * layer.l2 * W
    return check_finite(dy @ W.T, "dense dx"), dW, dy.sum(axis=0)


class Embedding(Layer):
    def __init__(self, n_tokens: int, dim: int, rng: np.random.Generator):
        self.params = {"E": rng.uniform(-0.05, 0.05, size=(n_tokens, dim))}
        self.grads = {"E": np.zeros((n_tokens, dim))}
        self._ids: Optional[np.ndarray] = None

    def forward(self, ids: np.ndarray) -> np.ndarray:
        self._ids = ids
        return self.params["E"][ids]

    def backward(self, dy: np.ndarray) -> None:
        np.add.at(self.grads["E"], self._ids.reshape(-1), dy.reshape(-1, dy.shape[-1]))


class Dropout:
    """Inverted dropout: kept units are scaled by 1 / (1 - rate) so the
    expected activation is unchanged; identity outside training."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self._mask: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray, train: bool, rng: Optional[np.random.Generator]) -> np.ndarray:
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        self._mask = dropout_mask(rng, x.shape, self.rate)
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy if self._mask is None else dy * self._mask


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    return (rng.random(shape) >= rate) / (1.0 - rate)


class Relu:
    def __init__(self):
        self._on: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._on = x > 0
        return np.where(self._on, x, 0.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._on


# gate blocks inside the 4H pre-activation: input, forget, output, candidate
_I, _F, _O, _G = range(4)


class LSTM(Layer):
    """Single LSTM layer over equal-length sequences shaped (T, B, n_in).

    Dropout follows the variational scheme: one input mask and one recurrent
    mask per sequence, reused at every time step.
    """

    def __init__(
        self,
        n_in: int,
        hidden: int,
        rng: np.random.Generator,
        input_dropout: float = 0.0,
        recurrent_dropout: float = 0.0,
    ):
        H = hidden
        self.n_in, self.hidden = n_in, H
        self.input_dropout, self.recurrent_dropout = input_dropout, recurrent_dropout
        b = np.zeros(4 * H)
        b[_F * H : (_F + 1) * H] = 1.0
        self.params = {
            "W": glorot_uniform(rng, n_in, 4 * H),
            "U": orthogonal(rng, H, 4 * H),
            "b": b,
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._cache: Optional[dict] = None

    def forward(
        self, x: np.ndarray, train: bool = False, rng: Optional[np.random.Generator] = None
    ) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ShapeMismatch(f"LSTM expects (T, B, {self.n_in}), got {x.shape}")
        T, B, _ = x.shape
        H = self.hidden
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        mx = dropout_mask(rng, (B, self.n_in), self.input_dropout) if train and self.input_dropout else None
        mh = dropout_mask(rng, (B, H), self.recurrent_dropout) if train and self.recurrent_dropout else None
        xin = x * mx if mx is not None else x
        # input projection for all steps at once
        zx = (xin.reshape(T * B, -1) @ W).reshape(T, B, 4 * H) + b
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((T, B, H))
        cs = np.empty((T, B, H))
        gates = np.empty((T, B, 4 * H))
        hprev_in = np.empty((T, B, H))
        for t in range(T):
            hin = h * mh if mh is not None else h
            z = zx[t] + hin @ U
            a = np.empty_like(z)
            a[:, : 3 * H] = sigmoid(z[:, : 3 * H])
            a[:, 3 * H :] = np.tanh(z[:, 3 * H :])
            c = a[:, _F * H : (_F + 1) * H] * c + a[:, _I * H : (_I + 1) * H] * a[:, _G * H :]
            h = a[:, _O * H : (_O + 1) * H] * np.tanh(c)
            gates[t], cs[t], hs[t], hprev_in[t] = a, c, h, hin
        check_finite(hs, "LSTM output")
        self._cache = {"xin": xin, "gates": gates, "cs": cs, "hprev_in": hprev_in, "mx": mx, "mh": mh}
        return hs

    def backward(self, dhs: np.ndarray) -> np.ndarray:
        """Backpropagation through time; ``dhs`` is the loss gradient w.r.t.
        every output step (zeros where a step is unused)."""
        cache = self._cache
        gates, cs, hprev_in = cache["gates"], cache["cs"], cache["hprev_in"]
        mx, mh = cache["mx"], cache["mh"]
        T, B, H = cs.shape
        U = self.params["U"]
        dz_all = np.empty((T, B, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            a = gates[t]
            i, f, o, g = (a[:, k * H : (k + 1) * H] for k in (_I, _F, _O, _G))
            tc = np.tanh(cs[t])
            dh = dhs[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc**2)
            c_prev = cs[t - 1] if t > 0 else np.zeros((B, H))
            dz = dz_all[t]
            dz[:, _I * H : (_I + 1) * H] = dc * g * i * (1.0 - i)
            dz[:, _F * H : (_F + 1) * H] = dc * c_prev * f * (1.0 - f)
            dz[:, _O * H : (_O + 1) * H] = dh * tc * o * (1.0 - o)
            dz[:, _G * H :] = dc * i * (1.0 - g**2)
            dc_next = dc * f
            dhin = dz @ U.T
            dh_next = dhin * mh if mh is not None else dhin
        flat_dz = dz_all.reshape(T * B, 4 * H)
        self.grads["W"] += cache["xin"].reshape(T * B, -1).T @ flat_dz
        self.grads["U"] += hprev_in.reshape(T * B, H).T @ flat_dz
        self.grads["b"] += flat_dz.sum(axis=0)
        dx = (flat_dz @ self.params["W"].T).reshape(T, B, -1)
        if mx is not None:
            dx = dx * mx
        return check_finite(dx, "LSTM dx")


def lstm_step(
    layer: LSTM, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One inference-mode recurrence step (no dropout)."""
    H = layer.hidden
    x_t, h_prev, c_prev = np.atleast_2d(x_t), np.atleast_2d(h_prev), np.atleast_2d(c_prev)
    if x_t.shape[1] != layer.n_in or h_prev.shape[1] != H or c_prev.shape[1] != H:
        raise ShapeMismatch("lstm_step: input or state has the wrong width")
    z = x_t @ layer.params["W"] + h_prev @ layer.params["U"] + layer.params["b"]
    i = sigmoid(z[:, _I * H : (_I + 1) * H])
    f = sigmoid(z[:, _F * H : (_F + 1) * H])
    o = sigmoid(z[:, _O * H : (_O + 1) * H])
    g = np.tanh(z[:, _G * H :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return check_finite(h, "lstm_step h"), check_finite(c, "lstm_step c")
