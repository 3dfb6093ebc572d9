from __future__ import annotations

import numpy as np


class IndexOutOfRange(IndexError):
    pass


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of softmax: gradient w.r.t. logits given
    the gradient w.r.t. probabilities."""
    return p * (dp - np.sum(dp * p, axis=-1, keepdims=True))


def softmax_xent(logits: np.ndarray, target_index) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    Accepts a single logit vector with an int target or a (B, K) batch with a
    length-B target array.
    """
    single = logits.ndim == 1
    z = np.atleast_2d(logits)
    t = np.atleast_1d(np.asarray(target_index))
    K = z.shape[1]
    if t.shape[0] != z.shape[0]:
        raise ValueError("one target per row required")
    if np.any(t < 0) or np.any(t >= K):
        raise IndexOutOfRange(f"target index outside [0, {K})")
    shifted = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    losses = logsumexp - shifted[rows, t]
    grad = np.exp(shifted - logsumexp[:, None])
    grad[rows, t] -= 1.0
    B = z.shape[0]
    loss = float(losses.mean())
    grad /= B
    return loss, grad[0] if single else grad
