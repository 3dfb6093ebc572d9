"""Small float64 neural-network engine: dense and LSTM layers with explicit
backward passes, softmax cross-entropy, Adam and gradient checking."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check, relative_error
from .layers import (
    LSTM,
    Dense,
    Dropout,
    Embedding,
    NonFiniteValue,
    Relu,
    ShapeMismatch,
    check_finite,
    dense_backward,
    dense_forward,
    lstm_step,
)
from .losses import IndexOutOfRange, softmax, softmax_backward, softmax_xent
from .optim import Adam, adam_step

__all__ = [
    "Adam",
    "CheckpointError",
    "Dense",
    "Dropout",
    "Embedding",
    "GradCheckReport",
    "IndexOutOfRange",
    "LSTM",
    "NonFiniteValue",
    "Relu",
    "ShapeMismatch",
    "adam_step",
    "check_finite",
    "dense_backward",
    "dense_forward",
    "grad_check",
    "load_checkpoint",
    "lstm_step",
    "relative_error",
    "save_checkpoint",
    "softmax",
    "softmax_backward",
    "softmax_xent",
]
