"""Classical layers with hand-written backward passes (single sample, no padding)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericsError, ShapeError

LOG_CLAMP = 1e-12


def conv1d_output_length(length: int, kernel: int, stride: int) -> int:
    if length < kernel:
        raise ShapeError(f"input length {length} shorter than kernel {kernel}")
    return (length - kernel) // stride + 1


@dataclass(frozen=True)
class Conv1dLayer:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int

    def output_length(self, length: int) -> int:
        return conv1d_output_length(length, self.kernel, self.stride)

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels, self.kernel)

    @property
    def num_params(self) -> int:
        return self.in_channels * self.out_channels * self.kernel + self.out_channels


@dataclass(frozen=True)
class DenseLayer:
    in_dim: int
    out_dim: int

    @property
    def weight_shape(self):
        return (self.out_dim, self.in_dim)

    @property
    def num_params(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim


def _windows(x, kernel, stride):
    # (C_in, L) -> (L_out, C_in * kernel), a view where possible
    win = sliding_window_view(x, kernel, axis=1)[:, ::stride]
    return win.transpose(1, 0, 2).reshape(win.shape[1], -1)


def conv1d_forward(x, weight, bias, stride):
    """x (C_in, L), weight (C_out, C_in, K), bias (C_out,) -> (C_out, L_out)."""
    x = np.asarray(x, dtype=float)
    c_out, c_in, kernel = weight.shape
    if x.ndim != 2 or x.shape[0] != c_in:
        raise ShapeError(f"conv1d expects ({c_in}, L) input, got {x.shape}")
    conv1d_output_length(x.shape[1], kernel, stride)
    cols = _windows(x, kernel, stride)
    return weight.reshape(c_out, -1) @ cols.T + bias[:, None]


def conv1d_backward(x, weight, dout, stride, need_dx=True):
    """Return (dx, dweight, dbias); dx is None when ``need_dx`` is false."""
    c_out, c_in, kernel = weight.shape
    cols = _windows(x, kernel, stride)
    if dout.shape != (c_out, cols.shape[0]):
        raise ShapeError(f"conv1d upstream gradient has shape {dout.shape}")
    dweight = (dout @ cols).reshape(weight.shape)
    dbias = dout.sum(axis=1)
    dx = None
    if need_dx:
        l_out = dout.shape[1]
        dcols = (dout.T @ weight.reshape(c_out, -1)).reshape(l_out, c_in, kernel)
        dx = np.zeros_like(x, dtype=float)
        span = stride * (l_out - 1) + 1
        for k in range(kernel):
            dx[:, k:k + span:stride] += dcols[:, :, k].T
    return dx, dweight, dbias


def dense_forward(x, weight, bias):
    x = np.asarray(x, dtype=float)
    if x.shape != (weight.shape[1],):
        raise ShapeError(f"dense layer expects input of size {weight.shape[1]}, got {x.shape}")
    return weight @ x + bias


def dense_backward(x, weight, dout):
    if dout.shape != (weight.shape[0],):
        raise ShapeError(f"dense upstream gradient has shape {dout.shape}")
    return weight.T @ dout, np.outer(dout, x), dout.copy()


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(x, dout):
    return dout * (x > 0)


def dropout_forward(x, rate: float, training: bool, rng=None):
    """Inverted dropout. Returns (output, mask); mask is None when inactive."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    mask = (rng.random(np.shape(x)) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


def softmax(logits):
    z = np.asarray(logits, dtype=float)
    e = np.exp(z - z.max())
    return e / e.sum()


def weighted_softmax_xent(logits, label: int, class_weights=(1.0, 1.0)):
    """Class-weighted cross-entropy on raw logits -> (loss, dloss/dlogits)."""
    logits = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(logits)):
        raise NumericsError(f"non-finite logits {logits}")
    probs = softmax(logits)
    w = float(class_weights[label])
    loss = -w * np.log(max(probs[label], LOG_CLAMP))
    grad = probs.copy()
    grad[label] -= 1.0
    return float(loss), w * grad


@dataclass
class AdamState:
    size: int
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)


def adam_step(params, grads, state: AdamState) -> np.ndarray:
    """One bias-corrected Adam update; moments in ``state`` are updated in place."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError(
            f"adam: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
