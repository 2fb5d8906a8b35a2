"""Numeric core: differentiable layers with hand-written backward passes, plus Adam.

Tensors are plain float64 numpy arrays (C order); index sequences are int64
arrays. Every layer is a pure function of its explicit inputs, so forward and
backward passes are deterministic given the same Rng stream.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic PCG64 generator; identical seed gives an identical stream
    on every platform. Sub-streams can be derived with ``rng.spawn()``."""
    if seed < 0:
        raise ValueError("seed must be a non-negative 64-bit integer")
    return np.random.Generator(np.random.PCG64(seed))


# ---------------------------------------------------------------------------
# Embedding
# ---------------------------------------------------------------------------

def embedding_forward(ids: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Gather rows of ``table`` [V, d] at positions ``ids`` -> [len(ids), d]."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"embedding index out of range: ids span [{ids.min()}, {ids.max()}], "
            f"table has {table.shape[0]} rows"
        )
    return table[ids]


def embedding_backward(ids: np.ndarray, grad_out: np.ndarray, vocab_size: int) -> np.ndarray:
    """Scatter-add output gradients back onto table rows; repeated ids sum."""
    grad_table = np.zeros((vocab_size, grad_out.shape[1]))
    np.add.at(grad_table, np.asarray(ids), grad_out)
    return grad_table


# ---------------------------------------------------------------------------
# 1D convolution (valid, stride 1)
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray, n: int) -> np.ndarray:
    """Unfold [L, d] into sliding windows [L-n+1, n*d]."""
    length, width = x.shape
    out_len = length - n + 1
    windows = np.lib.stride_tricks.sliding_window_view(x, (n, width))
    return windows.reshape(out_len, n * width)


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid 1D convolution of [L, d] input with [F, n, d] filters -> [L-n+1, F].

    out[i, f] = sum(x[i:i+n, :] * w[f]) + b[f]
    """
    n_filters, n, d = w.shape
    if x.shape[0] < n:
        raise ValueError(f"input length {x.shape[0]} shorter than kernel {n}")
    if x.shape[1] != d:
        raise ValueError(f"input width {x.shape[1]} != filter width {d}")
    col = _im2col(x, n)
    return col @ w.reshape(n_filters, n * d).T + b


def conv1d_backward(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray):
    """Gradients of conv1d_forward w.r.t. input, filters and bias.

    Returns (dx, dw, db). dx is built by summing each window-slot gradient
    back into the positions that window covered.
    """
    n_filters, n, d = w.shape
    out_len = x.shape[0] - n + 1
    col = _im2col(x, n)
    w_flat = w.reshape(n_filters, n * d)
    db = grad_out.sum(axis=0)
    dw = (grad_out.T @ col).reshape(n_filters, n, d)
    dcol = (grad_out @ w_flat).reshape(out_len, n, d)
    dx = np.zeros_like(x)
    for j in range(n):
        dx[j:j + out_len] += dcol[:, j, :]
    return dx, dw, db


# ---------------------------------------------------------------------------
# Activations and pooling
# ---------------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass gradient where x > 0; subgradient at exactly 0 is 0."""
    return grad_out * (x > 0)


def maxpool1d(x: np.ndarray, pool: int = 2) -> np.ndarray:
    """Non-overlapping max pooling over [L, F] -> [L//pool, F]; trailing
    remainder rows are dropped."""
    length, n_feat = x.shape
    if length < pool:
        raise ValueError(f"input length {length} shorter than pool size {pool}")
    out_len = length // pool
    return x[: out_len * pool].reshape(out_len, pool, n_feat).max(axis=1)


def maxpool1d_backward(x: np.ndarray, grad_out: np.ndarray, pool: int = 2) -> np.ndarray:
    """Route each window's gradient to its argmax position (first index on ties)."""
    length, n_feat = x.shape
    out_len = length // pool
    windows = x[: out_len * pool].reshape(out_len, pool, n_feat)
    winners = windows.argmax(axis=1)
    dx = np.zeros_like(x)
    dwin = dx[: out_len * pool].reshape(out_len, pool, n_feat)
    np.put_along_axis(dwin, winners[:, None, :], grad_out[:, None, :], axis=1)
    return dx


# ---------------------------------------------------------------------------
# Dense
# ---------------------------------------------------------------------------

def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map: [k] @ [k, u] + [u] -> [u]."""
    if x.shape[0] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ValueError(f"dense shape mismatch: x{x.shape} w{w.shape} b{b.shape}")
    return x @ w + b


def dense_backward(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray):
    """Returns (dx, dw, db) for the affine map."""
    return w @ grad_out, np.outer(x, grad_out), grad_out.copy()


# ---------------------------------------------------------------------------
# Dropout (inverted)
# ---------------------------------------------------------------------------

def dropout_forward(x: np.ndarray, rate: float, mode: str, rng: np.random.Generator | None = None):
    """Inverted dropout. Train mode zeroes elements with probability ``rate``
    and scales survivors by 1/(1-rate); infer mode is the identity.

    Returns (output, mask); mask is None whenever dropout was a no-op.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown dropout mode {mode!r}")
    if mode == "infer" or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate), mask


def dropout_backward(grad_out: np.ndarray, mask: np.ndarray | None, rate: float) -> np.ndarray:
    if mask is None:
        return grad_out
    return grad_out * mask / (1.0 - rate)


# ---------------------------------------------------------------------------
# Sigmoid and binary cross-entropy
# ---------------------------------------------------------------------------

def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic: exponentials are only taken of
    non-positive values, so extreme inputs saturate instead of overflowing."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gradient through sigmoid using the forward output y."""
    return grad_out * y * (1.0 - y)


def bce_loss(prediction: float, label: int) -> tuple[float, float]:
    """Binary cross-entropy of a probability against a 0/1 label.

    Returns (loss, gradient w.r.t. the pre-sigmoid logit). The probability is
    clamped away from 0 and 1 for the log; the logit gradient uses the fused
    stable form p - y, which needs no clamp.
    """
    eps = 1e-12
    p = float(prediction)
    clamped = min(max(p, eps), 1.0 - eps)
    loss = -(label * np.log(clamped) + (1 - label) * np.log(1.0 - clamped))
    return float(loss), p - label


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment accumulators for a named set of parameters."""

    lr: float = 0.0015
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float = 0.0015,
                   beta1: float = 0.9, beta2: float = 0.999,
                   epsilon: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)
        for name, value in params.items():
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        return state


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """One Adam update, applied to the parameter arrays in place.

    t <- t+1; m <- b1*m + (1-b1)*g; v <- b2*v + (1-b2)*g^2;
    theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    """
    state.t += 1
    bias1 = 1.0 - state.beta1 ** state.t
    bias2 = 1.0 - state.beta2 ** state.t
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape "
                             f"{theta.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        theta -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
