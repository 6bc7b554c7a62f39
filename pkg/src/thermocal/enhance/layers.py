"""Numpy forward/backward primitives: 3x3 same convolution, pooling and
scaled dot-product attention."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InputError


def im2col3(x: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (C*9, H*W) patch matrix for a 3x3 kernel, stride 1, zero pad 1."""
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (C, H, W, 3, 3)
    return np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(c * 9, h * w)


def col2im3(cols: np.ndarray, shape) -> np.ndarray:
    c, h, w = shape
    cols = cols.reshape(c, 3, 3, h, w)
    xp = np.zeros((c, h + 2, w + 2))
    for di in range(3):
        for dj in range(3):
            xp[:, di:di + h, dj:dj + w] += cols[:, di, dj]
    return xp[:, 1:-1, 1:-1]


def conv3_forward(x, weight, bias):
    """Returns (output (O, H, W), patch matrix for the backward pass)."""
    o, c = weight.shape[:2]
    if x.shape[0] != c or weight.shape[2:] != (3, 3):
        raise InputError(f"conv weight {weight.shape} incompatible with input {x.shape}")
    cols = im2col3(x)
    out = weight.reshape(o, -1) @ cols + bias[:, None]
    return out.reshape(o, *x.shape[1:]), cols


def conv3_backward(grad_out, cols, weight, in_shape):
    o = weight.shape[0]
    g = grad_out.reshape(o, -1)
    dw = (g @ cols.T).reshape(weight.shape)
    db = g.sum(axis=1)
    dx = col2im3(weight.reshape(o, -1).T @ g, in_shape)
    return dx, dw, db


def avg_pool2(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def avg_pool2_backward(g: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25


def upsample_nearest(x: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(x, factor, axis=1), factor, axis=2)


def upsample_nearest_backward(g: np.ndarray, factor: int) -> np.ndarray:
    c, h, w = g.shape
    return g.reshape(c, h // factor, factor, w // factor, factor).sum(axis=(2, 4))


def softmax_rows(s: np.ndarray) -> np.ndarray:
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def scaled_dot_attention(q, k, v):
    """softmax(q k^T / sqrt(d_k)) v; returns (output, attention probabilities)."""
    q, k, v = (np.asarray(a, dtype=float) for a in (q, k, v))
    if k.shape[0] != v.shape[0]:
        raise InputError(f"key/value token counts differ: {k.shape[0]} vs {v.shape[0]}")
    if q.shape[1] != k.shape[1]:
        raise InputError(f"query/key widths differ: {q.shape[1]} vs {k.shape[1]}")
    probs = softmax_rows(q @ k.T / np.sqrt(q.shape[1]))
    return probs @ v, probs


def scaled_dot_attention_backward(grad_out, q, k, v, probs):
    scale = 1.0 / np.sqrt(q.shape[1])
    dv = probs.T @ grad_out
    dp = grad_out @ v.T
    ds = probs * (dp - np.sum(dp * probs, axis=1, keepdims=True))
    dq = ds @ k * scale
    dk = ds.T @ q * scale
    return dq, dk, dv
