"""Array-level layer primitives with explicit forward/backward pairs.

Everything operates on a single example (no batch axis); batching is done by
the training loop, which accumulates gradients across examples. All functions
are dtype-generic: float32 for training/inference, float64 for gradient
checking.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def leaky_relu_grad(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, 1.0, slope).astype(x.dtype)


def im2col3x3(x: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (C*9, H*W) patch matrix for a 3x3 same-padded convolution."""
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    view = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    return np.ascontiguousarray(view.transpose(0, 3, 4, 1, 2)).reshape(c * 9, h * w)


def col2im3x3(dcols: np.ndarray, x_shape: tuple) -> np.ndarray:
    """Adjoint of im2col3x3: scatter-add patch gradients back to (C, H, W)."""
    c, h, w = x_shape
    d = dcols.reshape(c, 3, 3, h, w)
    dxp = np.zeros((c, h + 2, w + 2), dtype=dcols.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i:i + h, j:j + w] += d[:, i, j]
    return dxp[:, 1:h + 1, 1:w + 1]


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """3x3 convolution with same zero-padding. w: (O, C, 3, 3), b: (O,)."""
    o = w.shape[0]
    _, h, width = x.shape
    cols = im2col3x3(x)
    y = (w.reshape(o, -1) @ cols + b[:, None]).reshape(o, h, width)
    return y, cols


def conv3x3_backward(dy: np.ndarray, w: np.ndarray, cols: np.ndarray, x_shape: tuple):
    o = w.shape[0]
    dyf = dy.reshape(o, -1)
    dw = (dyf @ cols.T).reshape(w.shape)
    db = dyf.sum(axis=1)
    dcols = w.reshape(o, -1).T @ dyf
    dx = col2im3x3(dcols, x_shape)
    return dx, dw, db


def maxpool2x2_forward(x: np.ndarray):
    """2x2 max pooling with stride 2 and floor division of odd dims."""
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    windows = (
        x[:, : h2 * 2, : w2 * 2]
        .reshape(c, h2, 2, w2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, h2, w2, 4)
    )
    idx = windows.argmax(axis=3)
    y = np.take_along_axis(windows, idx[..., None], axis=3)[..., 0]
    return y, idx


def maxpool2x2_backward(dy: np.ndarray, idx: np.ndarray, x_shape: tuple) -> np.ndarray:
    c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    dwin = np.zeros((c, h2, w2, 4), dtype=dy.dtype)
    np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=3)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    dx[:, : h2 * 2, : w2 * 2] = (
        dwin.reshape(c, h2, w2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h2 * 2, w2 * 2)
    )
    return dx


def dropout_mask(shape: tuple, p: float, rng: np.random.Generator, dtype) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability p, survivors scaled by 1/(1-p)."""
    keep = rng.random(shape) >= p
    return keep.astype(dtype) / dtype.type(1.0 - p)


def max_over_axis_forward(x: np.ndarray, axis: int):
    idx = x.argmax(axis=axis)
    y = np.take_along_axis(x, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
    return y, idx


def max_over_axis_backward(dy: np.ndarray, idx: np.ndarray, x_shape: tuple, axis: int) -> np.ndarray:
    dx = np.zeros(x_shape, dtype=dy.dtype)
    np.put_along_axis(dx, np.expand_dims(idx, axis), np.expand_dims(dy, axis), axis=axis)
    return dx


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return w @ x + b


def dense_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    dw = np.outer(dy, x)
    db = dy
    dx = w.T @ dy
    return dx, dw, db
