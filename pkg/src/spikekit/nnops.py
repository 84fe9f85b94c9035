"""Small dense building blocks shared by the forward-path modules.

Everything here is plain numpy in float64 with deterministic evaluation
order; convolutions go through im2col + matmul so desk-scale forwards
stay fast without any framework dependency.
"""

from __future__ import annotations

import numpy as np

from .errors import PreconditionError


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=axis, keepdims=True)


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Row-wise affine map: x @ w (+ b). Shapes [..., d_in] x [d_in, d_out]."""
    if x.shape[-1] != w.shape[0]:
        raise PreconditionError(
            f"linear: input dim {x.shape[-1]} does not match weight {w.shape}")
    y = x @ w
    if b is not None:
        y = y + b
    return y


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None,
           stride: int = 1, padding: int = 1) -> np.ndarray:
    """2-D convolution (cross-correlation) of [C_in, H, W] with
    [C_out, C_in, kh, kw], zero padding."""
    if x.ndim != 3:
        raise PreconditionError(f"conv2d input must be 3-D, got {x.shape}")
    if kernel.ndim != 4 or kernel.shape[1] != x.shape[0]:
        raise PreconditionError(
            f"conv2d kernel {kernel.shape} does not match input {x.shape}")
    c_out, c_in, kh, kw = kernel.shape
    xp = np.pad(x.astype(np.float64, copy=False),
                ((0, 0), (padding, padding), (padding, padding)))
    if xp.shape[1] < kh or xp.shape[2] < kw:
        raise PreconditionError("conv2d input smaller than kernel")
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw),
                                                       axis=(1, 2))
    windows = windows[:, ::stride, ::stride]          # [C_in, H', W', kh, kw]
    _, h_out, w_out = windows.shape[:3]
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(h_out * w_out,
                                                    c_in * kh * kw)
    out = cols @ kernel.reshape(c_out, -1).T          # [H'*W', C_out]
    if bias is not None:
        out = out + bias
    return out.T.reshape(c_out, h_out, w_out)


def moving_average_same(x: np.ndarray, width: int) -> np.ndarray:
    """Centered moving average along axis 0 with same-length output.

    Edge windows shrink to the valid range and are normalized by the
    actual tap count, keeping the map linear in x.
    """
    if width < 1:
        raise PreconditionError("averaging width must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    if width == 1:
        return x.copy()
    t = x.shape[0]
    half_lo = (width - 1) // 2
    half_hi = width // 2
    out = np.empty_like(x)
    for i in range(t):
        lo = max(0, i - half_lo)
        hi = min(t, i + half_hi + 1)
        out[i] = x[lo:hi].sum(axis=0) / (hi - lo)
    return out


def he_init(rng: np.random.Generator, shape: tuple[int, ...],
            fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
