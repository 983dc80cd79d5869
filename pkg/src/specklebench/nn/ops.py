"""Differentiable layers and losses on :class:`Tensor` values."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation with zero padding. ``x``: (N, C, H, W); ``w``: (O, C, kh, kw)."""
    N, C, H, W = x.shape
    O, Cw, kh, kw = w.shape
    if C != Cw:
        raise ValueError(f"channel axis mismatch: input has C={C}, weight expects C={Cw}")
    if b is not None and b.shape != (O,):
        raise ValueError(f"bias shape {b.shape} does not match out-channels O={O}")
    if H + 2 * pad < kh or W + 2 * pad < kw:
        raise ValueError(f"spatial axes H={H}, W={W} (pad {pad}) smaller than kernel {kh}x{kw}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(N * Ho * Wo, C * kh * kw)
    wmat = w.data.reshape(O, -1)
    out = cols @ wmat.T
    if b is not None:
        out += b.data
    parents = (x, w) if b is None else (x, w, b)
    res = Tensor(out.reshape(N, Ho, Wo, O).transpose(0, 3, 1, 2), _parents=parents)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(N * Ho * Wo, O)
        if w.requires_grad:
            w._accumulate((g2.T @ cols).reshape(w.shape))
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            # col2im: scatter-add each kernel tap back onto the padded input
            dcols = np.ascontiguousarray(
                (g2 @ wmat).reshape(N, Ho, Wo, C, kh, kw).transpose(4, 5, 0, 3, 1, 2))
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += dcols[i, j]
            x._accumulate(dxp[:, :, pad:pad + H, pad:pad + W] if pad else dxp)

    res._backward = backward
    return res


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    out = Tensor(x.data.repeat(factor, axis=2).repeat(factor, axis=3), _parents=(x,))
    N, C, H, W = x.shape

    def backward(g):
        x._accumulate(g.reshape(N, C, H, factor, W, factor).sum(axis=(3, 5)))

    out._backward = backward
    return out


def concat(xs: list[Tensor], axis: int = 1) -> Tensor:
    out = Tensor(np.concatenate([t.data for t in xs], axis=axis), _parents=tuple(xs))
    bounds = np.cumsum([0] + [t.shape[axis] for t in xs])

    def backward(g):
        for t, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    out._backward = backward
    return out


LEAKY_SLOPE = 0.2


def pointwise(x: Tensor, kind: str, alpha: float = LEAKY_SLOPE) -> Tensor:
    """Elementwise ``leaky_relu``, ``relu``, ``tanh`` or ``sigmoid``."""
    d = x.data
    if kind == "leaky_relu":
        y = np.where(d > 0, d, alpha * d)
        deriv = lambda: np.where(d > 0, 1.0, alpha).astype(d.dtype)  # noqa: E731
    elif kind == "relu":
        y = np.maximum(d, 0)
        deriv = lambda: (d > 0).astype(d.dtype)  # noqa: E731
    elif kind == "tanh":
        y = np.tanh(d)
        deriv = lambda: 1.0 - y * y  # noqa: E731
    elif kind == "sigmoid":
        y = _sigmoid(d)
        deriv = lambda: y * (1.0 - y)  # noqa: E731
    else:
        raise ValueError(f"unknown pointwise kind {kind!r}")
    out = Tensor(y, _parents=(x,))
    out._backward = lambda g: x._accumulate(g * deriv())
    return out


def leaky_relu(x, alpha=LEAKY_SLOPE):
    return pointwise(x, "leaky_relu", alpha)


def relu(x):
    return pointwise(x, "relu")


def tanh(x):
    return pointwise(x, "tanh")


def sigmoid(x):
    return pointwise(x, "sigmoid")


def _sigmoid(d):
    e = np.exp(-np.abs(d))
    return np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error; the subgradient at exact ties is 0."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if pred.shape != t.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {t.shape}")
    diff = pred.data - t
    out = Tensor(np.mean(np.abs(diff)), _parents=(pred,))
    out._backward = lambda g: pred._accumulate(g * np.sign(diff) / diff.size)
    return out


def mse_loss(pred: Tensor, target) -> Tensor:
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if pred.shape != t.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {t.shape}")
    diff = pred.data - t
    out = Tensor(np.mean(diff * diff), _parents=(pred,))
    out._backward = lambda g: pred._accumulate(g * 2.0 * diff / diff.size)
    return out


def gan_bce_loss(logits: Tensor, is_real_target: bool) -> Tensor:
    """Mean sigmoid cross-entropy against all-ones or all-zeros labels."""
    x = logits.data
    z = 1.0 if is_real_target else 0.0
    # max(x, 0) - x z + log(1 + exp(-|x|))
    val = np.maximum(x, 0) - x * z + np.log1p(np.exp(-np.abs(x)))
    out = Tensor(np.mean(val), _parents=(logits,))
    out._backward = lambda g: logits._accumulate(g * (_sigmoid(x) - z) / x.size)
    return out


def lsgan_loss(logits: Tensor, is_real_target: bool) -> Tensor:
    return mse_loss(logits, np.full(logits.shape, 1.0 if is_real_target else 0.0, dtype=logits.dtype))
