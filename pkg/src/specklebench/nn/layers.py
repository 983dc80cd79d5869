"""Trainable convolution layers with optional spectral normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import conv2d
from .tensor import Tensor

SN_EPS = 1e-12


@dataclass
class SpectralNormState:
    u: np.ndarray
    n_power_iterations: int = 1

    @classmethod
    def init(cls, out_features: int, rng: np.random.Generator, n_power_iterations: int = 1, dtype=np.float32):
        u = rng.standard_normal(out_features)
        return cls((u / np.linalg.norm(u)).astype(dtype), n_power_iterations)


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / (np.linalg.norm(v) + SN_EPS)


def spectral_normalize(w: Tensor, state: SpectralNormState, update: bool = True) -> Tensor:
    """``w / sigma`` with ``sigma = u^T W v`` from power iteration on the
    ``(out, rest)`` matrix view. ``u`` persists in ``state``; the raw weight
    is not modified. With ``update=False`` the stored ``u`` is used as is."""
    W = w.data.reshape(w.shape[0], -1)
    u = state.u
    v = _normalize(W.T @ u)
    if update:
        for _ in range(state.n_power_iterations):
            v = _normalize(W.T @ u)
            u = _normalize(W @ v)
        state.u = u.astype(state.u.dtype)
    sigma = max(float(u @ W @ v), SN_EPS)
    out = Tensor((w.data / sigma).astype(w.dtype), _parents=(w,))
    uv = np.outer(u, v).reshape(w.shape)

    def backward(g):
        # d(W/sigma)/dW with u, v held fixed
        w._accumulate((g - np.sum(g * out.data) * uv) / sigma)

    out._backward = backward
    return out


def sigma_estimate(w: np.ndarray, state: SpectralNormState) -> float:
    W = w.reshape(w.shape[0], -1)
    v = _normalize(W.T @ state.u)
    return float(state.u @ W @ v)


class Conv:
    """A named conv layer: weight (O, C, k, k), bias (O,), optional spectral norm."""

    def __init__(
        self,
        name: str,
        in_ch: int,
        out_ch: int,
        kernel: int,
        stride: int = 1,
        pad: int = 0,
        spectral: bool = False,
        rng: np.random.Generator | None = None,
        dtype=np.float32,
    ):
        rng = rng or np.random.default_rng(0)
        self.name = name
        self.stride = stride
        self.pad = pad
        self.kernel = kernel
        self.weight = Tensor(
            (rng.standard_normal((out_ch, in_ch, kernel, kernel)) * 0.02).astype(dtype),
            requires_grad=True, name=f"{name}.weight",
        )
        self.bias = Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True, name=f"{name}.bias")
        self.spectral = SpectralNormState.init(out_ch, rng, dtype=dtype) if spectral else None

    def effective_weight(self, update_sn: bool = True) -> Tensor:
        if self.spectral is None:
            return self.weight
        return spectral_normalize(self.weight, self.spectral, update=update_sn)

    def __call__(self, x: Tensor, update_sn: bool = True) -> Tensor:
        return conv2d(x, self.effective_weight(update_sn), self.bias, self.stride, self.pad)

    def parameters(self):
        return [self.weight, self.bias]

    def n_params(self) -> int:
        return self.weight.data.size + self.bias.data.size
