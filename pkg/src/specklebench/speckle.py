"""Multiplicative laser-speckle forward model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter


@dataclass(frozen=True)
class SpeckleParams:
    grain_size: float = 2.0
    contrast: float = 1.0
    per_channel_independent: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.grain_size > 0:
            raise ValueError(f"grain_size must be > 0, got {self.grain_size}")
        if not 0.0 <= self.contrast <= 1.0:
            raise ValueError(f"contrast must lie in [0, 1], got {self.contrast}")


def _fully_developed(h: int, w: int, grain: float, rng: np.random.Generator) -> np.ndarray:
    re = gaussian_filter(rng.standard_normal((h, w)), grain, mode="wrap")
    im = gaussian_filter(rng.standard_normal((h, w)), grain, mode="wrap")
    s = re * re + im * im
    return s / s.mean()


def synthesize_field(w: int, h: int, params: SpeckleParams) -> np.ndarray:
    """Return an ``(h, w, 3)`` array of non-negative multiplicative factors.

    A circular complex Gaussian field is low-pass filtered (Gaussian, std
    ``grain_size``) and its squared modulus normalised to mean 1, giving fully
    developed speckle. ``contrast`` blends it with a constant field:
    ``(1 - contrast) + contrast * S``.
    """
    if w < 16 or h < 16:
        raise ValueError(f"field must be at least 16x16, got {w}x{h}")
    # one child stream per channel so results do not depend on evaluation order
    children = np.random.SeedSequence(params.seed).spawn(3)
    if params.per_channel_independent:
        layers = [_fully_developed(h, w, params.grain_size, np.random.default_rng(c)) for c in children]
    else:
        shared = _fully_developed(h, w, params.grain_size, np.random.default_rng(children[0]))
        layers = [shared] * 3
    field = np.stack(layers, axis=-1)
    if params.contrast == 0.0:
        return np.ones_like(field)
    return (1.0 - params.contrast) + params.contrast * field


def apply_speckle(img: np.ndarray, field: np.ndarray) -> np.ndarray:
    if img.shape != field.shape:
        raise ValueError(f"image {img.shape} and field {field.shape} differ in shape")
    return np.clip(img * field, 0.0, 1.0)


def speckle_contrast(img: np.ndarray, channel: int = 0) -> float:
    """Population std / mean of one channel."""
    x = np.asarray(img)[..., channel] if np.ndim(img) == 3 else np.asarray(img)
    if x.size == 0:
        raise ValueError("empty channel")
    mu = x.mean()
    if mu == 0:
        raise ValueError("channel mean is zero; speckle contrast undefined")
    return float(x.std() / mu)
