"""Procedural clean test scenes (stand-ins for incoherently lit images)."""

from __future__ import annotations

import numpy as np

from .speckle import SpeckleParams, apply_speckle, synthesize_field


def make_scene(size: int, rng: np.random.Generator) -> np.ndarray:
    """Piecewise-smooth RGB scene: shaded background, flat shapes and stripes."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = rng.uniform(0.25, 0.6, 3)
    tilt = rng.uniform(-0.15, 0.15, (2, 3))
    img = base + xx[..., None] * tilt[0] + yy[..., None] * tilt[1]

    for _ in range(rng.integers(3, 7)):
        colour = rng.uniform(0.1, 0.85, 3)
        kind = rng.integers(0, 3)
        cx, cy = rng.uniform(0.1, 0.9, 2)
        if kind == 0:
            rx, ry = rng.uniform(0.06, 0.25, 2)
            mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1
        elif kind == 1:
            hw, hh = rng.uniform(0.05, 0.2, 2)
            mask = (np.abs(xx - cx) <= hw) & (np.abs(yy - cy) <= hh)
        else:
            period = rng.uniform(0.04, 0.12)
            hw, hh = rng.uniform(0.08, 0.2, 2)
            box = (np.abs(xx - cx) <= hw) & (np.abs(yy - cy) <= hh)
            mask = box & (np.mod(xx - cx, period) < period / 2)
        img[mask] = colour
    return np.clip(img, 0.0, 1.0)


def make_scenes(n: int, size: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [make_scene(size, rng) for _ in range(n)]


def speckled_pairs(
    clean: list[np.ndarray], grain: float, contrast: float, seed: int, shared_field: bool = False
) -> list[tuple[np.ndarray, np.ndarray]]:
    """(speckled, clean) pairs with per-image seeds derived from ``seed``."""
    out = []
    for i, img in enumerate(clean):
        h, w = img.shape[:2]
        params = SpeckleParams(grain, contrast, not shared_field, seed * 100003 + i)
        out.append((apply_speckle(img, synthesize_field(w, h, params)), img))
    return out
