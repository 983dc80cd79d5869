"""Non-local means (pixelwise, colour patches)."""

import numpy as np
from scipy.ndimage import uniform_filter

from .config import Nlm


def _padded(img: np.ndarray, cfg: Nlm):
    side = cfg.patch_side
    offs = cfg.window_offsets
    pr = side // 2
    margin = pr + max(abs(offs.start), abs(offs.stop - 1))
    return np.pad(img, ((margin, margin), (margin, margin), (0, 0)), mode="reflect"), margin, pr


def _distance(pad: np.ndarray, margin: int, pr: int, side: int, h: int, w: int, dy: int, dx: int):
    """Mean squared patch distance between every pixel and its (dy, dx) neighbour."""
    ext = (slice(margin - pr, margin + h + pr), slice(margin - pr, margin + w + pr))
    sh = (slice(margin - pr + dy, margin + h + pr + dy), slice(margin - pr + dx, margin + w + pr + dx))
    d2 = ((pad[ext] - pad[sh]) ** 2).mean(axis=2)
    return uniform_filter(d2, size=side, mode="constant")[pr:pr + h, pr:pr + w]


def nlm_denoise(img: np.ndarray, cfg: Nlm = Nlm(), sigma: float = 0.0) -> np.ndarray:
    """Weighted average over the search window with weights
    ``exp(-max(d2 - 2 sigma^2, 0) / h^2)``, ``d2`` the patch mean-squared distance.
    """
    h, w = img.shape[:2]
    pad, margin, pr = _padded(np.asarray(img, dtype=np.float64), cfg)
    side = cfg.patch_side
    h2 = cfg.strength_h ** 2
    num = np.zeros((h, w, img.shape[2]))
    den = np.zeros((h, w))
    for dy in cfg.window_offsets:
        for dx in cfg.window_offsets:
            d2 = _distance(pad, margin, pr, side, h, w, dy, dx)
            wgt = np.exp(-np.maximum(d2 - 2.0 * sigma * sigma, 0.0) / h2)
            num += wgt[..., None] * pad[margin + dy:margin + dy + h, margin + dx:margin + dx + w]
            den += wgt
    return np.clip(num / den[..., None], 0.0, 1.0)


def nlm_weights(img: np.ndarray, cfg: Nlm, y: int, x: int, sigma: float = 0.0) -> np.ndarray:
    """Normalised weights used for pixel ``(y, x)``, indexed by window offset."""
    h, w = img.shape[:2]
    pad, margin, pr = _padded(np.asarray(img, dtype=np.float64), cfg)
    offs = list(cfg.window_offsets)
    raw = np.empty((len(offs), len(offs)))
    for i, dy in enumerate(offs):
        for j, dx in enumerate(offs):
            d2 = _distance(pad, margin, pr, cfg.patch_side, h, w, dy, dx)[y, x]
            raw[i, j] = np.exp(-max(d2 - 2.0 * sigma * sigma, 0.0) / cfg.strength_h ** 2)
    return raw / raw.sum()
