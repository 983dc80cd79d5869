import numpy as np
from scipy.ndimage import median_filter as _median

from .config import Median


def median_filter(img: np.ndarray, cfg: Median = Median()) -> np.ndarray:
    """Per-channel sliding-window median, clamp-to-edge borders."""
    if cfg.kernel > min(img.shape[:2]):
        raise ValueError(f"kernel {cfg.kernel} larger than image {img.shape[1]}x{img.shape[0]}")
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[..., c] = _median(img[..., c], size=cfg.kernel, mode="nearest")
    return out
