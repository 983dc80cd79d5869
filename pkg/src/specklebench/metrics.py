"""PSNR, windowed SSIM and slanted-edge MTF."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

PEAK = 255.0


class IdenticalImagesError(ValueError):
    """PSNR is unbounded for identical images."""


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB on the 0-255 scale, with a single MSE over all channels."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = (np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) * PEAK
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        raise IdenticalImagesError("identical images: PSNR is unbounded")
    return 10.0 * math.log10(PEAK * PEAK / mse)


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"SSIM window must be odd, got {self.window}")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


def ssim_map(x: np.ndarray, y: np.ndarray, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    """SSIM index of every valid (unpadded) window of a single 2-D channel.

    Inputs are on the [0, 1] scale and are rescaled by ``cfg.dynamic_range``.
    Window statistics are unweighted population moments.
    """
    n = cfg.window
    x = np.asarray(x, dtype=np.float64) * cfg.dynamic_range
    y = np.asarray(y, dtype=np.float64) * cfg.dynamic_range
    r = n // 2
    valid = (slice(r, x.shape[0] - r), slice(r, x.shape[1] - r))

    def mean(z):
        return uniform_filter(z, size=n, mode="constant")[valid]

    mx, my = mean(x), mean(y)
    vx = mean(x * x) - mx * mx
    vy = mean(y * y) - my * my
    cxy = mean(x * y) - mx * my
    num = (2 * mx * my + cfg.c1) * (2 * cxy + cfg.c2)
    den = (mx * mx + my * my + cfg.c1) * (vx + vy + cfg.c2)
    return num / den


def ssim(a: np.ndarray, b: np.ndarray, cfg: SsimConfig = SsimConfig()) -> float:
    """Mean SSIM over all valid windows, averaged uniformly over channels."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] < cfg.window or a.shape[1] < cfg.window:
        raise ValueError(f"image {a.shape[1]}x{a.shape[0]} is smaller than the {cfg.window}px window")
    if a.ndim == 2:
        return float(ssim_map(a, b, cfg).mean())
    return float(np.mean([ssim_map(a[..., c], b[..., c], cfg).mean() for c in range(a.shape[2])]))


# ---------------------------------------------------------------------------
# Slanted-edge MTF
# ---------------------------------------------------------------------------

@dataclass
class MtfCurve:
    frequencies: np.ndarray
    modulus: np.ndarray
    edge_angle_deg: float = float("nan")

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=np.float64)
        self.modulus = np.asarray(self.modulus, dtype=np.float64)
        if self.frequencies.shape != self.modulus.shape:
            raise ValueError("frequencies and modulus differ in length")
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("frequencies must be strictly ascending")


class EdgeDetectionError(ValueError):
    pass


def _to_plane(roi: np.ndarray, channel_mode: str | int) -> np.ndarray:
    roi = np.asarray(roi, dtype=np.float64)
    if roi.ndim == 2:
        return roi
    if channel_mode == "luminance":
        return roi[..., :3] @ np.array([0.299, 0.587, 0.114])
    return roi[..., int(channel_mode)]


def mtf_slanted_edge(
    roi: np.ndarray,
    channel_mode: str | int = "luminance",
    oversample: int = 4,
    max_frequency: float = 1.0,
    min_edge_energy: float = 1e-3,
) -> MtfCurve:
    """MTF from a near-vertical slanted edge spanning the full ROI height.

    Pipeline: per-row centroid of the horizontal derivative, least-squares
    line fit, projection of every pixel onto the edge normal, binning into
    an ``oversample``-times supersampled ESF, differentiation to the LSF,
    Hann window, FFT modulus normalised at zero frequency.
    """
    plane = _to_plane(roi, channel_mode)
    h, w = plane.shape
    if h < 4 or w < 8:
        raise EdgeDetectionError(f"ROI {w}x{h} too small")

    # orient so intensity rises left to right; the polarity flip is symmetric
    if plane[:, -w // 4:].mean() < plane[:, : w // 4].mean():
        plane = plane[:, ::-1]

    grad = np.zeros_like(plane)
    grad[:, 1:-1] = 0.5 * (plane[:, 2:] - plane[:, :-2])
    energy = grad.clip(min=0).sum(axis=1)
    if energy.min() < min_edge_energy:
        raise EdgeDetectionError("no detectable edge: derivative energy below threshold")
    cols = np.arange(w, dtype=np.float64)
    weights = grad.clip(min=0)
    centroids = (weights * cols).sum(axis=1) / energy
    rows = np.arange(h, dtype=np.float64)
    slope, intercept = np.polyfit(rows, centroids, 1)
    # refine: restrict each row's centroid to a window around the first fit
    half = max(4, w // 4)
    refined = np.empty(h)
    for r in range(h):
        c0 = slope * r + intercept
        m = np.abs(cols - c0) <= half
        wr = weights[r] * m
        refined[r] = (wr * cols).sum() / max(wr.sum(), 1e-300)
    slope, intercept = np.polyfit(rows, refined, 1)

    angle = math.degrees(math.atan(abs(slope)))
    if not 1.0 <= angle <= 15.0:
        raise EdgeDetectionError(f"edge angle {angle:.2f} deg outside [1, 15]")

    cos_t = 1.0 / math.sqrt(1.0 + slope * slope)
    yy, xx = np.mgrid[0:h, 0:w]
    dist = (xx - (slope * yy + intercept)) * cos_t
    binw = 1.0 / oversample
    idx = np.floor(dist / binw).astype(int)
    lo = idx.min()
    idx -= lo
    nbins = idx.max() + 1
    sums = np.bincount(idx.ravel(), weights=plane.ravel(), minlength=nbins)
    counts = np.bincount(idx.ravel(), minlength=nbins)
    filled = counts > 0
    centres = np.arange(nbins)
    esf = np.interp(centres, centres[filled], sums[filled] / counts[filled])

    lsf = np.zeros_like(esf)
    lsf[1:-1] = 0.5 * (esf[2:] - esf[:-2])
    peak = float((lsf.clip(min=0) * centres).sum() / max(lsf.clip(min=0).sum(), 1e-300))
    n = len(lsf)
    win = 0.5 + 0.5 * np.cos(np.pi * np.clip((centres - peak) / (n / 2), -1, 1))
    spectrum = np.abs(np.fft.rfft(lsf * win))
    if spectrum[0] <= 0:
        raise EdgeDetectionError("degenerate line spread function")
    freqs = np.fft.rfftfreq(n, d=binw)
    keep = freqs <= max_frequency + 1e-12
    modulus = spectrum[keep] / spectrum[0]
    return MtfCurve(freqs[keep], modulus, angle)


def mtf50(curve: MtfCurve) -> float:
    """Frequency of the first downward crossing of 0.5, linearly interpolated."""
    f, m = curve.frequencies, curve.modulus
    for i in range(len(m) - 1):
        if m[i] >= 0.5 > m[i + 1]:
            return float(f[i] + (m[i] - 0.5) / (m[i] - m[i + 1]) * (f[i + 1] - f[i]))
    raise ValueError("MTF curve never drops below 0.5")


def render_slanted_edge(
    size: int = 64, angle_deg: float = 5.0, blur_sigma: float = 0.0, low: float = 0.2, high: float = 0.8
) -> np.ndarray:
    """Synthetic near-vertical edge sampled at pixel centres, optionally Gaussian blurred."""
    from scipy.special import ndtr

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    t = math.tan(math.radians(angle_deg))
    cx = (size - 1) / 2.0
    d = (xx - (cx + t * (yy - (size - 1) / 2.0))) / math.sqrt(1.0 + t * t)
    if blur_sigma > 0:
        step = ndtr(d / blur_sigma)
    else:
        step = (d >= 0).astype(np.float64)
    plane = low + (high - low) * step
    return np.repeat(plane[..., None], 3, axis=2)
