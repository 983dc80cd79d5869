"""Image I/O, resizing, histogram matching and paired dataset handling."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from . import DataError

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class ImageDecodeError(DataError):
    pass


@dataclass(frozen=True)
class PairedSample:
    input: np.ndarray
    target: np.ndarray
    group_id: str
    name: str = ""

    def __post_init__(self):
        if self.input.shape != self.target.shape:
            raise ValueError(
                f"input {self.input.shape} and target {self.target.shape} differ in shape"
            )


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    group_id: str
    split: str


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def load_image(path) -> np.ndarray:
    """Read an 8-bit RGB PNG/JPEG into an ``(H, W, 3)`` float array in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise ImageDecodeError(f"{path}: no such file")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            bands = im.getbands()
            if mode in ("I", "I;16", "I;16B", "I;16L", "F", "1"):
                raise ImageDecodeError(f"{path}: unsupported bit depth (mode {mode!r}), need 8-bit")
            if len(bands) != 3 or mode not in ("RGB", "YCbCr"):
                raise ImageDecodeError(
                    f"{path}: unsupported channel count {len(bands)} (mode {mode!r}), need 3 (RGB)"
                )
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except ImageDecodeError:
        raise
    except OSError as exc:
        raise ImageDecodeError(f"{path}: cannot decode image ({exc})") from exc
    return arr.astype(np.float64) / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and quantize round-half-up to 8 bits."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(img: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def cubic_kernel(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel; ``a = -0.5`` is Catmull-Rom."""
    x = np.abs(x)
    out = np.zeros_like(x)
    near = x <= 1
    far = (x > 1) & (x < 2)
    out[near] = (a + 2) * x[near] ** 3 - (a + 3) * x[near] ** 2 + 1
    out[far] = a * x[far] ** 3 - 5 * a * x[far] ** 2 + 8 * a * x[far] - 4 * a
    return out


def _resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    # pixel-centre alignment, clamp-to-edge indices
    centres = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(centres).astype(int)
    mat = np.zeros((n_out, n_in))
    for tap in range(-1, 3):
        idx = base + tap
        w = cubic_kernel(centres - idx)
        np.add.at(mat, (np.arange(n_out), np.clip(idx, 0, n_in - 1)), w)
    return mat


def resize_bicubic(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Separable Catmull-Rom resize with edge clamping; output clamped to [0, 1]."""
    if out_w < 4 or out_h < 4:
        raise ValueError(f"output size {out_w}x{out_h} is below the 4-pixel kernel support")
    h, w = img.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("empty image")
    rows = _resample_matrix(h, out_h)
    cols = _resample_matrix(w, out_w)
    out = np.einsum("ij,jkc,lk->ilc", rows, img, cols, optimize=True)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Histogram matching
# ---------------------------------------------------------------------------

def _bins(channel: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(channel * 255.0 + 0.5), 0, 255).astype(np.int64)


def histogram_match(src: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Per-channel 256-bin CDF matching of ``src`` onto ``ref``.

    Each source bin maps to the smallest reference bin whose CDF reaches the
    source CDF. The output level for a reference bin is the mean of the
    reference values that fell in it, so 8-bit data maps onto exact values.
    """
    if src.shape[2] != ref.shape[2]:
        raise ValueError(f"channel count mismatch: {src.shape[2]} vs {ref.shape[2]}")
    out = np.empty_like(src, dtype=np.float64)
    for c in range(src.shape[2]):
        sb = _bins(src[..., c]).ravel()
        rvals = ref[..., c].ravel()
        rb = _bins(rvals)
        s_cum = np.cumsum(np.bincount(sb, minlength=256))
        r_count = np.bincount(rb, minlength=256)
        r_cum = np.cumsum(r_count)
        n_s, n_r = s_cum[-1], r_cum[-1]
        # smallest j with r_cum[j]/n_r >= s_cum[b]/n_s, in exact integer form
        lut = np.searchsorted(r_cum * n_s, s_cum * n_r, side="left")
        lut = np.minimum(lut, 255)
        level = np.bincount(rb, weights=rvals, minlength=256)
        level = np.divide(level, r_count, out=np.arange(256) / 255.0, where=r_count > 0)
        # single-valued bins take that value exactly (a float mean can be off by an ulp)
        lo = np.full(256, np.inf)
        hi = np.full(256, -np.inf)
        np.minimum.at(lo, rb, rvals)
        np.maximum.at(hi, rb, rvals)
        level = np.where(lo == hi, lo, level)
        out[..., c] = level[lut][sb].reshape(src.shape[:2])
    return out


# ---------------------------------------------------------------------------
# Paired format
# ---------------------------------------------------------------------------

def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def pair_side_by_side(input: np.ndarray, target: np.ndarray, allow_any_size: bool = False) -> np.ndarray:
    """Concatenate speckled input (left) and ground truth (right)."""
    if input.shape != target.shape:
        raise ValueError(f"dimension mismatch: {input.shape} vs {target.shape}")
    h, w = input.shape[:2]
    if not allow_any_size and (h != w or not _is_pow2(w)):
        raise ValueError(f"each image must be square with power-of-two side, got {w}x{h}")
    return np.concatenate([input, target], axis=1)


def unpair(paired: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = paired.shape[1]
    if w % 2:
        raise ValueError(f"paired image width {w} is odd")
    half = w // 2
    return paired[:, :half].copy(), paired[:, half:].copy()


def group_of(path) -> str:
    """Group id of a paired file: the stem up to the first underscore."""
    return Path(path).stem.split("_", 1)[0]


def load_pairs(directory, paths: Iterable[Path] | None = None) -> list[PairedSample]:
    paths = list(paths) if paths is not None else list_images(directory)
    samples = []
    for p in paths:
        a, b = unpair(load_image(p))
        samples.append(PairedSample(a, b, group_of(p), Path(p).name))
    return samples


# ---------------------------------------------------------------------------
# Splitting and jitter
# ---------------------------------------------------------------------------

def split_by_group(
    samples: Sequence, test_fraction: float, seed: int, paths: Sequence[str] | None = None
) -> list[ManifestEntry]:
    """Hold out whole groups for testing.

    ``samples`` holds group ids, or objects with a ``group_id`` attribute
    (e.g. :class:`PairedSample`). Groups are shuffled with a seeded RNG and
    moved to the test split until the test image count first reaches
    ``test_fraction * len(samples)``. At least one group always stays in train.
    """
    groups = [getattr(s, "group_id", s) for s in samples]
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    distinct = sorted(set(groups))
    if len(distinct) < 2:
        raise ValueError("need at least 2 distinct groups to hold one out")
    if paths is None:
        paths = [getattr(s, "name", "") or str(i) for i, s in enumerate(samples)]
    counts = {g: 0 for g in distinct}
    for g in groups:
        counts[g] += 1
    order = np.random.default_rng(seed).permutation(len(distinct))
    need = test_fraction * len(groups)
    test_groups: set[str] = set()
    n_test = 0
    for k in order[:-1]:
        if n_test >= need:
            break
        test_groups.add(distinct[k])
        n_test += counts[distinct[k]]
    return [
        ManifestEntry(str(p), g, "test" if g in test_groups else "train")
        for p, g in zip(paths, groups)
    ]


def write_manifest(entries: Sequence[ManifestEntry], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "group_id", "split"])
        for e in entries:
            writer.writerow([e.path, e.group_id, e.split])


def read_manifest(path) -> list[ManifestEntry]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["path", "group_id", "split"]:
            raise DataError(f"{path}: manifest header must be path,group_id,split")
        return [ManifestEntry(r["path"], r["group_id"], r["split"]) for r in reader]


def random_crop_pair(sample: PairedSample, fine_size: int, rng: np.random.Generator) -> PairedSample:
    h, w = sample.input.shape[:2]
    if fine_size > min(h, w):
        raise ValueError(f"fine_size {fine_size} exceeds image size {w}x{h}")
    y = int(rng.integers(0, h - fine_size + 1))
    x = int(rng.integers(0, w - fine_size + 1))
    sl = (slice(y, y + fine_size), slice(x, x + fine_size))
    return PairedSample(sample.input[sl], sample.target[sl], sample.group_id, sample.name)
