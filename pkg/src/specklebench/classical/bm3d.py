"""Colour BM3D: block matching on luminance, collaborative hard thresholding,
then collaborative Wiener filtering with the first-stage result as pilot."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct

from .config import Cbm3d

# opponent colour transform; row norms rescale sigma per channel
OPP = np.array([[1 / 3, 1 / 3, 1 / 3], [1 / 2, 0.0, -1 / 2], [1 / 4, -1 / 2, 1 / 4]])
OPP_INV = np.linalg.inv(OPP)


@dataclass(frozen=True)
class StageParams:
    block: int = 8
    step: int = 3
    max_group: int = 16
    search: int = 39
    tau_match: float = 2500.0  # mean squared luminance distance, 0-255 scale
    lambda_3d: float = 2.7
    kaiser_beta: float = 2.0


def stage_params(sigma255: float) -> tuple[StageParams, StageParams]:
    high = sigma255 > 40
    return (
        StageParams(tau_match=5000.0 if high else 2500.0),
        StageParams(tau_match=3500.0 if high else 400.0),
    )


def _dct_matrix(n: int) -> np.ndarray:
    return dct(np.eye(n), axis=0, norm="ortho")


def _haar_matrix(n: int) -> np.ndarray:
    """Orthonormal Haar transform for power-of-two ``n`` (rows = basis)."""
    h = np.ones((1, 1))
    while h.shape[0] < n:
        m = h.shape[0]
        top = np.kron(h, [1.0, 1.0])
        bottom = np.kron(np.eye(m), [1.0, -1.0])
        h = np.vstack([top, bottom]) / np.sqrt(2.0)
    return h


def _ref_positions(size: int, block: int, step: int) -> np.ndarray:
    pos = list(range(0, size - block + 1, step))
    if pos[-1] != size - block:
        pos.append(size - block)
    return np.array(pos)


def _box_sums(a: np.ndarray, n: int) -> np.ndarray:
    c = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    c[1:, 1:] = a.cumsum(0).cumsum(1)
    return c[n:, n:] - c[:-n, n:] - c[n:, :-n] + c[:-n, :-n]


def block_match(lum: np.ndarray, p: StageParams) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Group similar blocks for every reference block.

    Returns reference rows/cols ``(n,)`` and matched rows/cols ``(n, max_group)``
    plus group sizes ``(n,)`` (powers of two; unused slots repeat the reference).
    """
    H, W = lum.shape
    n = p.block
    ry = _ref_positions(H, n, p.step)
    rx = _ref_positions(W, n, p.step)
    RY, RX = [a.ravel() for a in np.meshgrid(ry, rx, indexing="ij")]
    half = p.search // 2
    offsets = [(dy, dx) for dy in range(-half, half + 1) for dx in range(-half, half + 1)]
    dist = np.full((RY.size, len(offsets)), np.inf)
    for k, (dy, dx) in enumerate(offsets):
        y0, y1 = max(0, -dy), min(H, H - dy)
        x0, x1 = max(0, -dx), min(W, W - dx)
        if y1 - y0 < n or x1 - x0 < n:
            continue
        d = lum[y0:y1, x0:x1] - lum[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
        sums = _box_sums(d * d, n)  # top-left positions y0..y1-n
        ok = (RY >= y0) & (RY <= y1 - n) & (RX >= x0) & (RX <= x1 - n)
        dist[ok, k] = sums[RY[ok] - y0, RX[ok] - x0] / (n * n)

    # the reference block always leads its own group
    dist[:, offsets.index((0, 0))] = -1.0
    g = min(p.max_group, len(offsets))
    part = np.argpartition(dist, g - 1, axis=1)[:, :g]
    pd = np.take_along_axis(dist, part, axis=1)
    order = np.argsort(pd, axis=1, kind="stable")
    part = np.take_along_axis(part, order, axis=1)
    pd = np.take_along_axis(pd, order, axis=1)
    tau = p.tau_match / 255.0 ** 2
    count = np.maximum((pd <= tau).sum(axis=1), 1)
    size = 2 ** np.floor(np.log2(count)).astype(int)
    off = np.asarray(offsets)[part]
    my = RY[:, None] + off[..., 0]
    mx = RX[:, None] + off[..., 1]
    unused = np.arange(g)[None, :] >= size[:, None]
    my[unused] = np.broadcast_to(RY[:, None], my.shape)[unused]
    mx[unused] = np.broadcast_to(RX[:, None], mx.shape)[unused]
    return RY, RX, np.stack([my, mx], axis=-1), size


def _forward(blocks: np.ndarray, C: np.ndarray, Hr: np.ndarray) -> np.ndarray:
    # blocks: (m, g, ch, n, n)
    t = np.einsum("ab,mgcbd,ed->mgcae", C, blocks, C, optimize=True)
    return np.einsum("hg,mgcae->mhcae", Hr, t, optimize=True)


def _inverse(coefs: np.ndarray, C: np.ndarray, Hr: np.ndarray) -> np.ndarray:
    t = np.einsum("hg,mhcae->mgcae", Hr, coefs, optimize=True)
    return np.einsum("ab,mgcae,ed->mgcbd", C, t, C, optimize=True)


def _stage(noisy: np.ndarray, pilot: np.ndarray | None, sig: np.ndarray, p: StageParams, chunk: int = 512):
    H, W, ch = noisy.shape
    n = p.block
    guide = noisy if pilot is None else pilot
    RY, RX, match, size = block_match(guide[..., 0], p)
    C = _dct_matrix(n)
    kaiser = np.outer(np.kaiser(n, p.kaiser_beta), np.kaiser(n, p.kaiser_beta))
    win_noisy = sliding_window_view(noisy, (n, n), axis=(0, 1))  # (H-n+1, W-n+1, ch, n, n)
    win_pilot = None if pilot is None else sliding_window_view(pilot, (n, n), axis=(0, 1))
    num = np.zeros((ch, H * W))
    den = np.zeros(H * W)
    aa, bb = np.mgrid[0:n, 0:n]
    thr = (p.lambda_3d * sig)[None, None, :, None, None]
    for gs in np.unique(size):
        Hr = _haar_matrix(int(gs))
        refs = np.nonzero(size == gs)[0]
        for s in range(0, refs.size, chunk):
            r = refs[s:s + chunk]
            my = match[r, :gs, 0]
            mx = match[r, :gs, 1]
            Z = _forward(win_noisy[my, mx], C, Hr)
            if pilot is None:
                keep = np.abs(Z) >= thr
                keep[:, 0, :, 0, 0] = True  # group DC is never thresholded
                est = np.where(keep, Z, 0.0)
                wgt = 1.0 / np.maximum(keep.sum(axis=(1, 2, 3, 4)), 1)
            else:
                P = _forward(win_pilot[my, mx], C, Hr)
                P2 = P * P
                shrink = P2 / (P2 + (sig * sig)[None, None, :, None, None])
                shrink[:, 0, :, 0, 0] = 1.0
                est = shrink * Z
                wgt = 1.0 / np.maximum((shrink * shrink).sum(axis=(1, 2, 3, 4)), 1e-12)
            blocks = _inverse(est, C, Hr)  # (m, g, ch, n, n)
            flat = ((my[..., None, None] + aa) * W + (mx[..., None, None] + bb)).ravel()
            w = np.broadcast_to(wgt[:, None, None, None] * kaiser, (r.size, gs, n, n)).ravel()
            den += np.bincount(flat, weights=w, minlength=H * W)
            for c in range(ch):
                num[c] += np.bincount(flat, weights=w * blocks[:, :, c].ravel(), minlength=H * W)
    out = (num / den).T.reshape(H, W, ch)
    return out, den.reshape(H, W)


def cbm3d_denoise(img: np.ndarray, cfg: Cbm3d = Cbm3d(), return_info: bool = False):
    """Two-stage colour BM3D. ``cfg.sigma`` is on the 0-255 scale."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape[0] < 8 or img.shape[1] < 8:
        raise ValueError("image must be at least 8x8")
    sigma = cfg.sigma / 255.0
    sig = sigma * np.linalg.norm(OPP, axis=1)
    p1, p2 = stage_params(cfg.sigma)
    yuv = img @ OPP.T
    basic, w1 = _stage(yuv, None, sig, p1)
    final, w2 = _stage(yuv, basic, sig, p2)
    out = np.clip(final @ OPP_INV.T, 0.0, 1.0)
    if return_info:
        return out, {"basic": np.clip(basic @ OPP_INV.T, 0, 1), "stage1_weights": w1, "stage2_weights": w2}
    return out
