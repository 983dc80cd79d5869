"""K-SVD dictionary denoising with batched orthogonal matching pursuit."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .config import Ksvd

log = logging.getLogger(__name__)

OMP_TOL_FACTOR = 1.15
_RIDGE = 1e-12
_CHUNK = 4096


def _odct_1d(n: int, m: int) -> np.ndarray:
    d = np.cos(np.outer(np.arange(n), np.arange(m)) * np.pi / m)
    d[:, 1:] -= d[:, 1:].mean(axis=0)
    norms = np.linalg.norm(d, axis=0)
    norms[norms == 0] = 1.0
    return d / norms


def overcomplete_dct(block: tuple, dict_size: int) -> np.ndarray:
    """Separable overcomplete DCT dictionary, ``(volume, dict_size)``, unit-norm
    columns ordered by total frequency with the DC atom first."""
    dims = np.asarray(block, dtype=np.float64)
    scale = (dict_size / dims.prod()) ** (1.0 / len(dims))
    counts = [max(1, int(np.ceil(n * scale))) for n in dims]
    while np.prod(counts) < dict_size:
        counts[int(np.argmin(np.array(counts) / dims))] += 1
    axes = [_odct_1d(int(n), m) for n, m in zip(block, counts)]
    full = np.einsum("ai,bj,ck->abcijk", *axes).reshape(int(dims.prod()), -1)
    freq = sum(
        np.meshgrid(*[np.arange(m) / m for m in counts], indexing="ij")
    ).ravel()
    order = np.argsort(freq, kind="stable")[:dict_size]
    atoms = full[:, order]
    return atoms / np.linalg.norm(atoms, axis=0)


@dataclass
class SparseCodes:
    """Row ``i`` holds the atom indices (``-1`` = unused) and coefficients of signal ``i``."""

    index: np.ndarray
    coef: np.ndarray
    residual_norms: np.ndarray | None = None

    def reconstruct(self, D: np.ndarray) -> np.ndarray:
        """Signals as rows, ``(n, volume)``."""
        used = self.index >= 0
        atoms = D.T[np.where(used, self.index, 0)]
        return np.einsum("nk,nkd->nd", np.where(used, self.coef, 0.0), atoms)

    def dense(self, n_atoms: int) -> np.ndarray:
        X = np.zeros((n_atoms, self.index.shape[0]))
        rows, ks = np.nonzero(self.index >= 0)
        np.add.at(X, (self.index[rows, ks], rows), self.coef[rows, ks])
        return X


def omp(
    D: np.ndarray, Y: np.ndarray, max_atoms: int, tol: float = 0.0, track: bool = False, min_atoms: int = 0
) -> SparseCodes:
    """Orthogonal matching pursuit for each row of ``Y`` against the columns of ``D``.

    A signal stops once it has ``min_atoms`` atoms and its residual norm is
    ``<= tol``, or once it uses ``max_atoms`` atoms. With ``track``, ``residual_norms`` is a
    ``(max_atoms + 1, n)`` array of residual norms after each greedy step
    (stopped signals carry their final value forward).
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    n = Y.shape[0]
    T = min(max_atoms, D.shape[1])
    index = np.full((n, T), -1, dtype=np.int64)
    coef = np.zeros((n, T))
    history = np.empty((T + 1, n)) if track else None
    Dt = D.T
    for start in range(0, n, _CHUNK):
        sl = slice(start, min(n, start + _CHUNK))
        Yc = Y[sl]
        R = Yc.copy()
        norms = np.linalg.norm(R, axis=1)
        if track:
            history[:, sl] = norms
        active = (norms > tol) | (min_atoms > 0)
        for k in range(T):
            rows = np.nonzero(active)[0]
            if rows.size == 0:
                break
            corr = R[rows] @ D
            index[start + rows, k] = np.argmax(np.abs(corr), axis=1)
            A = Dt[index[start + rows, : k + 1]]  # (na, k+1, d)
            G = A @ A.transpose(0, 2, 1)
            G[:, np.arange(k + 1), np.arange(k + 1)] += _RIDGE
            x = np.linalg.solve(G, A @ Yc[rows][:, :, None])
            coef[start + rows, : k + 1] = x[..., 0]
            R[rows] = Yc[rows] - (A.transpose(0, 2, 1) @ x)[..., 0]
            norms[rows] = np.linalg.norm(R[rows], axis=1)
            active[rows] = (norms[rows] > tol) | (k + 1 < min_atoms)
            if track:
                history[k + 1:, sl] = norms
    return SparseCodes(index, coef, history)


def ksvd_train(
    Y: np.ndarray, D0: np.ndarray, max_atoms: int, tol: float, rounds: int
) -> tuple[np.ndarray, list[float], list[int]]:
    """Alternate OMP coding and rank-1 SVD atom updates.

    ``Y`` holds training signals as rows. Returns the learned dictionary, the
    total squared residual after each round's atom update, and the indices of
    atoms that were replaced because no signal used them.
    """
    D = D0.copy()
    Yc = Y.T  # (d, N)
    objective, replaced = [], []
    X_prev = None
    for rnd in range(rounds):
        codes = omp(D, Y, max_atoms, tol, min_atoms=1)
        X = codes.dense(D.shape[1])
        R = Yc - D @ X
        if X_prev is not None:
            # greedy OMP can do worse than last round's code; keep whichever is better
            R_prev = Yc - D @ X_prev
            keep = np.einsum("ij,ij->j", R_prev, R_prev) < np.einsum("ij,ij->j", R, R)
            X[:, keep] = X_prev[:, keep]
            R[:, keep] = R_prev[:, keep]
        for j in range(D.shape[1]):
            users = np.nonzero(X[j])[0]
            if users.size == 0:
                worst = int(np.argmax(np.einsum("ij,ij->j", R, R)))
                atom = Yc[:, worst]
                nrm = np.linalg.norm(atom)
                if nrm > 0:
                    D[:, j] = atom / nrm
                replaced.append(j)
                log.debug("round %d: atom %d unused, replaced by training block %d", rnd, j, worst)
                continue
            E = R[:, users] + np.outer(D[:, j], X[j, users])
            u, s, vt = np.linalg.svd(E, full_matrices=False)
            D[:, j] = u[:, 0]
            X[j, users] = s[0] * vt[0]
            R[:, users] = E - np.outer(D[:, j], X[j, users])
        objective.append(float(np.sum(R * R)))
        X_prev = X
    if replaced:
        log.info("K-SVD replaced %d unused atom(s) across %d rounds", len(replaced), rounds)
    return D, objective, replaced


def extract_blocks(img: np.ndarray, block: tuple) -> np.ndarray:
    bh, bw, bc = block
    if bc != img.shape[2] or bh > img.shape[0] or bw > img.shape[1]:
        raise ValueError(f"block {block} does not fit image {img.shape}")
    win = sliding_window_view(img, (bh, bw, bc))[:, :, 0]
    return win.reshape(-1, bh * bw * bc)


def ksvd_denoise(
    img: np.ndarray, cfg: Ksvd = Ksvd(), dictionary: np.ndarray | None = None, return_info: bool = False
):
    """Learn a dictionary on random blocks, then code every overlapping block
    (stride 1) and average the overlaps uniformly."""
    img = np.asarray(img, dtype=np.float64)
    bh, bw, bc = cfg.block
    blocks = extract_blocks(img, cfg.block)
    tol = OMP_TOL_FACTOR * cfg.sigma_noise * np.sqrt(cfg.volume)

    rng = np.random.default_rng(cfg.seed)
    pick = rng.choice(blocks.shape[0], size=min(cfg.train_blocks, blocks.shape[0]), replace=False)
    D0 = overcomplete_dct(cfg.block, cfg.dict_size) if dictionary is None else np.asarray(dictionary, float)
    D, objective, replaced = ksvd_train(blocks[pick], D0, cfg.max_atoms, tol, cfg.rounds)

    # at least one atom per block, so flat blocks below the tolerance keep their DC
    recon = omp(D, blocks, cfg.max_atoms, tol, min_atoms=1).reconstruct(D)
    h, w = img.shape[:2]
    gh, gw = h - bh + 1, w - bw + 1
    recon = recon.reshape(gh, gw, bh, bw, bc)
    acc = np.zeros_like(img)
    cnt = np.zeros(img.shape[:2])
    for a in range(bh):
        for b in range(bw):
            acc[a:a + gh, b:b + gw] += recon[:, :, a, b]
            cnt[a:a + gh, b:b + gw] += 1.0
    out = np.clip(acc / cnt[..., None], 0.0, 1.0)
    if return_info:
        return out, {"dictionary": D, "objective": objective, "replaced_atoms": replaced}
    return out
