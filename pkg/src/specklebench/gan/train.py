"""Conditional adversarial training loop, image pool, LR schedule, inference."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import DataError, NumericalFault
from ..imgprep import PairedSample, random_crop_pair, resize_bicubic
from ..metrics import IdenticalImagesError, psnr
from ..nn import Adam, Tensor, check_finite, gan_bce_loss, l1_loss, load_records, lsgan_loss, save_records
from .networks import Discriminator, DiscriminatorSpec, Generator, GeneratorSpec

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "lr", "loss_g_gan", "loss_g_l1", "loss_d", "val_psnr")


@dataclass(frozen=True)
class TrainConfig:
    lambda_l1: float = 70.0
    lr0: float = 2e-4
    niter: int = 200
    niter_decay: int = 200
    pool_size: int = 64
    load_size: int = 64
    fine_size: int = 64
    batch_size: int = 1
    seed: int = 0
    gan_mode: str = "bce"
    checkpoint_every: int = 0  # epochs; 0 = only at the end
    betas: tuple[float, float] = (0.5, 0.999)

    def __post_init__(self):
        if not self.lambda_l1 > 0:
            raise ValueError("lambda_l1 must be > 0")
        if self.fine_size > self.load_size:
            raise ValueError(f"fine_size {self.fine_size} exceeds load_size {self.load_size}")
        if self.pool_size < 0:
            raise ValueError("pool_size must be >= 0")
        if self.niter < 0 or self.niter_decay < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.gan_mode not in ("bce", "lsgan"):
            raise ValueError(f"unknown gan_mode {self.gan_mode!r}")

    @property
    def epochs(self) -> int:
        return self.niter + self.niter_decay


def lr_at_epoch(epoch: int, cfg: TrainConfig) -> float:
    """Constant ``lr0`` for ``niter`` epochs, then linear decay to zero."""
    if not 1 <= epoch <= cfg.epochs:
        raise ValueError(f"epoch {epoch} outside 1..{cfg.epochs}")
    if epoch <= cfg.niter:
        return cfg.lr0
    return cfg.lr0 * (1.0 - (epoch - cfg.niter) / cfg.niter_decay)


class ImagePool:
    """History buffer of generated samples shown to the discriminator."""

    def __init__(self, capacity: int = 64, seed: int = 0):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.buffer: list[np.ndarray] = []
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self.buffer)

    def query(self, fresh: np.ndarray) -> np.ndarray:
        if self.capacity == 0:
            return fresh
        if len(self.buffer) < self.capacity:
            self.buffer.append(fresh.copy())
            return fresh
        if self.rng.random() < 0.5:
            return fresh
        k = int(self.rng.integers(self.capacity))
        old = self.buffer[k]
        self.buffer[k] = fresh.copy()
        return old


def pool_query(pool: ImagePool, fresh: np.ndarray) -> np.ndarray:
    return pool.query(fresh)


def _adv_loss(logits: Tensor, real: bool, mode: str) -> Tensor:
    return gan_bce_loss(logits, real) if mode == "bce" else lsgan_loss(logits, real)


def generator_objective(g_out: Tensor, target, d_logits_on_fake: Tensor, lambda_l1: float, gan_mode: str = "bce"):
    """Adversarial term (fool D) plus ``lambda_l1`` times the L1 distance to the target.

    Returns ``(total, gan_term, l1_term)``.
    """
    gan = _adv_loss(d_logits_on_fake, True, gan_mode)
    l1 = l1_loss(g_out, target)
    return gan + l1 * lambda_l1, gan, l1


def to_signed(img: np.ndarray) -> np.ndarray:
    """(H, W, 3) in [0,1] -> (1, 3, H, W) float32 in [-1,1]."""
    return (img.transpose(2, 0, 1)[None] * 2.0 - 1.0).astype(np.float32)


def from_signed(t: np.ndarray) -> np.ndarray:
    return np.clip((t[0].transpose(1, 2, 0).astype(np.float64) + 1.0) / 2.0, 0.0, 1.0)


# --- checkpoints -----------------------------------------------------------

def _gen_meta(spec: GeneratorSpec) -> np.ndarray:
    return np.array([spec.depth, spec.base_channels, spec.skip_connections, spec.spectral_norm,
                     spec.in_channels, spec.out_channels], dtype=np.float32)


def _disc_meta(spec: DiscriminatorSpec) -> np.ndarray:
    return np.array([spec.n_layers, spec.base_channels, spec.spectral_norm, spec.in_channels], dtype=np.float32)


def _net_records(prefix: str, net) -> dict[str, np.ndarray]:
    rec = {}
    for layer in net.layers():
        for p in layer.parameters():
            rec[f"{prefix}.{p.name}"] = p.data.copy()
        if layer.spectral is not None:
            rec[f"{prefix}.{layer.name}.sn_u"] = layer.spectral.u.copy()
    return rec


def network_records(gen: Generator, disc: Discriminator | None = None) -> dict[str, np.ndarray]:
    rec = {"G.meta": _gen_meta(gen.spec)}
    rec.update(_net_records("G", gen))
    if disc is not None:
        rec["D.meta"] = _disc_meta(disc.spec)
        rec.update(_net_records("D", disc))
    return rec


def save_checkpoint(path, gen: Generator, disc: Discriminator | None = None) -> Path:
    save_records(path, network_records(gen, disc))
    return Path(path)


def _restore(prefix: str, net, rec: dict[str, np.ndarray]) -> None:
    expected = {}
    for layer in net.layers():
        for p in layer.parameters():
            expected[f"{prefix}.{p.name}"] = p
        if layer.spectral is not None:
            expected[f"{prefix}.{layer.name}.sn_u"] = layer
    present = {k for k in rec if k.startswith(prefix + ".") and k != f"{prefix}.meta"}
    missing = sorted(set(expected) - present)
    extra = sorted(present - set(expected))
    if missing or extra:
        raise DataError(f"checkpoint does not match network: missing {missing}, extra {extra}")
    for key, target in expected.items():
        arr = rec[key]
        if key.endswith(".sn_u"):
            if arr.shape != target.spectral.u.shape:
                raise DataError(f"checkpoint record {key} has shape {arr.shape}, expected {target.spectral.u.shape}")
            target.spectral.u = arr.copy()
        else:
            if arr.shape != target.shape:
                raise DataError(f"checkpoint record {key} has shape {arr.shape}, expected {target.shape}")
            target.data = arr.copy()


def load_generator(path_or_records) -> Generator:
    rec = path_or_records if isinstance(path_or_records, dict) else load_records(path_or_records)
    if "G.meta" not in rec:
        raise DataError("checkpoint has no generator spec record 'G.meta'")
    m = [int(round(v)) for v in rec["G.meta"]]
    spec = GeneratorSpec(depth=m[0], base_channels=m[1], skip_connections=bool(m[2]), spectral_norm=bool(m[3]),
                         in_channels=m[4], out_channels=m[5])
    gen = Generator(spec)
    _restore("G", gen, rec)
    return gen


def load_discriminator(path_or_records) -> Discriminator:
    rec = path_or_records if isinstance(path_or_records, dict) else load_records(path_or_records)
    if "D.meta" not in rec:
        raise DataError("checkpoint has no discriminator record 'D.meta'")
    m = [int(round(v)) for v in rec["D.meta"]]
    disc = Discriminator(DiscriminatorSpec(n_layers=m[0], base_channels=m[1], spectral_norm=bool(m[2]), in_channels=m[3]))
    _restore("D", disc, rec)
    return disc


# --- inference -------------------------------------------------------------

def run_generator(gen: Generator, img: np.ndarray) -> np.ndarray:
    """Deterministic forward pass; reflect-pads to a multiple of 2^depth and crops back."""
    h, w = img.shape[:2]
    m = 2 ** gen.spec.depth
    ph, pw = (-h) % m, (-w) % m
    x = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="reflect") if (ph or pw) else img
    out = gen(Tensor(to_signed(x)), update_sn=False).data
    return from_signed(out)[:h, :w]


def infer(checkpoint, img: np.ndarray) -> np.ndarray:
    gen = checkpoint if isinstance(checkpoint, Generator) else load_generator(checkpoint)
    return run_generator(gen, img)


# --- training --------------------------------------------------------------

@dataclass
class TrainResult:
    generator: Generator
    discriminator: Discriminator
    log: list[dict] = field(default_factory=list)
    checkpoint: Path | None = None


def _prepare(sample: PairedSample, load_size: int) -> PairedSample:
    if sample.input.shape[:2] == (load_size, load_size):
        return sample
    return PairedSample(resize_bicubic(sample.input, load_size, load_size),
                        resize_bicubic(sample.target, load_size, load_size), sample.group_id, sample.name)


def validation_psnr(gen: Generator, pairs: Sequence[PairedSample]) -> float:
    vals = []
    for s in pairs:
        try:
            vals.append(psnr(run_generator(gen, s.input), s.target))
        except IdenticalImagesError:
            vals.append(99.0)
    return float(np.mean(vals))


def write_log(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow([r["epoch"]] + [_fmt(r[c]) for c in LOG_COLUMNS[1:]])


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _freeze(net, frozen: bool) -> None:
    # D's weights need no gradient during the generator step
    for p in net.parameters():
        p.requires_grad = not frozen


def train(
    pairs: Sequence[PairedSample],
    gspec: GeneratorSpec = GeneratorSpec(),
    dspec: DiscriminatorSpec = DiscriminatorSpec(),
    cfg: TrainConfig = TrainConfig(),
    out_dir=None,
    val_pairs: Sequence[PairedSample] = (),
) -> TrainResult:
    """Train generator and discriminator on paired samples.

    Writes ``<out_dir>/latest.ckpt`` (plus ``epoch_NNN.ckpt`` every
    ``checkpoint_every`` epochs) and ``<out_dir>/loss_log.csv`` when
    ``out_dir`` is given. A non-finite loss aborts with a NumericalFault
    after saving the last completed epoch to ``last_good.ckpt``.
    """
    if not pairs:
        raise DataError("training set is empty")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    data = [_prepare(s, cfg.load_size) for s in pairs]
    gen = Generator(gspec, seed=cfg.seed)
    disc = Discriminator(dspec, seed=cfg.seed + 1)
    m = 2 ** gspec.depth
    if cfg.fine_size % m:
        raise ValueError(f"fine_size {cfg.fine_size} not divisible by 2^depth = {m}")
    opt_g = Adam(gen.parameters(), cfg.lr0, cfg.betas)
    opt_d = Adam(disc.parameters(), cfg.lr0, cfg.betas)
    rng = np.random.default_rng(cfg.seed)
    pool = ImagePool(cfg.pool_size, seed=cfg.seed + 2)
    result = TrainResult(gen, disc)
    last_good = network_records(gen, disc)
    nb = math.ceil(len(data) / cfg.batch_size)

    for epoch in range(1, cfg.epochs + 1):
        lr = lr_at_epoch(epoch, cfg)
        order = rng.permutation(len(data))
        sums = np.zeros(3)
        t0 = time.perf_counter()
        try:
            for bi in range(nb):
                idx = order[bi * cfg.batch_size:(bi + 1) * cfg.batch_size]
                crops = [random_crop_pair(data[i], cfg.fine_size, rng) for i in idx]
                x = Tensor(np.concatenate([to_signed(c.input) for c in crops]))
                y = np.concatenate([to_signed(c.target) for c in crops])
                fake = gen(x)

                # discriminator: real pair vs (pooled) fake pair
                pooled = pool_query(pool, np.concatenate([x.data, fake.data], axis=1))
                c = x.shape[1]
                opt_d.zero_grad()
                d_real = disc(x, Tensor(y))
                d_fake = disc(Tensor(pooled[:, :c]), Tensor(pooled[:, c:]), update_sn=False)
                loss_d = (_adv_loss(d_real, True, cfg.gan_mode) + _adv_loss(d_fake, False, cfg.gan_mode)) * 0.5
                check_finite(loss_d, f"discriminator loss (epoch {epoch})")
                loss_d.backward()
                opt_d.step(lr)

                # generator: fool D and stay close to the target
                opt_g.zero_grad()
                _freeze(disc, True)
                total, g_gan, g_l1 = generator_objective(
                    fake, y, disc(x, fake, update_sn=False), cfg.lambda_l1, cfg.gan_mode)
                _freeze(disc, False)
                check_finite(total, f"generator objective (epoch {epoch})")
                total.backward()
                opt_g.step(lr)
                sums += (g_gan.item(), g_l1.item(), loss_d.item())
        except NumericalFault:
            if out is not None:
                save_records(out / "last_good.ckpt", last_good)
                write_log(out / "loss_log.csv", result.log)
            raise
        means = sums / nb
        row = {"epoch": epoch, "lr": lr, "loss_g_gan": means[0], "loss_g_l1": means[1], "loss_d": means[2],
               "val_psnr": validation_psnr(gen, val_pairs) if val_pairs else None}
        result.log.append(row)
        last_good = network_records(gen, disc)
        log.info("epoch %d lr %.3g G_gan %.4f G_l1 %.4f D %.4f (%.1fs)", epoch, lr, *means,
                 time.perf_counter() - t0)
        if out is not None:
            write_log(out / "loss_log.csv", result.log)
            if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
                save_records(out / f"epoch_{epoch:03d}.ckpt", last_good)

    if out is not None:
        save_records(out / "latest.ckpt", last_good)
        write_log(out / "loss_log.csv", result.log)
        result.checkpoint = out / "latest.ckpt"
    return result
