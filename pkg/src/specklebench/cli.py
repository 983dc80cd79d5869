"""``specklebench`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical fault.
Every subcommand accepts ``--config FILE``: flat ``key = value`` lines whose
keys are the long flag names (with or without the leading dashes). Flags
given on the command line override the file.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import DataError, NumericalFault, __version__

log = logging.getLogger("specklebench")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
COMMANDS = ("synth", "prep", "denoise", "train", "infer", "eval", "mtf", "tune", "report", "bench")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- helpers ---------------------------------------------------------------

def _out_csv(path, header, rows):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def _load_dataroot(dataroot, split: str | None):
    """Paired samples from ``dataroot``; honours ``manifest.csv`` when present."""
    from .bench import load_pairs_lenient
    from .imgprep import read_manifest

    root = Path(dataroot)
    if not root.is_dir():
        raise DataError(f"dataroot {root} is not a directory")
    manifest = root / "manifest.csv"
    if split and manifest.exists():
        entries = [e for e in read_manifest(manifest) if e.split == split]
        if not entries:
            raise DataError(f"{manifest}: no '{split}' entries")
        return load_pairs_lenient(root, [root / e.path for e in entries])
    return load_pairs_lenient(root)


# --- subcommands -----------------------------------------------------------

def cmd_synth(a):
    from .imgprep import list_images, load_image, pair_side_by_side, save_image
    from .scenes import make_scenes
    from .speckle import SpeckleParams, apply_speckle, synthesize_field

    if a.input:
        files = list_images(a.input)
        if not files:
            raise DataError(f"no images in {a.input}")
        named = [(f.stem.replace("_", "-"), load_image(f)) for f in files]
    elif a.generate:
        named = [(f"scene{i:03d}", img) for i, img in enumerate(make_scenes(a.generate, a.size, a.seed))]
    else:
        raise UsageError("synth needs --input or --generate")
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    k = 0
    for stem, clean in named:
        h, w = clean.shape[:2]
        for r in range(a.realizations):
            params = SpeckleParams(a.grain, a.contrast, not a.shared_field, a.seed * 100003 + k)
            k += 1
            noisy = apply_speckle(clean, synthesize_field(w, h, params))
            save_image(pair_side_by_side(noisy, clean, allow_any_size=True), out / f"{stem}_{r:02d}.png")
    log.info("wrote %d pairs to %s", k, out)


def cmd_prep(a):
    from .imgprep import (
        PairedSample, histogram_match, list_images, load_image, pair_side_by_side, resize_bicubic,
        save_image, split_by_group, unpair, write_manifest, group_of,
    )

    files = list_images(a.input)
    if not files:
        raise DataError(f"no images in {a.input}")
    if a.fine_size and a.load_size and a.fine_size > a.load_size:
        raise UsageError(f"--fine-size {a.fine_size} exceeds --load-size {a.load_size}")
    ref = load_image(a.match_ref) if a.match_ref else None
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    samples, names = [], []
    for f in files:
        x, y = unpair(load_image(f))
        if ref is not None:
            x = histogram_match(x, ref)
        if a.load_size:
            x = resize_bicubic(x, a.load_size, a.load_size)
            y = resize_bicubic(y, a.load_size, a.load_size)
        if a.fine_size and a.fine_size > min(x.shape[:2]):
            raise DataError(f"{f.name}: --fine-size {a.fine_size} exceeds image size")
        save_image(pair_side_by_side(x, y, allow_any_size=a.allow_any_size), out / f"{f.stem}.png")
        samples.append(PairedSample(x, y, group_of(f), f"{f.stem}.png"))
        names.append(f"{f.stem}.png")
    write_manifest(split_by_group(samples, a.test_fraction, a.seed, names), out / "manifest.csv")
    log.info("prepared %d pairs in %s", len(samples), out)


def cmd_denoise(a):
    from .classical import denoise, make_config
    from .imgprep import list_images, load_image, save_image, unpair

    cfg = make_config(a.method, a.params)
    files = list_images(a.input)
    if not files:
        raise DataError(f"no images in {a.input}")
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    for f in files:
        img = load_image(f)
        if a.paired:
            img = unpair(img)[0]
        save_image(denoise(img, cfg), out / f"{f.stem}.png")
    log.info("denoised %d images with %s", len(files), a.method)


def cmd_train(a):
    from .gan import DiscriminatorSpec, GeneratorSpec, TrainConfig, train

    pairs = _load_dataroot(a.dataroot, "train")
    manifest = Path(a.dataroot) / "manifest.csv"
    val = _load_dataroot(a.dataroot, "test") if manifest.exists() else []
    gspec = GeneratorSpec(depth=a.depth, base_channels=a.base_channels, skip_connections=not a.no_skip,
                          spectral_norm=a.spectral_g)
    dspec = DiscriminatorSpec(n_layers=a.d_layers, base_channels=a.d_base_channels, spectral_norm=not a.no_spectral_d)
    cfg = TrainConfig(lambda_l1=a.lambda_l1, lr0=a.lr, niter=a.niter, niter_decay=a.niter_decay,
                      pool_size=a.pool_size, load_size=a.load_size, fine_size=a.fine_size,
                      batch_size=a.batch_size, seed=a.seed, gan_mode=a.gan_mode,
                      checkpoint_every=a.checkpoint_every)
    log.info("discriminator receptive field %d px", dspec.receptive_field)
    res = train(pairs, gspec, dspec, cfg, out_dir=Path(a.checkpoints_dir) / a.name, val_pairs=val)
    print(res.checkpoint)


def cmd_infer(a):
    from .gan import load_generator, run_generator
    from .imgprep import list_images, load_image, save_image, unpair

    gen = load_generator(a.checkpoint)
    files = list_images(a.input)
    if not files:
        raise DataError(f"no images in {a.input}")
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    for f in files:
        img = load_image(f)
        if a.paired:
            img = unpair(img)[0]
        save_image(run_generator(gen, img), out / f"{f.stem}.png")


def cmd_eval(a):
    from .bench import capped_psnr
    from .imgprep import list_images, load_image, unpair
    from .metrics import ssim

    rows = []
    if a.truth:
        for f in list_images(a.pred):
            t = Path(a.truth) / f.name
            if not t.exists():
                raise DataError(f"no ground truth {t} for {f.name}")
            x, y = load_image(f), load_image(t)
            rows.append([f.name, f"{capped_psnr(x, y):.4f}", f"{ssim(x, y):.6f}"])
    else:
        # paired files: score the left (speckled) half against the right
        for f in list_images(a.pred):
            x, y = unpair(load_image(f))
            rows.append([f.name, f"{capped_psnr(x, y):.4f}", f"{ssim(x, y):.6f}"])
    if not rows:
        raise DataError(f"no images in {a.pred}")
    _out_csv(a.out, ["file", "psnr_db", "ssim"], rows)


def cmd_mtf(a):
    from .imgprep import load_image
    from .metrics import mtf50, mtf_slanted_edge

    mode = a.channel if a.channel == "luminance" else "rgb".index(a.channel) if a.channel in "rgb" else int(a.channel)
    curve = mtf_slanted_edge(load_image(a.input), channel_mode=mode, oversample=a.oversample)
    _out_csv(a.out, ["freq_cyc_per_px", "modulus"],
             [[f"{f:.6f}", f"{m:.6f}"] for f, m in zip(curve.frequencies, curve.modulus)])
    print(f"edge_angle_deg={curve.edge_angle_deg:.3f} mtf50={mtf50(curve):.6f}", file=sys.stderr)


def cmd_tune(a):
    from .bench import parse_grid, tune_params
    from .classical import format_params

    pairs = _load_dataroot(a.dataroot, a.split)
    res = tune_params(a.method, parse_grid(a.grid), pairs)
    front = {id(p) for p in res.pareto}
    rows = [[format_params(p.config), f"{p.psnr_db:.4f}", f"{p.ssim:.6f}", int(id(p) in front), int(p is res.knee)]
            for p in res.points]
    _out_csv(a.out, ["params", "psnr_db", "ssim", "pareto", "knee"], rows)


def cmd_report(a):
    from .bench import emit_report, parse_report_csv

    report = parse_report_csv(Path(a.input).read_text(encoding="utf-8"))
    emit_report(report, a.out, a.format)


def cmd_bench(a):
    from .bench import emit_report, run_benchmark
    from .classical import make_config

    pairs = _load_dataroot(a.dataroot, a.split)
    if a.limit:
        pairs = pairs[:a.limit]
    methods = []
    for name in [m.strip() for m in a.methods.split(",") if m.strip()]:
        if name == "deeplsr":
            if not a.checkpoint:
                raise UsageError("method deeplsr needs --checkpoint")
            from .gan import load_generator

            methods.append(load_generator(a.checkpoint))
        else:
            methods.append(make_config(name, getattr(a, f"{name}_params", None)))
    report = run_benchmark(methods, pairs, measured_noise=not a.fixed_noise, timing=a.timing)
    emit_report(report, a.out, a.format)
    if a.csv:
        emit_report(report, a.csv, "csv")


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specklebench", description="Laser speckle reduction benchmark toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", help="key = value file; command-line flags override it")
        sp.add_argument("-v", "--verbose", action="store_true")
        sp.set_defaults(func=fn)
        return sp

    sp = add("synth", cmd_synth, "apply synthetic speckle; write side-by-side pairs")
    sp.add_argument("--input", help="directory of clean images")
    sp.add_argument("--generate", type=int, default=0, help="generate N procedural clean scenes instead")
    sp.add_argument("--size", type=int, default=256)
    sp.add_argument("--out", required=True)
    sp.add_argument("--grain", type=float, default=2.0)
    sp.add_argument("--contrast", type=float, default=1.0)
    sp.add_argument("--realizations", type=int, default=1)
    sp.add_argument("--shared-field", action="store_true", help="one speckle field for all channels")
    sp.add_argument("--seed", type=int, default=0)

    sp = add("prep", cmd_prep, "histogram-match, resize and split paired images")
    sp.add_argument("--dataroot", "--input", dest="input", required=True, help="directory of paired images")
    sp.add_argument("--out", required=True)
    sp.add_argument("--match-ref", help="reference image for histogram matching of the input half")
    sp.add_argument("--load-size", type=int, default=0, help="resize each half to N x N (0 = keep)")
    sp.add_argument("--fine-size", type=int, default=0, help="training crop size; checked against --load-size")
    sp.add_argument("--allow-any-size", action="store_true", help="skip the power-of-two side check")
    sp.add_argument("--test-fraction", type=float, default=0.2)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("denoise", cmd_denoise, "run a classical denoiser over a directory")
    sp.add_argument("--method", required=True, choices=["median", "nlm", "ksvd", "cbm3d"])
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--params", default="", help="k=v,k=v overrides")
    sp.add_argument("--paired", action="store_true", help="inputs are side-by-side pairs; denoise the left half")

    sp = add("train", cmd_train, "train the adversarial speckle-reduction model")
    sp.add_argument("--dataroot", required=True)
    sp.add_argument("--name", required=True)
    sp.add_argument("--checkpoints-dir", default="checkpoints")
    sp.add_argument("--lambda-l1", type=float, default=70.0)
    sp.add_argument("--lr", type=float, default=2e-4)
    sp.add_argument("--niter", type=int, default=200)
    sp.add_argument("--niter-decay", type=int, default=200)
    sp.add_argument("--pool-size", type=int, default=64)
    sp.add_argument("--load-size", type=int, default=64)
    sp.add_argument("--fine-size", type=int, default=64)
    sp.add_argument("--batch-size", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--gan-mode", choices=["bce", "lsgan"], default="bce")
    sp.add_argument("--checkpoint-every", type=int, default=0)
    sp.add_argument("--depth", type=int, default=4)
    sp.add_argument("--base-channels", type=int, default=32)
    sp.add_argument("--no-skip", action="store_true")
    sp.add_argument("--spectral-g", action="store_true", help="spectral-normalize the generator too")
    sp.add_argument("--d-layers", type=int, default=3)
    sp.add_argument("--d-base-channels", type=int, default=64)
    sp.add_argument("--no-spectral-d", action="store_true")

    sp = add("infer", cmd_infer, "apply a trained generator to a directory")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--paired", action="store_true")

    sp = add("eval", cmd_eval, "per-file PSNR/SSIM as CSV")
    sp.add_argument("--pred", required=True, help="predictions, or paired files when --truth is absent")
    sp.add_argument("--truth", help="directory of ground-truth images with matching names")
    sp.add_argument("--out", help="CSV path (stdout if omitted)")

    sp = add("mtf", cmd_mtf, "slanted-edge MTF of an edge ROI")
    sp.add_argument("--roi", "--input", dest="input", required=True)
    sp.add_argument("--channel", default="luminance", help="luminance, r, g, b or 0-2")
    sp.add_argument("--oversample", type=int, default=4)
    sp.add_argument("--out", help="CSV path (stdout if omitted)")

    sp = add("tune", cmd_tune, "grid search with Pareto front and knee point")
    sp.add_argument("--method", required=True, choices=["median", "nlm", "ksvd", "cbm3d"])
    sp.add_argument("--grid", required=True, help='e.g. "strength_h=0.1|0.2|0.3,patch_radius=3|4"')
    sp.add_argument("--dataroot", required=True)
    sp.add_argument("--split", default="test")
    sp.add_argument("--out", help="CSV path (stdout if omitted)")

    sp = add("report", cmd_report, "convert a CSV report to markdown or CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", choices=["csv", "markdown"])

    sp = add("bench", cmd_bench, "benchmark methods on paired data")
    sp.add_argument("--dataroot", required=True)
    sp.add_argument("--methods", default="median,nlm,ksvd,cbm3d")
    sp.add_argument("--checkpoint")
    sp.add_argument("--out", required=True)
    sp.add_argument("--csv", help="also write the CSV report here")
    sp.add_argument("--format", choices=["csv", "markdown"])
    sp.add_argument("--split", default="test")
    sp.add_argument("--limit", type=int, default=0)
    sp.add_argument("--timing", action="store_true", help="record ms/image (makes reports non-reproducible)")
    sp.add_argument("--fixed-noise", action="store_true",
                    help="use configured sigma for cbm3d/ksvd instead of the per-image measured level")
    for m in ("median", "nlm", "ksvd", "cbm3d"):
        sp.add_argument(f"--{m}-params", default="")
    return p


def read_config(path) -> list[str]:
    """Turn a ``key = value`` file into argv tokens."""
    args = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected key = value")
        key = "--" + key.strip().lstrip("-").replace("_", "-")
        value = value.strip()
        if value.lower() in ("true", "yes", "on"):
            args.append(key)
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            args += [key, value]
    return args


def _expand_config(argv: list[str]) -> list[str]:
    for i, tok in enumerate(argv):
        if tok == "--config" or tok.startswith("--config="):
            path = tok.split("=", 1)[1] if "=" in tok else (argv[i + 1] if i + 1 < len(argv) else None)
            if path is None:
                raise UsageError("--config needs a file")
            # file values go first so that later command-line flags win
            cmd_at = next((j for j, t in enumerate(argv) if t in COMMANDS), None)
            if cmd_at is None:
                raise UsageError("--config requires a subcommand")
            return argv[:cmd_at + 1] + read_config(path) + argv[cmd_at + 1:]
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_expand_config(argv))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFault as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
