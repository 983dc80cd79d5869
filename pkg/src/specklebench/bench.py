"""Benchmark harness: per-method scoring, grid tuning with a Pareto front,
and CSV / markdown report emission."""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import DataError
from .classical import Cbm3d, Ksvd, denoise, format_params, make_config, method_name
from .imgprep import PairedSample, group_of, list_images, load_image, unpair
from .metrics import IdenticalImagesError, psnr, ssim

log = logging.getLogger(__name__)

PSNR_CAP = 99.0
COLUMNS = ("method", "params", "psnr_db", "psnr_gain_db", "ssim", "ssim_gain", "ms_per_image")
BASELINE = "speckled_input"
# pixels darker than this carry almost no speckle signal and are skipped when measuring it
NOISE_FLOOR = 0.02


@dataclass(frozen=True)
class ReportRow:
    method: str
    params: str
    psnr_db: float
    psnr_gain_db: float
    ssim: float
    ssim_gain: float
    ms_per_image: float | None = None


@dataclass
class BenchmarkReport:
    rows: list[ReportRow]

    def row(self, method: str) -> ReportRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)


def capped_psnr(a: np.ndarray, b: np.ndarray) -> float:
    try:
        return min(psnr(a, b), PSNR_CAP)
    except IdenticalImagesError:
        return PSNR_CAP


def _scores(outputs: Sequence[np.ndarray], pairs: Sequence[PairedSample]) -> tuple[float, float]:
    p = np.array([capped_psnr(o, s.target) for o, s in zip(outputs, pairs)])
    q = np.array([ssim(o, s.target) for o, s in zip(outputs, pairs)])
    return float(np.mean(p)), float(np.mean(q))


def measure_noise_level(noisy: np.ndarray, clean: np.ndarray) -> float:
    """Speckle contrast (std/mean) of the multiplicative field ``noisy / clean``.

    Only pixels with ``clean > NOISE_FLOOR`` contribute. Returned on the
    [0,1] intensity scale; multiply by 255 for 8-bit sigma units.
    """
    mask = clean > NOISE_FLOOR
    if not mask.any():
        raise DataError("clean image is too dark to measure speckle")
    ratio = noisy[mask] / clean[mask]
    return float(np.std(ratio) / np.mean(ratio))


def with_measured_noise(cfg, level: float):
    """Copy of a CBM3D / K-SVD config with its noise parameter set from ``level``."""
    if isinstance(cfg, Cbm3d):
        return dataclasses.replace(cfg, sigma=level * 255.0)
    if isinstance(cfg, Ksvd):
        return dataclasses.replace(cfg, sigma_noise=level)
    raise ValueError(f"{method_name(cfg)} has no noise-level parameter")


def _method_label(method) -> tuple[str, str]:
    from .gan import Generator  # local: keeps classical-only use free of the nn import cost

    if isinstance(method, Generator):
        s = method.spec
        return "deeplsr", f"depth={s.depth};base_channels={s.base_channels};skip_connections={s.skip_connections}"
    if callable(method) and not dataclasses.is_dataclass(method):
        return getattr(method, "__name__", "custom"), ""
    return method_name(method), format_params(method)


def _runner(method) -> Callable[[np.ndarray], np.ndarray]:
    from .gan import Generator, run_generator

    if isinstance(method, Generator):
        return lambda img: run_generator(method, img)
    if callable(method) and not dataclasses.is_dataclass(method):
        return method
    return lambda img: denoise(img, method)


def baseline_row(pairs: Sequence[PairedSample]) -> ReportRow:
    p, q = _scores([s.input for s in pairs], pairs)
    return ReportRow(BASELINE, "", p, 0.0, q, 0.0, None)


def evaluate_method(
    method,
    pairs: Sequence[PairedSample],
    measured_noise: bool = False,
    timing: bool = False,
    baseline: ReportRow | None = None,
) -> ReportRow:
    """Score one method on ``pairs`` against the raw speckled baseline.

    ``method`` is a denoiser config, a trained Generator, or any callable
    mapping an image to an image. With ``measured_noise`` a CBM3D/K-SVD
    config gets its noise level from each pair (:func:`measure_noise_level`).
    Gains are ``method - baseline`` on the same pairs.
    """
    if not pairs:
        raise DataError("no pairs to evaluate")
    base = baseline or baseline_row(pairs)
    name, params = _method_label(method)
    outputs = []
    elapsed = 0.0
    for s in pairs:
        m = with_measured_noise(method, measure_noise_level(s.input, s.target)) if measured_noise else method
        run = _runner(m)
        t0 = time.perf_counter()
        outputs.append(run(s.input))
        elapsed += time.perf_counter() - t0
    if measured_noise:
        key = "sigma" if isinstance(method, Cbm3d) else "sigma_noise"
        params = ";".join(f"{key}=measured" if kv.startswith(key + "=") else kv for kv in params.split(";"))
    p, q = _scores(outputs, pairs)
    ms = 1000.0 * elapsed / len(pairs) if timing else None
    return ReportRow(name, params, p, p - base.psnr_db, q, q - base.ssim, ms)


def run_benchmark(
    methods: Iterable,
    pairs: Sequence[PairedSample],
    measured_noise: bool = True,
    timing: bool = False,
) -> BenchmarkReport:
    """Baseline row followed by one row per method, in the given order.

    ``measured_noise`` applies only to methods with a noise parameter.
    """
    base = baseline_row(pairs)
    rows = [base]
    for m in methods:
        mn = measured_noise and isinstance(m, (Cbm3d, Ksvd))
        row = evaluate_method(m, pairs, measured_noise=mn, timing=timing, baseline=base)
        log.info("%s: %.2f dB (%+.2f), SSIM %.4f", row.method, row.psnr_db, row.psnr_gain_db, row.ssim)
        rows.append(row)
    return BenchmarkReport(rows)


# --- data loading ----------------------------------------------------------

def load_pairs_lenient(directory, paths: Sequence[Path] | None = None) -> list[PairedSample]:
    """Like :func:`imgprep.load_pairs` but skips undecodable files with a warning."""
    files = list(paths) if paths is not None else list_images(directory)
    out = []
    for f in files:
        try:
            a, b = unpair(load_image(f))
        except (ValueError, OSError) as exc:
            log.warning("skipping %s: %s", f, exc)
            continue
        out.append(PairedSample(a, b, group_of(f), str(f)))
    if not out:
        raise DataError(f"no decodable pairs in {directory} ({len(files)} skipped)")
    return out


# --- tuning ----------------------------------------------------------------

@dataclass(frozen=True)
class TunePoint:
    config: object
    psnr_db: float
    ssim: float


@dataclass
class TuneResult:
    points: list[TunePoint]
    pareto: list[TunePoint]
    knee: TunePoint


def dominates(a: TunePoint, b: TunePoint) -> bool:
    return a.psnr_db >= b.psnr_db and a.ssim >= b.ssim and (a.psnr_db > b.psnr_db or a.ssim > b.ssim)


def pareto_front(points: Sequence[TunePoint]) -> list[TunePoint]:
    return [p for p in points if not any(dominates(q, p) for q in points)]


def knee_point(front: Sequence[TunePoint], points: Sequence[TunePoint] | None = None) -> TunePoint:
    """Front member maximizing min-max normalized PSNR + SSIM (first wins ties)."""
    ref = points or front
    ps = np.array([p.psnr_db for p in ref])
    qs = np.array([p.ssim for p in ref])

    def norm(v, arr):
        span = arr.max() - arr.min()
        return 0.0 if span == 0 else (v - arr.min()) / span

    scores = [norm(p.psnr_db, ps) + norm(p.ssim, qs) for p in front]
    return front[int(np.argmax(scores))]


def grid_configs(method: str, grid: dict[str, Sequence]) -> list:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("parameter grid must be non-empty")
    keys = list(grid)
    return [make_config(method, dict(zip(keys, combo))) for combo in itertools.product(*(grid[k] for k in keys))]


def tune_params(method: str, grid: dict[str, Sequence], pairs: Sequence[PairedSample]) -> TuneResult:
    """Exhaustive grid search; returns every point, the Pareto set and the knee."""
    base = baseline_row(pairs)
    points = []
    for cfg in grid_configs(method, grid):
        row = evaluate_method(cfg, pairs, baseline=base)
        points.append(TunePoint(cfg, row.psnr_db, row.ssim))
    front = pareto_front(points)
    return TuneResult(points, front, knee_point(front, points))


def parse_grid(spec: str) -> dict[str, list[str]]:
    """``"strength_h=0.1|0.2|0.3,patch_radius=3|4"`` -> {key: [values]}."""
    grid = {}
    for part in spec.split(","):
        if not part.strip():
            continue
        key, _, vals = part.partition("=")
        grid[key.strip()] = [v.strip() for v in vals.split("|") if v.strip()]
    return grid


# --- report emission -------------------------------------------------------

def _cells(r: ReportRow) -> list[str]:
    return [
        r.method,
        r.params,
        f"{r.psnr_db:.4f}",
        f"{r.psnr_gain_db:.4f}",
        f"{r.ssim:.6f}",
        f"{r.ssim_gain:.6f}",
        "" if r.ms_per_image is None else f"{r.ms_per_image:.1f}",
    ]


def report_to_csv(report: BenchmarkReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in report.rows:
        w.writerow(_cells(r))
    return buf.getvalue()


def parse_report_csv(text: str) -> BenchmarkReport:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise DataError(f"report header must be {','.join(COLUMNS)}")
    out = []
    for r in rows[1:]:
        if len(r) != len(COLUMNS):
            raise DataError(f"malformed report row {r}")
        out.append(ReportRow(r[0], r[1], float(r[2]), float(r[3]), float(r[4]), float(r[5]),
                             float(r[6]) if r[6] else None))
    return BenchmarkReport(out)


def report_to_markdown(report: BenchmarkReport) -> str:
    head = ["Method", "Params", "PSNR (dB)", "ΔPSNR (dB)", "SSIM", "ΔSSIM", "ms/image"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in report.rows:
        c = _cells(r)
        c[1] = c[1].replace(";", ", ") or "-"
        c[6] = c[6] or "-"
        lines.append("| " + " | ".join(c) + " |")
    return "\n".join(lines) + "\n"


def emit_report(report: BenchmarkReport, path, fmt: str | None = None) -> Path:
    """Write ``report`` as CSV or markdown (inferred from the suffix when ``fmt`` is None)."""
    if not report.rows:
        raise ValueError("report is empty")
    path = Path(path)
    fmt = fmt or ("markdown" if path.suffix.lower() in (".md", ".markdown") else "csv")
    if fmt == "csv":
        text = report_to_csv(report)
    elif fmt == "markdown":
        text = report_to_markdown(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")
    return path
