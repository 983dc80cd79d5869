"""Per-method parameter sets; defaults are the tuned benchmark values."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class Median:
    kernel: int = 7

    def __post_init__(self):
        if self.kernel < 3 or self.kernel % 2 == 0:
            raise ValueError(f"median kernel must be odd and >= 3, got {self.kernel}")


@dataclass(frozen=True)
class Nlm:
    """Non-local means.

    ``size_mode="radius"`` reads ``patch_radius``/``window_radius`` as radii
    (patch side ``2r + 1``); ``"diameter"`` reads them as side lengths.
    """

    patch_radius: int = 4
    window_radius: int = 5
    strength_h: float = 0.283
    size_mode: str = "radius"

    def __post_init__(self):
        if self.size_mode not in ("radius", "diameter"):
            raise ValueError(f"size_mode must be 'radius' or 'diameter', got {self.size_mode!r}")
        if self.patch_radius < (0 if self.size_mode == "radius" else 1):
            raise ValueError(f"invalid patch size {self.patch_radius}")
        if self.window_radius < self.patch_radius:
            raise ValueError("window_radius must be >= patch_radius")
        if not self.strength_h > 0:
            raise ValueError("strength_h must be > 0")

    @property
    def patch_side(self) -> int:
        return 2 * self.patch_radius + 1 if self.size_mode == "radius" else self.patch_radius

    @property
    def window_offsets(self) -> range:
        if self.size_mode == "radius":
            return range(-self.window_radius, self.window_radius + 1)
        s = self.window_radius
        return range(-(s // 2), s - s // 2)


@dataclass(frozen=True)
class Ksvd:
    block: tuple = (5, 5, 3)
    dict_size: int = 1000
    train_blocks: int = 1000
    sigma_noise: float = 0.01
    sparsity_target: int | None = None
    rounds: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "block", tuple(int(b) for b in self.block))
        if len(self.block) != 3 or min(self.block) < 1:
            raise ValueError(f"block must be (h, w, channels), got {self.block}")
        if self.dict_size < 1 or self.train_blocks < 1:
            raise ValueError("dict_size and train_blocks must be >= 1")
        if self.sigma_noise < 0:
            raise ValueError("sigma_noise must be >= 0")

    @property
    def volume(self) -> int:
        return self.block[0] * self.block[1] * self.block[2]

    @property
    def max_atoms(self) -> int:
        if self.sparsity_target is not None:
            return max(1, int(self.sparsity_target))
        return max(1, self.volume // 10)


@dataclass(frozen=True)
class Cbm3d:
    sigma: float = 83.6  # 0-255 scale

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("Cbm3d sigma must be > 0")


DenoiserConfig = Union[Median, Nlm, Ksvd, Cbm3d]

METHODS = {"median": Median, "nlm": Nlm, "ksvd": Ksvd, "cbm3d": Cbm3d}


def method_name(cfg: DenoiserConfig) -> str:
    for name, cls in METHODS.items():
        if isinstance(cfg, cls):
            return name
    raise TypeError(f"not a denoiser config: {cfg!r}")


def _coerce(value: str, default):
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int) or default is None and value.lstrip("-").isdigit():
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return tuple(int(v) for v in value.replace("x", " ").replace(";", " ").split())
    return value


def make_config(method: str, params: dict | str | None = None) -> DenoiserConfig:
    """Build a config from ``k=v`` overrides; keys are the dataclass field names.

    ``params`` may be a dict or a string like ``"kernel=5"`` or
    ``"patch_radius=3,strength_h=0.2"``. Tuple values use ``x`` as separator
    (``block=5x5x3``).
    """
    try:
        cls = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}") from None
    if params is None:
        params = {}
    if isinstance(params, str):
        params = dict(kv.split("=", 1) for kv in params.split(",") if kv.strip())
    defaults = {f.name: f.default for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in params.items():
        key = key.strip()
        if key not in defaults:
            raise ValueError(f"unknown {method} parameter {key!r}; valid: {', '.join(defaults)}")
        kwargs[key] = _coerce(value.strip(), defaults[key]) if isinstance(value, str) else value
    return cls(**kwargs)


def format_params(cfg: DenoiserConfig) -> str:
    parts = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = "x".join(str(x) for x in v)
        parts.append(f"{f.name}={v}")
    return ";".join(parts)
