"""Encoder-decoder generator and conditional patch discriminator."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..nn import Conv, Tensor, concat, leaky_relu, relu, tanh, upsample_nearest

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratorSpec:
    depth: int = 4
    base_channels: int = 32
    skip_connections: bool = True
    spectral_norm: bool = False
    in_channels: int = 3
    out_channels: int = 3

    def channels(self, level: int) -> int:
        """Feature width at encoder level ``level`` (0 = input)."""
        if level == 0:
            return self.in_channels
        return self.base_channels * 2 ** min(level - 1, 3)


@dataclass(frozen=True)
class DiscriminatorSpec:
    n_layers: int = 3
    base_channels: int = 64
    spectral_norm: bool = True
    in_channels: int = 6  # condition + candidate

    def layer_geometry(self) -> list[tuple[int, int]]:
        """(kernel, stride) of every conv, in order."""
        return [(4, 2)] * self.n_layers + [(4, 1), (4, 1)]

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.layer_geometry())


def receptive_field(layers: list[tuple[int, int]]) -> int:
    rf = 1
    for k, s in reversed(layers):
        rf = (rf - 1) * s + k
    return rf


class Generator:
    """U-Net-style generator.

    Encoder: stride-2 4x4 convs with leaky ReLU. Decoder: nearest 2x
    upsample, concat the matching encoder feature (when skips are on), 3x3
    conv with ReLU; the last stage emits ``out_channels`` through tanh.
    """

    def __init__(self, spec: GeneratorSpec = GeneratorSpec(), seed: int = 0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        sn = spec.spectral_norm
        self.enc = [
            Conv(f"enc{i}", spec.channels(i - 1), spec.channels(i), 4, 2, 1, sn, rng)
            for i in range(1, spec.depth + 1)
        ]
        self.dec = []
        for i in range(spec.depth, 0, -1):
            skip = spec.channels(i - 1) if spec.skip_connections else 0
            out = spec.out_channels if i == 1 else spec.channels(i - 1)
            self.dec.append(Conv(f"dec{i}", spec.channels(i) + skip, out, 3, 1, 1, sn, rng))

    def layers(self) -> list[Conv]:
        return self.enc + self.dec

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers() for p in layer.parameters()]

    def n_params(self) -> int:
        return sum(layer.n_params() for layer in self.layers())

    def check_input(self, h: int, w: int) -> None:
        m = 2 ** self.spec.depth
        if h % m or w % m:
            raise ValueError(f"input {w}x{h} not divisible by 2^depth = {m}")

    def __call__(self, x: Tensor, update_sn: bool = True) -> Tensor:
        self.check_input(*x.shape[2:])
        feats = [x]
        h = x
        for layer in self.enc:
            h = leaky_relu(layer(h, update_sn))
            feats.append(h)
        for k, layer in enumerate(self.dec):
            level = self.spec.depth - k  # resolution of feats[level-1] after upsampling
            h = upsample_nearest(h, 2)
            if self.spec.skip_connections:
                h = concat([h, feats[level - 1]])
            h = layer(h, update_sn)
            h = tanh(h) if level == 1 else relu(h)
        return h


class Discriminator:
    """Conditional PatchGAN: input and candidate are stacked on the channel
    axis; the output is a grid of real/fake logits."""

    def __init__(self, spec: DiscriminatorSpec = DiscriminatorSpec(), seed: int = 1):
        self.spec = spec
        rng = np.random.default_rng(seed)
        sn = spec.spectral_norm
        widths = [spec.in_channels] + [spec.base_channels * 2 ** min(i, 3) for i in range(spec.n_layers + 1)] + [1]
        self.convs = []
        for i, (k, s) in enumerate(spec.layer_geometry()):
            self.convs.append(Conv(f"d{i}", widths[i], widths[i + 1], k, s, 1, sn, rng))

    @property
    def receptive_field(self) -> int:
        return self.spec.receptive_field

    def layers(self) -> list[Conv]:
        return self.convs

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.convs for p in layer.parameters()]

    def output_size(self, size: int) -> int:
        for k, s in self.spec.layer_geometry():
            size = (size + 2 - k) // s + 1
        return size

    def __call__(self, condition: Tensor, candidate: Tensor, update_sn: bool = True) -> Tensor:
        if condition.shape[2] < self.receptive_field or condition.shape[3] < self.receptive_field:
            log.debug("input %s smaller than receptive field %d", condition.shape[2:], self.receptive_field)
        h = concat([condition, candidate])
        for i, layer in enumerate(self.convs):
            h = layer(h, update_sn)
            if i < len(self.convs) - 1:
                h = leaky_relu(h)
        return h
