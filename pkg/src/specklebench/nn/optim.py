from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import NumericalFault
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class Adam:
    """Bias-corrected Adam over a list of named leaf tensors."""

    def __init__(self, params: list[Tensor], lr: float = 2e-4, betas=(0.5, 0.999), eps: float = 1e-8):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        self.state = AdamState(lr, betas[0], betas[1], eps)
        for p in self.params:
            self.state.m[p.name] = np.zeros_like(p.data)
            self.state.v[p.name] = np.zeros_like(p.data)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, lr: float | None = None):
        s = self.state
        lr = s.lr if lr is None else lr
        for p in self.params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise NumericalFault(f"non-finite gradient for parameter {p.name!r}")
        s.t += 1
        c1 = 1.0 - s.beta1 ** s.t
        c2 = 1.0 - s.beta2 ** s.t
        step = lr / c1
        for p in self.params:
            if p.grad is None:
                g = np.zeros_like(p.data)
            else:
                g = p.grad
            m, v = s.m[p.name], s.v[p.name]
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += s.eps
            p.data -= (step * m / denom).astype(p.data.dtype, copy=False)
