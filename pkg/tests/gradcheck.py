"""Central finite-difference gradient checking shared by the test modules."""

import numpy as np

from specklebench.nn import Tensor

H = 1e-4


def numeric_grad(f, arr, h=H):
    g = np.zeros_like(arr)
    for i in np.ndindex(arr.shape):
        old = arr[i]
        arr[i] = old + h
        up = f()
        arr[i] = old - h
        down = f()
        arr[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_error(analytic, numeric):
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-8))


def check_op(build, inputs, rng):
    """Max relative error over all inputs of ``sum(R * build(*inputs))``.

    ``inputs`` are float64 arrays; each becomes a leaf Tensor.
    """
    leaves = [Tensor(a, requires_grad=True) for a in inputs]
    out = build(*leaves)
    R = rng.standard_normal(out.shape)
    out.backward(R if out.data.ndim else np.float64(1.0))
    if not out.data.ndim:
        R = 1.0
    worst = 0.0
    for leaf in leaves:
        def f():
            return float(np.sum(build(*[Tensor(t.data) for t in leaves]).data * R))
        worst = max(worst, rel_error(leaf.grad, numeric_grad(f, leaf.data)))
    return worst


def away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin + x, x)
