"""Minimal reverse-mode autodiff engine for the toy adversarial model."""

from .checkpoint import CheckpointError, load_records, save_records
from .layers import Conv, SpectralNormState, sigma_estimate, spectral_normalize
from .ops import (
    concat,
    conv2d,
    gan_bce_loss,
    l1_loss,
    leaky_relu,
    lsgan_loss,
    mse_loss,
    pointwise,
    relu,
    sigmoid,
    tanh,
    upsample_nearest,
)
from .optim import Adam, AdamState
from .tensor import Tensor, add, check_finite, mul

__all__ = [
    "Adam", "AdamState", "CheckpointError", "Conv", "SpectralNormState", "Tensor",
    "add", "check_finite", "concat", "conv2d", "gan_bce_loss", "l1_loss", "leaky_relu",
    "load_records", "lsgan_loss", "mse_loss", "mul", "pointwise", "relu", "save_records",
    "sigma_estimate", "sigmoid", "spectral_normalize", "tanh", "upsample_nearest",
]
