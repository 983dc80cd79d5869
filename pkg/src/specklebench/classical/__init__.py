"""Model-based denoisers: median, non-local means, K-SVD and colour BM3D."""

from .bm3d import cbm3d_denoise
from .config import Cbm3d, DenoiserConfig, Ksvd, Median, Nlm, format_params, make_config, method_name
from .ksvd import ksvd_denoise, omp, overcomplete_dct
from .median import median_filter
from .nlm import nlm_denoise, nlm_weights

_DISPATCH = {
    Median: median_filter,
    Nlm: nlm_denoise,
    Ksvd: ksvd_denoise,
    Cbm3d: cbm3d_denoise,
}


def denoise(img, cfg: DenoiserConfig):
    """Run the denoiser selected by the config type."""
    return _DISPATCH[type(cfg)](img, cfg)


__all__ = [
    "Cbm3d", "DenoiserConfig", "Ksvd", "Median", "Nlm",
    "cbm3d_denoise", "denoise", "format_params", "ksvd_denoise", "make_config",
    "median_filter", "method_name", "nlm_denoise", "nlm_weights", "omp", "overcomplete_dct",
]
