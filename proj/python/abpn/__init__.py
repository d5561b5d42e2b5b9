"""Attention-based back projection network for single-image super-resolution.

Images are float64 arrays of shape (H, W, 3) with values in [0, 1].
"""

from ._abpn import (
    ConfigError,
    DimensionError,
    FormatError,
    Model,
    NetworkConfig,
    bicubic_resize,
    count_parameters,
    degrade,
    gradient_suite,
    parameter_layout,
    png_read,
    png_write,
    psnr,
    rgb_to_y,
    ssim,
    synthetic_image,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "FormatError",
    "Model",
    "NetworkConfig",
    "bicubic_resize",
    "count_parameters",
    "degrade",
    "gradient_suite",
    "parameter_layout",
    "png_read",
    "png_write",
    "psnr",
    "rgb_to_y",
    "ssim",
    "synthetic_image",
]
