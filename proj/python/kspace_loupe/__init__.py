"""Learned k-space sampling patterns with an unrolled multi-coil MRI reconstruction."""

from ._core import (
    ConfigError,
    Error,
    FormatError,
    NumericError,
    ShapeError,
    centered_calibration,
    config_hash,
    data_consistency,
    fft2c,
    gradcheck,
    ifft2c,
    load_checkpoint,
    probability_map,
    psnr,
    read_sample,
    renormalize,
    sense_adjoint,
    sense_forward,
    simulate_coils,
    simulate_phantom,
    ssim,
    topk_pattern,
    tv_recon,
    uniform,
    validate_config,
    vd_pattern,
    zero_filled,
)

__all__ = [
    "ConfigError",
    "Error",
    "FormatError",
    "NumericError",
    "ShapeError",
    "centered_calibration",
    "config_hash",
    "data_consistency",
    "fft2c",
    "gradcheck",
    "ifft2c",
    "load_checkpoint",
    "probability_map",
    "psnr",
    "read_sample",
    "renormalize",
    "sense_adjoint",
    "sense_forward",
    "simulate_coils",
    "simulate_phantom",
    "ssim",
    "topk_pattern",
    "tv_recon",
    "uniform",
    "validate_config",
    "vd_pattern",
    "zero_filled",
]
