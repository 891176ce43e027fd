"""Noise propagation for snapshot linear-polarization cameras."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DataError,
    DegenerateAolpError,
    InsufficientFramesError,
    InvalidRadianceError,
    NonPositiveIntensityError,
    NumericError,
    PolarNoiseError,
    ShapeMismatchError,
    TensorFormatError,
)
from .stokes import PolarProps, PolarQuad, StokesVector, acquire, aolp_diff, props, reconstruct, rotate_stokes, wrap_aolp  # noqa: E402
from .noise_model import (  # noqa: E402
    AolpDistribution,
    DolpDistribution,
    SensorNoiseParams,
    StokesNoise,
    aolp_density,
    aolp_pdf,
    aolp_std,
    dolp_bias,
    dolp_mean,
    dolp_pdf,
    dolp_std,
    sample_noisy_quad,
    stokes_noise,
)
from .mosaic import MONO, RGB, MosaicPattern, demosaic_bilinear, mosaic, superpixels  # noqa: E402
from .burst_stats import ImageStack, PixelStats, accumulate, model_maps, report  # noqa: E402
from .synth import BurstSample, SynthConfig, generate  # noqa: E402
from .metrics import MetricResult, aolp_psnr, evaluate, psnr  # noqa: E402

__all__ = [
    "__version__",
    "PolarNoiseError",
    "DataError",
    "NumericError",
    "DegenerateAolpError",
    "NonPositiveIntensityError",
    "InvalidRadianceError",
    "ShapeMismatchError",
    "InsufficientFramesError",
    "TensorFormatError",
    "StokesVector",
    "PolarQuad",
    "PolarProps",
    "acquire",
    "reconstruct",
    "props",
    "wrap_aolp",
    "aolp_diff",
    "rotate_stokes",
    "SensorNoiseParams",
    "StokesNoise",
    "stokes_noise",
    "sample_noisy_quad",
    "DolpDistribution",
    "AolpDistribution",
    "dolp_pdf",
    "dolp_mean",
    "dolp_bias",
    "dolp_std",
    "aolp_density",
    "aolp_pdf",
    "aolp_std",
    "MosaicPattern",
    "MONO",
    "RGB",
    "mosaic",
    "demosaic_bilinear",
    "superpixels",
    "ImageStack",
    "PixelStats",
    "accumulate",
    "model_maps",
    "report",
    "SynthConfig",
    "BurstSample",
    "generate",
    "MetricResult",
    "psnr",
    "aolp_psnr",
    "evaluate",
]
