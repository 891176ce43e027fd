"""Synthetic polarization bursts from clean full-resolution captures.

Pipeline per sample: random crop (plus a margin so warps never extrapolate),
per-frame rigid motion with bilinear resampling and matching Stokes rotation,
``d x d`` box downsampling, polarization mosaicking and sensor-law noise.

Geometry convention: pixel ``(y, x)`` has planar position ``(x, y)`` and all
angles, both the frame rotation and the AoLP, are measured from ``+x`` towards
``+y``. Frame ``k`` shows the scene moved by ``(dx, dy)`` and rotated by
``theta`` about the crop center::

    J(q) = R(theta) I(R(-theta) (q - c - t) + c)

so its AoLP is the source AoLP plus ``theta``. Motion is recorded in
ground-truth pixels; frame 0 is the reference and never moves.

Randomness: sample ``i`` of a run seeded with ``seed`` draws geometry,
noise level and pixel noise from substreams ``(seed, i, 0)``, ``(seed, i, 1)``
and ``(seed, i, 2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from ._rng import substream
from .errors import DataError, ShapeMismatchError
from .mosaic import MosaicPattern, mosaic, pack_raw
from .noise_model import SensorNoiseParams
from .stokes import PolarQuad, acquire, reconstruct, rotate_stokes
from .tensor_io import TensorFile, write_tensor

__all__ = [
    "SynthConfig",
    "BurstSample",
    "generate",
    "warp_frame",
    "downsample",
    "write_sample",
    "crop_margin",
]

_STAGE_GEOMETRY, _STAGE_NOISE, _STAGE_PIXELS = 0, 1, 2


@dataclass
class SynthConfig:
    """Settings of the synthetic burst generator.

    Noise levels are drawn log-uniformly from the two ranges; a range with
    equal ends is a fixed value (0 disables that term). ``aligned=True``
    disables motion while keeping noise.
    """

    num_frames: int = 14
    translation_range: float = 24.0
    rotation_range_deg: float = 1.0
    downsample_factor: int = 2
    crop_size: int = 384
    pattern: str = "rgb"
    sigma_s_sq_range: tuple = (1e-4, 1e-2)
    sigma_r_sq_range: tuple = (1e-6, 1e-4)
    noise: bool = True
    aligned: bool = False
    keep_clean: bool = False
    seed: int = 0

    def __post_init__(self):
        self.sigma_s_sq_range = tuple(float(v) for v in self.sigma_s_sq_range)
        self.sigma_r_sq_range = tuple(float(v) for v in self.sigma_r_sq_range)
        self.validate()

    def validate(self):
        if int(self.num_frames) < 1:
            raise DataError("num_frames must be >= 1")
        if self.translation_range < 0 or self.rotation_range_deg < 0:
            raise DataError("motion ranges must be non-negative")
        if self.rotation_range_deg >= 45:
            raise DataError("rotation_range_deg must stay below 45")
        if int(self.downsample_factor) < 1:
            raise DataError("downsample_factor must be >= 1")
        period = self.mosaic_pattern.period
        if self.crop_size % self.downsample_factor or (self.crop_size // self.downsample_factor) % period:
            raise DataError(
                f"crop_size {self.crop_size} must be divisible by downsample_factor x pattern period "
                f"({self.downsample_factor} x {period})"
            )
        for name in ("sigma_s_sq_range", "sigma_r_sq_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo or (lo == 0 and hi > 0):
                raise DataError(f"{name} must be 0 <= lo <= hi with lo > 0 unless both are 0")

    @property
    def mosaic_pattern(self) -> MosaicPattern:
        return MosaicPattern.named(self.pattern)

    @property
    def frame_size(self) -> int:
        return self.crop_size // self.downsample_factor

    @property
    def burst_tile(self) -> tuple:
        """Shape of one packed (space-to-depth) frame."""
        p = self.mosaic_pattern.period
        return (self.frame_size // p, self.frame_size // p, p * p)

    @property
    def margin(self) -> int:
        return crop_margin(self.crop_size, self.max_translation, self.max_rotation)

    @property
    def max_translation(self) -> float:
        return 0.0 if self.aligned else float(self.translation_range)

    @property
    def max_rotation(self) -> float:
        return 0.0 if self.aligned else math.radians(self.rotation_range_deg)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma_s_sq_range"] = list(self.sigma_s_sq_range)
        d["sigma_r_sq_range"] = list(self.sigma_r_sq_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**d)


def crop_margin(crop_size: int, max_translation: float, max_rotation: float) -> int:
    """Border needed so that every warped sample lands inside the source."""
    if max_translation == 0 and max_rotation == 0:
        return 0
    half_diag = crop_size / math.sqrt(2.0)
    return int(math.ceil(max_translation + 2.0 * half_diag * math.sin(0.5 * max_rotation))) + 1


@dataclass
class BurstSample:
    gt: np.ndarray
    frames: np.ndarray
    motion_truth: np.ndarray
    noise_truth: SensorNoiseParams
    crop_origin: tuple
    pattern: MosaicPattern
    clean_frames: np.ndarray | None = None
    index: int = 0
    seed: int = 0

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def packed_frames(self) -> np.ndarray:
        """Frames as ``N x H/P x W/P x P*P`` tiles."""
        return np.stack([pack_raw(f, self.pattern.period) for f in self.frames])

    def manifest(self) -> dict:
        return {
            "index": self.index,
            "seed": self.seed,
            "crop_origin": list(self.crop_origin),
            "pattern": self.pattern.name,
            "channels": list(self.pattern.channels),
            "motion_truth": [
                {"dx_px": float(dx), "dy_px": float(dy), "theta_rad": float(th)} for dx, dy, th in self.motion_truth
            ],
            "noise_truth": self.noise_truth.to_dict(),
        }


def _rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def warp_frame(src: np.ndarray, origin, size: int, dx: float, dy: float, theta: float) -> np.ndarray:
    """Render one moved frame of ``size x size`` from a padded source.

    ``origin`` is the ``(y, x)`` of the crop's top-left corner in ``src``.
    Angle channels are resampled bilinearly, then polarization is rotated by
    ``theta``.
    """
    oy, ox = origin
    if dx == 0 and dy == 0 and theta == 0:
        return src[oy : oy + size, ox : ox + size].astype(np.float64)
    c = (size - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(size, dtype=float), np.arange(size, dtype=float), indexing="ij")
    r = _rotation(-theta)
    qx, qy = xx - c - dx, yy - c - dy
    sx = r[0, 0] * qx + r[0, 1] * qy + c + ox
    sy = r[1, 0] * qx + r[1, 1] * qy + c + oy
    if sx.min() < 0 or sy.min() < 0 or sx.max() > src.shape[1] - 1 or sy.max() > src.shape[0] - 1:
        raise DataError("warp samples outside the source; margin too small")
    coords = np.stack([sy, sx])
    out = np.empty((size, size, src.shape[-1]))
    for ch in range(src.shape[-1]):
        out[..., ch] = ndimage.map_coordinates(src[..., ch], coords, order=1, mode="nearest")
    if theta != 0:
        g = out.reshape(size, size, -1, 4)
        s = rotate_stokes(reconstruct(PolarQuad(g[..., 0], g[..., 1], g[..., 2], g[..., 3])), theta)
        out = acquire(s).as_array().reshape(size, size, -1)
    return out


def downsample(img: np.ndarray, factor: int) -> np.ndarray:
    """``factor x factor`` box average over the two leading axes."""
    if factor == 1:
        return img
    h, w = img.shape[:2]
    if h % factor or w % factor:
        raise ShapeMismatchError(f"size {h}x{w} not divisible by {factor}")
    return img.reshape(h // factor, factor, w // factor, factor, *img.shape[2:]).mean(axis=(1, 3))


def _draw_level(rng, lo, hi):
    if lo == hi:
        return lo
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def generate(source, cfg: SynthConfig | None = None, index: int = 0) -> BurstSample:
    """Generate one burst/ground-truth pair from a clean ``H x W x C`` source.

    ``C`` must match the pattern (4 for ``mono``, 12 for ``rgb``).
    """
    cfg = cfg or SynthConfig()
    pattern = cfg.mosaic_pattern
    src = np.asarray(source, dtype=np.float64)
    if src.ndim != 3 or src.shape[-1] != pattern.n_channels:
        raise ShapeMismatchError(
            f"source must be H x W x {pattern.n_channels} for pattern {pattern.name!r}, got {src.shape}"
        )
    if np.any(src < 0) or not np.all(np.isfinite(src)):
        raise DataError("source intensities must be finite and non-negative")
    size, m = cfg.crop_size, cfg.margin
    h, w = src.shape[:2]
    if h < size + 2 * m or w < size + 2 * m:
        raise DataError(f"source {h}x{w} too small for crop {size} with margin {m}")

    geo = substream(cfg.seed, index, _STAGE_GEOMETRY)
    oy = int(geo.integers(m, h - size - m + 1))
    ox = int(geo.integers(m, w - size - m + 1))
    n = int(cfg.num_frames)
    motion = np.zeros((n, 3))
    if n > 1:
        t, r = cfg.max_translation, cfg.max_rotation
        motion[1:, 0] = geo.uniform(-t, t, n - 1) if t else 0.0
        motion[1:, 1] = geo.uniform(-t, t, n - 1) if t else 0.0
        motion[1:, 2] = geo.uniform(-r, r, n - 1) if r else 0.0

    lvl = substream(cfg.seed, index, _STAGE_NOISE)
    if cfg.noise:
        params = SensorNoiseParams(_draw_level(lvl, *cfg.sigma_s_sq_range), _draw_level(lvl, *cfg.sigma_r_sq_range))
    else:
        params = SensorNoiseParams(0.0, 0.0)

    gt = src[oy : oy + size, ox : ox + size].copy()
    fs = cfg.frame_size
    clean = np.empty((n, fs, fs))
    for k, (dx, dy, th) in enumerate(motion):
        frame = warp_frame(src, (oy, ox), size, dx, dy, th)
        clean[k] = mosaic(downsample(frame, cfg.downsample_factor), pattern)

    if params.sigma_s_sq == 0 and params.sigma_r_sq == 0:
        frames = clean.copy()
    else:
        pix = substream(cfg.seed, index, _STAGE_PIXELS)
        z = pix.standard_normal(clean.shape)
        # the variance term uses the clipped mean; warped data stays >= 0 anyway
        frames = clean + np.sqrt(np.maximum(clean, 0.0) * params.sigma_s_sq + params.sigma_r_sq) * z

    return BurstSample(
        gt=gt,
        frames=frames,
        motion_truth=motion,
        noise_truth=params,
        crop_origin=(oy, ox),
        pattern=pattern,
        clean_frames=clean if cfg.keep_clean else None,
        index=index,
        seed=cfg.seed,
    )


def write_sample(sample: BurstSample, out_dir, cfg: SynthConfig | None = None) -> list[Path]:
    """Write ``gt.pten``, ``frames.pten`` and ``manifest.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ch = list(sample.pattern.channels)
    paths = [
        write_tensor(out_dir / "gt.pten", TensorFile(sample.gt.astype(np.float32), ch, {"kind": "gt"})),
        write_tensor(
            out_dir / "frames.pten",
            TensorFile(sample.frames.astype(np.float32), None, {"kind": "raw_burst", "pattern": sample.pattern.name}),
        ),
    ]
    man = sample.manifest()
    if cfg is not None:
        man["config"] = cfg.to_dict()
    mpath = out_dir / "manifest.json"
    mpath.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    paths.append(mpath)
    return paths
