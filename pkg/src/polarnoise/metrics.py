"""PSNR on s0, DoLP and AoLP.

AoLP errors are wrap-aware: angles are equal modulo pi, so the error between
two angles is at most pi/2, which is the peak used for AoLP PSNR. Errors are
not weighted by DoLP. Pixels whose reference AoLP is undefined (``s_pol = 0``
or ``s0 <= 0``) are excluded.

Identical inputs give ``inf``; JSON reports spell it ``"inf"``. Squared errors
are reduced with NumPy's pairwise sum, so results do not depend on BLAS threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAolpError, ShapeMismatchError
from .stokes import PolarQuad, props, reconstruct

__all__ = ["AOLP_PEAK", "MetricResult", "psnr", "aolp_error", "aolp_psnr", "evaluate"]

AOLP_PEAK = 0.5 * math.pi


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def _psnr_from_mse(mse: float, peak: float) -> float:
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def psnr(a, b, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)``; ``inf`` when the inputs are identical."""
    if not peak > 0:
        raise ValueError("peak must be positive")
    a, b = _pair(a, b)
    if a.size == 0:
        raise ShapeMismatchError("empty inputs")
    d = (a - b).ravel()
    return _psnr_from_mse(float(np.sum(d * d)) / d.size, peak)


def aolp_error(a, b) -> np.ndarray:
    """Absolute angular distance modulo pi, in ``[0, pi/2]``."""
    a, b = _pair(a, b)
    d = np.mod(np.abs(a - b), math.pi)
    return np.minimum(d, math.pi - d)


def aolp_psnr(a, b, valid=None, peak: float = AOLP_PEAK) -> tuple[float, float]:
    """Wrap-aware AoLP PSNR over ``valid`` pixels.

    ``b`` is the reference; NaN entries in it are treated as degenerate.
    Returns ``(psnr_db, valid_fraction)``.

    Raises
    ------
    DegenerateAolpError
        If no reference pixel is valid.
    """
    a, b = _pair(a, b)
    mask = np.isfinite(b)
    if valid is not None:
        mask &= np.asarray(valid, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        raise DegenerateAolpError("reference AoLP is undefined everywhere")
    e = aolp_error(a[mask], b[mask])
    return _psnr_from_mse(float(np.sum(e * e)) / n, peak), n / mask.size


@dataclass(frozen=True)
class MetricResult:
    s0_psnr: float
    dolp_psnr: float
    aolp_psnr: float
    valid_pixel_fraction: float

    def to_dict(self) -> dict:
        def enc(x):
            return "inf" if math.isinf(x) else x

        return {
            "s0_psnr": enc(self.s0_psnr),
            "dolp_psnr": enc(self.dolp_psnr),
            "aolp_psnr": enc(self.aolp_psnr),
            "valid_pixel_fraction": self.valid_pixel_fraction,
        }


def _props_of(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim < 1 or img.shape[-1] % 4:
        raise ShapeMismatchError(f"last axis must hold groups of 4 angle images, got {img.shape}")
    g = img.reshape(img.shape[:-1] + (-1, 4))
    s = reconstruct(PolarQuad(g[..., 0], g[..., 1], g[..., 2], g[..., 3]))
    return s, props(s, on_degenerate="nan")


def evaluate(pred, gt, *, s0_peak: float = 1.0, clamp_dolp: bool = False) -> MetricResult:
    """Compare two ``... x 4k`` angle-image tensors (``gt`` is the reference)."""
    pred, gt = _pair(pred, gt)
    sp, pp = _props_of(pred)
    sg, pg = _props_of(gt)
    dp, dg = np.nan_to_num(pp.dolp), np.nan_to_num(pg.dolp)
    if clamp_dolp:
        dp, dg = np.clip(dp, 0.0, 1.0), np.clip(dg, 0.0, 1.0)
    a_psnr, frac = aolp_psnr(np.nan_to_num(pp.aolp), pg.aolp)
    return MetricResult(
        s0_psnr=psnr(sp.s0, sg.s0, s0_peak),
        dolp_psnr=psnr(dp, dg, 1.0),
        aolp_psnr=a_psnr,
        valid_pixel_fraction=frac,
    )
