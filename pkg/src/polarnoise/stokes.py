"""Four-angle linear polarization acquisition and Stokes algebra.

Every function works elementwise, so the fields of :class:`StokesVector`,
:class:`PolarQuad` and :class:`PolarProps` may be Python floats or numpy
arrays of a common shape.

AoLP convention: ``aolp = 0.5 * atan2(s2, s1)`` wrapped to ``[-pi/2, pi/2)``.
The ``+pi/2`` representative of the equivalence class is reported as
``-pi/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import DegenerateAolpError, NonPositiveIntensityError

__all__ = [
    "StokesVector",
    "PolarQuad",
    "PolarProps",
    "acquire",
    "reconstruct",
    "props",
    "rotate_stokes",
    "wrap_aolp",
    "aolp_diff",
    "ANGLES_DEG",
]

ANGLES_DEG = (0, 45, 90, 135)
HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class StokesVector:
    """Linear Stokes triple in linear radiometric units."""

    s0: Any
    s1: Any
    s2: Any

    def as_array(self) -> np.ndarray:
        """Stack as ``(..., 3)``."""
        return np.stack(np.broadcast_arrays(self.s0, self.s1, self.s2), axis=-1).astype(float)

    @classmethod
    def from_array(cls, arr) -> "StokesVector":
        arr = np.asarray(arr, dtype=float)
        return cls(arr[..., 0], arr[..., 1], arr[..., 2])

    @property
    def s_pol(self):
        return np.hypot(self.s1, self.s2)

    def is_physical(self):
        """True where ``s0 >= 0`` and ``sqrt(s1^2 + s2^2) <= s0``.

        This only flags; noisy observations routinely violate it.
        """
        return np.logical_and(np.asarray(self.s0) >= 0, self.s_pol <= self.s0)

    def scale(self, k) -> "StokesVector":
        return StokesVector(k * self.s0, k * self.s1, k * self.s2)


@dataclass(frozen=True)
class PolarQuad:
    """Intensities behind the 0, 45, 90 and 135 degree polarizers."""

    i0: Any
    i45: Any
    i90: Any
    i135: Any

    def as_array(self) -> np.ndarray:
        """Stack as ``(..., 4)`` in angle order 0, 45, 90, 135."""
        return np.stack(
            np.broadcast_arrays(self.i0, self.i45, self.i90, self.i135), axis=-1
        ).astype(float)

    @classmethod
    def from_array(cls, arr) -> "PolarQuad":
        arr = np.asarray(arr, dtype=float)
        if arr.shape[-1] != 4:
            raise ValueError(f"expected last axis of length 4, got {arr.shape}")
        return cls(arr[..., 0], arr[..., 1], arr[..., 2], arr[..., 3])


@dataclass(frozen=True)
class PolarProps:
    """DoLP, AoLP (radians) and polarized intensity."""

    dolp: Any
    aolp: Any
    s_pol: Any


def acquire(s: StokesVector) -> PolarQuad:
    """Per-angle intensities seen through ideal linear polarizers."""
    return PolarQuad(
        0.5 * (s.s0 + s.s1),
        0.5 * (s.s0 + s.s2),
        0.5 * (s.s0 - s.s1),
        0.5 * (s.s0 - s.s2),
    )


def reconstruct(q: PolarQuad) -> StokesVector:
    """Stokes vector from four polarizer intensities."""
    return StokesVector(
        0.5 * (q.i0 + q.i45 + q.i90 + q.i135),
        q.i0 - q.i90,
        q.i45 - q.i135,
    )


def wrap_aolp(angle):
    """Map angles to the half-open interval ``[-pi/2, pi/2)`` (period pi)."""
    a = np.asarray(angle, dtype=float)
    out = np.remainder(a + HALF_PI, math.pi) - HALF_PI
    # remainder can round up to exactly pi
    out = np.where(out >= HALF_PI, out - math.pi, out)
    if a.ndim == 0:
        return float(out)
    return out


def aolp_diff(a, b):
    """Signed minimal angular step from ``a`` to ``b`` modulo pi.

    Returns ``wrap(b - a)`` in ``[-pi/2, pi/2)``, e.g.
    ``aolp_diff(85 deg, -85 deg) == 10 deg``.
    """
    return wrap_aolp(np.subtract(b, a))


def props(s: StokesVector, on_degenerate: str = "raise") -> PolarProps:
    """DoLP, AoLP and polarized intensity of a Stokes vector.

    Parameters
    ----------
    s : StokesVector
    on_degenerate : {"raise", "nan"}
        With ``"raise"``, ``s0 <= 0`` raises :class:`NonPositiveIntensityError`
        and ``s1 = s2 = 0`` raises :class:`DegenerateAolpError`. With
        ``"nan"`` the affected entries become NaN, which is what per-pixel
        callers want.
    """
    if on_degenerate not in ("raise", "nan"):
        raise ValueError(f"on_degenerate must be 'raise' or 'nan', got {on_degenerate!r}")
    s0 = np.asarray(s.s0, dtype=float)
    s1 = np.asarray(s.s1, dtype=float)
    s2 = np.asarray(s.s2, dtype=float)
    s_pol = np.hypot(s1, s2)
    bad_s0 = s0 <= 0
    bad_angle = np.logical_and(s1 == 0, s2 == 0)
    if on_degenerate == "raise":
        if np.any(bad_s0):
            raise NonPositiveIntensityError("s0 <= 0: DoLP undefined")
        if np.any(bad_angle):
            raise DegenerateAolpError("s1 = s2 = 0: AoLP undefined")
    with np.errstate(divide="ignore", invalid="ignore"):
        dolp = np.where(bad_s0, np.nan, s_pol / np.where(bad_s0, 1.0, s0))
    aolp = wrap_aolp(0.5 * np.arctan2(s2, s1))
    aolp = np.where(bad_angle, np.nan, aolp)
    if s_pol.ndim == 0:
        return PolarProps(float(dolp), float(aolp), float(s_pol))
    return PolarProps(dolp, aolp, s_pol)


def rotate_stokes(s: StokesVector, theta) -> StokesVector:
    """Rotate the polarization frame so that AoLP increases by ``theta``.

    ``s0`` is unchanged and ``(s1, s2)`` turns by ``2 * theta``. This is the
    correction applied to pixels when an image is rotated by ``theta``.
    """
    c = np.cos(2.0 * np.asarray(theta, dtype=float))
    sn = np.sin(2.0 * np.asarray(theta, dtype=float))
    s1 = c * s.s1 - sn * s.s2
    s2 = sn * s.s1 + c * s.s2
    if np.ndim(s1) == 0:
        s1, s2 = float(s1), float(s2)
    return StokesVector(s.s0, s1, s2)
