"""Polarization (and color-polarization) mosaics and bilinear demosaicking.

Channel order is angle-major inside a color: ``[0, 45, 90, 135]`` for the
monochrome sensor, ``[R0, R45, R90, R135, G0, ..., B135]`` for color.

Canonical layouts (overridable by passing any integer ``layout``)::

    mono 2x2          color 4x4 ("two pixel dilated" Bayer, RGGB blocks)
    90  45            R90  R45  G90  G45
    135  0            R135 R0   G135 G0
                      G90  G45  B90  B45
                      G135 G0   B135 B0

Bilinear demosaicking is done per channel with the tent kernel of that
channel's sample lattice: rectangular lattices of pitch P use
``(1-|dy|/P)(1-|dx|/P)``, quincunx lattices (green) use the same tent in
lattice coordinates ``u = (dy+dx)/P``, ``v = (dy-dx)/P``. The kernel is zero on
every other lattice site, so sampled pixels are reproduced exactly, and it is
a partition of unity, so linear ramps are reproduced away from borders.
Borders use normalized convolution; the few corner pixels with no sample under
the kernel take the nearest sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ShapeMismatchError

__all__ = [
    "MosaicPattern",
    "MONO",
    "RGB",
    "mosaic",
    "scatter",
    "demosaic_bilinear",
    "pack_raw",
    "unpack_raw",
    "superpixels",
]

_ANGLE_INDEX = {0: 0, 45: 1, 90: 2, 135: 3}


@dataclass(frozen=True)
class MosaicPattern:
    """Periodic assignment of sensor pixels to channels.

    ``layout[y % P, x % P]`` is the channel index of pixel ``(y, x)``.
    """

    layout: tuple
    channels: tuple
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        arr = np.asarray(self.layout)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("layout must be a square 2-D table")
        used = set(arr.ravel().tolist())
        if used != set(range(len(self.channels))):
            raise ValueError("layout must use every channel index exactly as listed")

    @property
    def period(self) -> int:
        return len(self.layout)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def table(self) -> np.ndarray:
        return np.asarray(self.layout, dtype=int)

    def channel_map(self, height: int, width: int) -> np.ndarray:
        """Channel index of every pixel of an ``height x width`` raw image."""
        self._check_size(height, width)
        p = self.period
        return np.tile(self.table, (height // p, width // p))

    def offsets(self, channel: int) -> list[tuple[int, int]]:
        ys, xs = np.nonzero(self.table == channel)
        return list(zip(ys.tolist(), xs.tolist()))

    def kernel(self, channel: int) -> np.ndarray:
        """Bilinear tent kernel of one channel's sample lattice."""
        p = self.period
        offs = self.offsets(channel)
        d = np.arange(-(p - 1), p)
        dy, dx = np.meshgrid(d, d, indexing="ij")
        if len(offs) == 1:
            return np.maximum(0.0, 1.0 - np.abs(dy) / p) * np.maximum(0.0, 1.0 - np.abs(dx) / p)
        if len(offs) == 2:
            (y0, x0), (y1, x1) = offs
            if abs(y1 - y0) * 2 == p and abs(x1 - x0) * 2 == p:
                u = (dy + dx) / p
                v = (dy - dx) / p
                return np.maximum(0.0, 1.0 - np.abs(u)) * np.maximum(0.0, 1.0 - np.abs(v))
        raise ValueError(f"channel {channel} does not sit on a rectangular or quincunx lattice")

    def _check_size(self, height: int, width: int):
        p = self.period
        if height % p or width % p:
            raise ShapeMismatchError(f"image size {height}x{width} is not a multiple of the pattern period {p}")

    @classmethod
    def mono(cls, layout=((90, 45), (135, 0))) -> "MosaicPattern":
        """2x2 polarizer mosaic; ``layout`` lists polarizer angles in degrees."""
        table = tuple(tuple(_ANGLE_INDEX[a] for a in row) for row in layout)
        return cls(table, ("I0", "I45", "I90", "I135"), name="mono")

    @classmethod
    def rgb(cls, angle_layout=((90, 45), (135, 0)), color_layout=(("R", "G"), ("G", "B"))) -> "MosaicPattern":
        """4x4 color-polarization mosaic: a Bayer CFA whose cells are 2x2 polarizer blocks."""
        colors = ("R", "G", "B")
        table = np.zeros((4, 4), dtype=int)
        for by in range(2):
            for bx in range(2):
                c = colors.index(color_layout[by][bx])
                for ay in range(2):
                    for ax in range(2):
                        table[2 * by + ay, 2 * bx + ax] = 4 * c + _ANGLE_INDEX[angle_layout[ay][ax]]
        names = tuple(f"{c}{a}" for c in colors for a in (0, 45, 90, 135))
        return cls(tuple(map(tuple, table.tolist())), names, name="rgb")

    @classmethod
    def named(cls, name: str) -> "MosaicPattern":
        if name == "mono":
            return MONO
        if name == "rgb":
            return RGB
        raise ValueError(f"unknown pattern {name!r}; expected 'mono' or 'rgb'")


MONO = MosaicPattern.mono()
RGB = MosaicPattern.rgb()


def _as_hw(raw) -> np.ndarray:
    raw = np.asarray(raw)
    if raw.ndim == 3 and raw.shape[-1] == 1:
        raw = raw[..., 0]
    if raw.ndim != 2:
        raise ShapeMismatchError(f"raw mosaic must be H x W (or H x W x 1), got {raw.shape}")
    return raw


def mosaic(img, pattern: MosaicPattern = MONO) -> np.ndarray:
    """Sample an ``H x W x C`` channel stack through the pattern; returns ``H x W``."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[-1] != pattern.n_channels:
        raise ShapeMismatchError(
            f"expected H x W x {pattern.n_channels} input for pattern {pattern.name!r}, got {img.shape}"
        )
    h, w, _ = img.shape
    cmap = pattern.channel_map(h, w)
    return np.take_along_axis(img, cmap[..., None], axis=-1)[..., 0]


def scatter(raw, pattern: MosaicPattern = MONO) -> tuple[np.ndarray, np.ndarray]:
    """Place raw samples into their channels.

    Returns ``(values, mask)``, both ``H x W x C``; unsampled entries are 0 in
    ``values`` and False in ``mask``.
    """
    raw = _as_hw(raw)
    h, w = raw.shape
    cmap = pattern.channel_map(h, w)
    mask = cmap[..., None] == np.arange(pattern.n_channels)
    values = np.where(mask, raw[..., None].astype(float), 0.0)
    return values, mask


def demosaic_bilinear(raw, pattern: MosaicPattern = MONO) -> np.ndarray:
    """Per-channel bilinear interpolation; exact at sampled positions."""
    values, mask = scatter(raw, pattern)
    out = np.empty(values.shape, dtype=float)
    for c in range(pattern.n_channels):
        k = pattern.kernel(c)
        num = ndimage.correlate(values[..., c], k, mode="constant", cval=0.0)
        den = ndimage.correlate(mask[..., c].astype(float), k, mode="constant", cval=0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            plane = num / den
        empty = den == 0
        if np.any(empty):
            # corners of sparse lattices: fall back to the nearest sample
            _, (iy, ix) = ndimage.distance_transform_edt(~mask[..., c], return_indices=True)
            plane[empty] = values[..., c][iy[empty], ix[empty]]
        out[..., c] = plane
    return out


def pack_raw(raw, period: int) -> np.ndarray:
    """Space-to-depth: ``H x W`` -> ``H/P x W/P x P*P`` (row-major offsets)."""
    raw = _as_hw(raw)
    h, w = raw.shape
    if h % period or w % period:
        raise ShapeMismatchError(f"raw size {h}x{w} is not a multiple of {period}")
    return raw.reshape(h // period, period, w // period, period).transpose(0, 2, 1, 3).reshape(
        h // period, w // period, period * period
    )


def unpack_raw(packed, period: int) -> np.ndarray:
    packed = np.asarray(packed)
    hp, wp, c = packed.shape
    if c != period * period:
        raise ShapeMismatchError(f"expected {period * period} packed channels, got {c}")
    return packed.reshape(hp, wp, period, period).transpose(0, 2, 1, 3).reshape(hp * period, wp * period)


def superpixels(raw, pattern: MosaicPattern = MONO) -> np.ndarray:
    """One untouched sample per channel and period: ``H/P x W/P x C``.

    Channels sampled more than once per period (green in the color pattern)
    take their first occurrence in row-major order, so every output value is a
    single sensor reading and keeps its noise statistics.
    """
    raw = _as_hw(raw)
    p = pattern.period
    packed = pack_raw(raw, p)
    first = [oy * p + ox for oy, ox in (pattern.offsets(c)[0] for c in range(pattern.n_channels))]
    return packed[..., first]
