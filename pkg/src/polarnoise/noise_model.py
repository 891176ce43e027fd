"""Analytic noise propagation from sensor intensities to Stokes, DoLP and AoLP.

Sensor law: each polarizer image is Gaussian, ``N(I, I * sigma_s^2 + sigma_r^2)``.
With the four-angle reconstruction this gives a Stokes noise variance

    sigma_v^2 = s0 * sigma_s^2 + 2 * sigma_r^2,

with ``var(s0_hat) = sigma_v^2 / 2`` and ``var(s1_hat) = var(s2_hat) = sigma_v^2``,
``s1_hat`` and ``s2_hat`` independent.

Conditional on the true ``s0`` (observed ``s0_hat`` is replaced by ``s0``,
valid while ``sigma_v << s0``), the observed DoLP is Rician with location
``psi`` and scale ``sigma_v / s0``. The observed AoLP has a closed-form
marginal density that depends only on ``s_pol / sigma_v``.

AoLP densities in this module are densities over the AoLP itself on the
half-period ``[-pi/2, pi/2)``. The closed form is naturally written in the
doubled angle ``2 * phi_hat`` over a full ``2 pi`` period; converting back to
``phi_hat`` multiplies it by 2. The uniform (zero-signal) limit is therefore
``1 / pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from ._rng import as_generator
from .errors import DataError, InvalidRadianceError
from .special import bessel_i0e, erfcx, laguerre_half, std_normal_cdf
from .stokes import PolarQuad, StokesVector, acquire, wrap_aolp

__all__ = [
    "SensorNoiseParams",
    "StokesNoise",
    "DolpDistribution",
    "AolpDistribution",
    "stokes_noise",
    "sample_noisy_quad",
    "dolp_pdf",
    "dolp_mean",
    "dolp_bias",
    "dolp_std",
    "aolp_pdf",
    "aolp_std",
    "rician_pdf",
    "rician_mean",
    "rician_bias",
    "rician_std",
    "aolp_density",
    "aolp_std_from_snr",
    "aolp_std_fast",
    "AOLP_STD_NODES",
]

AOLP_STD_NODES = 4096
# Below this Rician SNR^2/4 the bias is taken from the Laguerre form, above it
# from the cancellation-free asymptotic series.
_BIAS_SERIES_MIN_Y = 25.0
_BIAS_SERIES_TERMS = 25


@dataclass(frozen=True)
class SensorNoiseParams:
    """Shot-noise coefficient and read-noise variance of the sensor law."""

    sigma_s_sq: float
    sigma_r_sq: float

    def __post_init__(self):
        if not (self.sigma_s_sq >= 0 and self.sigma_r_sq >= 0):
            raise DataError(
                f"noise parameters must be non-negative, got "
                f"sigma_s_sq={self.sigma_s_sq}, sigma_r_sq={self.sigma_r_sq}"
            )

    def intensity_variance(self, intensity):
        """Variance of a single pixel with mean ``intensity``."""
        return np.asarray(intensity) * self.sigma_s_sq + self.sigma_r_sq

    def to_dict(self) -> dict:
        return {"sigma_s_sq": float(self.sigma_s_sq), "sigma_r_sq": float(self.sigma_r_sq)}


@dataclass(frozen=True)
class StokesNoise:
    sigma_v_sq: object

    @property
    def sigma_v(self):
        return np.sqrt(self.sigma_v_sq)

    @property
    def var_s0(self):
        return 0.5 * np.asarray(self.sigma_v_sq)

    @property
    def var_s1(self):
        return self.sigma_v_sq

    @property
    def var_s2(self):
        return self.sigma_v_sq


def stokes_noise(s0, p: SensorNoiseParams) -> StokesNoise:
    """Stokes noise variance ``s0 * sigma_s^2 + 2 * sigma_r^2``."""
    s0 = np.asarray(s0, dtype=float)
    if np.any(s0 < 0):
        raise DataError("s0 must be non-negative")
    value = s0 * p.sigma_s_sq + 2.0 * p.sigma_r_sq
    return StokesNoise(float(value) if value.ndim == 0 else value)


def sample_noisy_quad(s: StokesVector, p: SensorNoiseParams, rng_seed, size=None) -> PolarQuad:
    """Draw one noisy observation of the four polarizer images.

    Each angle is an independent Gaussian with mean ``I_k`` and variance
    ``I_k * sigma_s^2 + sigma_r^2``, where ``I_k`` comes from :func:`acquire`.

    Parameters
    ----------
    s : StokesVector
        Scalars or arrays.
    p : SensorNoiseParams
    rng_seed : int or numpy.random.Generator
    size : tuple of int, optional
        Extra leading axes for independent repeats, e.g. ``(n_frames,)``.

    Raises
    ------
    InvalidRadianceError
        If any per-angle mean intensity is negative.
    """
    rng = as_generator(rng_seed)
    clean = acquire(s).as_array()
    if np.any(clean < 0):
        raise InvalidRadianceError("per-angle mean intensity is negative; Stokes vector is unphysical")
    lead = () if size is None else tuple(np.atleast_1d(size).astype(int))
    z = rng.standard_normal(lead + clean.shape)
    std = np.sqrt(clean * p.sigma_s_sq + p.sigma_r_sq)
    noisy = clean + std * z
    if noisy.ndim == 1:
        return PolarQuad(*(float(v) for v in noisy))
    return PolarQuad.from_array(noisy)


# --------------------------------------------------------------------------
# DoLP: Rician
# --------------------------------------------------------------------------


def rician_pdf(x, nu, sigma):
    """Rice density ``x/s^2 exp(-(x^2+nu^2)/2s^2) I0(x nu / s^2)``, scaled-Bessel form."""
    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("Rician density needs sigma > 0")
    s2 = sigma * sigma
    xp = np.maximum(x, 0.0)
    # exp(-(x^2 + nu^2)/2s^2) I0(x nu/s^2) = exp(-(x - nu)^2 / 2s^2) * i0e(x nu / s^2)
    out = xp / s2 * np.exp(-((xp - nu) ** 2) / (2.0 * s2)) * bessel_i0e(xp * nu / s2)
    out = np.where(x < 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def _bias_series(y):
    """R(y) with bias = (sigma^2 / nu) R(y), y = nu^2 / (4 sigma^2)."""

    def coeff(k, nu):
        mu = 4.0 * nu * nu
        t = 1.0
        for j in range(1, k + 1):
            t = -t * (mu - (2 * j - 1) ** 2) / (8.0 * j)
        return t

    total = np.zeros_like(y)
    inv = 1.0 / y
    power = np.ones_like(y)
    for k in range(_BIAS_SERIES_TERMS):
        c = coeff(k, 0) + 2.0 * coeff(k + 1, 0) + 2.0 * coeff(k + 1, 1)
        total = total + c * power
        power = power * inv
    return total


def rician_mean(nu, sigma):
    """Mean of the Rice distribution, ``sigma sqrt(pi/2) L_{1/2}(-nu^2 / 2 sigma^2)``."""
    nu = np.asarray(nu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    nu, sigma = np.broadcast_arrays(nu, sigma)
    out = nu.astype(float).copy()
    pos = sigma > 0
    if np.any(pos):
        x = -(nu[pos] ** 2) / (2.0 * sigma[pos] ** 2)
        out[pos] = sigma[pos] * math.sqrt(0.5 * math.pi) * laguerre_half(x)
    return float(out) if out.ndim == 0 else out


def rician_bias(nu, sigma):
    """``E[x] - nu`` for the Rice distribution, without cancellation at high SNR."""
    nu = np.asarray(nu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    nu, sigma = np.broadcast_arrays(nu, sigma)
    out = np.zeros(nu.shape, dtype=float)
    pos = sigma > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(pos, nu * nu / (4.0 * sigma * sigma), 0.0)
    far = pos & (y >= _BIAS_SERIES_MIN_Y)
    near = pos & ~far
    if np.any(near):
        x = -2.0 * y[near]
        out[near] = sigma[near] * math.sqrt(0.5 * math.pi) * laguerre_half(x) - nu[near]
    if np.any(far):
        out[far] = sigma[far] ** 2 / nu[far] * _bias_series(y[far])
    return float(out) if out.ndim == 0 else out


def rician_std(nu, sigma):
    """Standard deviation ``sqrt(2 sigma^2 + nu^2 - E^2)``, negative round-off clamped."""
    nu = np.asarray(nu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    b = np.asarray(rician_bias(nu, sigma))
    # 2s^2 + nu^2 - (nu + b)^2 = 2s^2 - b (2 nu + b)
    var = 2.0 * sigma * sigma - b * (2.0 * nu + b)
    out = np.sqrt(np.maximum(var, 0.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DolpDistribution:
    """Observed-DoLP distribution ``Rice(psi_true, sigma_norm)``, ``sigma_norm = sigma_v / s0``.

    ``sigma_norm == 0`` is accepted as the noiseless limit (point mass at
    ``psi_true``); the density is undefined there.
    """

    psi_true: float
    sigma_norm: float

    def __post_init__(self):
        if not (np.all(np.asarray(self.psi_true) >= 0) and np.all(np.asarray(self.sigma_norm) >= 0)):
            raise DataError("psi_true and sigma_norm must be non-negative")

    @classmethod
    def from_stokes(cls, s: StokesVector, noise: StokesNoise, n_frames: int = 1) -> "DolpDistribution":
        s0 = np.asarray(s.s0, dtype=float)
        if np.any(s0 <= 0):
            raise DataError("s0 must be positive")
        sigma = np.sqrt(np.asarray(noise.sigma_v_sq) / n_frames) / s0
        psi = np.hypot(s.s1, s.s2) / s0
        return cls(_maybe_float(psi), _maybe_float(sigma))

    def pdf(self, psi_hat):
        return rician_pdf(psi_hat, self.psi_true, self.sigma_norm)

    def mean(self):
        return rician_mean(self.psi_true, self.sigma_norm)

    def bias(self):
        return rician_bias(self.psi_true, self.sigma_norm)

    def std(self):
        return rician_std(self.psi_true, self.sigma_norm)

    def sample(self, rng, size):
        rng = as_generator(rng)
        z = rng.standard_normal((2,) + tuple(np.atleast_1d(size)))
        return np.hypot(self.psi_true + self.sigma_norm * z[0], self.sigma_norm * z[1])


def dolp_pdf(d: DolpDistribution, psi_hat):
    return d.pdf(psi_hat)


def dolp_mean(d: DolpDistribution):
    return d.mean()


def dolp_bias(d: DolpDistribution):
    return d.bias()


def dolp_std(d: DolpDistribution):
    return d.std()


# --------------------------------------------------------------------------
# AoLP
# --------------------------------------------------------------------------


def _doubled_angle_density(delta2, snr):
    """Density over the doubled-angle error ``2 (phi_hat - phi)`` on a 2 pi period."""
    delta2, snr = np.broadcast_arrays(np.asarray(delta2, dtype=float), np.asarray(snr, dtype=float))
    c = snr * np.cos(delta2)
    base = np.exp(-0.5 * snr * snr) / (2.0 * math.pi)
    out = np.empty(c.shape, dtype=float)
    pos = c >= 0
    if np.any(pos):
        cp = c[pos]
        sp = snr[pos] * np.sin(delta2[pos])
        out[pos] = base[pos] + cp / math.sqrt(2.0 * math.pi) * np.exp(-0.5 * sp * sp) * std_normal_cdf(cp)
    if np.any(~pos):
        # base * (1 + sqrt(2 pi) c exp(c^2/2) Phi(c)), with exp(c^2/2) Phi(c) = erfcx(|c|/sqrt2)/2
        a = -c[~pos]
        g = 1.0 - math.sqrt(0.5 * math.pi) * a * erfcx(a / math.sqrt(2.0))
        out[~pos] = base[~pos] * np.maximum(g, 0.0)
    return out


def aolp_density(delta, snr):
    """Density of the AoLP error ``delta = phi_hat - phi`` (period pi), for ``snr = s_pol / sigma_v``."""
    out = 2.0 * _doubled_angle_density(2.0 * np.asarray(delta, dtype=float), snr)
    return float(out) if out.ndim == 0 else out


def _simpson_weights(n_intervals):
    w = np.ones(n_intervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def aolp_std_from_snr(snr, nodes: int = AOLP_STD_NODES):
    """Root-mean-square AoLP error for ``snr = s_pol / sigma_v``.

    Composite Simpson rule with ``nodes`` intervals on ``[0, U]`` and the
    density's symmetry about the true angle. ``U`` is the half period, or
    ``20 / snr`` when that is shorter: beyond it the density is below
    ``exp(-80)`` relative to its peak, and shrinking the range keeps the
    rule resolved at high SNR.
    """
    snr = np.asarray(snr, dtype=float)
    flat = np.atleast_1d(snr).ravel()
    out = np.zeros(flat.shape, dtype=float)
    w = _simpson_weights(nodes)
    grid = np.linspace(0.0, 1.0, nodes + 1)
    finite = np.isfinite(flat)
    chunk = max(1, 2_000_000 // (nodes + 1))
    idx = np.flatnonzero(finite)
    for start in range(0, idx.size, chunk):
        sel = idx[start : start + chunk]
        k = flat[sel]
        with np.errstate(divide="ignore"):
            upper = np.minimum(0.5 * math.pi, np.where(k > 0, 20.0 / k, np.inf))
        delta = upper[:, None] * grid[None, :]
        dens = aolp_density(delta, k[:, None])
        var = 2.0 * (upper / nodes) * ((delta * delta * dens) @ w)
        out[sel] = np.sqrt(var)
    out = out.reshape(snr.shape)
    return float(out) if out.ndim == 0 else out


_TABLE_MIN, _TABLE_MAX, _TABLE_POINTS = 1e-6, 1e4, 1537


@lru_cache(maxsize=1)
def _aolp_std_spline():
    log_k = np.linspace(math.log(_TABLE_MIN), math.log(_TABLE_MAX), _TABLE_POINTS)
    values = aolp_std_from_snr(np.exp(log_k))
    return CubicSpline(log_k, np.log(values))


def aolp_std_fast(snr):
    """Tabulated :func:`aolp_std_from_snr` for per-pixel maps.

    Cubic spline in log-log space on ``[1e-6, 1e4]``. Below the range the
    std is linear in ``snr`` and is interpolated from the zero-signal value
    ``pi / sqrt(12)``; above it the Gaussian limit ``1 / (2 snr)`` is used.
    """
    snr = np.asarray(snr, dtype=float)
    out = np.empty(snr.shape, dtype=float)
    low = snr < _TABLE_MIN
    high = snr > _TABLE_MAX
    mid = ~(low | high)
    spline = _aolp_std_spline()
    if np.any(low):
        zero = math.pi / math.sqrt(12.0)
        edge = math.exp(float(spline(math.log(_TABLE_MIN))))
        out[low] = zero + (edge - zero) * np.maximum(snr[low], 0.0) / _TABLE_MIN
    with np.errstate(divide="ignore"):
        out[high] = 0.5 / snr[high]
    if np.any(mid):
        out[mid] = np.exp(spline(np.log(snr[mid])))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AolpDistribution:
    """Observed-AoLP distribution around ``phi_true`` for ``snr_pol = s_pol / sigma_v``."""

    phi_true: float
    snr_pol: float

    def __post_init__(self):
        if not np.all(np.asarray(self.snr_pol) >= 0):
            raise DataError("snr_pol must be non-negative")

    @classmethod
    def from_stokes(cls, s: StokesVector, noise: StokesNoise, n_frames: int = 1) -> "AolpDistribution":
        sigma_v = np.sqrt(np.asarray(noise.sigma_v_sq) / n_frames)
        s_pol = np.hypot(s.s1, s.s2)
        phi = wrap_aolp(0.5 * np.arctan2(s.s2, s.s1))
        with np.errstate(divide="ignore", invalid="ignore"):
            snr = np.where(sigma_v > 0, s_pol / np.where(sigma_v > 0, sigma_v, 1.0), np.inf)
        return cls(_maybe_float(phi), _maybe_float(snr))

    def pdf(self, phi_hat):
        return aolp_density(np.subtract(phi_hat, self.phi_true), self.snr_pol)

    def std(self):
        return aolp_std_from_snr(self.snr_pol)

    def sample(self, rng, size):
        rng = as_generator(rng)
        z = rng.standard_normal((2,) + tuple(np.atleast_1d(size)))
        return wrap_aolp(self.phi_true + 0.5 * np.arctan2(z[1], self.snr_pol + z[0]))


def aolp_pdf(a: AolpDistribution, phi_hat):
    return a.pdf(phi_hat)


def aolp_std(a: AolpDistribution):
    return a.std()


def _maybe_float(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v
