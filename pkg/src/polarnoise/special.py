"""Scalar special functions used by the noise model.

All functions accept Python scalars or numpy arrays and return the same kind.
They are implemented here (power series, asymptotic expansions and a continued
fraction) instead of delegating to a platform math library so that results
are identical wherever numpy runs.

Switchover points
-----------------
Bessel I0/I1
    Power series for ``|x| <= 20``, Hankel asymptotic expansion above. The
    asymptotic truncation error at optimal order is about ``exp(-2x)``, which
    drops below double rounding (~1e-16) near ``x = 18.4``; 20 leaves margin.
erf / erfc
    Positive-term series ``erf(z) = 2/sqrt(pi) exp(-z^2) sum (2z^2)^n z / (2n+1)!!``
    for ``z < 1``, continued fraction for ``erfc`` above. Taking ``erfc`` from
    the fraction from ``z = 1`` on avoids the cancellation in ``1 - erf``; the
    200-level fraction is at rounding level there (relative error ~2e-16).
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "bessel_i0",
    "bessel_i0e",
    "bessel_i1",
    "bessel_i1e",
    "laguerre_half",
    "std_normal_cdf",
    "erf",
    "erfc",
    "erfcx",
    "BESSEL_SWITCH",
    "ERF_SWITCH",
]

BESSEL_SWITCH = 20.0
ERF_SWITCH = 1.0

_BESSEL_SERIES_TERMS = 64
_BESSEL_ASYMP_TERMS = 40
_ERF_SERIES_TERMS = 80
_ERFC_CF_DEPTH = 200
# log of the largest finite double
_LOG_DBL_MAX = math.log(np.finfo(float).max)


def _prepare(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _finish(out, scalar):
    if scalar:
        return float(out)
    return out


def _series_i(x, nu):
    """Power series sum_k (x/2)^(2k+nu) / (k! (k+nu)!), x >= 0."""
    q = 0.25 * x * x
    term = np.ones_like(x) if nu == 0 else 0.5 * x
    total = term.copy()
    for k in range(1, _BESSEL_SERIES_TERMS):
        term = term * q / (k * (k + nu))
        total = total + term
    return total


def _asymp_scaled_i(x, nu):
    """sqrt(2 pi x) * exp(-x) * I_nu(x) from the Hankel expansion, x large."""
    mu = 4.0 * nu * nu
    term = np.ones_like(x)
    total = term.copy()
    for k in range(1, _BESSEL_ASYMP_TERMS):
        term = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        total = total + term
    return total


def _scaled_i(ax, nu):
    """exp(-ax) I_nu(ax) for ax >= 0."""
    out = np.empty_like(ax)
    small = ax <= BESSEL_SWITCH
    if np.any(small):
        xs = ax[small]
        out[small] = np.exp(-xs) * _series_i(xs, nu)
    if np.any(~small):
        xl = ax[~small]
        out[~small] = _asymp_scaled_i(xl, nu) / np.sqrt(2.0 * np.pi * xl)
    return out


def _unscaled_i(ax, nu):
    out = np.empty_like(ax)
    small = ax <= BESSEL_SWITCH
    if np.any(small):
        out[small] = _series_i(ax[small], nu)
    if np.any(~small):
        xl = ax[~small]
        log_prefactor = xl - 0.5 * np.log(2.0 * np.pi * xl)
        series = _asymp_scaled_i(xl, nu)
        if np.any(log_prefactor + np.log(series) > _LOG_DBL_MAX):
            raise OverflowError(
                "modified Bessel function overflows double precision; "
                "use the exponentially scaled variant"
            )
        out[~small] = np.exp(log_prefactor) * series
    return out


def bessel_i0(x):
    """Modified Bessel function of the first kind, order 0.

    Raises
    ------
    OverflowError
        If ``I0(x)`` is not representable (``|x|`` above roughly 713).
    """
    arr, scalar = _prepare(x)
    ax = np.abs(np.atleast_1d(arr))
    return _finish(_unscaled_i(ax, 0).reshape(arr.shape), scalar)


def bessel_i1(x):
    """Modified Bessel function of the first kind, order 1 (odd in x)."""
    arr, scalar = _prepare(x)
    flat = np.atleast_1d(arr)
    out = np.sign(flat) * _unscaled_i(np.abs(flat), 1)
    return _finish(out.reshape(arr.shape), scalar)


def bessel_i0e(x):
    """Exponentially scaled ``exp(-|x|) I0(x)``; never overflows."""
    arr, scalar = _prepare(x)
    ax = np.abs(np.atleast_1d(arr))
    return _finish(_scaled_i(ax, 0).reshape(arr.shape), scalar)


def bessel_i1e(x):
    """Exponentially scaled ``exp(-|x|) I1(x)``."""
    arr, scalar = _prepare(x)
    flat = np.atleast_1d(arr)
    out = np.sign(flat) * _scaled_i(np.abs(flat), 1)
    return _finish(out.reshape(arr.shape), scalar)


def laguerre_half(x):
    """Laguerre function ``L_{1/2}(x)`` for ``x <= 0``.

    Uses ``L_{1/2}(x) = exp(x/2) [(1 - x) I0(-x/2) - x I1(-x/2)]`` written with
    the scaled Bessel functions, ``(1 + 2y) i0e(y) + 2y i1e(y)`` with
    ``y = -x/2``. Every term is non-negative, so there is no cancellation and
    no separate large-argument branch is needed; the scaled Bessel routines
    already switch to their asymptotic form internally.

    For large ``-x`` the value grows like ``sqrt(-4x/pi)``.
    """
    arr, scalar = _prepare(x)
    if np.any(arr > 0) or np.any(np.isnan(arr)):
        raise ValueError("laguerre_half is only defined here for x <= 0")
    y = -0.5 * np.atleast_1d(arr)
    out = (1.0 + 2.0 * y) * _scaled_i(y, 0) + 2.0 * y * _scaled_i(y, 1)
    return _finish(out.reshape(arr.shape), scalar)


def _erf_series_small(z):
    """erf(z) for 0 <= z < ERF_SWITCH via the all-positive series."""
    two_z2 = 2.0 * z * z
    term = z.copy()
    total = term.copy()
    for n in range(1, _ERF_SERIES_TERMS):
        term = term * two_z2 / (2 * n + 1)
        total = total + term
    return (2.0 / math.sqrt(math.pi)) * np.exp(-z * z) * total


def _erfc_cf_ratio(z):
    """Continued fraction K(z) with erfc(z) = exp(-z^2)/sqrt(pi) * K(z), z >= ERF_SWITCH."""
    f = z.copy()
    for k in range(_ERFC_CF_DEPTH, 0, -1):
        f = z + (0.5 * k) / f
    return 1.0 / f


def _erfc_nonneg(z):
    out = np.empty_like(z)
    small = z < ERF_SWITCH
    if np.any(small):
        out[small] = 1.0 - _erf_series_small(z[small])
    if np.any(~small):
        zl = z[~small]
        out[~small] = np.exp(-zl * zl) / math.sqrt(math.pi) * _erfc_cf_ratio(zl)
    return out


def erf(x):
    """Error function."""
    arr, scalar = _prepare(x)
    flat = np.atleast_1d(arr)
    az = np.abs(flat)
    out = np.empty_like(az)
    small = az < ERF_SWITCH
    if np.any(small):
        out[small] = _erf_series_small(az[small])
    if np.any(~small):
        out[~small] = 1.0 - _erfc_nonneg(az[~small])
    return _finish((np.sign(flat) * out).reshape(arr.shape), scalar)


def erfc(x):
    """Complementary error function."""
    arr, scalar = _prepare(x)
    flat = np.atleast_1d(arr)
    pos = _erfc_nonneg(np.abs(flat))
    out = np.where(flat >= 0, pos, 2.0 - pos)
    return _finish(out.reshape(arr.shape), scalar)


def erfcx(x):
    """Scaled complementary error function ``exp(x^2) erfc(x)`` for ``x >= 0``."""
    arr, scalar = _prepare(x)
    if np.any(arr < 0):
        raise ValueError("erfcx is only implemented for x >= 0")
    z = np.atleast_1d(arr)
    out = np.empty_like(z)
    small = z < ERF_SWITCH
    if np.any(small):
        zs = z[small]
        out[small] = np.exp(zs * zs) * (1.0 - _erf_series_small(zs))
    if np.any(~small):
        out[~small] = _erfc_cf_ratio(z[~small]) / math.sqrt(math.pi)
    return _finish(out.reshape(arr.shape), scalar)


def std_normal_cdf(x):
    """Standard normal CDF Phi(x).

    Computed from ``erfc(|x|/sqrt(2))`` on the tail side so that
    ``Phi(x) + Phi(-x) == 1`` up to one rounding.
    """
    arr, scalar = _prepare(x)
    flat = np.atleast_1d(arr)
    tail = 0.5 * _erfc_nonneg(np.abs(flat) / math.sqrt(2.0))
    out = np.where(flat < 0, tail, 1.0 - tail)
    return _finish(out.reshape(arr.shape), scalar)
