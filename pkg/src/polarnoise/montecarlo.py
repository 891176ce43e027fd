"""Monte Carlo checks of the analytic DoLP and AoLP distributions.

Samples are drawn through the full acquisition route: four noisy polarizer
intensities, Stokes reconstruction, then DoLP (normalized by the true ``s0``)
and AoLP. They never touch the closed-form densities, so agreement is a real
cross-check. Draws are cut into fixed chunks; chunk ``k`` uses substream
``(seed, k)``, which makes the result independent of the thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import ordered_map, substream
from .errors import DataError
from .noise_model import (
    SensorNoiseParams,
    aolp_density,
    aolp_std_from_snr,
    rician_mean,
    rician_pdf,
    rician_std,
    sample_noisy_quad,
)
from .stokes import StokesVector, aolp_diff, reconstruct

__all__ = [
    "CHUNK",
    "Comparison",
    "bin_probabilities",
    "total_variation",
    "compare_dolp",
    "compare_aolp",
    "sample_dolp",
    "sample_aolp_error",
]

CHUNK = 1 << 18
_SUBINTERVALS = 16


@dataclass
class Comparison:
    """Histogram of Monte Carlo draws against analytic bin probabilities.

    ``mc_prob`` and ``analytic_prob`` have one entry per bin plus a final
    entry for the mass outside ``edges``; ``tv`` is computed over all of them.
    """

    kind: str
    params: dict
    edges: np.ndarray
    counts: np.ndarray
    outside: int
    n_samples: int
    mc_prob: np.ndarray
    analytic_prob: np.ndarray
    tv: float
    mc_mean: float
    mc_mean_se: float
    mc_std: float
    analytic_mean: float
    analytic_std: float

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "n_samples": self.n_samples,
            "bins": len(self.edges) - 1,
            "range": [float(self.edges[0]), float(self.edges[-1])],
            "tv_distance": self.tv,
            "mc_mean": self.mc_mean,
            "mc_mean_se": self.mc_mean_se,
            "analytic_mean": self.analytic_mean,
            "mc_std": self.mc_std,
            "analytic_std": self.analytic_std,
            "outside_fraction": self.outside / self.n_samples,
        }

    def rows(self):
        """``(low, high, mc_prob, analytic_prob)`` per in-range bin."""
        for i in range(len(self.edges) - 1):
            yield self.edges[i], self.edges[i + 1], self.mc_prob[i], self.analytic_prob[i]


def bin_probabilities(pdf, edges, subintervals: int = _SUBINTERVALS) -> np.ndarray:
    """Integrate ``pdf`` over each bin with composite Simpson's rule."""
    edges = np.asarray(edges, dtype=float)
    m = subintervals + (subintervals % 2)
    t = np.linspace(0.0, 1.0, m + 1)
    w = np.ones(m + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    lo, hi = edges[:-1, None], edges[1:, None]
    x = lo + (hi - lo) * t
    return (pdf(x) @ w) * (hi[:, 0] - lo[:, 0]) / (3.0 * m)


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def _chunks(n: int, chunk: int):
    return [(k, min(chunk, n - k * chunk)) for k in range((n + chunk - 1) // chunk)]


def _draw_stokes(s: StokesVector, sigma_v: float, seed: int, key: int, size: int) -> StokesVector:
    # read noise only, so sigma_v is the same for every s0
    p = SensorNoiseParams(0.0, 0.5 * sigma_v * sigma_v)
    return reconstruct(sample_noisy_quad(s, p, substream(seed, key), size=(size,)))


def _true_stokes(s0, psi, phi):
    return StokesVector(s0, s0 * psi * math.cos(2.0 * phi), s0 * psi * math.sin(2.0 * phi))


def sample_dolp(psi: float, snr: float, n: int, seed: int = 0, phi: float = 0.0) -> np.ndarray:
    """Observed DoLP draws for true DoLP ``psi`` at ``s0 / sigma_v = snr`` (``s0 = 1``)."""
    s = _true_stokes(1.0, psi, phi)
    out = []
    for k, m in _chunks(n, CHUNK):
        v = _draw_stokes(s, 1.0 / snr, seed, k, m)
        out.append(np.hypot(v.s1, v.s2))
    return np.concatenate(out) if out else np.empty(0)


def _pol_setup(snr_pol: float):
    sigma_v = min(0.01, 0.5 / snr_pol) if snr_pol > 0 else 0.01
    return sigma_v, snr_pol * sigma_v


def sample_aolp_error(snr_pol: float, n: int, seed: int = 0, phi: float = 0.0) -> np.ndarray:
    """Wrapped AoLP errors ``phi_hat - phi`` at ``s_pol / sigma_v = snr_pol``."""
    sigma_v, s_pol = _pol_setup(snr_pol)
    s = _true_stokes(1.0, s_pol, phi)
    out = []
    for k, m in _chunks(n, CHUNK):
        v = _draw_stokes(s, sigma_v, seed, k, m)
        out.append(aolp_diff(phi, 0.5 * np.arctan2(v.s2, v.s1)))
    return np.concatenate(out) if out else np.empty(0)


def _merge_moments(parts):
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in parts:
        if nb == 0:
            continue
        tot = n + nb
        d = mb - mean
        mean += d * nb / tot
        m2 += m2b + d * d * n * nb / tot
        n = tot
    return n, mean, m2


def _run(draw, edges, n, threads):
    if n < 2:
        raise DataError("need at least two samples")

    def work(task):
        k, m = task
        x = draw(k, m)
        counts = np.histogram(x, bins=edges)[0]
        mu = float(x.mean())
        return counts, m - int(counts.sum()), (m, mu, float(((x - mu) ** 2).sum()))

    results = ordered_map(work, _chunks(n, CHUNK), threads)
    counts = np.sum([r[0] for r in results], axis=0)
    outside = int(sum(r[1] for r in results))
    total, mean, m2 = _merge_moments([r[2] for r in results])
    var = m2 / (total - 1)
    return counts, outside, mean, math.sqrt(var), math.sqrt(var / total)


def compare_dolp(
    psi: float,
    snr: float,
    n_samples: int,
    seed: int = 0,
    *,
    bins: int = 200,
    upper: float | None = None,
    threads: int | None = None,
) -> Comparison:
    """Monte Carlo DoLP histogram vs the Rician law.

    ``snr`` is ``s0 / sigma_v``. The default range ``[0, psi + 10 sigma]``
    covers all but ~1e-20 of the analytic mass.
    """
    if not 0.0 <= psi <= 1.0:
        raise DataError(f"psi must lie in [0, 1], got {psi}")
    if not snr > 0:
        raise DataError(f"snr must be positive, got {snr}")
    sigma = 1.0 / snr
    upper = psi + 10.0 * sigma if upper is None else float(upper)
    edges = np.linspace(0.0, upper, bins + 1)
    s = _true_stokes(1.0, psi, 0.0)

    def draw(k, m):
        v = _draw_stokes(s, sigma, seed, k, m)
        return np.hypot(v.s1, v.s2)

    counts, outside, mean, std, se = _run(draw, edges, int(n_samples), threads)
    analytic = bin_probabilities(lambda x: rician_pdf(x, psi, sigma), edges)
    analytic = np.append(analytic, max(0.0, 1.0 - analytic.sum()))
    mc = np.append(counts, outside) / n_samples
    return Comparison(
        kind="dolp",
        params={"psi": psi, "snr": snr, "seed": seed},
        edges=edges,
        counts=counts,
        outside=outside,
        n_samples=int(n_samples),
        mc_prob=mc,
        analytic_prob=analytic,
        tv=total_variation(mc, analytic),
        mc_mean=mean,
        mc_mean_se=se,
        mc_std=std,
        analytic_mean=float(rician_mean(psi, sigma)),
        analytic_std=float(rician_std(psi, sigma)),
    )


def compare_aolp(
    snr_pol: float,
    n_samples: int,
    seed: int = 0,
    *,
    phi: float = 0.0,
    bins: int = 180,
    threads: int | None = None,
) -> Comparison:
    """Monte Carlo AoLP error histogram on ``[-pi/2, pi/2)`` vs the analytic marginal.

    ``snr_pol`` is ``s_pol / sigma_v``; errors are ``phi_hat - phi`` wrapped.
    """
    if not snr_pol >= 0:
        raise DataError(f"snr_pol must be non-negative, got {snr_pol}")
    sigma_v, s_pol = _pol_setup(snr_pol)
    s = _true_stokes(1.0, s_pol, phi)
    edges = np.linspace(-0.5 * math.pi, 0.5 * math.pi, bins + 1)

    def draw(k, m):
        v = _draw_stokes(s, sigma_v, seed, k, m)
        return aolp_diff(phi, 0.5 * np.arctan2(v.s2, v.s1))

    counts, outside, mean, std, se = _run(draw, edges, int(n_samples), threads)
    analytic = bin_probabilities(lambda x: aolp_density(x, snr_pol), edges)
    analytic = np.append(analytic, max(0.0, 1.0 - analytic.sum()))
    mc = np.append(counts, outside) / n_samples
    return Comparison(
        kind="aolp",
        params={"snr_pol": snr_pol, "phi": phi, "seed": seed},
        edges=edges,
        counts=counts,
        outside=outside,
        n_samples=int(n_samples),
        mc_prob=mc,
        analytic_prob=analytic,
        tv=total_variation(mc, analytic),
        mc_mean=mean,
        mc_mean_se=se,
        mc_std=std,
        analytic_mean=0.0,
        analytic_std=float(aolp_std_from_snr(snr_pol)),
    )
