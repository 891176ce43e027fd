import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def ncc_shift(ref, mov, max_shift):
    """Content displacement ``(dy, dx)`` of ``mov`` relative to ``ref``.

    Exhaustive normalized cross-correlation over integer shifts restricted to
    the overlap (no wrap-around), refined by a parabola through the peak.
    """
    h, w = ref.shape
    scores = {}
    for sy in range(-max_shift, max_shift + 1):
        for sx in range(-max_shift, max_shift + 1):
            a = ref[max(0, -sy) : h - max(0, sy), max(0, -sx) : w - max(0, sx)]
            b = mov[max(0, sy) : h + min(0, sy), max(0, sx) : w + min(0, sx)]
            a = a - a.mean()
            b = b - b.mean()
            scores[sy, sx] = float((a * b).sum() / np.sqrt((a * a).sum() * (b * b).sum()))
    best = max(scores, key=scores.get)
    c = scores[best]

    def vertex(m, p):
        d = m - 2 * c + p
        return 0.0 if d == 0 else 0.5 * (m - p) / d

    sy, sx = best
    dy = sy + vertex(scores.get((sy - 1, sx), c), scores.get((sy + 1, sx), c))
    dx = sx + vertex(scores.get((sy, sx - 1), c), scores.get((sy, sx + 1), c))
    return dy, dx


@pytest.fixture
def smooth_texture():
    from scipy import ndimage

    def make(size, sigma=6.0, lo=0.1, hi=0.9, seed=3):
        rng = np.random.default_rng(seed)
        t = ndimage.gaussian_filter(rng.random((size, size)), sigma)
        t = (t - t.min()) / (t.max() - t.min())
        return lo + (hi - lo) * t

    return make


def polarized_scene(size, seed=5):
    """Mono ``size x size x 4`` scene sweeping s0, DoLP and AoLP smoothly."""
    from polarnoise.stokes import StokesVector, acquire

    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    rng = np.random.default_rng(seed)
    s0 = 0.2 + 1.4 * xx + 0.02 * rng.random((size, size))
    psi = 0.9 * yy
    phi = np.pi * (xx + yy) - np.pi / 2
    s = StokesVector(s0, s0 * psi * np.cos(2 * phi), s0 * psi * np.sin(2 * phi))
    return acquire(s).as_array()


@pytest.fixture
def pipeline_stack():
    """Aligned mono bursts from the synthetic pipeline, as ``N x H x W x 4`` superpixel stacks.

    Returns ``(frames, clean, params)`` where ``clean`` is the noiseless
    superpixel image.
    """
    from polarnoise.mosaic import MONO, superpixels
    from polarnoise.synth import SynthConfig, generate

    def make(n, sigma_s_sq=2e-3, sigma_r_sq=1e-4, size=32, seed=11):
        cfg = SynthConfig(num_frames=n, crop_size=size, downsample_factor=1, pattern="mono", aligned=True,
                          sigma_s_sq_range=(sigma_s_sq, sigma_s_sq), sigma_r_sq_range=(sigma_r_sq, sigma_r_sq),
                          keep_clean=False, seed=seed)
        sample = generate(polarized_scene(size), cfg)
        frames = np.stack([superpixels(f, MONO) for f in sample.frames])
        clean = superpixels(generate(polarized_scene(size), SynthConfig(
            num_frames=1, crop_size=size, downsample_factor=1, pattern="mono", aligned=True, noise=False)).frames[0], MONO)
        return frames, clean, sample.noise_truth

    return make
