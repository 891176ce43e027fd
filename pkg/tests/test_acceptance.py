"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see only these lines, or
read them from the full log.
"""

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import mpmath as mp
import numpy as np
import pytest

from polarnoise import special
from polarnoise.burst_stats import accumulate, fit_affine_variance, model_maps, report
from polarnoise.montecarlo import compare_aolp, compare_dolp
from polarnoise.mosaic import MONO, RGB, mosaic
from polarnoise.noise_model import (
    SensorNoiseParams,
    aolp_density,
    aolp_std_from_snr,
    rician_bias,
    rician_mean,
    rician_pdf,
    rician_std,
    sample_noisy_quad,
)
from polarnoise.stokes import StokesVector, acquire, reconstruct
from polarnoise.synth import SynthConfig, downsample, generate
from polarnoise.tensor_io import save

from conftest import ncc_shift, polarized_scene

PSI_GRID = (0.0, 0.05, 0.1, 0.2)
SNR_GRID = (5.0, 10.0, 20.0, 50.0)
AOLP_SNRS = (0.0, 0.5, 1.0, 2.0, 5.0, 20.0)
MC_SAMPLES = 10**7
THREADS = 4


@pytest.fixture
def verdict(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        assert ok, f"criterion {criterion}: {detail}"

    return emit


@pytest.fixture(scope="module")
def dolp_grid():
    out = {}
    t0 = time.perf_counter()
    for i, psi in enumerate(PSI_GRID):
        for j, snr in enumerate(SNR_GRID):
            out[psi, snr] = compare_dolp(psi, snr, MC_SAMPLES, seed=100 + 10 * i + j, threads=THREADS)
    return out, time.perf_counter() - t0


def test_c1_stokes_roundtrip(verdict):
    rng = np.random.default_rng(1)
    s = StokesVector(*rng.uniform(-1e3, 1e3, (3, 10**5)))
    t0 = time.perf_counter()
    r = reconstruct(acquire(s))
    dt = time.perf_counter() - t0
    ref = np.abs(s.as_array()).max(axis=-1, keepdims=True)
    rel = float(np.max(np.abs(r.as_array() - s.as_array()) / ref))
    verdict(1, rel < 1e-12 and dt < 1.0, f"max relative error {rel:.2e} (< 1e-12), {dt * 1e3:.1f} ms (< 1 s)")


@pytest.fixture(scope="module")
def variance_draws():
    p = SensorNoiseParams(0.5, 4.0)
    out = {}
    t0 = time.perf_counter()
    for k, s0 in enumerate((10.0, 1e2, 1e3, 1e4)):
        s = StokesVector(s0, 0.3 * s0, -0.2 * s0)
        out[s0] = reconstruct(sample_noisy_quad(s, p, 40 + k, size=10**6))
    return p, out, time.perf_counter() - t0


def test_c2_variance_law(verdict, variance_draws):
    p, draws, dt = variance_draws
    worst = 0.0
    v1s = []
    for s0, v in draws.items():
        sv2 = s0 * p.sigma_s_sq + 2 * p.sigma_r_sq
        v0, v1, v2 = (float(np.var(a, ddof=1)) for a in (v.s0, v.s1, v.s2))
        worst = max(worst, abs(v1 / sv2 - 1), abs(v2 / sv2 - 1), abs(v0 / (sv2 / 2) - 1))
        v1s.append(0.5 * (v1 + v2))
    slope, _ = fit_affine_variance(np.array(list(draws)), np.array(v1s))
    slope_err = abs(slope / p.sigma_s_sq - 1)
    ok = worst < 0.01 and slope_err < 0.02 and dt < 30
    verdict(2, ok, f"worst variance error {worst:.2%} (< 1%), slope error {slope_err:.2%} (< 2%), {dt:.1f} s (< 30 s)")


def test_c3_independence(verdict, variance_draws):
    _, draws, _ = variance_draws
    zs = []
    for v in draws.values():
        a, b = v.s1 - v.s1.mean(), v.s2 - v.s2.mean()
        n = a.size
        cov = float(np.dot(a, b) / (n - 1))
        se = float(np.sqrt(np.mean((a * b - cov) ** 2) / n))
        zs.append(abs(cov) / se)
    verdict(3, max(zs) < 3, f"|cov(s1, s2)| / SE per s0 level: {', '.join(f'{z:.2f}' for z in zs)} (< 3)")


def test_c4_dolp_distribution(verdict, dolp_grid):
    grid, dt = dolp_grid
    tvs = {k: c.tv for k, c in grid.items()}
    worst_tv = max(tvs.values())
    norm_err = 0.0
    from scipy import integrate

    for psi in PSI_GRID:
        for snr in SNR_GRID:
            sigma = 1 / snr
            f = lambda x: float(rician_pdf(x, psi, sigma))  # noqa: E731
            pts = [max(psi, sigma)]
            total = integrate.quad(f, 0, psi + 40 * sigma, points=pts, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
            norm_err = max(norm_err, abs(total - 1))
    ok = worst_tv < 0.01 and norm_err < 1e-8 and dt < 300
    verdict(4, ok, f"worst TV {worst_tv:.4f} over 16 cells at 1e7 samples (< 0.01), "
                   f"|integral - 1| {norm_err:.1e} (< 1e-8), {dt:.0f} s (< 300 s)")


def test_c5_dolp_bias(verdict, dolp_grid):
    grid, _ = dolp_grid
    zs = [abs(c.mc_mean - c.analytic_mean) / c.mc_mean_se for c in grid.values()]
    closed = float(rician_mean(0.0, 0.1))
    ok = max(zs) < 3 and abs(closed - 0.125331) <= 1e-6
    verdict(5, ok, f"worst |MC mean - analytic| / SE {max(zs):.2f} (< 3); mean at psi=0, sigma=0.1 is "
                   f"{closed:.7f} (0.125331 +- 1e-6)")


def test_c6_aolp_distribution(verdict):
    tvs = []
    for k, snr in enumerate(AOLP_SNRS):
        tvs.append(compare_aolp(snr, MC_SAMPLES, seed=200 + k, phi=0.4, threads=THREADS).tv)
    d = np.linspace(-math.pi / 2, math.pi / 2, 1001)
    symmetric = all(np.array_equal(aolp_density(d, s), aolp_density(-d, s)) for s in AOLP_SNRS)
    mc20 = compare_aolp(20.0, 10**6, seed=299, threads=THREADS)
    target = 1 / (2 * 20.0)
    std_err = max(abs(aolp_std_from_snr(20.0) / target - 1), abs(mc20.mc_std / target - 1))
    ok = max(tvs) < 0.01 and symmetric and std_err < 0.02
    verdict(6, ok, f"TV per SNR {', '.join(f'{t:.4f}' for t in tvs)} (< 0.01); symmetry exact: {symmetric}; "
                   f"SNR 20 std vs sigma_v / (2 s_pol) off by {std_err:.2%} (< 2%)")


def test_c6_uniform_limit_density(verdict):
    d = np.linspace(-math.pi / 2, math.pi / 2, 181, endpoint=False)
    dens = aolp_density(d, 0.0)
    err = float(np.max(np.abs(dens - 2 / math.pi)))
    verdict("6 (uniform limit)", err <= 1e-10,
            f"density at SNR 0 is {dens[0]:.12f}; required 2/pi = {2 / math.pi:.12f} +- 1e-10")


def _series_i(n, x, terms=30):
    x = mp.mpf(x)
    return sum((x / 2) ** (2 * k + n) / (mp.factorial(k) * mp.factorial(k + n)) for k in range(terms))


def test_c7_special_functions(verdict):
    mp.mp.dps = 40
    xs = np.linspace(0, 20, 401)
    i0, i1 = special.bessel_i0(xs), special.bessel_i1(xs)
    b_err = 0.0
    for x, a, b in zip(xs, i0, i1):
        r0, r1 = _series_i(0, x), _series_i(1, x)
        b_err = max(b_err, float(abs(a - r0) / r0))
        if x > 0:
            b_err = max(b_err, float(abs(b - r1) / r1))
    zs = np.linspace(-8, 8, 321)
    phi = special.std_normal_cdf(zs)
    p_err = 0.0
    for z, v in zip(zs, phi):
        ref = mp.quad(lambda t: mp.exp(-t * t / 2), [-mp.inf, 0, mp.mpf(z)]) / mp.sqrt(2 * mp.pi)
        p_err = max(p_err, float(abs(v - ref)))
    l0 = special.laguerre_half(0.0)
    ok = b_err < 1e-10 and p_err < 1e-12 and l0 == 1.0
    verdict(7, ok, f"I0/I1 vs 30-term series {b_err:.1e} (< 1e-10), Phi vs quadrature {p_err:.1e} (< 1e-12), "
                   f"L(0) = {l0!r}")


def test_c7_laguerre_asymptote(verdict):
    x = -50.0
    got = special.laguerre_half(x)
    target = math.sqrt(-2 * x / math.pi)
    rel = abs(got / target - 1)
    verdict("7 (asymptote)", rel < 0.005, f"L(-50) = {got:.6f}, sqrt(-2x/pi) = {target:.6f}, off by {rel:.1%} (< 0.5%)")


@pytest.fixture(scope="module")
def big_stack():
    from polarnoise.mosaic import superpixels

    n, size = 10**4, 32
    ss, sr = 2e-3, 1e-4
    cfg = SynthConfig(num_frames=n, crop_size=size, downsample_factor=1, pattern="mono", aligned=True,
                      sigma_s_sq_range=(ss, ss), sigma_r_sq_range=(sr, sr), seed=11)
    sample = generate(polarized_scene(size), cfg)
    frames = np.stack([superpixels(f, MONO) for f in sample.frames])
    return frames, sample.noise_truth


def test_c8_burst_statistics(verdict, big_stack):
    frames, p = big_stack
    n = frames.shape[0]
    ps = accumulate(frames)
    maps = model_maps(ps)
    s = ps.stokes()
    s0 = np.asarray(s.s0)
    psi = np.hypot(s.s1, s.s2) / s0
    sig = np.sqrt((s0 * p.sigma_s_sq + 2 * p.sigma_r_sq) / n) / s0
    rb = np.abs(maps.dolp_bias / rician_bias(psi, sig) - 1)
    rs = np.abs(maps.dolp_std / rician_std(psi, sig) - 1)
    frac = float(np.mean((rb < 0.01) & (rs < 0.01)))
    halves = np.array_equal(ps.with_count(2 * n).var_of_mean, ps.var_of_mean / 2)
    rates = []
    for m in (1, 100, n):
        if m == 1:
            mm = model_maps(accumulate(frames[:1], require_variance=False), p)
        else:
            mm = model_maps(accumulate(frames[:m]))
        rates.append(report(mm).threshold_pcts)
    monotone = all(b[k] >= a[k] for a, b in zip(rates, rates[1:]) for k in a)
    ok = frac >= 0.99 and halves and monotone
    verdict(8, ok, f"{frac:.1%} of pixels within 1% on bias and std (>= 99%); var_of_mean halves exactly: "
                   f"{halves}; pass rates monotone over N = 1, 100, 1e4: {monotone}")


def test_c9_synthetic_pipeline(verdict, smooth_texture):
    rng = np.random.default_rng(0)
    src = rng.uniform(0.05, 0.95, (96, 96, 12))
    cfg = SynthConfig(num_frames=4, crop_size=64, translation_range=0, rotation_range_deg=0, noise=False)
    s = generate(src, cfg)
    oy, ox = s.crop_origin
    want = mosaic(downsample(src[oy : oy + 64, ox : ox + 64], 2), RGB)
    exact = all(f.tobytes() == want.tobytes() for f in s.frames)

    size = 256
    ramp = 0.02 + 0.96 * np.linspace(0, 1, size)[None, :] * np.ones((size, 1))
    ss, sr = 4e-3, 2e-4
    ncfg = SynthConfig(num_frames=16, crop_size=size, pattern="mono", downsample_factor=1, aligned=True,
                       sigma_s_sq_range=(ss, ss), sigma_r_sq_range=(sr, sr), keep_clean=True, seed=1)
    ns = generate(np.repeat(ramp[..., None], 4, axis=-1), ncfg)
    clean = ns.clean_frames[0]
    var = np.mean((ns.frames - ns.clean_frames) ** 2, axis=0)
    edges = np.quantile(clean, np.linspace(0, 1, 41))
    idx = np.clip(np.searchsorted(edges, clean, side="right") - 1, 0, 39)
    a, b = fit_affine_variance(np.array([clean[idx == k].mean() for k in range(40)]),
                               np.array([var[idx == k].mean() for k in range(40)]))
    noise_err = max(abs(a / ss - 1), abs(b / sr - 1))

    tex = smooth_texture(200, sigma=5, seed=9)
    mcfg = SynthConfig(num_frames=6, crop_size=128, translation_range=6, rotation_range_deg=1.0, noise=False, seed=3)
    ms = generate(np.repeat(tex[..., None], 12, axis=-1), mcfg)
    motion_err = 0.0
    for k in range(1, ms.num_frames):
        dy, dx = ncc_shift(ms.frames[0], ms.frames[k], 5)
        f = mcfg.downsample_factor
        motion_err = max(motion_err, abs(f * dx - ms.motion_truth[k, 0]), abs(f * dy - ms.motion_truth[k, 1]))
    ok = exact and noise_err < 0.05 and motion_err < 0.5
    verdict(9, ok, f"identity config bit-exact: {exact}; noise regression error {noise_err:.2%} (< 5%); "
                   f"motion recovery error {motion_err:.3f} px (< 0.5 px)")


def _cli(args, threads, cwd):
    env = dict(os.environ, SOURCE_DATE_EPOCH="1700000000")
    env.pop("POLARNOISE_THREADS", None)
    cmd = [sys.executable, "-m", "polarnoise.cli", *map(str, args), "--threads", str(threads)]
    r = subprocess.run(cmd, capture_output=True, cwd=cwd, env=env)
    return r.returncode, r.stdout


def _tree(root: Path):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c10_cli_determinism(verdict, tmp_path):
    rng = np.random.default_rng(4)
    data = tmp_path / "data"
    (data / "src").mkdir(parents=True)
    for name in ("a", "b"):
        save(data / "src" / f"{name}.pten", rng.uniform(0.05, 0.95, (128, 128, 12)).astype(np.float32))
    img = acquire(StokesVector(np.full((16, 16), 0.6), 0.1, 0.05)).as_array()
    save(data / "raw.pten", mosaic(img, MONO))
    save(data / "gt.pten", img)
    save(data / "pred.pten", img + rng.normal(0, 0.01, img.shape))
    s = StokesVector(np.linspace(0.2, 1.0, 64).reshape(8, 8), 0.05, 0.02)
    save(data / "stack.pten", sample_noisy_quad(s, SensorNoiseParams(1e-3, 1e-4), 7, size=200).as_array())

    runs = {
        "stokes": ["stokes", data / "raw.pten"],
        "pdf_dolp": ["pdf", "dolp", "--psi", "0.1", "--snr", "20"],
        "pdf_aolp": ["pdf", "aolp", "--snr", "2"],
        "validate": ["validate", "--psi", "0.1", "--snr", "10", "--samples", "1e6", "--seed", "5"],
        "burst": ["burst-stats", data / "stack.pten", "--validation"],
        "synth": ["synth", data / "src", "--crop-size", "64", "--num-frames", "4", "--samples-per-source", "2",
                  "--seed", "8"],
        "metrics": ["metrics", data / "pred.pten", data / "gt.pten"],
    }
    mismatched = []
    failed = []
    for name, args in runs.items():
        trees = []
        for threads in (1, 4, 16):
            out = tmp_path / f"{name}_{threads}"
            code, stdout = _cli([*args, "--out", out], threads, tmp_path)
            if code != 0:
                failed.append(f"{name}@{threads}")
            trees.append((stdout, _tree(out)))
        if any(t != trees[0] for t in trees[1:]):
            mismatched.append(name)
        if "manifest.json" not in trees[0][1]:
            failed.append(f"{name} (no manifest)")
    ok = not mismatched and not failed
    verdict(10, ok, f"{len(runs)} subcommands byte-identical across threads 1, 4, 16: "
                    f"{'yes' if ok else f'mismatch {mismatched}, failed {failed}'}")
