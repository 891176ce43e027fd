import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from polarnoise.errors import DegenerateAolpError, ShapeMismatchError
from polarnoise.metrics import AOLP_PEAK, MetricResult, aolp_error, aolp_psnr, evaluate, psnr
from polarnoise.stokes import StokesVector, acquire

angle_maps = hnp.arrays(np.float64, (5, 4), elements=st.floats(-math.pi, math.pi))


def test_psnr_40db():
    a = np.zeros((10, 10))
    b = np.full((10, 10), 0.01)
    assert psnr(a, b) == pytest.approx(40.0, abs=1e-12)


def test_psnr_identical_is_inf():
    x = np.random.default_rng(0).random((3, 3))
    assert psnr(x, x.copy()) == math.inf


def test_psnr_matches_brute_force():
    rng = np.random.default_rng(1)
    a, b = rng.random((7, 9)), rng.random((7, 9))
    mse = sum((float(x) - float(y)) ** 2 for x, y in zip(a.ravel(), b.ravel())) / a.size
    assert psnr(a, b, peak=2.0) == pytest.approx(10 * math.log10(4.0 / mse), rel=1e-13)


@given(angle_maps, angle_maps)
def test_psnr_symmetric(a, b):
    assert psnr(a, b) == psnr(b, a)


def test_psnr_errors():
    with pytest.raises(ShapeMismatchError):
        psnr(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        psnr(np.zeros(3), np.zeros(3), peak=0.0)


def test_aolp_psnr_examples():
    a = np.linspace(-1.5, 1.5, 12)
    assert aolp_psnr(a, a)[0] == math.inf
    # only rounding of a + pi remains
    assert aolp_psnr(a + math.pi, a)[0] > 300
    # a right-angle rotation is the largest possible AoLP error
    db, frac = aolp_psnr(a + math.pi / 2, a)
    assert db == pytest.approx(0.0, abs=1e-9) and frac == 1.0
    off = math.radians(10.0)
    assert aolp_psnr(a + off, a)[0] == pytest.approx(10 * math.log10(AOLP_PEAK**2 / off**2), rel=1e-9)


def test_aolp_error_wraps():
    assert aolp_error(math.radians(89), math.radians(-89)) == pytest.approx(math.radians(2), abs=1e-15)
    e = aolp_error(np.linspace(-10, 10, 101), np.zeros(101))
    assert np.all((0 <= e) & (e <= math.pi / 2))


@given(angle_maps, angle_maps, st.integers(-3, 3), st.integers(-3, 3))
def test_aolp_psnr_wrap_invariant(a, b, m, n):
    base = aolp_psnr(a, b)[0]
    moved = aolp_psnr(a + m * math.pi, b + n * math.pi)[0]
    if math.isinf(base):
        assert moved > 200 or math.isinf(moved)
    else:
        assert moved == pytest.approx(base, rel=1e-6, abs=1e-6)


def test_aolp_degenerate_handling():
    a = np.zeros(4)
    b = np.array([0.1, np.nan, 0.1, np.nan])
    db, frac = aolp_psnr(a, b)
    assert frac == 0.5 and db == pytest.approx(10 * math.log10(AOLP_PEAK**2 / 0.01))
    with pytest.raises(DegenerateAolpError):
        aolp_psnr(a, np.full(4, np.nan))
    with pytest.raises(DegenerateAolpError):
        aolp_psnr(a, a, valid=np.zeros(4, bool))


def test_evaluate():
    s = StokesVector(np.full((4, 4), 0.5), np.full((4, 4), 0.1), np.zeros((4, 4)))
    gt = acquire(s).as_array()
    r = evaluate(gt, gt)
    assert r.s0_psnr == r.dolp_psnr == r.aolp_psnr == math.inf
    assert r.to_dict()["s0_psnr"] == "inf" and r.valid_pixel_fraction == 1.0
    pred = gt + 0.005
    r = evaluate(pred, gt)
    # s0 = sum / 2 moves by 0.01
    assert r.s0_psnr == pytest.approx(40.0, abs=1e-9)
    assert math.isinf(r.aolp_psnr)
    with pytest.raises(ShapeMismatchError):
        evaluate(np.zeros((2, 3)), np.zeros((2, 3)))


def test_evaluate_excludes_unpolarized_reference():
    gt = acquire(StokesVector(np.ones((2, 2)), np.array([[0.0, 0.2], [0.2, 0.2]]), np.zeros((2, 2)))).as_array()
    r = evaluate(gt, gt)
    assert r.valid_pixel_fraction == 0.75


def test_dolp_clamp_option():
    gt = acquire(StokesVector(np.ones(3), np.full(3, 0.9), np.zeros(3))).as_array()
    pred = acquire(StokesVector(np.ones(3), np.full(3, 1.2), np.zeros(3))).as_array()
    plain = evaluate(pred, gt).dolp_psnr
    clamped = evaluate(pred, gt, clamp_dolp=True).dolp_psnr
    assert plain == pytest.approx(10 * math.log10(1 / 0.09), rel=1e-9)
    assert clamped == pytest.approx(20.0, rel=1e-9)


def test_metric_result_dict():
    r = MetricResult(30.0, math.inf, 12.5, 0.9)
    assert r.to_dict() == {"s0_psnr": 30.0, "dolp_psnr": "inf", "aolp_psnr": 12.5, "valid_pixel_fraction": 0.9}
