import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from polarnoise.errors import ShapeMismatchError
from polarnoise.mosaic import MONO, RGB, MosaicPattern, demosaic_bilinear, mosaic, pack_raw, scatter, superpixels, unpack_raw


def test_mono_layout():
    img = np.broadcast_to(np.array([10.0, 20.0, 30.0, 40.0]), (4, 4, 4))
    raw = mosaic(img, MONO)
    # 90 45 / 135 0
    np.testing.assert_array_equal(raw[:2, :2], [[30.0, 20.0], [40.0, 10.0]])
    np.testing.assert_array_equal(raw, np.tile(raw[:2, :2], (2, 2)))


def test_every_pixel_has_one_channel():
    for pattern in (MONO, RGB):
        cmap = pattern.channel_map(8, 8)
        assert cmap.shape == (8, 8)
        assert set(np.unique(cmap)) == set(range(pattern.n_channels))
        _, mask = scatter(np.zeros((8, 8)), pattern)
        np.testing.assert_array_equal(mask.sum(axis=-1), 1)


def test_rgb_tile_counts():
    # the 4x4 tile holds one R and one B polarizer block and two G blocks
    table = RGB.table
    counts = np.bincount(table.ravel(), minlength=12)
    names = RGB.channels
    for i, n in enumerate(names):
        assert counts[i] == (2 if n.startswith("G") else 1), n
    assert RGB.period == 4 and RGB.n_channels == 12


def test_rgb_blocks_are_polarizer_blocks():
    t = RGB.table
    for by in range(2):
        for bx in range(2):
            block = t[2 * by : 2 * by + 2, 2 * bx : 2 * bx + 2]
            assert len({c // 4 for c in block.ravel()}) == 1
            np.testing.assert_array_equal(block % 4, [[2, 1], [3, 0]])


def test_size_mismatch():
    with pytest.raises(ShapeMismatchError):
        mosaic(np.zeros((5, 4, 4)), MONO)
    with pytest.raises(ShapeMismatchError):
        mosaic(np.zeros((8, 8, 4)), RGB)
    with pytest.raises(ShapeMismatchError):
        demosaic_bilinear(np.zeros((6, 6)), RGB)


@given(hnp.arrays(np.float64, (8, 12, 4), elements=st.floats(-1e3, 1e3)))
def test_scatter_recovers_sampled_entries(img):
    raw = mosaic(img, MONO)
    values, mask = scatter(raw, MONO)
    np.testing.assert_array_equal(values[mask], img[mask])


@pytest.mark.parametrize("pattern", [MONO, RGB])
def test_demosaic_exact_at_samples(pattern):
    rng = np.random.default_rng(1)
    img = rng.random((16, 24, pattern.n_channels))
    raw = mosaic(img, pattern)
    out = demosaic_bilinear(raw, pattern)
    _, mask = scatter(raw, pattern)
    np.testing.assert_array_equal(out[mask], img[mask])


@pytest.mark.parametrize("pattern", [MONO, RGB])
def test_demosaic_constant(pattern):
    c = np.arange(1, pattern.n_channels + 1, dtype=float)
    raw = mosaic(np.broadcast_to(c, (16, 16, pattern.n_channels)), pattern)
    out = demosaic_bilinear(raw, pattern)
    np.testing.assert_allclose(out, np.broadcast_to(c, out.shape), rtol=1e-14)


@pytest.mark.parametrize("pattern", [MONO, RGB])
def test_demosaic_reproduces_linear_ramps(pattern):
    h, w = 32, 32
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    img = np.stack([0.5 + 0.01 * (k + 1) * yy - 0.003 * k * xx for k in range(pattern.n_channels)], axis=-1)
    out = demosaic_bilinear(mosaic(img, pattern), pattern)
    b = pattern.period
    np.testing.assert_allclose(out[b:-b, b:-b], img[b:-b, b:-b], atol=1e-12)


def test_checkerboard_alias_only_samples_exact():
    # content at the sampling frequency cannot be recovered; only sampled entries are checked
    yy, xx = np.mgrid[0:8, 0:8]
    img = np.repeat(((yy + xx) % 2).astype(float)[..., None], 4, axis=-1)
    raw = mosaic(img, MONO)
    out = demosaic_bilinear(raw, MONO)
    _, mask = scatter(raw, MONO)
    np.testing.assert_array_equal(out[mask], img[mask])


def test_kernels_partition_of_unity():
    for pattern in (MONO, RGB):
        for c in range(pattern.n_channels):
            k = pattern.kernel(c)
            # summing the kernel over its own lattice gives 1 at every phase
            p = pattern.period
            lattice = np.zeros((3 * p, 3 * p))
            for oy, ox in pattern.offsets(c):
                lattice[oy::p, ox::p] = 1.0
            from scipy import ndimage

            cover = ndimage.correlate(lattice, k, mode="constant")
            np.testing.assert_allclose(cover[p : 2 * p, p : 2 * p], 1.0, atol=1e-15)


def test_custom_layouts():
    m = MosaicPattern.mono(layout=((0, 45), (135, 90)))
    assert m.table.tolist() == [[0, 1], [3, 2]]
    with pytest.raises(ValueError):
        MosaicPattern(((0, 0), (1, 2)), ("a", "b", "c", "d"))
    with pytest.raises(ValueError):
        MosaicPattern.named("xyz")
    assert MosaicPattern.named("rgb") is RGB


@given(hnp.arrays(np.float64, (8, 8), elements=st.floats(-10, 10)), st.sampled_from([2, 4]))
def test_pack_unpack_roundtrip(raw, period):
    packed = pack_raw(raw, period)
    assert packed.shape == (8 // period, 8 // period, period * period)
    np.testing.assert_array_equal(unpack_raw(packed, period), raw)


def test_pack_groups_channels():
    img = np.broadcast_to(np.arange(4.0), (6, 6, 4))
    packed = pack_raw(mosaic(img, MONO), 2)
    np.testing.assert_array_equal(packed[0, 0], [2.0, 1.0, 3.0, 0.0])


@pytest.mark.parametrize("pattern", [MONO, RGB])
def test_superpixels_pick_raw_samples(pattern):
    rng = np.random.default_rng(2)
    img = rng.random((8, 8, pattern.n_channels))
    sp = superpixels(mosaic(img, pattern), pattern)
    p = pattern.period
    assert sp.shape == (8 // p, 8 // p, pattern.n_channels)
    for c in range(pattern.n_channels):
        oy, ox = pattern.offsets(c)[0]
        np.testing.assert_array_equal(sp[..., c], img[oy::p, ox::p, c])
