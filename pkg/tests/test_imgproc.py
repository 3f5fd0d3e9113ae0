import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from docprompt import imgproc
from docprompt.errors import DegenerateInputWarning, InvalidParam

unit_images = arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
                     elements=st.floats(0, 1))


def test_grayscale_luma():
    assert imgproc.to_grayscale(np.array([[[1.0, 0, 0]]]))[0, 0] == pytest.approx(0.299)
    assert imgproc.to_grayscale(np.ones((2, 2, 3)))[0, 0] == pytest.approx(1.0)
    g = np.random.default_rng(0).random((4, 5))
    np.testing.assert_array_equal(imgproc.to_grayscale(g), g)


def test_sobel_ramp_interior():
    ramp = np.tile(np.arange(5) / 4.0, (3, 1))
    g = imgproc.sobel_gradient(ramp)
    # hand convolution: gx = (1 + 2 + 1) * 2/(w-1) = 8/(w-1); gy = 0
    np.testing.assert_allclose(g[1, 1:4], (8 / 4) / (4 * math.sqrt(2)))
    np.testing.assert_array_equal(imgproc.sobel_gradient(np.full((6, 6), 0.3)), 0)


@settings(max_examples=30, deadline=None)
@given(unit_images)
def test_sobel_unit_range(img):
    g = imgproc.sobel_gradient(img)
    assert g.shape == img.shape and g.min() >= 0 and g.max() <= 1


def test_dilate_single_pixel():
    img = np.zeros((5, 5))
    img[2, 2] = 1
    d = imgproc.dilate(img, 1)
    expected = np.zeros((5, 5))
    expected[1:4, 1:4] = 1
    np.testing.assert_array_equal(d, expected)


def test_closing_removes_thin_strokes():
    # 1-px dark strokes on a 0.9 page; dilation with r=1 erases them, erosion keeps them gone
    img = np.full((20, 20), 0.9)
    img[::4, :] = 0.0
    img[:, ::5] = 0.0
    closed = imgproc.erode(imgproc.dilate(img, 1), 1)
    np.testing.assert_array_equal(closed, 0.9)


def test_filters_fix_constants():
    c = np.full((7, 9), 0.42)
    for f in (imgproc.dilate, imgproc.erode, imgproc.median_filter):
        np.testing.assert_array_equal(f(c, 2), c)
    np.testing.assert_allclose(imgproc.gaussian_blur(c, 1.5), c, atol=1e-6)


def test_median_removes_outlier():
    img = np.full((5, 5), 0.5)
    img[2, 2] = 1.0
    np.testing.assert_array_equal(imgproc.median_filter(img, 1), 0.5)


def test_bad_radius():
    with pytest.raises(InvalidParam):
        imgproc.dilate(np.zeros((3, 3)), 0)


@pytest.mark.parametrize("seed", range(5))
def test_rank_filters_match_naive(seed):
    img = np.random.default_rng(seed).random((16, 16))
    np.testing.assert_array_equal(imgproc.median_filter(img, 2), oracles.median(img, 2))
    np.testing.assert_array_equal(imgproc.dilate(img, 2), oracles.max_filter(img, 2))
    np.testing.assert_array_equal(imgproc.erode(img, 1), oracles.min_filter(img, 1))


def test_integral_tables():
    s, s2 = imgproc.integral_images(np.ones((3, 3)))
    assert s.shape == (4, 4) and np.all(s[0] == 0) and np.all(s[:, 0] == 0)
    assert imgproc.window_sum(s, 0, 0, 3, 3) == 9
    img = np.random.default_rng(1).random((32, 32))
    s, s2 = imgproc.integral_images(img)
    rng = np.random.default_rng(2)
    for _ in range(50):
        r0, r1 = sorted(rng.integers(0, 33, 2))
        c0, c1 = sorted(rng.integers(0, 33, 2))
        assert abs(imgproc.window_sum(s, r0, c0, r1, c1) - oracles.rect_sum(img, r0, c0, r1, c1)) < 1e-9
        assert abs(imgproc.window_sum(s2, r0, c0, r1, c1) - oracles.rect_sum(img ** 2, r0, c0, r1, c1)) < 1e-9


def test_constant_window_variance_zero():
    _, std = imgproc.window_stats(np.full((9, 9), 0.37), 2)
    assert np.max(std) < 1e-6  # sqrt of a <=1e-12 variance


def test_window_stats_match_naive():
    img = np.random.default_rng(3).random((20, 24))
    m, s = imgproc.window_stats(img, 3)
    mo, so = oracles.window_mean_std(img, 3)
    np.testing.assert_allclose(m, mo, atol=1e-9)
    np.testing.assert_allclose(s, so, atol=1e-6)


def test_sauvola_constant_window():
    b, t = imgproc.sauvola(np.full((10, 10), 0.5), radius=2, k=0.2, R=0.5)
    np.testing.assert_allclose(t, 0.4)
    assert b.sum() == 0


def test_sauvola_strokes_on_white():
    img = np.ones((30, 30))
    img[10, 5:25] = 0.0
    img[5:25, 15] = 0.0
    b, _ = imgproc.sauvola(img, radius=4)
    np.testing.assert_array_equal(b, (img == 0).astype(np.uint8))


def test_sauvola_matches_naive():
    img = np.random.default_rng(4).random((64, 64))
    _, t = imgproc.sauvola(img, radius=5, k=0.3, R=0.5)
    ref = np.clip(oracles.sauvola_threshold(img, 5, 0.3, 0.5), 0, 1)
    assert np.max(np.abs(t - ref)) <= 1e-6


@pytest.mark.parametrize("k, R", [(0, 0.5), (0.2, 0), (-1, 0.5)])
def test_sauvola_invalid(k, R):
    with pytest.raises(InvalidParam):
        imgproc.sauvola(np.zeros((4, 4)), 1, k, R)


def test_otsu_two_level():
    img = np.full((10, 10), 50 / 255)
    img[5:] = 200 / 255
    t = imgproc.otsu_threshold(img)
    assert t == oracles.otsu_bin(np.rint(img * 255).astype(int)) / 255
    assert 50 / 255 < t <= 200 / 255


@settings(max_examples=20, deadline=None)
@given(arrays(np.uint8, (12, 12)), st.integers(0, 2**32 - 1))
def test_otsu_matches_brute_force_and_shuffle(b, seed):
    if len(np.unique(b)) < 2:
        return
    img = b / 255.0
    t = imgproc.otsu_threshold(img)
    assert round(t * 255) == oracles.otsu_bin(b)
    shuffled = np.random.default_rng(seed).permutation(img.ravel()).reshape(img.shape)
    assert imgproc.otsu_threshold(shuffled) == t


def test_otsu_constant_warns():
    with pytest.warns(DegenerateInputWarning):
        assert imgproc.otsu_threshold(np.full((4, 4), 0.6)) == pytest.approx(153 / 255)


def test_gaussian_impulse_and_mass():
    img = np.zeros((21, 21))
    img[10, 10] = 1.0
    out = imgproc.gaussian_blur(img, 1.0)
    k = np.exp(-0.5 * np.arange(-3, 4) ** 2)
    assert out[10, 10] == pytest.approx((1 / k.sum()) ** 2, abs=1e-3)
    assert out.sum() == pytest.approx(1.0, abs=1e-4)


def test_remap_identity_and_half_shift():
    img = np.random.default_rng(5).random((6, 7, 3))
    np.testing.assert_array_equal(imgproc.remap_bilinear(img, imgproc.identity_map(6, 7)), img)
    ramp = np.tile(np.arange(8.0), (4, 1))
    bm = imgproc.identity_map(4, 8)
    bm[..., 1] += 0.5
    out = imgproc.remap_bilinear(ramp, bm)
    np.testing.assert_allclose(out[:, :7], (ramp[:, :7] + ramp[:, 1:]) / 2)


def test_resize_properties():
    img = np.random.default_rng(6).random((9, 11))
    np.testing.assert_array_equal(imgproc.resize_bilinear(img, 9, 11), img)
    np.testing.assert_allclose(imgproc.resize_bilinear(np.full((5, 5), 0.3), 13, 7), 0.3)
    smooth = imgproc.gaussian_blur(np.random.default_rng(7).random((64, 64)), 3.0)
    back = imgproc.resize_bilinear(imgproc.resize_bilinear(smooth, 128, 128), 64, 64)
    assert np.max(np.abs(back - smooth)) < 0.02


def test_components_basics():
    diag = np.array([[1, 0], [0, 1]])
    assert len(imgproc.connected_components(diag)[1]) == 1
    labels, sizes = imgproc.connected_components(np.zeros((4, 4)))
    assert len(sizes) == 0 and labels.max() == 0


@pytest.mark.parametrize("seed", range(10))
def test_components_match_flood_fill(seed):
    b = np.random.default_rng(seed).random((32, 32)) < 0.35
    labels, sizes = imgproc.connected_components(b)
    assert len(sizes) == oracles.flood_fill_count(b)
    assert sizes.sum() == b.sum()
    assert set(np.unique(labels[b])) == set(range(1, len(sizes) + 1))


def test_fill_holes():
    ring = np.zeros((7, 7))
    ring[1:6, 1:6] = 1
    ring[3, 3] = 0
    filled = imgproc.fill_holes(ring)
    assert filled[3, 3] == 1 and filled[0, 0] == 0


def test_skeleton_cases():
    line = np.zeros((5, 9), dtype=np.uint8)
    line[2, 1:8] = 1
    np.testing.assert_array_equal(imgproc.skeletonize(line), line)
    sq = np.zeros((9, 9), dtype=np.uint8)
    sq[2:7, 2:7] = 1
    sk = imgproc.skeletonize(sq)
    assert sk.sum() <= 5 and sk[4, 4] == 1


@settings(max_examples=40, deadline=None)
@given(arrays(np.bool_, st.tuples(st.integers(1, 16), st.integers(1, 16))))
def test_skeleton_subset_and_components(b):
    sk = imgproc.skeletonize(b)
    assert np.all(sk <= b)
    assert len(imgproc.connected_components(sk)[1]) == len(imgproc.connected_components(b)[1])
