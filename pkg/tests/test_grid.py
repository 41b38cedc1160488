import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lifereg.grid import (
    SectorGeometry,
    bilinear_sample,
    blur_field,
    extract_slice,
    gaussian_blur,
    gradient_xy,
    invert_field,
    jacobian_determinant,
    warp,
    warp_region,
    window_level,
    zero_field,
)

from conftest import smooth_field

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def ref_bilinear(img, x, y):
    # textbook formula with clamped corners, written independently
    h, w = img.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    i0, j0 = int(math.floor(y)), int(math.floor(x))
    i1, j1 = min(i0 + 1, h - 1), min(j0 + 1, w - 1)
    a, b = x - j0, y - i0
    return (
        img[i0, j0] * (1 - a) * (1 - b)
        + img[i0, j1] * a * (1 - b)
        + img[i1, j0] * (1 - a) * b
        + img[i1, j1] * a * b
    )


# --- oracles ---------------------------------------------------------------


def test_warp_matches_per_pixel_loop(rng):
    img = rng.random((16, 16))
    fld = smooth_field(rng, (16, 16), amp=3.0)
    ref = np.empty_like(img)
    for i in range(16):
        for j in range(16):
            ref[i, j] = ref_bilinear(img, j + fld[i, j, 0], i + fld[i, j, 1])
    assert np.allclose(warp(img, fld), ref, atol=1e-12)


def test_gradient_matches_difference_loop(rng):
    img = rng.random((8, 8))
    gx, gy = gradient_xy(img)
    for i in range(8):
        for j in range(8):
            if 0 < j < 7:
                ex = (img[i, j + 1] - img[i, j - 1]) / 2
            else:
                ex = img[i, 1] - img[i, 0] if j == 0 else img[i, 7] - img[i, 6]
            if 0 < i < 7:
                ey = (img[i + 1, j] - img[i - 1, j]) / 2
            else:
                ey = img[1, j] - img[0, j] if i == 0 else img[7, j] - img[6, j]
            assert abs(gx[i, j] - ex) < 1e-12
            assert abs(gy[i, j] - ey) < 1e-12


def test_blur_impulse_matches_gaussian_normalisation():
    img = np.zeros((33, 33))
    img[16, 16] = 1.0
    out = gaussian_blur(img, 2.0)
    k = np.exp(-0.5 * (np.arange(-6, 7) / 2.0) ** 2)
    assert abs(out[16, 16] - 1.0 / k.sum() ** 2) < 1e-6
    # continuous 2-D normalisation, for orientation: 1 / (2 pi sigma^2)
    assert abs(out[16, 16] - 1 / (8 * math.pi)) < 1e-3


# --- examples ----------------------------------------------------------------


def test_bilinear_examples():
    img = np.arange(60, dtype=float).reshape(6, 10)
    assert bilinear_sample(img, 3, 5) == img[5, 3]
    row = np.array([[0.0, 10.0], [0.0, 10.0]])
    assert bilinear_sample(row, 0.5, 0.0) == 5.0
    assert bilinear_sample(np.array([[0.0, 1.0], [2.0, 3.0]]), 0.5, 0.5) == 1.5


def test_warp_zero_field_and_ramp_shift():
    w = 12
    ramp = np.tile(np.arange(w, dtype=float), (5, 1))
    assert np.array_equal(warp(ramp, zero_field(ramp.shape)), ramp)
    fld = np.zeros((5, w, 2))
    fld[..., 0] = 1.0
    assert np.array_equal(warp(ramp, fld)[0], np.minimum(np.arange(w) + 1.0, w - 1))


def test_warp_region_matches_full_warp(rng):
    img = rng.random((20, 24))
    fld = smooth_field(rng, (20, 24), amp=2.0)
    full = warp(img, fld)
    assert np.array_equal(warp_region(img, fld[3:11, 5:19], 3, 5), full[3:11, 5:19])


def test_gradient_constant_and_ramp():
    gx, gy = gradient_xy(np.full((6, 7), 3.0))
    assert not gx.any() and not gy.any()
    yy, xx = np.mgrid[0:6, 0:7].astype(float)
    gx, gy = gradient_xy(2 * xx)
    assert np.all(gx == 2.0) and np.all(gy == 0.0)


def test_extract_slice_examples():
    vol = np.broadcast_to(np.arange(9.0)[:, None, None], (9, 4, 5)).copy()
    assert np.all(extract_slice(vol, 7) == 7)
    assert np.array_equal(extract_slice(vol[:1], 0), vol[0])
    with pytest.raises(IndexError):
        extract_slice(vol, 9)


def test_blur_identity_and_constant():
    img = np.random.default_rng(0).random((9, 9))
    assert np.array_equal(gaussian_blur(img, 0.0), img)
    assert np.allclose(gaussian_blur(np.full((9, 9), 0.3), 2.5), 0.3, atol=1e-15)
    with pytest.raises(ValueError):
        gaussian_blur(img, -1.0)


def test_window_level_examples():
    assert window_level(np.array(0.5), 0.5, 1.0) == 0.5
    assert window_level(np.array(-160.0), 40, 400) == 0.0
    assert window_level(np.array(140.0), 40, 400) == 0.75
    with pytest.raises(ValueError):
        window_level(np.zeros(3), 0, 0)


def test_sector_geometry_validation():
    with pytest.raises(ValueError):
        SectorGeometry(0, 0, 5, 4, 0.5)
    with pytest.raises(ValueError):
        SectorGeometry(0, 0, 1, 4, math.pi / 2)
    g = SectorGeometry.default_for(64, 48)
    m = g.contains((48, 64))
    assert m.dtype == bool and m.any() and not m.all()


def test_shape_and_finiteness_checks():
    with pytest.raises(ValueError):
        warp(np.zeros((4, 4)), np.zeros((4, 5, 2)))
    with pytest.raises(ValueError):
        warp(np.full((4, 4), np.nan), np.zeros((4, 4, 2)))
    with pytest.raises(ValueError):
        gradient_xy(np.zeros((2, 5)))


def test_invert_field_round_trip(rng):
    fld = smooth_field(rng, (40, 40), amp=2.0, sigma=5.0)
    inv = invert_field(fld)
    yy, xx = np.mgrid[0:40, 0:40].astype(float)
    # composing forward then inverse returns to the start away from the border
    back = inv + np.stack([bilinear_sample(fld[..., 0], xx + inv[..., 0], yy + inv[..., 1]),
                           bilinear_sample(fld[..., 1], xx + inv[..., 0], yy + inv[..., 1])], -1)
    assert np.abs(back[5:-5, 5:-5]).max() < 1e-6
    assert np.all(jacobian_determinant(fld) > 0)


# --- properties --------------------------------------------------------------


@given(arrays(np.float64, (6, 7), elements=finite))
def test_zero_field_warp_is_identity(img):
    assert np.array_equal(warp(img, zero_field(img.shape)), img)


@given(finite, finite, finite, st.floats(0, 7), st.floats(0, 5))
def test_bilinear_exact_on_affine(a, b, c, x, y):
    yy, xx = np.mgrid[0:6, 0:8].astype(float)
    img = a * xx + b * yy + c
    assert abs(bilinear_sample(img, x, y) - (a * x + b * y + c)) < 1e-10


@given(arrays(np.float64, (10, 11), elements=st.floats(0, 1)), st.floats(0.1, 4.0))
def test_blur_preserves_mean(img, sigma):
    assert abs(gaussian_blur(img, sigma).mean() - img.mean()) < 1e-9


@given(finite, finite)
def test_gradient_of_linear_field(a, b):
    yy, xx = np.mgrid[0:5, 0:6].astype(float)
    gx, gy = gradient_xy(a * xx + b * yy)
    assert np.allclose(gx, a, atol=1e-12) and np.allclose(gy, b, atol=1e-12)


@given(arrays(np.float64, (8, 8, 2), elements=finite), arrays(np.float64, (8, 8, 2), elements=finite))
def test_blur_field_is_linear(u, w):
    assert np.allclose(blur_field(u + w, 1.5), blur_field(u, 1.5) + blur_field(w, 1.5), atol=1e-10)


def test_large_kernel_fft_path_matches_direct():
    from scipy import ndimage

    from lifereg.grid import gaussian_kernel

    img = np.random.default_rng(5).random((90, 70))
    k = gaussian_kernel(12.0)
    assert len(k) > 41  # exercises the FFT branch
    direct = ndimage.correlate1d(ndimage.correlate1d(img, k, axis=0, mode="reflect"), k, axis=1, mode="reflect")
    assert np.allclose(gaussian_blur(img, 12.0), direct, rtol=0, atol=1e-13)
    fld = np.stack([img, 2 * img], axis=-1)
    assert np.allclose(blur_field(fld, 12.0)[..., 1], 2 * direct, rtol=0, atol=1e-13)
