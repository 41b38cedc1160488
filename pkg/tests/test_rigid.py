import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lifereg import phantom as ph
from lifereg.grid import extract_slice
from lifereg.rigid import (
    AffineTransform3D,
    RigidSearchParams,
    align_translation_2d,
    apply_affine,
    register_affine,
    register_affine_full,
    resample_volume_slice,
)

small = st.floats(-0.2, 0.2)


@pytest.fixture(scope="module")
def volume():
    vol, mask, _ = ph.make_ct_phantom(ph.default_spec((64, 64), seed=5, depth=5))
    return vol, mask


# --- oracles ---------------------------------------------------------------


def test_resample_matches_trilinear_formula():
    rng = np.random.default_rng(0)
    vol = rng.random((4, 6, 7))
    T = AffineTransform3D.in_plane(10.0, (0.3, -0.2, 0.4), (3, 2.5, 1))
    out = resample_volume_slice(vol, T, 1)
    for y in range(6):
        for x in range(7):
            px, py, pz = apply_affine(T, [x, y, 1.0])
            px, py, pz = np.clip(px, 0, 6), np.clip(py, 0, 5), np.clip(pz, 0, 3)
            x0, y0, z0 = min(int(px), 5), min(int(py), 4), min(int(pz), 2)
            fx, fy, fz = px - x0, py - y0, pz - z0
            c = vol[z0:z0 + 2, y0:y0 + 2, x0:x0 + 2]
            c = c[0] * (1 - fz) + c[1] * fz
            c = c[0] * (1 - fy) + c[1] * fy
            want = c[0] * (1 - fx) + c[1] * fx
            assert abs(out[y, x] - want) < 1e-12


# --- examples ----------------------------------------------------------------


def test_apply_affine_examples():
    p = np.array([3.0, 4.0, 5.0])
    assert np.array_equal(apply_affine(AffineTransform3D.identity(), p), p)
    T = AffineTransform3D(np.eye(3), np.array([1.0, 2.0, 3.0]))
    assert np.array_equal(apply_affine(T, [0, 0, 0]), [1, 2, 3])
    S = AffineTransform3D(np.diag([2.0, 1.0, 1.0]), np.zeros(3))
    assert np.array_equal(apply_affine(S, p), [6, 4, 5])


def test_resample_examples():
    vol = np.broadcast_to(np.arange(6.0)[:, None, None], (6, 5, 5)) + np.random.default_rng(1).random((1, 5, 5))
    assert np.array_equal(resample_volume_slice(vol, AffineTransform3D.identity(), 2), extract_slice(vol, 2))
    up = AffineTransform3D(np.eye(3), np.array([0, 0, 1.0]))
    assert np.allclose(resample_volume_slice(vol, up, 2), extract_slice(vol, 3), atol=1e-12)
    half = AffineTransform3D(np.eye(3), np.array([0, 0, 0.5]))
    assert np.allclose(resample_volume_slice(vol, half, 2), 0.5 * (vol[2] + vol[3]), atol=1e-10)


def test_transform_validation_and_text():
    with pytest.raises(ValueError):
        AffineTransform3D(-np.eye(3), np.zeros(3))
    with pytest.raises(ValueError):
        RigidSearchParams(step_shrink=1.0)
    T = AffineTransform3D.in_plane(5.0, (1, 2, 0), (3, 3, 0))
    assert np.array_equal(AffineTransform3D.from_text(T.to_text()).params(), T.params())
    with pytest.raises(ValueError):
        AffineTransform3D.from_text("1 2 3")


def test_self_registration(volume):
    vol, mask = volume
    res = register_affine_full(vol, extract_slice(vol, 2), 2)
    assert np.abs(res.transform.params() - AffineTransform3D.identity().params()).max() < 1e-2
    assert res.nmi_final >= res.nmi_initial
    assert all(b >= a for a, b in zip(res.trace, res.trace[1:]))


def test_recovers_shift_and_rotation():
    spec = ph.default_spec((96, 96), seed=5, depth=5)
    vol, _, _ = ph.make_ct_phantom(spec)
    c = 2
    cen = np.array([47.5, 47.5, c])
    truth = AffineTransform3D.in_plane(2.0, (1.5, -1.0, 0), cen)
    yy, xx = np.mgrid[0:96, 0:96].astype(float)
    P = apply_affine(truth, np.stack([xx.ravel(), yy.ravel(), np.full(xx.size, c)], 1))
    us = ph.render_ct(spec, P[:, 0], P[:, 1], P[:, 2] - c).reshape(96, 96)
    T = register_affine(vol, us, c)
    assert np.abs(T(cen) - truth(cen))[:2].max() < 0.5
    assert abs(T.in_plane_angle() - 2.0) < 0.5


def test_register_errors(volume):
    vol, _ = volume
    with pytest.raises(ValueError):
        register_affine(vol, np.zeros((10, 10)), 2)
    with pytest.raises(IndexError):
        register_affine(vol, vol[0], 7)
    with pytest.raises(ValueError):
        register_affine(np.zeros_like(vol), np.zeros_like(vol[0]), 2)


def test_translation_examples(volume):
    vol, mask = volume
    img = vol[2]
    assert align_translation_2d(img, img, mask, 4) == (0, 0)
    moving = np.roll(img, (-1, 2), axis=(0, 1))
    assert align_translation_2d(img, moving, mask, 4) == (2, -1)
    with pytest.raises(ValueError):
        align_translation_2d(np.zeros((20, 20)), np.zeros((20, 20)), np.ones((20, 20), bool), 2)


def test_translation_frozen_nmi(volume):
    vol, mask = volume
    res = register_affine_full(vol, np.roll(vol[2], 1, axis=1), 2, RigidSearchParams(max_iter=20))
    # regression value recorded from the reference run
    assert res.nmi_final == pytest.approx(1.8338094862139298, abs=1e-12)


# --- properties --------------------------------------------------------------


@given(st.lists(small, min_size=9, max_size=9), st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.lists(st.floats(-20, 20), min_size=3, max_size=3))
def test_inverse_composition(dq, t, p):
    T = AffineTransform3D(np.eye(3) + np.reshape(dq, (3, 3)), np.array(t))
    assert np.allclose(apply_affine(T.inverse(), apply_affine(T, p)), p, atol=1e-10)


@given(st.integers(-3, 3), st.integers(-3, 3), st.integers(1, 3))
def test_translation_offset_invariant(dx, dy, k):
    vol, mask, _ = ph.make_ct_phantom(ph.default_spec((48, 48), seed=1, texture=0.0))
    img = np.floor(vol * 16) / 16  # values on bin edges
    moving = np.roll(img, (dy, dx), axis=(0, 1))
    shift = k / 16
    a = align_translation_2d(img, moving, mask, 4, bins=16)
    b = align_translation_2d(np.clip(img + shift, 0, 1), np.clip(moving + shift, 0, 1), mask, 4, bins=16)
    assert a == b == (dx, dy)
