import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lifereg.grid import SectorGeometry
from lifereg.life import (
    FuzzyPixel,
    LifeParams,
    enhance_slice,
    extract_edges,
    fuzzify,
    fuzzify_array,
    life_entropy,
    normalize_gradient,
    radial_gradient,
    signed_life,
    soft_threshold,
)

GEOM = SectorGeometry.default_for(64, 64)
g01 = st.floats(0, 1, allow_nan=False)


def direct_term(g, lam=4):
    # membership, non-membership and hesitation written straight from their definitions
    mu = (1 - g) ** (lam * (lam + 1))
    phi = 1 - (1 - g) ** lam
    pi = 1 - mu - phi
    return (2 * mu * phi + pi**2) / (mu**2 + phi**2 + pi**2)


def arc_and_spoke(size=128, width=2.0):
    geom = SectorGeometry.default_for(size, size)
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    r = np.hypot(xx - geom.apex_x, yy - geom.apex_y)
    th = np.arctan2(xx - geom.apex_x, yy - geom.apex_y)
    arc = 0.5 * (1 + np.tanh((r - 0.9 * size) / width))
    spoke = 0.5 * (1 + np.tanh(th / 0.02))
    return geom, arc, spoke


# --- oracles ---------------------------------------------------------------


def test_life_entropy_matches_direct_evaluation():
    rng = np.random.default_rng(5)
    for _ in range(50):
        g = rng.random((5, 5))
        block = [fuzzify(v) for v in g.ravel()]
        want = sum(direct_term(v) for v in g.ravel()) / 25
        assert abs(life_entropy(block) - want) < 1e-12


def test_signed_life_matches_neighbourhood_sum():
    rng = np.random.default_rng(2)
    img = rng.random((12, 14))
    got = signed_life(img, GEOM, LifeParams())
    gy, gx = np.gradient(img)
    yy, xx = np.mgrid[0:12, 0:14].astype(float)
    th = np.arctan2(xx - GEOM.apex_x, yy - GEOM.apex_y)
    gr = gx * np.sin(th) + gy * np.cos(th)
    g = np.abs(gr) / np.hypot(gx, gy).max()
    terms = direct_term(g)
    pad = np.pad(terms, 1, mode="symmetric")
    for i in range(12):
        for j in range(14):
            want = np.sign(gr[i, j]) * pad[i:i + 3, j:j + 3].sum()
            assert abs(got[i, j] - want) < 1e-12


# --- examples ----------------------------------------------------------------


def test_fuzzify_examples():
    assert fuzzify(0.0) == FuzzyPixel(1.0, 0.0, 0.0)
    assert fuzzify(1.0) == FuzzyPixel(0.0, 1.0, 0.0)
    p = fuzzify(0.5, 4)
    assert p.mu == pytest.approx(9.5367431640625e-07, rel=1e-12)
    assert p.phi == 0.9375
    assert p.pi == pytest.approx(6.2499046325683594e-02, rel=1e-12)


def test_life_entropy_examples():
    def block(g):
        return [fuzzify(g)] * 9

    assert life_entropy(block(0.0)) == 0.0
    assert life_entropy(block(1.0)) == 0.0
    assert life_entropy(block(0.5)) == pytest.approx(4.427e-3, abs=5e-7)
    with pytest.raises(ValueError):
        life_entropy([fuzzify(0.1)] * 4)


def test_normalize_gradient_examples():
    assert not normalize_gradient(np.zeros((3, 3))).any()
    g = normalize_gradient(np.array([1.0, -5.0, 2.0]))
    assert g[1] == 1.0
    assert np.array_equal(normalize_gradient(np.array([-2.0, 1.0, 4.0])), [0.5, 0.25, 1.0])


def test_radial_gradient_axes():
    yy, xx = np.mgrid[0:64, 0:64].astype(float)
    geom = SectorGeometry(apex_x=20.0, apex_y=-10.0, inner_radius=5, outer_radius=100, half_angle=1.0)
    img = 0.3 * yy + 0.7 * xx
    gr = radial_gradient(img, geom)
    assert gr[30, 20] == pytest.approx(0.3, abs=1e-12)  # on the axis theta = 0
    side = SectorGeometry(apex_x=0.0, apex_y=10.0, inner_radius=1, outer_radius=100, half_angle=1.0)
    assert radial_gradient(xx, side)[10, 30] == pytest.approx(1.0, abs=1e-12)  # theta = pi/2


def test_soft_threshold_table():
    assert soft_threshold(2.0, 1.5) == 0.5
    assert soft_threshold(-2.0, 1.5) == -0.5
    assert soft_threshold(1.4, 1.5) == 0.0
    assert soft_threshold(1.5, 1.5) == 0.0
    with pytest.raises(ValueError):
        soft_threshold(1.0, -1.0)


def test_edges_constant_is_zero():
    assert not extract_edges(np.full((20, 20), 0.4), GEOM).any()


def test_arc_responds_spoke_does_not():
    geom, arc, spoke = arc_and_spoke()
    ea = np.abs(extract_edges(arc, geom))
    es = np.abs(extract_edges(spoke, geom))
    assert ea.max() > 1.0
    assert es.max() <= 0.05 * ea.max()


def test_edges_frozen_value():
    geom, arc, _ = arc_and_spoke()
    e = extract_edges(arc, geom)
    # regression values recorded from the reference run
    assert float(np.abs(e).sum()) == pytest.approx(2993.361267459797, rel=1e-12)


def test_enhance_examples():
    s = np.full((5, 5), 0.5)
    assert np.array_equal(enhance_slice(s, np.zeros((5, 5))), s)
    e = np.zeros((5, 5))
    e[2, 2] = 0.3
    assert np.array_equal(enhance_slice(s, e, 0.0), s)
    assert enhance_slice(s, e, 1.0)[2, 2] == pytest.approx(0.8, abs=1e-15)


def test_param_validation():
    with pytest.raises(ValueError):
        LifeParams(lam=0)
    with pytest.raises(ValueError):
        LifeParams(neighborhood_n=4)
    with pytest.raises(ValueError):
        LifeParams(soft_threshold=-0.1)
    with pytest.raises(ValueError):
        fuzzify_array(np.array([1.2]))


# --- properties --------------------------------------------------------------


@given(g01, st.integers(1, 8))
def test_fuzzify_partition(g, lam):
    p = fuzzify(g, lam)
    assert abs(p.mu + p.phi + p.pi - 1) < 1e-12
    assert p.mu + p.phi <= 1 + 1e-12
    for v in (p.mu, p.phi, p.pi):
        assert -1e-12 <= v <= 1 + 1e-12


@given(arrays(np.float64, (3, 3), elements=g01))
def test_life_entropy_in_unit_interval(g):
    e = life_entropy([fuzzify(v) for v in g.ravel()])
    assert -1e-12 <= e <= 1 + 1e-12


@given(arrays(np.float64, (3, 3), elements=st.sampled_from([0.0, 1.0])))
def test_life_entropy_zero_on_crisp(g):
    assert life_entropy([fuzzify(v) for v in g.ravel()]) == 0.0


@given(st.floats(-100, 100), st.floats(0, 10))
def test_soft_threshold_odd_contraction(e, tau):
    assert soft_threshold(-e, tau) == -soft_threshold(e, tau)
    assert abs(soft_threshold(e, tau)) <= abs(e)


# dyadic values keep ``img + c`` exact, so the sign of tiny gradients cannot flip
dyadic = st.integers(0, 64).map(lambda k: k / 64)


@given(arrays(np.float64, (16, 16), elements=dyadic), st.integers(-32, 32).map(lambda k: k / 64))
def test_edges_invariant_to_offset(img, c):
    a = extract_edges(img, GEOM)
    b = extract_edges(img + c, GEOM)
    assert np.allclose(a, b, atol=1e-9)
