"""Radial-directional local intuitionistic fuzzy entropy (LIFE) edges.

Gradients are projected on the ray from the ultrasound sector apex, so
only boundaries facing the transducer respond. Each pixel's normalised
radial gradient is fuzzified into (membership, non-membership, hesitation),
the fuzzy entropy terms are summed over a small neighbourhood, signed by the
radial gradient and soft-thresholded.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import SectorGeometry, as_image, check_same_shape, gradient_xy


@dataclass(frozen=True)
class LifeParams:
    lam: int = 4
    neighborhood_n: int = 3
    soft_threshold: float = 1.5
    enhancement_gain: float = 1.0

    def __post_init__(self):
        if self.lam < 1:
            raise ValueError("lambda must be >= 1")
        if self.neighborhood_n < 3 or self.neighborhood_n % 2 == 0:
            raise ValueError("neighborhood_n must be odd and >= 3")
        if self.soft_threshold < 0:
            raise ValueError("soft_threshold must be >= 0")


@dataclass(frozen=True)
class FuzzyPixel:
    mu: float
    phi: float
    pi: float


def normalize_gradient(grad, scale: float | None = None) -> np.ndarray:
    """``|grad| / scale`` with ``scale = max |grad|`` unless given.

    An all-zero gradient (or zero scale) maps to all zeros. Values are
    clipped to 1 when an external scale is smaller than the data.
    """
    g = np.abs(np.asarray(grad, dtype=np.float64))
    if scale is None:
        scale = float(g.max()) if g.size else 0.0
    if scale <= 0:
        return np.zeros_like(g)
    return np.minimum(g / scale, 1.0)


def fuzzify_array(g, lam: int = 4) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    g = np.asarray(g, dtype=np.float64)
    if np.any(g < 0) or np.any(g > 1):
        raise ValueError("normalised gradient must lie in [0, 1]")
    c = (1.0 - g) ** lam
    mu = c ** (lam + 1)  # (1 - g)^(lam (lam + 1))
    phi = 1.0 - c
    pi = 1.0 - mu - phi
    return mu, phi, pi


def fuzzify(g_norm: float, lam: int = 4) -> FuzzyPixel:
    mu, phi, pi = fuzzify_array(g_norm, lam)
    return FuzzyPixel(float(mu), float(phi), float(pi))


def entropy_terms(mu, phi, pi) -> np.ndarray:
    """Per-cell intuitionistic fuzzy entropy ``(2 mu phi + pi^2) / (mu^2 + phi^2 + pi^2)``."""
    return (2.0 * mu * phi + pi * pi) / (mu * mu + phi * phi + pi * pi)


def life_entropy(neighborhood) -> float:
    """Mean entropy term over an ``n x n`` block.

    ``neighborhood`` is either a sequence of :class:`FuzzyPixel` or an array of
    shape ``(n, n, 3)`` holding (mu, phi, pi).
    """
    arr = np.asarray(
        [[p.mu, p.phi, p.pi] for p in np.ravel(neighborhood)]
        if isinstance(np.ravel(neighborhood)[0], FuzzyPixel)
        else neighborhood,
        dtype=np.float64,
    ).reshape(-1, 3)
    n = int(round(np.sqrt(arr.shape[0])))
    if n * n != arr.shape[0] or n % 2 == 0:
        raise ValueError("neighbourhood must be an odd n x n block")
    return float(np.mean(entropy_terms(arr[:, 0], arr[:, 1], arr[:, 2])))


def radial_angle(shape: tuple[int, int], geom: SectorGeometry) -> np.ndarray:
    """Deflection angle of every pixel from the apex, ``atan2(x - x0, y - y0)``."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return np.arctan2(xx - geom.apex_x, yy - geom.apex_y)


def radial_component(gx, gy, geom: SectorGeometry) -> np.ndarray:
    theta = radial_angle(np.shape(gx), geom)
    return gx * np.sin(theta) + gy * np.cos(theta)


def radial_gradient(img, geom: SectorGeometry) -> np.ndarray:
    """Image gradient projected on the outward ray from the sector apex."""
    gx, gy = gradient_xy(img)
    return radial_component(gx, gy, geom)


def soft_threshold(e, tau: float):
    """``e - sgn(e) tau`` where ``|e| >= tau``, else 0."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    e_arr = np.asarray(e, dtype=np.float64)
    out = np.where(np.abs(e_arr) >= tau, e_arr - np.sign(e_arr) * tau, 0.0)
    return float(out) if np.ndim(e) == 0 else out


def signed_life(img, geom: SectorGeometry, params: LifeParams | None = None) -> np.ndarray:
    """Neighbourhood-summed radial LIFE signed by the radial gradient (before thresholding)."""
    params = params or LifeParams()
    gx, gy = gradient_xy(img)
    gr = radial_component(gx, gy, geom)
    # normalised against the full gradient magnitude so that purely
    # tangential structure stays near zero instead of being rescaled to 1
    g = normalize_gradient(gr, scale=float(np.hypot(gx, gy).max()))
    terms = entropy_terms(*fuzzify_array(g, params.lam))
    n = params.neighborhood_n
    total = ndimage.uniform_filter(terms, size=n, mode="reflect") * (n * n)
    return np.sign(gr) * total


def extract_edges(img, geom: SectorGeometry, params: LifeParams | None = None) -> np.ndarray:
    params = params or LifeParams()
    img = as_image(img)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError("extract_edges needs an image of at least 3x3")
    return soft_threshold(signed_life(img, geom, params), params.soft_threshold)


def enhance_slice(slice_img, edges, gain: float = 1.0) -> np.ndarray:
    slice_img = as_image(slice_img, "slice")
    edges = as_image(edges, "edges")
    check_same_shape(slice_img, edges, "slice and edges")
    return np.clip(slice_img + gain * edges, 0.0, 1.0)
