"""Synthetic CT-like / US-like pairs with ground-truth deformations.

Every acceptance run is built from these phantoms. The CT side is a
piecewise-smooth picture (background, liver polygon, darker vessel disks,
low-amplitude smooth texture); the US side remaps it monotonically, adds
intensity-modulated speckle, brightens boundaries facing the probe,
blanks everything outside the sector and can cast a shadow cone.

Ground-truth fields follow the package's pull-back convention: the moving
image is ``warp(fixed, field)``, and a fixed landmark ``p_f`` appears in the
moving image at ``p_m`` with ``p_m + field(p_m) = p_f``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import (
    SectorGeometry,
    as_image,
    bilinear_sample,
    gaussian_blur,
    gradient_xy,
    jacobian_determinant,
    sample_field,
    warp,
)


@dataclass(frozen=True)
class Vessel:
    x: float
    y: float
    radius: float
    intensity: float


@dataclass(frozen=True)
class Deform:
    kind: str = "none"  # none | sinusoidal | gaussian-bump
    amplitude: float = 0.0
    wavelength: float = 64.0
    center: tuple[float, float] = (0.0, 0.0)
    sigma: float = 16.0

    def __post_init__(self):
        if self.kind not in ("none", "sinusoidal", "gaussian-bump"):
            raise ValueError(f"unknown deformation kind {self.kind!r}")
        if self.kind == "sinusoidal" and self.amplitude > self.wavelength / 4:
            raise ValueError("sinusoidal amplitude must not exceed wavelength / 4")


@dataclass(frozen=True)
class UsStyle:
    speckle_sigma: float = 0.08
    boundary_gain: float = 0.35
    shadow: tuple[float, float] | None = None  # (centre angle, half width) in radians
    shadow_start: float = 0.6  # fraction of the image height where the cone starts
    gamma: float = 3.0  # strength of the monotone remap


@dataclass(frozen=True)
class PhantomSpec:
    size: tuple[int, int] = (256, 256)  # (w, h)
    seed: int = 0
    depth: int = 1
    vessels: tuple[Vessel, ...] = ()
    liver: tuple[tuple[float, float], ...] = ()
    deform: Deform = field(default_factory=Deform)
    us_style: UsStyle = field(default_factory=UsStyle)
    geom: SectorGeometry | None = None
    background: float = 0.15
    liver_intensity: float = 0.6
    texture: float = 0.1
    texture_scale: float = 2.0
    edge_width: float = 1.0
    n_landmarks: int = 10
    corner_inset: float = 3.0

    @property
    def sector(self) -> SectorGeometry:
        return self.geom or SectorGeometry.default_for(*self.size)


def default_spec(size=(256, 256), seed: int = 0, depth: int = 1, deform: Deform | None = None, **kw) -> PhantomSpec:
    """A liver-like polygon with a handful of vessels placed from ``seed``."""
    w, h = size
    rng = np.random.default_rng(seed)
    # irregular octagon around the image centre, inside the default sector
    cx, cy = 0.5 * w, 0.55 * h
    angles = np.linspace(0, 2 * np.pi, 9)[:-1] + rng.uniform(-0.15, 0.15, 8)
    radii = rng.uniform(0.30, 0.36, 8)
    liver = tuple((float(cx + r * w * math.cos(a)), float(cy + 0.85 * r * h * math.sin(a))) for a, r in zip(angles, radii))
    vessels = []
    for _ in range(6):
        ang = rng.uniform(0, 2 * np.pi)
        rad = rng.uniform(0.0, 0.18)
        vessels.append(
            Vessel(
                float(cx + rad * w * math.cos(ang)),
                float(cy + 0.8 * rad * h * math.sin(ang)),
                float(rng.uniform(0.025, 0.045) * min(w, h)),
                float(rng.uniform(0.2, 0.3)),
            )
        )
    return PhantomSpec(size=(w, h), seed=seed, depth=depth, vessels=tuple(vessels), liver=liver,
                       deform=deform or Deform(), **kw)


def _polygon_signed_distance(poly: np.ndarray, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
    """Signed distance to a closed polygon, negative inside."""
    dist = np.full(xx.shape, np.inf)
    inside = np.zeros(xx.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        ex, ey = x2 - x1, y2 - y1
        t = np.clip(((xx - x1) * ex + (yy - y1) * ey) / (ex * ex + ey * ey), 0.0, 1.0)
        dist = np.minimum(dist, np.hypot(xx - (x1 + t * ex), yy - (y1 + t * ey)))
        crosses = ((y1 > yy) != (y2 > yy)) & (xx < (x2 - x1) * (yy - y1) / (y2 - y1 + 1e-300) + x1)
        inside ^= crosses
    return np.where(inside, -dist, dist)


def _smooth_step(sd: np.ndarray, width: float) -> np.ndarray:
    # 1 inside (sd < 0), 0 outside, with a tanh ramp of the given width
    return 0.5 * (1.0 - np.tanh(sd / width))


def _texture(spec: PhantomSpec) -> np.ndarray:
    w, h = spec.size
    rng = np.random.default_rng([spec.seed, 7])
    noise = gaussian_blur(rng.standard_normal((h, w)), spec.texture_scale)
    noise /= np.abs(noise).max() + 1e-300
    return noise


def render_ct(spec: PhantomSpec, xx, yy, z=0.0, texture: np.ndarray | None = None) -> np.ndarray:
    """Evaluate the CT phantom at arbitrary continuous coordinates.

    ``z`` moves vessels slowly, so stacking several ``z`` gives a volume
    whose neighbouring slices differ only a little.
    """
    if len(spec.liver) < 3:
        raise ValueError("liver polygon needs at least three vertices")
    poly = np.asarray(spec.liver, dtype=np.float64)
    xx = np.asarray(xx, dtype=np.float64)
    yy = np.asarray(yy, dtype=np.float64)
    ew = spec.edge_width
    liver = _smooth_step(_polygon_signed_distance(poly, xx, yy), ew)
    img = spec.background + (spec.liver_intensity - spec.background) * liver
    for i, v in enumerate(spec.vessels):
        drift = 0.6 * z * math.cos(1.3 * i)
        rad = v.radius * (1.0 + 0.03 * z * math.sin(0.7 * i + 1.0))
        sd = np.hypot(xx - (v.x + drift), yy - (v.y + 0.6 * z * math.sin(1.3 * i))) - rad
        img = img + (v.intensity - img) * _smooth_step(sd, ew) * liver
    if spec.texture > 0:
        tex = _texture(spec) if texture is None else texture
        mod = np.cos(0.2 * np.asarray(z, dtype=np.float64))
        img = img + spec.texture * mod * bilinear_sample(tex, xx, yy)
    return np.clip(img, 0.0, 1.0)


def liver_mask(spec: PhantomSpec) -> np.ndarray:
    w, h = spec.size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return _polygon_signed_distance(np.asarray(spec.liver, dtype=np.float64), xx, yy) < 0


def landmarks(spec: PhantomSpec) -> np.ndarray:
    """Vessel centres plus liver corners, up to ``n_landmarks``.

    Corners are moved ``corner_inset`` pixels toward the centroid so they
    lie just inside the mask while staying on the boundary feature.
    """
    poly = np.asarray(spec.liver, dtype=np.float64)
    centroid = poly.mean(axis=0)
    pts = [(v.x, v.y) for v in spec.vessels]
    # vertices ordered by turning angle, sharpest corners first
    turn = []
    n = len(poly)
    for i in range(n):
        a = poly[i] - poly[i - 1]
        b = poly[(i + 1) % n] - poly[i]
        turn.append(abs(math.atan2(a[0] * b[1] - a[1] * b[0], a @ b)))
    for i in np.argsort(turn)[::-1]:
        toward = centroid - poly[i]
        pts.append(tuple(poly[i] + spec.corner_inset * toward / np.linalg.norm(toward)))
    return np.asarray(pts[: spec.n_landmarks], dtype=np.float64)


def make_ct_phantom(spec: PhantomSpec):
    """Return ``(image_or_volume, liver_mask, landmarks)``.

    With ``spec.depth > 1`` the first item is a ``(depth, h, w)`` volume whose
    centre slice is the ``z = 0`` phantom.
    """
    w, h = spec.size
    if len(spec.liver) < 3:
        raise ValueError("liver polygon needs at least three vertices")
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    tex = _texture(spec) if spec.texture > 0 else None
    if spec.depth <= 1:
        data = render_ct(spec, xx, yy, 0.0, tex)
    else:
        c = spec.depth // 2
        data = np.stack([render_ct(spec, xx, yy, float(k - c), tex) for k in range(spec.depth)])
    mask = liver_mask(spec)
    if not mask.any():
        raise ValueError("liver polygon covers no pixel")
    return data, mask, landmarks(spec)


def ground_truth_field(spec: PhantomSpec) -> np.ndarray:
    w, h = spec.size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    d = spec.deform
    out = np.zeros((h, w, 2))
    if d.kind == "sinusoidal":
        k = 2.0 * np.pi / d.wavelength
        out[..., 0] = d.amplitude * np.sin(k * yy) * np.cos(k * xx)
        out[..., 1] = d.amplitude * np.cos(k * yy) * np.sin(k * xx)
    elif d.kind == "gaussian-bump":
        dx = xx - d.center[0]
        dy = yy - d.center[1]
        g = d.amplitude / d.sigma * np.exp(0.5 - (dx * dx + dy * dy) / (2.0 * d.sigma ** 2))
        out[..., 0] = g * dx
        out[..., 1] = g * dy
    return out


def apply_ground_truth_warp(img, spec: PhantomSpec):
    """Warp ``img`` with the phantom's deformation; returns ``(warped, field)``."""
    img = as_image(img)
    fld = ground_truth_field(spec)
    if img.shape != fld.shape[:2]:
        raise ValueError(f"image shape {img.shape} does not match phantom size {spec.size}")
    if np.any(jacobian_determinant(fld) <= 0):
        raise ValueError("ground-truth deformation folds: non-positive Jacobian")
    return warp(img, fld), fld


def transport_landmarks(points_fixed, fld: np.ndarray, iterations: int = 50) -> np.ndarray:
    """Moving-image positions ``p_m`` with ``p_m + field(p_m) = p_f``."""
    pf = np.asarray(points_fixed, dtype=np.float64).reshape(-1, 2)
    pm = pf.copy()
    for _ in range(iterations):
        pm = pf - sample_field(fld, pm[:, 0], pm[:, 1])
    return pm


def make_us_phantom(ct, spec: PhantomSpec) -> np.ndarray:
    """US-looking rendering of a (possibly already warped) CT phantom image."""
    ct = as_image(ct, "ct")
    w, h = spec.size
    if ct.shape != (h, w):
        raise ValueError(f"image shape {ct.shape} does not match phantom size {spec.size}")
    style = spec.us_style
    geom = spec.sector
    k = style.gamma
    us = (1.0 - np.exp(-k * np.clip(ct, 0.0, 1.0))) / (1.0 - math.exp(-k))
    if style.boundary_gain > 0:
        from .life import radial_component

        gx, gy = gradient_xy(ct)
        gr = np.abs(radial_component(gx, gy, geom))
        peak = gr.max()
        if peak > 0:
            us = us + style.boundary_gain * gr / peak
    if style.speckle_sigma > 0:
        rng = np.random.default_rng([spec.seed, 11])
        noise = style.speckle_sigma * us * gaussian_blur(rng.standard_normal((h, w)), 0.7) * 1.6
        us = us + noise - noise.mean()
    if style.shadow is not None:
        ang0, half = style.shadow
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        ang = np.arctan2(xx - geom.apex_x, yy - geom.apex_y)
        cone = (np.abs(ang - ang0) <= half) & (yy >= style.shadow_start * h)
        us = np.where(cone, 0.25 * us, us)
    us = np.where(geom.contains((h, w)), us, 0.0)
    return np.clip(us, 0.0, 1.0)


def make_pair(spec: PhantomSpec):
    """CT phantom plus a warped US-style image and matching landmarks.

    Returns a dict with ``ct`` (image or volume), ``ct_slice``, ``us``,
    ``mask``, ``field`` (ground truth), ``landmarks_fixed`` and
    ``landmarks_moving``.
    """
    ct, mask, lm = make_ct_phantom(spec)
    ct_slice = ct if ct.ndim == 2 else ct[ct.shape[0] // 2]
    warped, fld = apply_ground_truth_warp(ct_slice, spec)
    us = make_us_phantom(warped, spec)
    return {
        "ct": ct,
        "ct_slice": ct_slice,
        "us": us,
        "mask": mask,
        "field": fld,
        "landmarks_fixed": lm,
        "landmarks_moving": transport_landmarks(lm, fld),
    }


def with_deform(spec: PhantomSpec, **kw) -> PhantomSpec:
    return replace(spec, deform=Deform(**kw))
