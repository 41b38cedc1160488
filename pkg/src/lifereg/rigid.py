"""Affine slice extraction by NMI steepest ascent, plus 2-D translation search."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .grid import as_image, check_same_shape
from .infometrics import JointHistogram, bin_index, nmi

log = logging.getLogger(__name__)

# preconditioning: one unit of search space = 1 voxel of translation or 0.01 of a matrix entry
PARAM_SCALE = np.array([100.0] * 9 + [1.0] * 3)


@dataclass
class AffineTransform3D:
    q: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.q = np.array(self.q, dtype=np.float64).reshape(3, 3)
        self.t = np.array(self.t, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(self.q)) or not np.all(np.isfinite(self.t)):
            raise ValueError("affine transform contains non-finite values")
        if not np.linalg.det(self.q) > 0:
            raise ValueError("affine matrix must preserve orientation (det(q) > 0)")

    @classmethod
    def identity(cls) -> "AffineTransform3D":
        return cls()

    @classmethod
    def from_params(cls, p) -> "AffineTransform3D":
        p = np.asarray(p, dtype=np.float64)
        return cls(p[:9].reshape(3, 3), p[9:12])

    @classmethod
    def in_plane(cls, angle_deg: float = 0.0, shift=(0.0, 0.0, 0.0), center=(0.0, 0.0, 0.0)) -> "AffineTransform3D":
        """Rotation about the z axis through ``center`` followed by ``shift``."""
        a = math.radians(angle_deg)
        q = np.array([[math.cos(a), -math.sin(a), 0.0], [math.sin(a), math.cos(a), 0.0], [0.0, 0.0, 1.0]])
        c = np.asarray(center, dtype=np.float64)
        return cls(q, c - q @ c + np.asarray(shift, dtype=np.float64))

    def params(self) -> np.ndarray:
        return np.concatenate([self.q.ravel(), self.t])

    def inverse(self) -> "AffineTransform3D":
        qi = np.linalg.inv(self.q)
        return AffineTransform3D(qi, -qi @ self.t)

    def __call__(self, p) -> np.ndarray:
        return apply_affine(self, p)

    def in_plane_angle(self) -> float:
        """Rotation about z in degrees, from the upper-left 2x2 block."""
        q = self.q
        return math.degrees(math.atan2(q[1, 0] - q[0, 1], q[0, 0] + q[1, 1]))

    def to_text(self) -> str:
        return " ".join(repr(float(v)) for v in self.params())

    @classmethod
    def from_text(cls, text: str) -> "AffineTransform3D":
        vals = [float(v) for v in text.split()]
        if len(vals) != 12:
            raise ValueError(f"expected 12 numbers for an affine transform, got {len(vals)}")
        return cls.from_params(vals)


@dataclass(frozen=True)
class RigidSearchParams:
    max_iter: int = 200
    step0: float = 0.1
    step_shrink: float = 0.5
    min_step: float = 1e-5
    max_step: float = 2.0
    bins: int = 64
    fd_delta: float = 0.05
    rel_tol: float = 1e-6
    max_samples: int = 65536

    def __post_init__(self):
        if not 0 < self.step_shrink < 1:
            raise ValueError("step_shrink must lie in (0, 1)")
        if self.max_iter < 1 or self.bins < 2:
            raise ValueError("max_iter >= 1 and bins >= 2 required")
        if not (self.step0 > 0 and self.min_step > 0 and self.fd_delta > 0):
            raise ValueError("step0, min_step and fd_delta must be positive")


@dataclass
class AffineResult:
    transform: AffineTransform3D
    nmi_initial: float
    nmi_final: float
    trace: list[float]  # NMI after every accepted step, starting with the identity
    iterations: int


def apply_affine(T: AffineTransform3D, p) -> np.ndarray:
    """``q p + t`` for one point or an ``(n, 3)`` array of points."""
    p = np.asarray(p, dtype=np.float64)
    return p @ T.q.T + T.t


@numba.njit(cache=True)
def _trilinear(vol, x, y, z):
    d, h, w = vol.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    z = min(max(z, 0.0), d - 1.0)
    x0 = min(int(math.floor(x)), max(w - 2, 0))
    y0 = min(int(math.floor(y)), max(h - 2, 0))
    z0 = min(int(math.floor(z)), max(d - 2, 0))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    z1 = min(z0 + 1, d - 1)
    fx = x - x0
    fy = y - y0
    fz = z - z0
    c00 = vol[z0, y0, x0] * (1 - fx) + vol[z0, y0, x1] * fx
    c01 = vol[z0, y1, x0] * (1 - fx) + vol[z0, y1, x1] * fx
    c10 = vol[z1, y0, x0] * (1 - fx) + vol[z1, y0, x1] * fx
    c11 = vol[z1, y1, x0] * (1 - fx) + vol[z1, y1, x1] * fx
    c0 = c00 * (1 - fy) + c01 * fy
    c1 = c10 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


@numba.njit(cache=True)
def _resample_points(vol, q, t, xs, ys, z):
    out = np.empty(xs.size)
    for i in range(xs.size):
        x = xs[i]
        y = ys[i]
        px = q[0, 0] * x + q[0, 1] * y + q[0, 2] * z + t[0]
        py = q[1, 0] * x + q[1, 1] * y + q[1, 2] * z + t[1]
        pz = q[2, 0] * x + q[2, 1] * y + q[2, 2] * z + t[2]
        out[i] = _trilinear(vol, px, py, pz)
    return out


@numba.njit(cache=True)
def _entropy_bits(counts, total):
    s = 0.0
    for c in counts.ravel():
        if c > 0:
            p = c / total
            s -= p * math.log2(p)
    return s


@numba.njit(cache=True)
def _nmi_affine(vol, q, t, xs, ys, z, ref_bins, bins):
    joint = np.zeros((bins, bins))
    for i in range(xs.size):
        x = xs[i]
        y = ys[i]
        px = q[0, 0] * x + q[0, 1] * y + q[0, 2] * z + t[0]
        py = q[1, 0] * x + q[1, 1] * y + q[1, 2] * z + t[1]
        pz = q[2, 0] * x + q[2, 1] * y + q[2, 2] * z + t[2]
        v = _trilinear(vol, px, py, pz)
        b = int(math.floor(min(max(v, 0.0), 1.0) * bins))
        if b > bins - 1:
            b = bins - 1
        joint[ref_bins[i], b] += 1.0
    n = float(xs.size)
    ha = _entropy_bits(joint.sum(axis=1), n)
    hb = _entropy_bits(joint.sum(axis=0), n)
    hab = _entropy_bits(joint, n)
    if hab <= 0.0:
        return np.nan
    return (ha + hb) / hab


def resample_volume_slice(vol, T: AffineTransform3D, k: int) -> np.ndarray:
    """Trilinear samples of ``vol`` at ``T(x, y, k)`` for every pixel of slice ``k``."""
    vol = np.ascontiguousarray(vol, dtype=np.float64)
    d, h, w = vol.shape
    if not 0 <= k < d:
        raise IndexError(f"slice index {k} out of range [0, {d})")
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = _resample_points(vol, T.q, T.t, xx.ravel(), yy.ravel(), float(k))
    return out.reshape(h, w)


def _sample_grid(shape, mask, max_samples):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    sel = np.ones((h, w), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    count = int(sel.sum())
    stride = max(1, int(math.ceil(math.sqrt(count / max_samples))))
    if stride > 1:
        grid = np.zeros((h, w), dtype=bool)
        grid[::stride, ::stride] = True
        sel = sel & grid
    return xx[sel].astype(np.float64), yy[sel].astype(np.float64), sel


def register_affine_full(vol, us, center_slice: int, params: RigidSearchParams | None = None, mask=None) -> AffineResult:
    """Steepest ascent of NMI(us, resampled slice) over the 12 affine parameters.

    Gradients are central differences in the preconditioned parameter
    space; a step is accepted only if NMI increases, otherwise it is shrunk.
    Accepted steps let the step grow back by ``1 / step_shrink`` up to
    ``max_step``. NMI is evaluated on a regular sub-grid of at most
    ``max_samples`` pixels.
    """
    params = params or RigidSearchParams()
    vol = np.ascontiguousarray(vol, dtype=np.float64)
    us = as_image(us, "us")
    if vol.ndim != 3 or vol.shape[0] < 3:
        raise ValueError("register_affine needs a volume with depth >= 3")
    if us.shape != vol.shape[1:]:
        raise ValueError(f"US image {us.shape} does not match slice shape {vol.shape[1:]}")
    if not 0 <= center_slice < vol.shape[0]:
        raise IndexError("center_slice out of range")
    xs, ys, sel = _sample_grid(us.shape, mask, params.max_samples)
    if xs.size == 0:
        raise ValueError("no samples for rigid registration (empty mask)")
    ref_bins = bin_index(us[sel], params.bins).astype(np.int64)
    z = float(center_slice)
    bins = params.bins

    def score(phi):
        th = phi / PARAM_SCALE
        return _nmi_affine(vol, th[:9].reshape(3, 3), th[9:], xs, ys, z, ref_bins, bins)

    phi = AffineTransform3D.identity().params() * PARAM_SCALE
    f = score(phi)
    if not np.isfinite(f):
        raise ValueError("degenerate NMI at identity: images are constant")
    f0 = f
    trace = [f]
    step = params.step0
    it = 0
    eye = np.eye(12)
    while it < params.max_iter:
        it += 1
        grad = np.array([
            (score(phi + params.fd_delta * e) - score(phi - params.fd_delta * e)) / (2 * params.fd_delta) for e in eye
        ])
        grad = np.nan_to_num(grad)
        gn = np.linalg.norm(grad)
        if gn == 0:
            break
        d = grad / gn
        accepted = False
        while step >= params.min_step:
            cand = phi + step * d
            if np.linalg.det(cand[:9].reshape(3, 3) / 100.0) > 0:
                fc = score(cand)
                if np.isfinite(fc) and fc > f:
                    accepted = True
                    break
            step *= params.step_shrink
        if not accepted:
            break
        rel = (fc - f) / abs(f)
        phi, f = cand, fc
        trace.append(f)
        if rel < params.rel_tol:
            break
        step = min(step / params.step_shrink, params.max_step)
    T = AffineTransform3D.from_params(phi / PARAM_SCALE)
    log.debug("register_affine: %d iterations, NMI %.6f -> %.6f", it, f0, f)
    return AffineResult(T, f0, f, trace, it)


def register_affine(vol, us, center_slice: int, params: RigidSearchParams | None = None, mask=None) -> AffineTransform3D:
    return register_affine_full(vol, us, center_slice, params, mask).transform


def align_translation_2d(
    fixed, moving, mask, max_shift: int = 10, bins: int = 64, max_samples: int | None = None
) -> tuple[int, int]:
    """Integer shift ``(dx, dy)`` with ``moving(p + d)`` best matching ``fixed(p)`` in the mask.

    Exhaustive over ``[-max_shift, max_shift]^2``; ties go to the smallest
    shift, then lexicographic order. With ``max_samples`` the mask is thinned
    to a regular sub-grid of about that many pixels.
    """
    fixed = as_image(fixed, "fixed")
    moving = as_image(moving, "moving")
    check_same_shape(fixed, moving, "fixed and moving")
    mask = np.asarray(mask, dtype=bool)
    check_same_shape(fixed, mask, "images and mask")
    if not mask.any():
        raise ValueError("empty mask")
    h, w = fixed.shape
    fb = bin_index(fixed, bins)
    mb = bin_index(moving, bins)
    if max_samples is not None:
        _, _, mask = _sample_grid(mask.shape, mask, max_samples)
    ys, xs = np.nonzero(mask)
    scores = {}
    for dx, dy in itertools.product(range(-max_shift, max_shift + 1), repeat=2):
        ok = (xs + dx >= 0) & (xs + dx < w) & (ys + dy >= 0) & (ys + dy < h)
        if not ok.any():
            continue
        a = fb[ys[ok], xs[ok]]
        b = mb[ys[ok] + dy, xs[ok] + dx]
        counts = np.bincount(a * bins + b, minlength=bins * bins).reshape(bins, bins)
        scores[dx, dy] = nmi(JointHistogram.from_joint(counts / counts.sum(), int(ok.sum())))
    if not scores:
        raise ValueError("no admissible shift")
    top = max(scores.values())
    # NMI values within 1e-12 of the best count as ties
    tied = [d for d, v in scores.items() if v >= top - 1e-12]
    return min(tied, key=lambda d: (d[0] ** 2 + d[1] ** 2, d[0], d[1]))
