"""Image, volume and deformation-field primitives.

Conventions used throughout the package:

* an image is a float64 array of shape ``(height, width)``; ``x`` is the
  column index and ``y`` the row index, so ``img[y, x]``;
* a volume is ``(depth, height, width)`` (slice-major);
* a deformation field is ``(height, width, 2)`` with ``[..., 0] = vx`` and
  ``[..., 1] = vy`` in pixels; warping pulls back, ``out(p) = img(p + T(p))``;
* a mask is a boolean ``(height, width)`` array, True inside the region.

Border policy: clamp for sampling, reflect for convolution, one-sided
differences for gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage, signal


@dataclass(frozen=True)
class SectorGeometry:
    """Fan-shaped ultrasound field of view, apex in continuous pixel coords."""

    apex_x: float
    apex_y: float
    inner_radius: float
    outer_radius: float
    half_angle: float

    def __post_init__(self):
        if not 0 < self.inner_radius < self.outer_radius:
            raise ValueError("need 0 < inner_radius < outer_radius")
        if not 0 < self.half_angle < math.pi / 2:
            raise ValueError("half_angle must lie in (0, pi/2)")

    @classmethod
    def default_for(cls, width: int, height: int) -> "SectorGeometry":
        """Apex centred above the image, fan covering most of the frame."""
        apex_y = -0.25 * height
        return cls(
            apex_x=(width - 1) / 2.0,
            apex_y=apex_y,
            inner_radius=0.3 * height,
            outer_radius=1.3 * height,
            half_angle=math.radians(40.0),
        )

    def contains(self, shape: tuple[int, int]) -> np.ndarray:
        """Boolean mask of pixels inside the sector."""
        h, w = shape
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        dx = xx - self.apex_x
        dy = yy - self.apex_y
        r = np.hypot(dx, dy)
        ang = np.arctan2(dx, dy)
        return (r >= self.inner_radius) & (r <= self.outer_radius) & (np.abs(ang) <= self.half_angle)


def as_image(img, name: str = "image") -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def as_field(field, name: str = "field") -> np.ndarray:
    f = np.asarray(field, dtype=np.float64)
    if f.ndim != 3 or f.shape[2] != 2:
        raise ValueError(f"{name} must have shape (h, w, 2), got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite values")
    return f


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> None:
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"dimension mismatch between {what}: {a.shape[:2]} vs {b.shape[:2]}")


def zero_field(shape: tuple[int, int]) -> np.ndarray:
    return np.zeros((shape[0], shape[1], 2))


def bilinear_sample(img: np.ndarray, x, y):
    """Bilinear interpolation at continuous ``(x, y)``; coordinates are clamped.

    Accepts scalars or equally shaped arrays of coordinates.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1)
    x0 = np.minimum(np.floor(x).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(y).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return float(out) if scalar else out


def warp(img: np.ndarray, field: np.ndarray) -> np.ndarray:
    """Pull-back resampling ``out(p) = img(p + field(p))``."""
    img = as_image(img)
    field = as_field(field)
    check_same_shape(img, field, "image and field")
    return warp_region(img, field, 0, 0)


def warp_region(img: np.ndarray, field: np.ndarray, y0: int, x0: int) -> np.ndarray:
    """Pull-back resampling of the window of ``img`` whose top-left pixel is ``(x0, y0)``.

    ``field`` covers only the window; samples may come from anywhere in ``img``.
    """
    return _warp_kernel(np.ascontiguousarray(img, dtype=np.float64), np.asarray(field, dtype=np.float64), y0, x0)


@numba.njit(cache=True)
def _warp_kernel(img, field, y0, x0):
    # same arithmetic as bilinear_sample, fused over the window
    h, w = img.shape
    fh, fw = field.shape[0], field.shape[1]
    out = np.empty((fh, fw))
    for i in range(fh):
        for j in range(fw):
            x = min(max(float(x0 + j) + field[i, j, 0], 0.0), w - 1.0)
            y = min(max(float(y0 + i) + field[i, j, 1], 0.0), h - 1.0)
            xi = min(int(math.floor(x)), max(w - 2, 0))
            yi = min(int(math.floor(y)), max(h - 2, 0))
            xj = min(xi + 1, w - 1)
            yj = min(yi + 1, h - 1)
            fx = x - xi
            fy = y - yi
            top = img[yi, xi] * (1.0 - fx) + img[yi, xj] * fx
            bot = img[yj, xi] * (1.0 - fx) + img[yj, xj] * fx
            out[i, j] = top * (1.0 - fy) + bot * fy
    return out


def sample_field(field: np.ndarray, x, y) -> np.ndarray:
    """Bilinearly interpolated field vectors at ``(x, y)``; returns ``(..., 2)``."""
    return np.stack([bilinear_sample(field[..., 0], x, y), bilinear_sample(field[..., 1], x, y)], axis=-1)


def invert_field(field: np.ndarray, iterations: int = 30) -> np.ndarray:
    """Approximate inverse of a displacement field by fixed-point iteration.

    Solves ``inv(q) = -field(q + inv(q))``; converges for fields whose
    Jacobian stays positive.
    """
    field = as_field(field)
    h, w = field.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    inv = -field.copy()
    for _ in range(iterations):
        inv = -sample_field(field, xx + inv[..., 0], yy + inv[..., 1])
    return inv


def gradient_xy(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences inside, one-sided differences on the border.

    Returns ``(grad_x, grad_y)`` with x along columns, y along rows.
    """
    img = as_image(img)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError("gradient_xy needs an image of at least 3x3")
    gy, gx = np.gradient(img)
    return gx, gy


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    kern = np.exp(-0.5 * (k / sigma) ** 2)
    return kern / kern.sum()


# above this many taps an FFT along the axis beats direct correlation
_FFT_TAPS = 41


def _smooth_axis(arr: np.ndarray, kern: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kern) // 2
    if len(kern) <= _FFT_TAPS or radius >= arr.shape[axis]:
        return ndimage.correlate1d(arr, kern, axis=axis, mode="reflect")
    # ndimage "reflect" is numpy "symmetric"; the kernel is even so
    # convolution and correlation agree
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    shape = [1] * arr.ndim
    shape[axis] = len(kern)
    return signal.fftconvolve(np.pad(arr, pad, mode="symmetric"), kern.reshape(shape), mode="valid", axes=axis)


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable normalised Gaussian, radius ceil(3 sigma), reflective border."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    img = as_image(img)
    if sigma == 0:
        return img.copy()
    kern = gaussian_kernel(sigma)
    return _smooth_axis(_smooth_axis(img, kern, 0), kern, 1)


def blur_field(field: np.ndarray, sigma: float) -> np.ndarray:
    field = as_field(field)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return field.copy()
    kern = gaussian_kernel(sigma)
    return _smooth_axis(_smooth_axis(field, kern, 0), kern, 1)


def extract_slice(vol: np.ndarray, k: int) -> np.ndarray:
    vol = np.asarray(vol, dtype=np.float64)
    if vol.ndim != 3:
        raise ValueError(f"volume must be 3-D, got shape {vol.shape}")
    if not 0 <= k < vol.shape[0]:
        raise IndexError(f"slice index {k} out of range [0, {vol.shape[0]})")
    return vol[k].copy()


def window_level(img: np.ndarray, window_center: float, window_width: float) -> np.ndarray:
    """Map ``[c - w/2, c + w/2]`` linearly onto ``[0, 1]`` and clamp.

    Works on images and volumes alike.
    """
    if window_width <= 0:
        raise ValueError("window_width must be positive")
    a = np.asarray(img, dtype=np.float64)
    lo = window_center - window_width / 2.0
    return np.clip((a - lo) / window_width, 0.0, 1.0)


def field_magnitude(field: np.ndarray) -> np.ndarray:
    return np.hypot(field[..., 0], field[..., 1])


def jacobian_determinant(field: np.ndarray) -> np.ndarray:
    """Determinant of ``I + grad(field)`` per pixel."""
    dvx_dy, dvx_dx = np.gradient(field[..., 0])
    dvy_dy, dvy_dx = np.gradient(field[..., 1])
    return (1.0 + dvx_dx) * (1.0 + dvy_dy) - dvx_dy * dvy_dx
