"""Demons non-rigid registration with MI-force or intensity velocities.

Each iteration warps the moving image with the current field, computes a
velocity between the fixed image and the warped moving image, smooths it
with a Gaussian, scales it so no pixel moves a full pixel, and adds it to
the field.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import as_image, blur_field, check_same_shape, field_magnitude, gradient_xy, warp_region, zero_field
from .infometrics import MIForceParams, mi_force_field

log = logging.getLogger(__name__)


@dataclass
class DemonsParams:
    sigma: float = 2.0
    max_iter: int = 200
    h: float = 1.0
    force: str = "mi"
    mi_params: MIForceParams = field(default_factory=MIForceParams)
    converge_tol: float = 1e-3
    alpha_cap: float = 0.99
    mi_gain: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.alpha_cap < 1:
            raise ValueError("alpha_cap must lie in (0, 1)")
        if self.force not in ("mi", "intensity"):
            raise ValueError(f"unknown force {self.force!r}; expected 'mi' or 'intensity'")
        if self.h < 0:
            raise ValueError("h must be >= 0")


@dataclass
class DemonsResult:
    field: np.ndarray
    iterations: int
    converged: bool
    max_step: list[float]  # max |alpha v_k| per iteration
    mean_step: list[float]  # in-mask mean |alpha v_k| per iteration


def intensity_velocity(a, b_warped, params: DemonsParams | None = None) -> np.ndarray:
    """Classic demons velocity ``(i_a - i_b) grad(i_b) / (|grad i_b|^2 + h (i_a - i_b)^2)``."""
    h = (params or DemonsParams()).h
    a = as_image(a, "a")
    b = as_image(b_warped, "b_warped")
    check_same_shape(a, b, "a and b_warped")
    gx, gy = gradient_xy(b)
    diff = a - b
    denom = gx * gx + gy * gy + h * diff * diff
    ok = denom >= 1e-12
    scale = np.zeros_like(diff)
    scale[ok] = diff[ok] / denom[ok]
    return np.stack([scale * gx, scale * gy], axis=-1)


def mi_velocity(a, b_warped, params: DemonsParams, mask=None) -> np.ndarray:
    # the window force is oriented toward the better-matching neighbour of the
    # target window; under pull-back warping the field moves the opposite way
    return -params.mi_gain * mi_force_field(a, b_warped, params.mi_params, mask)


def compute_alpha(v, cap: float = 0.99) -> float:
    """``min(1, cap / max |v|)``; 1 for an all-zero field."""
    vmax = float(field_magnitude(np.asarray(v)).max()) if np.size(v) else 0.0
    if vmax <= 0:
        return 1.0
    return min(1.0, cap / vmax)


def _work_region(shape, mask, params: DemonsParams) -> tuple[slice, slice]:
    """Bounding box of the mask grown far enough that cropping changes nothing.

    Velocities vanish outside the mask, so the smoothed update is confined
    to the box grown by the blur radius; the MI windows and the gradient
    stencil need a little more.
    """
    h, w = shape
    if mask is None:
        return slice(0, h), slice(0, w)
    margin = max(int(math.ceil(3.0 * params.sigma)), params.mi_params.window_n // 2 + 1) + 2
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return (
        slice(max(0, rows[0] - margin), min(h, rows[-1] + 1 + margin)),
        slice(max(0, cols[0] - margin), min(w, cols[-1] + 1 + margin)),
    )


def run_demons(
    fixed,
    moving,
    mask=None,
    params: DemonsParams | None = None,
    init_field: np.ndarray | None = None,
    callback: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
) -> DemonsResult:
    """Register ``moving`` onto ``fixed``; the returned field pulls moving back.

    ``callback(k, increment, field)`` is invoked after each update with the
    applied increment ``alpha * v_k``.
    """
    params = params or DemonsParams()
    fixed = as_image(fixed, "fixed")
    moving = as_image(moving, "moving")
    check_same_shape(fixed, moving, "fixed and moving")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        check_same_shape(fixed, mask, "images and mask")
        if not mask.any():
            raise ValueError("empty mask")
    if params.force == "mi":
        ref = fixed[mask] if mask is not None else fixed
        if np.ptp(ref) == 0:
            raise ValueError("fixed image is constant: mutual-information force is degenerate")

    T = zero_field(fixed.shape) if init_field is None else np.array(init_field, dtype=np.float64)
    check_same_shape(fixed, T, "images and initial field")
    rs, cs = _work_region(fixed.shape, mask, params)
    fixed_w = fixed[rs, cs]
    mask_w = None if mask is None else mask[rs, cs]
    max_steps, mean_steps = [], []
    converged = False
    k = 0
    while k < params.max_iter:
        warped = warp_region(moving, T[rs, cs], rs.start, cs.start)
        if params.force == "mi":
            v = mi_velocity(fixed_w, warped, params, mask_w)
        else:
            v = intensity_velocity(fixed_w, warped, params)
            if mask_w is not None:
                v[~mask_w] = 0.0
        v = blur_field(v, params.sigma)
        alpha = compute_alpha(v, params.alpha_cap)
        inc = alpha * v
        T[rs, cs] += inc
        k += 1
        mag = field_magnitude(inc)
        max_steps.append(float(mag.max()))
        mean_steps.append(float(mag[mask_w].mean() if mask_w is not None else mag.mean()))
        if callback is not None:
            full = np.zeros_like(T)
            full[rs, cs] = inc
            callback(k, full, T)
        if mean_steps[-1] < params.converge_tol:
            converged = True
            break
    log.debug("demons: %d iterations, converged=%s", k, converged)
    return DemonsResult(T, k, converged, max_steps, mean_steps)


def demons_register(fixed, moving, mask=None, params: DemonsParams | None = None) -> np.ndarray:
    """Deformation field only; see :func:`run_demons` for the iteration record."""
    return run_demons(fixed, moving, mask, params).field
