"""Histogram entropies, mutual information, NMI and the local MI force."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .grid import as_image, check_same_shape


@dataclass
class JointHistogram:
    joint: np.ndarray  # (bins, bins), rows index image a
    marginal_a: np.ndarray
    marginal_b: np.ndarray
    sample_count: int

    @property
    def bins(self) -> int:
        return self.joint.shape[0]

    @classmethod
    def from_joint(cls, joint: np.ndarray, sample_count: int = 0) -> "JointHistogram":
        joint = np.asarray(joint, dtype=np.float64)
        return cls(joint, joint.sum(axis=1), joint.sum(axis=0), sample_count)


@dataclass(frozen=True)
class MIForceParams:
    window_n: int = 9
    bins: int = 32
    epsilon: float = 1e-9

    def __post_init__(self):
        if self.window_n < 3 or self.window_n % 2 == 0:
            raise ValueError("window_n must be odd and >= 3")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def bin_index(img: np.ndarray, bins: int) -> np.ndarray:
    """Uniform bins on [0, 1]; the last bin is closed, values are clipped first."""
    idx = np.floor(np.clip(img, 0.0, 1.0) * bins).astype(np.intp)
    return np.minimum(idx, bins - 1)


def joint_histogram(a, b, bins: int = 64, mask=None) -> JointHistogram:
    a = as_image(a, "a")
    b = as_image(b, "b")
    check_same_shape(a, b, "a and b")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    ia = bin_index(a, bins)
    ib = bin_index(b, bins)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        check_same_shape(a, mask, "images and mask")
        ia = ia[mask]
        ib = ib[mask]
    else:
        ia = ia.ravel()
        ib = ib.ravel()
    count = ia.size
    if count == 0:
        raise ValueError("empty mask: no samples for the joint histogram")
    counts = np.bincount(ia * bins + ib, minlength=bins * bins).reshape(bins, bins)
    return JointHistogram.from_joint(counts / count, count)


def entropy(p) -> float:
    """Shannon entropy in bits, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64).ravel()
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def mutual_information(h: JointHistogram) -> float:
    """Mutual information in bits."""
    outer = np.outer(h.marginal_a, h.marginal_b)
    nz = h.joint > 0
    return float(np.sum(h.joint[nz] * np.log2(h.joint[nz] / outer[nz])))


def entropies(h: JointHistogram) -> tuple[float, float, float]:
    """``(H(A), H(B), H(A, B))`` in bits."""
    return entropy(h.marginal_a), entropy(h.marginal_b), entropy(h.joint)


def nmi(h: JointHistogram) -> float:
    ha, hb, hab = entropies(h)
    if hab <= 0:
        raise ValueError("degenerate joint histogram: H(A, B) = 0 (both images constant)")
    return (ha + hb) / hab


def nmi_images(a, b, bins: int = 64, mask=None) -> float:
    return nmi(joint_histogram(a, b, bins, mask))


@numba.njit(cache=True)
def _window_match_counts(lab, nlab, half, y0, y1, lo, hi, out):
    # out[y, x] = #{q in window(y, x) : lab(q) == lab(y, x)} for rows
    # y0..y1-1 and columns lo[y]..hi[y]-1
    hist = np.zeros(nlab, dtype=np.int32)
    for y in range(y0, y1):
        x0 = lo[y]
        x1 = hi[y]
        if x1 <= x0:
            continue
        for yy in range(y - half, y + half + 1):
            for xx in range(x0 - half, x0 + half + 1):
                hist[lab[yy, xx]] += 1
        for x in range(x0, x1):
            out[y, x] = hist[lab[y, x]]
            if x + 1 < x1:
                xo = x - half
                xn = x + half + 1
                for yy in range(y - half, y + half + 1):
                    hist[lab[yy, xo]] -= 1
                    hist[lab[yy, xn]] += 1
        xl = x1 - 1
        for yy in range(y - half, y + half + 1):
            for xx in range(xl - half, xl + half + 1):
                hist[lab[yy, xx]] -= 1


@numba.njit(cache=True)
def _pair_labels(la, lb, dx, dy, bins):
    # lab[y, x] = la[y, x] * bins + lb[y + dy, x + dx], 0 where the shift leaves the image
    h, w = la.shape
    lab = np.zeros((h, w), dtype=np.int32)
    for y in range(max(0, -dy), min(h, h - dy)):
        for x in range(max(0, -dx), min(w, w - dx)):
            lab[y, x] = la[y, x] * bins + lb[y + dy, x + dx]
    return lab


@numba.njit(cache=True)
def _mi_force_kernel(la, lb, bins, half, eps, y0, y1, lo, hi):
    h, w = la.shape
    nn = float((2 * half + 1) ** 2)
    force = np.zeros((h, w, 2))
    # marginal counts are read one pixel away from each output pixel
    mlo = np.full(h, w, dtype=np.int64)
    mhi = np.zeros(h, dtype=np.int64)
    for y in range(y0, y1):
        if hi[y] > lo[y]:
            for yy in range(y - 1, y + 2):
                mlo[yy] = min(mlo[yy], lo[y] - 1)
                mhi[yy] = max(mhi[yy], hi[y] + 1)
    marg = np.zeros((h, w), dtype=np.int32)
    _window_match_counts(lb, bins, half, y0 - 1, y1 + 1, mlo, mhi, marg)
    joint = np.zeros((h, w), dtype=np.int32)
    n2 = (2 * half + 1) ** 2
    log_p = np.empty(n2 + 1)
    for c in range(n2 + 1):
        log_p[c] = np.log(max(c / nn, eps))
    # (dx, dy, component, sign): r/t windows on the left/right, then up/down
    shifts = ((-1, 0, 0, 1.0), (1, 0, 0, -1.0), (0, -1, 1, 1.0), (0, 1, 1, -1.0))
    for s in shifts:
        dx, dy, comp, sign = s
        lab = _pair_labels(la, lb, dx, dy, bins)
        _window_match_counts(lab, bins * bins, half, y0, y1, lo, hi, joint)
        for y in range(y0, y1):
            for x in range(lo[y], hi[y]):
                lp = log_p[joint[y, x]] - log_p[marg[y + dy, x + dx]]
                force[y, x, comp] += sign * lp / nn
    return force


def mi_force_field(a, b, params: MIForceParams | None = None, mask=None) -> np.ndarray:
    """Local mutual-information force between target ``a`` and source ``b``.

    For each pixel, ``m`` is the ``n x n`` window of ``a`` centred on it and
    ``r``/``t`` are the windows of ``b`` one pixel to the left/right
    (up/down for the y component). Probabilities are window frequencies
    evaluated at the bin pair of the window centres, floored at epsilon:

        F_x = ln[(p_mr / P_r) / (p_mt / P_t)] / n^2

    Pixels whose shifted windows leave the image get zero force; ``mask``
    zeroes the force outside the region. Only the bounding box of the mask
    is evaluated.
    """
    params = params or MIForceParams()
    a = as_image(a, "a")
    b = as_image(b, "b")
    check_same_shape(a, b, "a and b")
    n = params.window_n
    half = n // 2
    hgt, wid = a.shape
    if n + 2 > hgt or n + 2 > wid:
        raise ValueError(f"window of {n}x{n} (plus one-pixel shift) does not fit in {a.shape}")
    # region where all four shifted windows fit
    y0, y1 = half + 1, hgt - half - 1
    x0, x1 = half + 1, wid - half - 1
    if y1 <= y0 or x1 <= x0:
        return np.zeros((hgt, wid, 2))
    lo = np.full(hgt, x0, dtype=np.int64)
    hi = np.full(hgt, x1, dtype=np.int64)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        check_same_shape(a, mask, "images and mask")
        # per row, only the span between the first and last mask pixel
        any_row = mask.any(axis=1)
        first = np.argmax(mask, axis=1)
        last = wid - np.argmax(mask[:, ::-1], axis=1)
        lo = np.where(any_row, np.maximum(first, x0), 0)
        hi = np.where(any_row, np.minimum(last, x1), 0)
    la = bin_index(a, params.bins).astype(np.int32)
    lb = bin_index(b, params.bins).astype(np.int32)
    force = _mi_force_kernel(la, lb, params.bins, half, params.epsilon, y0, y1, lo, hi)
    if mask is not None:
        force[~mask] = 0.0
    return force
