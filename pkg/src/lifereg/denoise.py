"""Denoising front-ends: Gaussian baseline and a block-matching collaborative filter.

The collaborative filter is the hard-thresholding stage of BM3D (and of
BM4D for volumes) in simplified form: for every reference patch on a
stride-4 lattice, similar patches nearby are stacked into a group, the
group is transformed with an orthonormal DCT per patch and a Haar transform
across the stack, small coefficients are zeroed, and the inverse estimates
are averaged back with weights ``1 / (retained coefficients)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .grid import as_image, gaussian_blur

REF_STRIDE = 4


@dataclass(frozen=True)
class DenoiseParams:
    block_size: int = 8
    search_radius: int = 12
    max_group: int = 16
    match_threshold: float = 0.02
    noise_sigma: float = 0.05
    hard_threshold: float | None = None  # defaults to 2.7 * noise_sigma

    def __post_init__(self):
        b = self.block_size
        if b < 4 or b & (b - 1):
            raise ValueError("block_size must be a power of two >= 4")
        if self.max_group < 1:
            raise ValueError("max_group must be >= 1")
        if self.search_radius < 0 or self.match_threshold < 0 or self.noise_sigma < 0:
            raise ValueError("search_radius, match_threshold and noise_sigma must be >= 0")
        if self.hard_threshold is not None and self.hard_threshold < 0:
            raise ValueError("hard_threshold must be >= 0")

    @property
    def threshold(self) -> float:
        return 2.7 * self.noise_sigma if self.hard_threshold is None else self.hard_threshold


def denoise_gaussian(img, sigma: float) -> np.ndarray:
    return gaussian_blur(img, sigma)


@numba.njit(cache=True)
def _dct_matrix(n):
    c = np.empty((n, n))
    for k in range(n):
        a = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        for i in range(n):
            c[k, i] = a * math.cos(math.pi * (2 * i + 1) * k / (2.0 * n))
    return c


@numba.njit(cache=True)
def _positions(limit, stride):
    # 0, stride, ..., always ending at limit so the border is covered
    n = limit // stride + 1
    if (n - 1) * stride != limit:
        n += 1
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = min(i * stride, limit)
    return out


@numba.njit(cache=True)
def _haar_forward(g, n):
    # orthonormal Haar along axis 0 of the first n entries, in place
    tmp = np.empty_like(g[:n])
    length = n
    s = 1.0 / math.sqrt(2.0)
    while length > 1:
        half = length // 2
        for i in range(half):
            tmp[i] = (g[2 * i] + g[2 * i + 1]) * s
            tmp[half + i] = (g[2 * i] - g[2 * i + 1]) * s
        g[:length] = tmp[:length]
        length = half


@numba.njit(cache=True)
def _haar_inverse(g, n):
    tmp = np.empty_like(g[:n])
    length = 2
    s = 1.0 / math.sqrt(2.0)
    while length <= n:
        half = length // 2
        for i in range(half):
            tmp[2 * i] = (g[i] + g[half + i]) * s
            tmp[2 * i + 1] = (g[i] - g[half + i]) * s
        g[:length] = tmp[:length]
        length *= 2


@numba.njit(cache=True)
def _transform(block, out, tmp, m, mz):
    # separable transform over (z, y, x) of one patch: out_k = sum_i m[k, i] x_i
    pd, bs, _ = block.shape
    for z in range(pd):
        for y in range(bs):
            for k in range(bs):
                acc = 0.0
                for i in range(bs):
                    acc += m[k, i] * block[z, y, i]
                tmp[z, y, k] = acc
        for x in range(bs):
            for k in range(bs):
                acc = 0.0
                for i in range(bs):
                    acc += m[k, i] * tmp[z, i, x]
                out[z, k, x] = acc
    if pd > 1:
        for y in range(bs):
            for x in range(bs):
                for k in range(pd):
                    acc = 0.0
                    for i in range(pd):
                        acc += mz[k, i] * out[i, y, x]
                    tmp[k, y, x] = acc
        out[:] = tmp


@numba.njit(cache=True)
def _match(vol, pd, bs, zs, ys, xs, sr, srz, max_group, limit):
    """Best ``max_group`` matches per reference block, sorted by distance.

    Candidates are visited offset by offset in (z, y, x) order and inserted
    stably, so ties keep scan order. The reference block itself is stored
    with distance -1 and therefore always leads its group.
    """
    d, h, w = vol.shape
    nz, ny, nx = zs.size, ys.size, xs.size
    best_d = np.full((nz, ny, nx, max_group), np.inf)
    best_p = np.zeros((nz, ny, nx, max_group, 3), dtype=np.int64)
    count = np.zeros((nz, ny, nx), dtype=np.int64)
    colsum = np.empty(w)
    for oz in range(-srz, srz + 1):
        for oy in range(-sr, sr + 1):
            for ox in range(-sr, sr + 1):
                x_lo = max(0, -ox)
                x_hi = min(w, w - ox)
                for a in range(nz):
                    rz = zs[a]
                    cz = rz + oz
                    if cz < 0 or cz > d - pd:
                        continue
                    for b in range(ny):
                        ry = ys[b]
                        cy = ry + oy
                        if cy < 0 or cy > h - bs:
                            continue
                        cs = colsum[x_lo:x_hi]
                        cs[:] = 0.0
                        for k in range(pd):
                            for i in range(bs):
                                ra = vol[rz + k, ry + i, x_lo:x_hi]
                                ca = vol[cz + k, cy + i, x_lo + ox:x_hi + ox]
                                for t in range(x_hi - x_lo):
                                    diff = ra[t] - ca[t]
                                    cs[t] += diff * diff
                        for c in range(nx):
                            rx = xs[c]
                            cx = rx + ox
                            if cx < 0 or cx > w - bs:
                                continue
                            if oz == 0 and oy == 0 and ox == 0:
                                dist = -1.0
                            else:
                                dist = 0.0
                                for j in range(bs):
                                    dist += colsum[rx + j]
                                if dist > limit:
                                    continue
                            n = count[a, b, c]
                            pos = n
                            while pos > 0 and best_d[a, b, c, pos - 1] > dist:
                                pos -= 1
                            if pos >= max_group:
                                continue
                            last = min(n, max_group - 1)
                            for q in range(last, pos, -1):
                                best_d[a, b, c, q] = best_d[a, b, c, q - 1]
                                best_p[a, b, c, q, 0] = best_p[a, b, c, q - 1, 0]
                                best_p[a, b, c, q, 1] = best_p[a, b, c, q - 1, 1]
                                best_p[a, b, c, q, 2] = best_p[a, b, c, q - 1, 2]
                            best_d[a, b, c, pos] = dist
                            best_p[a, b, c, pos, 0] = cz
                            best_p[a, b, c, pos, 1] = cy
                            best_p[a, b, c, pos, 2] = cx
                            if n < max_group:
                                count[a, b, c] = n + 1
    return best_p, count


@numba.njit(cache=True)
def _bm_filter(vol, pd, bs, stride, sr, srz, max_group, tau_match, thr):
    d, h, w = vol.shape
    zs = _positions(d - pd, stride)
    ys = _positions(h - bs, stride)
    xs = _positions(w - bs, stride)
    best_p, count = _match(vol, pd, bs, zs, ys, xs, sr, srz, max_group, tau_match * pd * bs * bs)
    num = np.zeros_like(vol)
    den = np.zeros_like(vol)
    c = _dct_matrix(bs)
    cz = _dct_matrix(pd)
    ct = np.ascontiguousarray(c.T)
    czt = np.ascontiguousarray(cz.T)
    group = np.empty((max_group, pd, bs, bs))
    patch = np.empty((pd, bs, bs))
    est = np.empty((pd, bs, bs))
    tmp = np.empty((pd, bs, bs))
    for a in range(zs.size):
        for b in range(ys.size):
            for cc in range(xs.size):
                m = count[a, b, cc]
                n = 1
                while n * 2 <= m:
                    n *= 2
                for g in range(n):
                    z0 = best_p[a, b, cc, g, 0]
                    y0 = best_p[a, b, cc, g, 1]
                    x0 = best_p[a, b, cc, g, 2]
                    for k in range(pd):
                        for i in range(bs):
                            for j in range(bs):
                                patch[k, i, j] = vol[z0 + k, y0 + i, x0 + j]
                    _transform(patch, group[g], tmp, c, cz)
                _haar_forward(group, n)
                kept = 0
                for g in range(n):
                    for k in range(pd):
                        for i in range(bs):
                            for j in range(bs):
                                if g == 0 and k == 0 and i == 0 and j == 0:
                                    kept += 1  # group mean is never removed
                                elif abs(group[g, k, i, j]) < thr:
                                    group[g, k, i, j] = 0.0
                                else:
                                    kept += 1
                _haar_inverse(group, n)
                wgt = 1.0 / kept
                for g in range(n):
                    z0 = best_p[a, b, cc, g, 0]
                    y0 = best_p[a, b, cc, g, 1]
                    x0 = best_p[a, b, cc, g, 2]
                    _transform(group[g], est, tmp, ct, czt)
                    for k in range(pd):
                        for i in range(bs):
                            for j in range(bs):
                                num[z0 + k, y0 + i, x0 + j] += wgt * est[k, i, j]
                                den[z0 + k, y0 + i, x0 + j] += wgt
    return num / den


def _run(vol: np.ndarray, pd: int, srz: int, params: DenoiseParams) -> np.ndarray:
    return _bm_filter(
        np.ascontiguousarray(vol, dtype=np.float64),
        pd,
        params.block_size,
        REF_STRIDE,
        params.search_radius,
        srz,
        params.max_group,
        params.match_threshold,
        params.threshold,
    )


def denoise_bm_2d(img, params: DenoiseParams | None = None) -> np.ndarray:
    params = params or DenoiseParams()
    img = as_image(img)
    b = params.block_size
    if img.shape[0] < b or img.shape[1] < b:
        raise ValueError(f"image {img.shape} is smaller than one {b}x{b} block")
    return _run(img[None], 1, 0, params)[0]


def denoise_bm_3d(vol, params: DenoiseParams | None = None) -> np.ndarray:
    """Cubes of ``block x block x min(block, depth)`` voxels, searched in-plane and across slices."""
    params = params or DenoiseParams()
    vol = np.asarray(vol, dtype=np.float64)
    if vol.ndim != 3:
        raise ValueError("denoise_bm_3d expects a (depth, h, w) volume")
    b = params.block_size
    d, h, w = vol.shape
    if h < b or w < b or d < 1:
        raise ValueError(f"volume {vol.shape} is smaller than one {b}x{b} block")
    if not np.all(np.isfinite(vol)):
        raise ValueError("volume contains non-finite values")
    pd = min(b, d)
    return _run(vol, pd, min(params.search_radius, d - pd), params)
