"""End-to-end US-to-CT registration.

Stages, in order: CT windowing, volume denoising (skippable when the volume
was denoised ahead of time), US denoising, affine slice extraction, radial
LIFE edge enhancement, liver masking, translation pre-alignment, MI Demons,
outside-mask field smoothing and US resampling.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .demons import DemonsParams, run_demons
from .denoise import DenoiseParams, denoise_bm_2d, denoise_bm_3d, denoise_gaussian
from .grid import (
    SectorGeometry,
    as_field,
    as_image,
    blur_field,
    check_same_shape,
    sample_field,
    warp,
    window_level,
    zero_field,
)
from .infometrics import MIForceParams, nmi_images
from .life import LifeParams, enhance_slice, extract_edges
from .rigid import AffineTransform3D, RigidSearchParams, align_translation_2d, register_affine_full, resample_volume_slice

log = logging.getLogger(__name__)

STAGES = (
    "window",
    "denoise_volume",
    "denoise_us",
    "extract_slice",
    "enhance",
    "mask",
    "translate",
    "demons",
    "blend_field",
    "resample",
)


def _pipeline_demons() -> DemonsParams:
    # the raw window force is tiny (|F| <= ln(n^2)/n^2), so the pipeline
    # scales it up and smooths more than the single-image default
    return DemonsParams(sigma=16.0, max_iter=50, force="mi", mi_gain=1300.0, mi_params=MIForceParams(window_n=15, bins=16))


@dataclass
class PipelineConfig:
    half_window: int = 15
    window_center: float = 0.5
    window_width: float = 1.0
    denoise_method: str = "bm"  # bm | gaussian | none
    denoise: DenoiseParams = field(default_factory=DenoiseParams)
    gaussian_sigma: float = 1.0
    pre_denoised: bool = False
    # LIFE values are entropy sums of up to n^2, far above the [0, 1] image
    # range, so the pipeline adds them with a small gain
    life: LifeParams = field(default_factory=lambda: LifeParams(enhancement_gain=0.02))
    geom: SectorGeometry | None = None  # None: default sector for the image size
    rigid: RigidSearchParams = field(default_factory=RigidSearchParams)
    max_shift: int = 10
    translation_bins: int = 32
    demons: DemonsParams = field(default_factory=_pipeline_demons)
    demons_mask_margin: int = 10  # force region = liver mask grown by this many pixels
    outside_mask_sigma: float = 6.0
    nmi_bins: int = 32
    # keep the Demons field only if it raises NMI against the extracted slice;
    # otherwise fall back to the translation alone or to no motion
    similarity_guard: bool = True

    def __post_init__(self):
        if self.half_window < 1:
            raise ValueError("half_window must be >= 1")
        if self.window_width <= 0:
            raise ValueError("window_width must be > 0")
        if self.denoise_method not in ("bm", "gaussian", "none"):
            raise ValueError(f"unknown denoise method {self.denoise_method!r}")
        if self.max_shift < 0:
            raise ValueError("max_shift must be >= 0")
        if self.demons_mask_margin < 0:
            raise ValueError("demons_mask_margin must be >= 0")
        if self.outside_mask_sigma < 0:
            raise ValueError("outside_mask_sigma must be >= 0")


@dataclass
class RegistrationReport:
    nmi_before: float = float("nan")
    nmi_after: float = float("nan")
    landmark_mean_before: float | None = None
    landmark_max_before: float | None = None
    landmark_mean_after: float | None = None
    landmark_max_after: float | None = None
    iterations: int = 0
    converged: bool = False
    translation: tuple[int, int] = (0, 0)
    accepted: str = "demons"  # demons | translation | identity
    slice_index: int = 0
    affine: AffineTransform3D | None = None
    stages: list[str] = field(default_factory=list)
    wall_times: dict[str, float] = field(default_factory=dict)

    @property
    def total_time(self) -> float:
        return float(sum(self.wall_times.values()))

    def to_text(self, include_times: bool = True) -> str:
        """Line-oriented ``key=value`` rendering; ``include_times=False`` drops the wall-clock lines."""
        lines = [
            f"nmi_before={self.nmi_before:.10g}",
            f"nmi_after={self.nmi_after:.10g}",
        ]
        for key in ("landmark_mean_before", "landmark_max_before", "landmark_mean_after", "landmark_max_after"):
            val = getattr(self, key)
            if val is not None:
                lines.append(f"{key}={val:.10g}")
        lines += [
            f"iterations={self.iterations}",
            f"converged={str(self.converged).lower()}",
            f"translation={self.translation[0]},{self.translation[1]}",
            f"accepted={self.accepted}",
            f"slice_index={self.slice_index}",
        ]
        if self.affine is not None:
            lines.append("affine=" + self.affine.to_text())
        lines.append("stages=" + ",".join(self.stages))
        if not include_times:
            return "\n".join(lines) + "\n"
        for name, secs in self.wall_times.items():
            lines.append(f"time.{name}={secs:.4f}")
        lines.append(f"time.total={self.total_time:.4f}")
        return "\n".join(lines) + "\n"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


def landmark_error(points_fixed, points_moving, fld) -> tuple[float, float]:
    """Mean and max of ``|p_m + field(p_m) - p_f|`` with bilinear field lookup."""
    pf = np.asarray(points_fixed, dtype=np.float64).reshape(-1, 2)
    pm = np.asarray(points_moving, dtype=np.float64).reshape(-1, 2)
    if pf.shape != pm.shape:
        raise ValueError(f"landmark lists differ in length: {len(pf)} vs {len(pm)}")
    if len(pf) == 0:
        raise ValueError("no landmarks")
    fld = as_field(fld)
    err = np.linalg.norm(pm + sample_field(fld, pm[:, 0], pm[:, 1]) - pf, axis=1)
    return float(err.mean()), float(err.max())


def pullback_preimage(fld, points, iterations: int = 50) -> np.ndarray:
    """Points ``q`` with ``q + field(q) = p``: where US points land on the fixed grid.

    Fixed-point iteration ``q <- p - field(q)``, evaluated only at the given
    points instead of inverting the whole field.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    q = p.copy()
    for _ in range(iterations):
        q = p - sample_field(fld, q[:, 0], q[:, 1])
    return q


def _volume_landmark_error(points_fixed, points_moving, fld, T: AffineTransform3D, k: int):
    # US point -> extracted-slice point (inverse of the pull-back field) ->
    # volume point (affine); compared in-plane with the CT landmark
    pf = np.asarray(points_fixed, dtype=np.float64).reshape(-1, 2)
    q = pullback_preimage(fld, points_moving)
    pts = np.column_stack([q, np.full(len(q), float(k))])
    mapped = pts @ T.q.T + T.t
    err = np.linalg.norm(mapped[:, :2] - pf, axis=1)
    return float(err.mean()), float(err.max())


def blend_field_outside_mask(fld, mask, sigma: float) -> np.ndarray:
    """Keep the field inside ``mask``; outside it, use the Gaussian-blurred field.

    The blurred field is computed from the full field, so at the boundary it
    averages inside and outside values and the jump across the mask edge
    never exceeds the jump of the unblended field.
    """
    fld = as_field(fld)
    mask = np.asarray(mask, dtype=bool)
    check_same_shape(fld, mask, "field and mask")
    if mask.all() or sigma == 0:
        return fld.copy()
    smooth = blur_field(fld, sigma)
    return np.where(mask[..., None], fld, smooth)


def _best_candidate(slc, us, region, candidates, bins):
    # first entry wins ties, so the Demons field is kept unless it loses NMI
    best = None
    for name, fld in candidates:
        warped = warp(us, fld)
        score = nmi_images(slc, warped, bins, region)
        if best is None or score > best[3]:
            best = (name, fld, warped, score)
    return best


def _denoise_image(img: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    if cfg.denoise_method == "bm":
        return denoise_bm_2d(img, cfg.denoise)
    if cfg.denoise_method == "gaussian":
        return denoise_gaussian(img, cfg.gaussian_sigma)
    return img.copy()


def _denoise_volume(vol: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    if cfg.denoise_method == "bm":
        return denoise_bm_3d(vol, cfg.denoise)
    if cfg.denoise_method == "gaussian":
        return np.stack([denoise_gaussian(s, cfg.gaussian_sigma) for s in vol])
    return vol.copy()


@dataclass
class PipelineResult:
    warped_us: np.ndarray
    field: np.ndarray
    slice: np.ndarray
    enhanced: np.ndarray
    report: RegistrationReport

    def __iter__(self):
        # allows ``warped, fld, slc, report = run_pipeline(...)``
        return iter((self.warped_us, self.field, self.slice, self.report))


def run_pipeline(vol, us, liver_mask, cfg: PipelineConfig | None = None, landmarks=None, center_slice: int | None = None) -> PipelineResult:
    """Register the US image to the CT volume.

    ``landmarks`` is an optional ``(points_fixed, points_moving)`` pair in
    CT-slice and US coordinates. ``center_slice`` defaults to the middle of
    the volume; a sub-volume of ``2 * half_window + 1`` slices around it is
    used (clipped to the volume).
    """
    cfg = cfg or PipelineConfig()
    vol = np.asarray(vol, dtype=np.float64)
    us = as_image(us, "us")
    mask = np.asarray(liver_mask, dtype=bool)
    if vol.ndim != 3:
        raise ValueError("volume must be (depth, h, w)")
    if us.shape != vol.shape[1:]:
        raise ValueError(f"US image {us.shape} does not match slice shape {vol.shape[1:]}")
    check_same_shape(us, mask, "US image and mask")
    h, w = us.shape
    geom = cfg.geom or SectorGeometry.default_for(w, h)
    report = RegistrationReport()
    state: dict = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as exc:
            raise PipelineError(name, exc) from exc
        report.wall_times[name] = time.perf_counter() - t0
        report.stages.append(name)
        log.info("%-15s %.3f s", name, report.wall_times[name])
        return out

    d = vol.shape[0]
    c = d // 2 if center_slice is None else int(center_slice)
    if not 0 <= c < d:
        raise IndexError(f"center slice {c} out of range [0, {d})")
    lo, hi = max(0, c - cfg.half_window), min(d, c + cfg.half_window + 1)

    state["vol"] = stage("window", lambda: window_level(vol[lo:hi], cfg.window_center, cfg.window_width))
    state["vol"] = stage("denoise_volume", lambda: state["vol"] if cfg.pre_denoised else _denoise_volume(state["vol"], cfg))
    us_d = stage("denoise_us", lambda: _denoise_image(us, cfg))

    def extract():
        res = register_affine_full(state["vol"], us_d, c - lo, cfg.rigid)
        return res, resample_volume_slice(state["vol"], res.transform, c - lo)

    rigid_res, slc = stage("extract_slice", extract)
    report.affine = rigid_res.transform
    report.slice_index = c

    def enhance():
        edges = extract_edges(slc, geom, cfg.life)
        return enhance_slice(slc, edges, cfg.life.enhancement_gain)

    enhanced = stage("enhance", enhance)

    def apply_mask():
        if not mask.any():
            raise ValueError("liver mask is empty")
        # both images are restricted to the same region; the pixels are kept
        # so that no artificial mask boundary enters the similarity terms
        return mask

    region = stage("mask", apply_mask)

    def translate():
        dx, dy = align_translation_2d(enhanced, us_d, region, cfg.max_shift, cfg.translation_bins, max_samples=65536)
        shift = zero_field((h, w))
        shift[..., 0] = dx
        shift[..., 1] = dy
        return (dx, dy), shift

    report.translation, shift = stage("translate", translate)

    def register():
        moved = warp(us_d, shift)
        grown = region
        if cfg.demons_mask_margin > 0:
            # boundary features of the US liver can sit outside the CT mask
            grown = ndimage.binary_dilation(region, iterations=cfg.demons_mask_margin)
        return run_demons(enhanced, moved, grown, cfg.demons)

    dres = stage("demons", register)
    report.iterations = dres.iterations
    report.converged = dres.converged
    fld = stage("blend_field", lambda: blend_field_outside_mask(dres.field + shift, region, cfg.outside_mask_sigma))

    def resample():
        candidates = [("demons", fld)]
        if cfg.similarity_guard:
            candidates += [("translation", shift), ("identity", zero_field((h, w)))]
        return _best_candidate(slc, us_d, region, candidates, cfg.nmi_bins)

    report.accepted, fld, warped, report.nmi_after = stage("resample", resample)
    report.nmi_before = nmi_images(slc, us_d, cfg.nmi_bins, region)
    if landmarks is not None:
        pf, pm = landmarks
        # the registration field pulls US intensities back onto the CT grid;
        # its inverse carries US landmarks forward onto CT positions
        report.landmark_mean_before, report.landmark_max_before = landmark_error(pf, pm, zero_field((h, w)))
        report.landmark_mean_after, report.landmark_max_after = _volume_landmark_error(
            pf, pm, fld, rigid_res.transform, c - lo
        )
    log.info("pipeline: NMI %.4f -> %.4f, %d demons iterations", report.nmi_before, report.nmi_after, report.iterations)
    return PipelineResult(warped, fld, slc, enhanced, report)
