"""Line-oriented run configuration.

One ``section.key = value`` per line, ``#`` starts a comment. Every key
maps onto a field of a parameter dataclass; absent keys keep their
defaults. Example::

    global.seed = 7
    demons.sigma = 12      # field smoothing
    life.gain = 0.05
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace

from .grid import SectorGeometry
from .phantom import Deform, PhantomSpec, UsStyle, default_spec
from .pipeline import PipelineConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("none", "default", "") else float(text)


# key -> (target, attribute, converter)
_SCHEMA = {
    "global.seed": ("global", "seed", int),
    "pipeline.half_window": ("pipeline", "half_window", int),
    "pipeline.window_center": ("pipeline", "window_center", float),
    "pipeline.window_width": ("pipeline", "window_width", float),
    "pipeline.pre_denoised": ("pipeline", "pre_denoised", _bool),
    "pipeline.max_shift": ("pipeline", "max_shift", int),
    "pipeline.translation_bins": ("pipeline", "translation_bins", int),
    "pipeline.outside_mask_sigma": ("pipeline", "outside_mask_sigma", float),
    "pipeline.demons_mask_margin": ("pipeline", "demons_mask_margin", int),
    "pipeline.nmi_bins": ("pipeline", "nmi_bins", int),
    "pipeline.similarity_guard": ("pipeline", "similarity_guard", _bool),
    "denoise.method": ("pipeline", "denoise_method", str),
    "denoise.gaussian_sigma": ("pipeline", "gaussian_sigma", float),
    "denoise.block_size": ("denoise", "block_size", int),
    "denoise.search_radius": ("denoise", "search_radius", int),
    "denoise.max_group": ("denoise", "max_group", int),
    "denoise.match_threshold": ("denoise", "match_threshold", float),
    "denoise.noise_sigma": ("denoise", "noise_sigma", float),
    "denoise.hard_threshold": ("denoise", "hard_threshold", _opt_float),
    "life.lambda": ("life", "lam", int),
    "life.n": ("life", "neighborhood_n", int),
    "life.threshold": ("life", "soft_threshold", float),
    "life.gain": ("life", "enhancement_gain", float),
    "geom.apex_x": ("geom", "apex_x", float),
    "geom.apex_y": ("geom", "apex_y", float),
    "geom.inner_radius": ("geom", "inner_radius", float),
    "geom.outer_radius": ("geom", "outer_radius", float),
    "geom.half_angle": ("geom", "half_angle", float),
    "demons.sigma": ("demons", "sigma", float),
    "demons.max_iter": ("demons", "max_iter", int),
    "demons.h": ("demons", "h", float),
    "demons.force": ("demons", "force", str),
    "demons.converge_tol": ("demons", "converge_tol", float),
    "demons.alpha_cap": ("demons", "alpha_cap", float),
    "demons.mi_gain": ("demons", "mi_gain", float),
    "mi.window_n": ("mi", "window_n", int),
    "mi.bins": ("mi", "bins", int),
    "mi.epsilon": ("mi", "epsilon", float),
    "rigid.max_iter": ("rigid", "max_iter", int),
    "rigid.step0": ("rigid", "step0", float),
    "rigid.step_shrink": ("rigid", "step_shrink", float),
    "rigid.min_step": ("rigid", "min_step", float),
    "rigid.max_step": ("rigid", "max_step", float),
    "rigid.bins": ("rigid", "bins", int),
    "rigid.fd_delta": ("rigid", "fd_delta", float),
    "rigid.rel_tol": ("rigid", "rel_tol", float),
    "rigid.max_samples": ("rigid", "max_samples", int),
    "phantom.width": ("phantom", "width", int),
    "phantom.height": ("phantom", "height", int),
    "phantom.depth": ("phantom", "depth", int),
    "phantom.texture": ("phantom", "texture", float),
    "phantom.n_landmarks": ("phantom", "n_landmarks", int),
    "phantom.deform": ("deform", "kind", str),
    "phantom.amplitude": ("deform", "amplitude", float),
    "phantom.wavelength": ("deform", "wavelength", float),
    "phantom.bump_x": ("deform", "center_x", float),
    "phantom.bump_y": ("deform", "center_y", float),
    "phantom.bump_sigma": ("deform", "sigma", float),
    "phantom.speckle_sigma": ("us", "speckle_sigma", float),
    "phantom.boundary_gain": ("us", "boundary_gain", float),
    "phantom.shadow_angle": ("us", "shadow_angle", float),
    "phantom.shadow_width": ("us", "shadow_width", float),
}

KEYS = tuple(_SCHEMA)


@dataclass
class RunConfig:
    seed: int = 0
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    geom_overrides: dict = field(default_factory=dict)
    phantom: dict = field(default_factory=dict)

    def geometry(self, width: int, height: int) -> SectorGeometry:
        """Default sector for the image size with any ``geom.*`` keys applied."""
        base = SectorGeometry.default_for(width, height)
        return replace(base, **self.geom_overrides) if self.geom_overrides else base

    def pipeline_for(self, width: int, height: int) -> PipelineConfig:
        return replace(self.pipeline, geom=self.geometry(width, height))

    def phantom_spec(self) -> PhantomSpec:
        """Phantom description built from ``phantom.*`` keys and ``global.seed``."""
        p = dict(self.phantom)
        size = (p.pop("width", 256), p.pop("height", 256))
        deform_kw = {k[len("deform."):]: p.pop(k) for k in list(p) if k.startswith("deform.")}
        us_kw = {k[len("us."):]: p.pop(k) for k in list(p) if k.startswith("us.")}
        deform = None
        if deform_kw:
            cx = deform_kw.pop("center_x", size[0] / 2)
            cy = deform_kw.pop("center_y", size[1] / 2)
            deform = Deform(center=(cx, cy), **deform_kw)
        style = UsStyle()
        if us_kw:
            ang = us_kw.pop("shadow_angle", None)
            width = us_kw.pop("shadow_width", None)
            if ang is not None or width is not None:
                us_kw["shadow"] = (ang or 0.0, width or 0.1)
            style = replace(style, **us_kw)
        return default_spec(size, seed=self.seed, deform=deform, us_style=style, **p)


def _apply(cfg: RunConfig, target: str, attr: str, value) -> None:
    pc = cfg.pipeline
    if target == "global":
        cfg.seed = value
    elif target == "pipeline":
        cfg.pipeline = replace(pc, **{attr: value})
    elif target == "denoise":
        cfg.pipeline = replace(pc, denoise=replace(pc.denoise, **{attr: value}))
    elif target == "life":
        cfg.pipeline = replace(pc, life=replace(pc.life, **{attr: value}))
    elif target == "demons":
        cfg.pipeline = replace(pc, demons=replace(pc.demons, **{attr: value}))
    elif target == "mi":
        cfg.pipeline = replace(pc, demons=replace(pc.demons, mi_params=replace(pc.demons.mi_params, **{attr: value})))
    elif target == "rigid":
        cfg.pipeline = replace(pc, rigid=replace(pc.rigid, **{attr: value}))
    elif target == "geom":
        trial = dict(cfg.geom_overrides, **{attr: value})
        # validated against a reference size; re-checked when the real size is known
        replace(SectorGeometry.default_for(1024, 1024), **trial)
        cfg.geom_overrides = trial
    elif target == "phantom":
        if value < 1:
            raise ValueError("must be >= 1")
        cfg.phantom[attr] = value
    elif target == "deform":
        cfg.phantom["deform." + attr] = value
    elif target == "us":
        cfg.phantom["us." + attr] = value


def parse_config(text: str) -> RunConfig:
    """Parse ``section.key = value`` lines into a :class:`RunConfig`.

    Raises :class:`ConfigError` for syntax errors, unknown or repeated keys
    (with the line number) and for values outside a parameter's range
    (naming the key).
    """
    cfg = RunConfig()
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if "." not in key or not value:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in seen:
            raise ConfigError(f"line {lineno}: key '{key}' already set on line {seen[key]}")
        seen[key] = lineno
        target, attr, conv = _SCHEMA[key]
        try:
            converted = conv(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for '{key}': {exc}") from None
        try:
            _apply(cfg, target, attr, converted)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: '{key}' out of range: {exc}") from None
    if "deform.kind" in cfg.phantom or any(k.startswith("deform.") for k in cfg.phantom):
        try:
            cfg.phantom_spec()
        except ValueError as exc:
            raise ConfigError(f"phantom settings invalid: {exc}") from None
    return cfg


def read_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config` for the pipeline-related keys."""
    pc = cfg.pipeline
    objs = {
        "pipeline": pc,
        "denoise": pc.denoise,
        "life": pc.life,
        "demons": pc.demons,
        "mi": pc.demons.mi_params,
        "rigid": pc.rigid,
    }
    lines = [f"global.seed = {cfg.seed}"]
    for key, (target, attr, _) in _SCHEMA.items():
        obj = objs.get(target)
        if obj is None or attr not in {f.name for f in dataclasses.fields(obj)}:
            continue
        lines.append(f"{key} = {getattr(obj, attr)}")
    for attr, val in cfg.geom_overrides.items():
        lines.append(f"geom.{attr} = {val}")
    return "\n".join(lines) + "\n"
