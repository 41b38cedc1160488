"""Command-line entry point: ``lifereg <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 registration
stopped at ``max_iter`` without converging (outputs are still written).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig, read_config
from .demons import DemonsParams, run_demons
from .denoise import DenoiseParams, denoise_bm_2d, denoise_bm_3d, denoise_gaussian
from .grid import SectorGeometry, as_image, check_same_shape, warp
from .infometrics import MIForceParams, entropies, joint_histogram, mutual_information, nmi
from .life import LifeParams, enhance_slice, extract_edges
from .phantom import make_ct_phantom, make_pair
from .pipeline import PipelineError, run_pipeline
from .rigid import register_affine, resample_volume_slice

log = logging.getLogger("lifereg")

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse would exit with 2, which this tool reserves for non-convergence
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fuse_overlay(a, b) -> np.ndarray:
    """8-bit RGB overlay: ``a`` in red, ``b`` in green, their mean in blue."""
    a = as_image(a, "a")
    b = as_image(b, "b")
    check_same_shape(a, b, "overlay inputs")
    a = np.clip(a, 0.0, 1.0)
    b = np.clip(b, 0.0, 1.0)
    rgb = np.stack([a, b, 0.5 * (a + b)], axis=-1)
    return np.rint(rgb * 255.0).astype(np.uint8)


def _load_config(path) -> RunConfig:
    return read_config(path) if path else RunConfig()


def _read_volume(path) -> np.ndarray:
    if Path(path).suffix.lower() != ".f32vol":
        raise UsageError(f"volume must be a .f32vol file: {path}")
    return io.read_f32vol(path)


def cmd_denoise(args) -> int:
    if args.method == "bm3d":
        data = _read_volume(args.input)
    else:
        data = io.read_image(args.input)
    if args.method == "gaussian":
        out = denoise_gaussian(data, args.sigma)
    else:
        params = DenoiseParams(
            block_size=args.block_size, search_radius=args.search_radius, noise_sigma=args.sigma
        )
        out = denoise_bm_3d(data, params) if args.method == "bm3d" else denoise_bm_2d(data, params)
    if out.ndim == 3:
        io.write_f32vol(args.output, out)
    else:
        io.write_image(args.output, out)
    return EXIT_OK


def cmd_extract_slice(args) -> int:
    cfg = _load_config(args.config)
    vol = _read_volume(args.volume)
    us = io.read_image(args.us)
    d = vol.shape[0]
    c = d // 2 if args.center is None else args.center
    if not 0 <= c < d:
        raise UsageError(f"--center {c} outside the volume depth {d}")
    hw = cfg.pipeline.half_window if args.half_window is None else args.half_window
    lo, hi = max(0, c - hw), min(d, c + hw + 1)
    sub = vol[lo:hi]
    T = register_affine(sub, us, c - lo, cfg.pipeline.rigid)
    io.write_image(args.out_slice, resample_volume_slice(sub, T, c - lo))
    if args.out_transform:
        Path(args.out_transform).write_text(T.to_text() + "\n")
    return EXIT_OK


def cmd_enhance(args) -> int:
    img = io.read_image(args.slice)
    h, w = img.shape
    geom = SectorGeometry.default_for(w, h)
    if args.apex_x is not None or args.apex_y is not None:
        geom = replace(
            geom,
            apex_x=geom.apex_x if args.apex_x is None else args.apex_x,
            apex_y=geom.apex_y if args.apex_y is None else args.apex_y,
        )
    params = LifeParams(lam=args.lam, neighborhood_n=args.n, soft_threshold=args.threshold, enhancement_gain=args.gain)
    edges = extract_edges(img, geom, params)
    if args.out_edges:
        # edge values are signed entropy sums; the raw float format keeps them
        io.write_f32img(args.out_edges, edges) if args.out_edges.endswith(".f32img") else io.write_image(
            args.out_edges, 0.5 + edges / (2.0 * max(1e-12, float(np.abs(edges).max())))
        )
    if args.out_enhanced:
        io.write_image(args.out_enhanced, enhance_slice(img, edges, params.enhancement_gain))
    return EXIT_OK


def cmd_register(args) -> int:
    fixed = io.read_image(args.fixed)
    moving = io.read_image(args.moving)
    mask = io.read_mask(args.mask) if args.mask else None
    params = DemonsParams(
        sigma=args.sigma,
        max_iter=args.max_iter,
        force=args.force,
        mi_gain=args.mi_gain,
        mi_params=MIForceParams(window_n=args.window, bins=args.bins),
    )
    res = run_demons(fixed, moving, mask, params)
    io.write_f32fld(args.out_field, res.field)
    if args.out_warped:
        io.write_image(args.out_warped, warp(moving, res.field))
    log.info("register: %d iterations, converged=%s", res.iterations, res.converged)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_pipeline(args) -> int:
    cfg = _load_config(args.config)
    vol = _read_volume(args.volume)
    us = io.read_image(args.us)
    mask = io.read_mask(args.mask)
    h, w = us.shape
    pc = cfg.pipeline_for(w, h)
    if args.pre_denoised:
        pc = replace(pc, pre_denoised=True)
    landmarks = io.read_landmarks(args.landmarks) if args.landmarks else None
    res = run_pipeline(vol, us, mask, pc, landmarks, center_slice=args.center)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_f32img(out / "warped_us.f32img", res.warped_us)
    io.write_pgm(out / "warped_us.pgm", res.warped_us)
    io.write_f32img(out / "slice.f32img", res.slice)
    io.write_pgm(out / "slice.pgm", res.slice)
    io.write_pgm(out / "enhanced.pgm", res.enhanced)
    io.write_f32fld(out / "field.f32fld", res.field)
    io.write_ppm(out / "fused.ppm", fuse_overlay(res.enhanced, res.warped_us))
    io.write_ppm(out / "fused_before.ppm", fuse_overlay(res.enhanced, us))
    (out / "report.txt").write_text(res.report.to_text())
    return EXIT_OK


def cmd_phantom(args) -> int:
    cfg = _load_config(args.spec)
    spec = cfg.phantom_spec()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pair = make_pair(spec)
    ct = pair["ct"]
    if ct.ndim == 3:
        io.write_f32vol(out / "ct.f32vol", ct)
    else:
        io.write_f32img(out / "ct.f32img", ct)
    io.write_f32img(out / "ct_slice.f32img", pair["ct_slice"])
    io.write_f32img(out / "us.f32img", pair["us"])
    io.write_pgm(out / "us.pgm", pair["us"])
    io.write_mask(out / "mask.pgm", pair["mask"])
    io.write_f32fld(out / "field.f32fld", pair["field"])
    io.write_landmarks(out / "landmarks.csv", pair["landmarks_fixed"], pair["landmarks_moving"])
    return EXIT_OK


def cmd_evaluate(args) -> int:
    a = io.read_image(args.a)
    b = io.read_image(args.b)
    mask = io.read_mask(args.mask) if args.mask else None
    hist = joint_histogram(a, b, args.bins, mask)
    ha, hb, hab = entropies(hist)
    print(f"H(A)={ha:.6f}")
    print(f"H(B)={hb:.6f}")
    print(f"H(A,B)={hab:.6f}")
    print(f"MI={mutual_information(hist):.6f}")
    print(f"NMI={nmi(hist):.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lifereg", description="US-to-CT deformable registration toolkit")
    p.add_argument("--threads", type=int, default=None, help="cap on internal parallelism")
    p.add_argument("--log", choices=("quiet", "info", "debug"), default="info")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("denoise", help="denoise an image or volume")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--method", choices=("gaussian", "bm2d", "bm3d"), default="bm2d")
    s.add_argument("--sigma", type=float, default=0.05, help="noise level (bm) or blur width (gaussian)")
    s.add_argument("--block-size", type=int, default=8)
    s.add_argument("--search-radius", type=int, default=12)
    s.set_defaults(func=cmd_denoise)

    s = sub.add_parser("extract-slice", help="affine-register a US image into a CT volume")
    s.add_argument("--volume", required=True)
    s.add_argument("--us", required=True)
    s.add_argument("--center", type=int, default=None)
    s.add_argument("--half-window", type=int, default=None)
    s.add_argument("--out-slice", required=True)
    s.add_argument("--out-transform", default=None)
    s.add_argument("--config", default=None)
    s.set_defaults(func=cmd_extract_slice)

    s = sub.add_parser("enhance", help="radial LIFE edge enhancement of a CT slice")
    s.add_argument("--slice", required=True)
    s.add_argument("--apex-x", type=float, default=None)
    s.add_argument("--apex-y", type=float, default=None)
    s.add_argument("--lambda", dest="lam", type=int, default=4)
    s.add_argument("--n", type=int, default=3)
    s.add_argument("--threshold", type=float, default=1.5)
    s.add_argument("--gain", type=float, default=1.0)
    s.add_argument("--out-edges", default=None)
    s.add_argument("--out-enhanced", default=None)
    s.set_defaults(func=cmd_enhance)

    s = sub.add_parser("register", help="Demons registration of two images")
    s.add_argument("--fixed", required=True)
    s.add_argument("--moving", required=True)
    s.add_argument("--mask", default=None)
    s.add_argument("--force", choices=("mi", "intensity"), default="mi")
    s.add_argument("--sigma", type=float, default=2.0)
    s.add_argument("--max-iter", type=int, default=200)
    s.add_argument("--mi-gain", type=float, default=1.0)
    s.add_argument("--window", type=int, default=9)
    s.add_argument("--bins", type=int, default=32)
    s.add_argument("--out-field", required=True)
    s.add_argument("--out-warped", default=None)
    s.set_defaults(func=cmd_register)

    s = sub.add_parser("pipeline", help="full US-to-CT registration")
    s.add_argument("--volume", required=True)
    s.add_argument("--us", required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--config", default=None)
    s.add_argument("--landmarks", default=None)
    s.add_argument("--center", type=int, default=None)
    s.add_argument("--pre-denoised", action="store_true")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("phantom", help="write a synthetic CT/US phantom pair")
    s.add_argument("--spec", default=None, help="config file with phantom.* keys and global.seed")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("evaluate", help="entropies, MI and NMI of an image pair")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--bins", type=int, default=64)
    s.add_argument("--mask", default=None)
    s.set_defaults(func=cmd_evaluate)
    return p


def _setup(args) -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}[args.log]
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        import numba

        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _setup(args)
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"lifereg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, IndexError, PipelineError) as exc:
        print(f"lifereg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
