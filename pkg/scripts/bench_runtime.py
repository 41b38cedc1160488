"""Wall-clock benchmark of edge extraction and the full workflow.

    python scripts/bench_runtime.py --size 1024 --depth 31 --repeat 3
"""
import argparse
import time

import numpy as np

from lifereg import phantom as ph
from lifereg.grid import SectorGeometry
from lifereg.life import extract_edges
from lifereg.pipeline import PipelineConfig, run_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=1024)
    ap.add_argument("--depth", type=int, default=31)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    # compile the numba kernels before anything is timed
    warm = ph.make_pair(ph.default_spec((96, 96), seed=0, depth=5, deform=ph.Deform("sinusoidal", 3, 64)))
    run_pipeline(warm["ct"], warm["us"], warm["mask"], PipelineConfig(pre_denoised=True))

    n = args.size
    t0 = time.perf_counter()
    pair = ph.make_pair(ph.default_spec((n, n), seed=args.seed, depth=args.depth,
                                        deform=ph.Deform("sinusoidal", 8, n / 4)))
    print(f"phantom {n}^2 x {args.depth}: {time.perf_counter() - t0:.1f} s (not part of the benchmark)")

    geom = SectorGeometry.default_for(n, n)
    edge_times, run_times = [], []
    for _ in range(args.repeat):
        t0 = time.perf_counter()
        extract_edges(pair["ct_slice"], geom)
        edge_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        res = run_pipeline(pair["ct"], pair["us"], pair["mask"], PipelineConfig(pre_denoised=True))
        run_times.append(time.perf_counter() - t0)
    print(f"extract_edges   median {np.median(edge_times):6.2f} s  (runs: {', '.join(f'{t:.2f}' for t in edge_times)})")
    print(f"run_pipeline    median {np.median(run_times):6.2f} s  (runs: {', '.join(f'{t:.2f}' for t in run_times)})")
    print("last run stage times:")
    for name, secs in res.report.wall_times.items():
        print(f"  {name:<16s}{secs:8.3f} s")


if __name__ == "__main__":
    main()
