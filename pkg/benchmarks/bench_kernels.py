"""Compare the compiled and numpy solver kernels on a scenario band system.

Usage::

    python benchmarks/bench_kernels.py [--scenario SS04] [--h 0.25] [--band 0] [--repeat 5]

Reports the 7-point stencil product time and a fixed-iteration PCG run per
backend, plus the largest difference between backend results.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from blindacoustics import build_scenario
from blindacoustics.acoustics import DEFAULT_AIR, OCTAVE_BANDS
from blindacoustics.kernels import available_backends
from blindacoustics.solver import SolveOptions, assemble, source_powers
from blindacoustics.voxel import subdomain_stats, voxelize


def band_system(scenario: str, h: float, band: int):
    scene = build_scenario(scenario, mesh_h=h)
    grid, faces = voxelize(scene, h)
    stats = subdomain_stats(grid, faces, DEFAULT_AIR)
    powers = source_powers(scene.sources)
    return assemble(grid, faces, stats, DEFAULT_AIR, band, SolveOptions(),
                    [(pos, float(p[band])) for pos, p in powers])


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="solver kernel benchmark")
    ap.add_argument("--scenario", default="SS04")
    ap.add_argument("--h", type=float, default=0.25)
    ap.add_argument("--band", type=int, default=0, choices=range(6))
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--iterations", type=int, default=200, help="PCG iterations per timing")
    args = ap.parse_args(argv)

    sysm = band_system(args.scenario, args.h, args.band)
    n = sysm.diag.size
    rng = np.random.default_rng(0)
    x = rng.random(sysm.shape)
    print(f"{args.scenario} {OCTAVE_BANDS[args.band]} Hz, h={args.h:g} m, {n} cells")
    print(f"{'backend':<8}{'matvec ms':>12}{'pcg ms/it':>12}{'speedup':>10}")
    results = {}
    base = None
    for name, mod in sorted(available_backends().items(), key=lambda kv: kv[0] != "numpy"):
        out = np.empty_like(x)
        t_mv = best_of(lambda: mod.stencil_matvec(sysm.diag, sysm.cx, sysm.cy, sysm.cz, x, out), args.repeat)

        def run_pcg():
            sol = np.zeros(sysm.shape)
            mod.pcg(sysm.diag, sysm.cx, sysm.cy, sysm.cz, sysm.rhs, sol, 0.0, args.iterations)
            results[name] = (out.copy(), sol)

        t_cg = best_of(run_pcg, max(1, args.repeat // 2)) / args.iterations
        base = base or t_cg
        print(f"{name:<8}{1e3 * t_mv:12.3f}{1e3 * t_cg:12.3f}{base / t_cg:10.2f}x")
    if len(results) == 2:
        (mv_a, x_a), (mv_b, x_b) = results.values()
        print(f"max |matvec difference| / max|matvec| = {np.abs(mv_a - mv_b).max() / np.abs(mv_a).max():.2e}")
        print(f"max |pcg difference| / max|x|        = {np.abs(x_a - x_b).max() / np.abs(x_a).max():.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
