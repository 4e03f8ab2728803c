"""Command-line front end.

Exit codes: 0 success, 1 acceptance check failed (``reproduce-paper``),
2 invalid input, 3 solver non-convergence, 4 I/O failure.  Errors are
reported on stderr as a one-line JSON object.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .acoustics import OCTAVE_BANDS, MaterialError, default_materials
from .analysis import (LineProfile, compare, crossing_distances, sample_line, slice_map)
from .scene import SCENARIO_IDS, SceneError, SceneSpec, build_scenario, load_scene
from .solver import BOUNDARY_MODELS, ConvergenceError, SolveOptions, simulate
from .voxel import OPEN_WINDOW_MODES, subdomain_stats, voxelize

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("blindacoustics")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT, **extra):
        super().__init__(message)
        self.code = code
        self.extra = extra


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message, EXIT_INPUT, usage=self.format_usage().strip())


@dataclass(frozen=True)
class RunConfig:
    scenario: str | None
    scene_path: Path | None
    h: float | None
    boundary: str
    open_window: str
    radiation: str
    out: Path
    threads: int = 1
    profiles: bool = True
    crossings: bool = True
    slices: bool = True
    report: bool = True

    def __post_init__(self):
        if (self.scenario is None) == (self.scene_path is None):
            raise CliError("exactly one of --scenario or --scene is required")
        if self.h is not None and not self.h > 0:
            raise CliError("--h must be positive")
        if self.threads < 1:
            raise CliError("--threads must be >= 1")

    def load(self) -> SceneSpec:
        if self.scenario is not None:
            return build_scenario(self.scenario, mesh_h=self.h or 0.1)
        try:
            return load_scene(self.scene_path)
        except OSError as exc:
            raise CliError(f"cannot read scene file: {exc}", EXIT_IO) from None


def _write(path: Path, data: str | bytes) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None


def _options(args) -> SolveOptions:
    return SolveOptions(boundary_model=args.boundary, rel_tolerance=args.tolerance,
                        max_iterations=args.max_iterations, threads=args.threads)


def cmd_run(args) -> int:
    cfg = RunConfig(args.scenario, Path(args.scene) if args.scene else None, args.h, args.boundary,
                    args.open_window, args.radiation, Path(args.out), args.threads,
                    not args.no_profiles, not args.no_crossings, not args.no_slices, not args.no_report)
    scene = cfg.load()
    h = cfg.h or scene.mesh_h
    sol = simulate(scene, h, cfg.open_window, _options(args), radiation=cfg.radiation)
    prof = sample_line(sol, scene.receiver)
    cross = crossing_distances(prof, scene.bnl)
    out = cfg.out
    _write(out / "scene.json", scene.to_json() + "\n")
    if cfg.profiles:
        _write(out / "profile.csv", prof.to_csv(scene.bnl))
    if cfg.crossings:
        _write(out / "crossings.csv", cross.to_csv())
    if cfg.slices:
        z = scene.receiver.start[2]
        sm = slice_map(sol, "z", z)
        _write(out / f"slice_z{z:g}.csv", sm.to_csv())
        _write(out / f"slice_z{z:g}.pgm", sm.to_pgm())
    if cfg.report:
        report = sol.run_report()
        report.update(scene=scene.name, open_window=cfg.open_window, radiation=cfg.radiation)
        _write(out / "run_report.json", json.dumps(report, indent=2) + "\n")
    print(f"{scene.name}: h={h:g} m, dims={tuple(sol.grid.dims)}, backend={sol.run_report()['backend']}")
    print(f"overall SPL at line start {prof.overall[0]:.1f} dB, end {prof.overall[-1]:.1f} dB")
    print("crossing (m): " + ", ".join(
        f"{f} Hz {'none' if c is None else f'{c:.1f}'}" for f, c in zip(OCTAVE_BANDS, cross.interpolated)))
    all_bands = cross.all_bands
    print(f"all bands at or below BNL from {'-' if all_bands is None else f'{all_bands:g} m'}")
    print(f"outputs written to {out}")
    return EXIT_OK


def _read_profile(path: Path) -> LineProfile:
    if path.is_dir():
        path = path / "profile.csv"
    try:
        return LineProfile.from_csv(path.read_text())
    except OSError as exc:
        raise CliError(f"cannot read profile: {exc}", EXIT_IO) from None
    except (KeyError, ValueError) as exc:
        raise CliError(f"malformed profile {path}: {exc}") from None


def cmd_compare(args) -> int:
    a, b = _read_profile(Path(args.run_a)), _read_profile(Path(args.run_b))
    try:
        delta = compare(a, b)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    text = delta.to_csv()
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    bands = delta.mean_band(0.0, 10.0)
    print(f"mean delta overall 0-10 m: {delta.mean_overall(0.0, 10.0):+.2f} dB")
    print("mean delta per band 0-10 m: " + ", ".join(f"{f} Hz {v:+.2f}" for f, v in zip(OCTAVE_BANDS, bands)))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from .reproduce import Sweep, evaluate, summary_table

    sweep = Sweep(args.h, _options(args), args.open_window)
    failed = []
    for sid in SCENARIO_IDS:
        try:
            sweep[sid]
        except ConvergenceError as exc:
            failed.append(sid)
            _emit_error(CliError(f"{sid}: {exc}", EXIT_SOLVER, band_hz=exc.band))
    print(f"distances along the receiver line (start 1.5 m from the facade), h = {args.h:g} m")
    print(summary_table(sweep.results))
    if args.out:
        out = Path(args.out)
        for sid, res in sweep.results.items():
            _write(out / sid / "profile.csv", res.profile.to_csv(build_scenario(sid).bnl))
            _write(out / sid / "crossings.csv", res.crossings.to_csv())
            _write(out / sid / "run_report.json", json.dumps(res.report, indent=2) + "\n")
    if failed:
        return EXIT_SOLVER
    results = evaluate(sweep, grid_check=args.grid_check)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def _fmt_row(values) -> str:
    return " ".join(f"{v:g}" for v in values)


def cmd_materials(args) -> int:
    db = default_materials()
    if args.action == "list":
        for name in db.names():
            m = db.lookup(name)
            kind = "+".join(k for k, v in (("alpha", m.alpha), ("tl", m.tl_db)) if v is not None)
            print(f"{name:<28} {kind:<9} {m.description}")
        return EXIT_OK
    if not args.name:
        raise CliError("materials show requires a material name")
    try:
        m = db.lookup(args.name)
    except MaterialError as exc:
        raise CliError(str(exc)) from None
    print(f"{m.name}: {m.description}")
    print("band_hz  " + _fmt_row(OCTAVE_BANDS))
    print("alpha    " + ("-" if m.alpha is None else _fmt_row(m.alpha)))
    print("tl_db    " + ("-" if m.tl_db is None else _fmt_row(m.tl_db)))
    return EXIT_OK


def cmd_scenario(args) -> int:
    scene = build_scenario(args.id, mesh_h=args.h or 0.1)
    text = scene.to_json() + "\n"
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        scene = load_scene(args.scene)
    except OSError as exc:
        raise CliError(f"cannot read scene file: {exc}", EXIT_IO) from None
    h = args.h or scene.mesh_h
    grid, faces = voxelize(scene, h, args.open_window)
    stats = subdomain_stats(grid, faces)
    print(f"{scene.name}: valid; h={h:g} m, dims={tuple(grid.dims)}, sources={len(scene.sources)}, "
          f"receiver samples={len(scene.receiver.distances)}")
    for s, st in stats.items():
        print(f"  subdomain {s}: V={st.volume:.3f} m3, S={st.surface:.3f} m2, "
              f"mean free path={st.mean_free_path:.4f} m, D={st.diffusion:.2f} m2/s")
    return EXIT_OK


def _solver_flags(p: argparse.ArgumentParser, h_default=None) -> None:
    p.add_argument("--h", type=float, default=h_default, help="cell edge in m")
    p.add_argument("--boundary", choices=BOUNDARY_MODELS, default="sabine")
    p.add_argument("--open-window", choices=OPEN_WINDOW_MODES, default="aperture")
    p.add_argument("--threads", type=int, default=1, help="band solves run in parallel")
    p.add_argument("--tolerance", type=float, default=1e-8, help="relative residual target")
    p.add_argument("--max-iterations", type=int, help="CG iteration cap (default 10 sqrt(cells))")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="blindacoustics", description="Indoor-to-outdoor noise from photography blinds.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate one scenario or scene file")
    p.add_argument("--scenario", type=str.upper, help=f"one of {', '.join(SCENARIO_IDS)}")
    p.add_argument("--scene", help="scene JSON file")
    _solver_flags(p)
    p.add_argument("--radiation", choices=("spherical", "hemispherical"), default="spherical")
    p.add_argument("--out", default="out")
    for name in ("profiles", "crossings", "slices", "report"):
        p.add_argument(f"--no-{name}", action="store_true", help=f"skip {name} output")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="delta between two runs (a - b)")
    p.add_argument("run_a", help="run directory or profile CSV")
    p.add_argument("run_b")
    p.add_argument("--out", help="delta CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("reproduce-paper", help="sweep SS01..MS07 and check the expected ranges")
    _solver_flags(p, h_default=0.1)
    p.add_argument("--out", help="directory for per-scenario outputs")
    p.add_argument("--grid-check", action="store_true", help="also run the h = 0.2 / 0.1 convergence check")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("materials", help="list or show built-in materials")
    p.add_argument("action", choices=("list", "show"))
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_materials)

    p = sub.add_parser("scenario", help="export a scenario preset as a scene file")
    p.add_argument("action", choices=("dump",))
    p.add_argument("id", type=str.upper)
    p.add_argument("--h", type=float, help="mesh_h stored in the scene")
    p.add_argument("--out", help="output path (stdout if omitted)")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("validate", help="check a scene file and report its discretization")
    p.add_argument("scene")
    p.add_argument("--h", type=float)
    p.add_argument("--open-window", choices=OPEN_WINDOW_MODES, default="aperture")
    p.set_defaults(func=cmd_validate)
    return ap


def _emit_error(exc: CliError) -> None:
    doc = {"error": str(exc), "exit_code": exc.code, **exc.extra}
    sys.stderr.write(json.dumps(doc) + "\n")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CliError as exc:
        _emit_error(exc)
        return exc.code
    except ConvergenceError as exc:
        hist = [float(v) for v in np.asarray(exc.history)[-5:]]
        _emit_error(CliError(str(exc), EXIT_SOLVER, band_hz=exc.band, residual_tail=hist))
        return EXIT_SOLVER
    except (SceneError, MaterialError, ValueError) as exc:
        _emit_error(CliError(str(exc), EXIT_INPUT, kind=type(exc).__name__))
        return EXIT_INPUT
    except OSError as exc:
        _emit_error(CliError(str(exc), EXIT_IO, kind=type(exc).__name__))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
