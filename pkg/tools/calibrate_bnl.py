"""Regenerate the reference forest background-noise fixture.

The 4000 Hz band is fixed at 12 dB.  The 125, 1000 and 2000 Hz bands are
set to the SS03 receiver-line level at the distance where that band is
expected to meet the background (125 Hz at 24 m, 1000 Hz at 27 m, 2000 Hz
at 11 m).  250 and 500 Hz are interpolated on a log-frequency axis between
125 and 1000 Hz and kept below the SS03 level at 30 m, so those bands stay
audible over the whole line.

Usage::

    python tools/calibrate_bnl.py [--h 0.25] [--write]
"""
from __future__ import annotations

import argparse
import json
from importlib import resources

import numpy as np

from blindacoustics import build_scenario, simulate
from blindacoustics.analysis import crossing_distances, sample_line

ANCHOR_4000_DB = 12.0
ANCHORS_M = {0: 24.0, 3: 27.0, 4: 11.0}  # band index -> crossing distance in SS03
MARGIN_DB = 0.5


def level_at(profile, band: int, distance: float) -> float:
    return float(np.interp(distance, profile.distances, profile.band_spl[:, band]))


def calibrate(h: float = 0.25) -> tuple[np.ndarray, dict]:
    scene = build_scenario("SS03", mesh_h=h)
    prof = sample_line(simulate(scene, h), scene.receiver)
    bnl = np.empty(6)
    for b, d in ANCHORS_M.items():
        bnl[b] = level_at(prof, b, d)
    bnl[5] = ANCHOR_4000_DB
    lo, hi = bnl[0], bnl[3]
    for b in (1, 2):
        t = b / 3.0  # octave steps from 125 Hz to 1000 Hz
        bnl[b] = min(lo + t * (hi - lo), level_at(prof, b, 30.0) - MARGIN_DB)
    bnl = np.round(bnl, 1)
    checks = {}
    for sid in ("SS02", "SS03"):
        sc = build_scenario(sid, mesh_h=h)
        rep = crossing_distances(sample_line(simulate(sc, h), sc.receiver), bnl)
        checks[sid] = list(rep.interpolated)
    return bnl, checks


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.25)
    ap.add_argument("--write", action="store_true", help="overwrite the packaged fixture")
    args = ap.parse_args(argv)
    bnl, checks = calibrate(args.h)
    doc = {
        "description": (
            "Calibration artifact, not measured data. Forest background-noise octave spectrum "
            "(dB, 125..4000 Hz). 4000 Hz fixed at 12 dB; 125/1000/2000 Hz set to the simulated "
            "SS03 receiver-line level at 24/27/11 m; 250/500 Hz log-frequency interpolated and "
            "kept below the SS03 level at 30 m. Regenerate with tools/calibrate_bnl.py."
        ),
        "calibration": {"scenario": "SS03", "h": args.h, "boundary_model": "sabine",
                        "open_window": "aperture"},
        "levels_db": [float(v) for v in bnl],
        "check_crossings_m": checks,
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.write:
        path = resources.files("blindacoustics").joinpath("data", "bnl_forest.json")
        with open(str(path), "w") as fh:
            fh.write(text)
    print(text, end="")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
