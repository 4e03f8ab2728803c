"""Receiver-line profiles, background-noise crossings, comparisons and slice maps."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .acoustics import (DEFAULT_AIR, N_BANDS, OCTAVE_BANDS, AirProperties, as_spectrum,
                        band_sum_db, spl_from_energy_density)
from .scene import ReceiverLine, SceneError
from .solver import FieldSolution
from .voxel import SOLID

__all__ = [
    "ReceiverLine", "LineProfile", "CrossingReport", "ProfileDelta", "SliceMap",
    "sample_line", "crossing_distances", "compare", "slice_map", "reference_bnl",
]

BAND_COLUMNS = [f"spl_{f}" for f in OCTAVE_BANDS]


@lru_cache(maxsize=None)
def _bnl_document() -> dict:
    return json.loads(resources.files("blindacoustics").joinpath("data", "bnl_forest.json").read_text())


def reference_bnl() -> np.ndarray:
    """Shipped forest background-noise spectrum (dB per octave band)."""
    return as_spectrum(_bnl_document()["levels_db"], "bnl")


def trilinear(field: np.ndarray, origin, h: float, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of cell-centred values at ``points`` (n x 3).

    Between the outermost cell centre and the hull the nearest centre value is
    used.  Points outside the grid raise :class:`SceneError`.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dims = np.array(field.shape)
    t = (points - np.asarray(origin)) / h
    if np.any(t < -1e-9) or np.any(t > dims + 1e-9):
        bad = points[np.any((t < -1e-9) | (t > dims + 1e-9), axis=1)][0]
        raise SceneError(f"sample point {tuple(bad)} lies outside the grid")
    u = np.clip(t - 0.5, 0.0, dims - 1.0)
    i0 = np.minimum(np.floor(u).astype(int), np.maximum(dims - 2, 0))
    f = u - i0
    i1 = np.minimum(i0 + 1, dims - 1)
    out = np.zeros(len(points))
    for cx in (0, 1):
        wx = f[:, 0] if cx else 1 - f[:, 0]
        ix = i1[:, 0] if cx else i0[:, 0]
        for cy in (0, 1):
            wy = f[:, 1] if cy else 1 - f[:, 1]
            iy = i1[:, 1] if cy else i0[:, 1]
            for cz in (0, 1):
                wz = f[:, 2] if cz else 1 - f[:, 2]
                iz = i1[:, 2] if cz else i0[:, 2]
                out += wx * wy * wz * field[ix, iy, iz]
    return out


@dataclass(frozen=True)
class LineProfile:
    """SPL along a receiver line: ``band_spl`` is (n_samples, 6), ``overall`` (n_samples,)."""

    distances: np.ndarray
    points: np.ndarray
    band_spl: np.ndarray
    overall: np.ndarray

    def to_csv(self, bnl=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["distance_m", *BAND_COLUMNS, "spl_overall"]
        if bnl is not None:
            bnl = as_spectrum(bnl, "bnl")
            header += [f"above_bnl_{f}" for f in OCTAVE_BANDS] + ["above_bnl_overall"]
            bnl_overall = band_sum_db(bnl)
        writer.writerow(header)
        for n, d in enumerate(self.distances):
            row = [f"{d:.6g}", *(f"{v:.6f}" for v in self.band_spl[n]), f"{self.overall[n]:.6f}"]
            if bnl is not None:
                row += [int(v > b) for v, b in zip(self.band_spl[n], bnl)]
                row.append(int(self.overall[n] > bnl_overall))
            writer.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LineProfile":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty profile CSV")
        d = np.array([float(r["distance_m"]) for r in rows])
        bands = np.array([[float(r[c]) for c in BAND_COLUMNS] for r in rows])
        overall = np.array([float(r["spl_overall"]) for r in rows])
        return cls(d, np.full((len(d), 3), np.nan), bands, overall)


def sample_line(solution: FieldSolution, line: ReceiverLine,
                air: AirProperties | None = None) -> LineProfile:
    """Per-band and overall SPL at each receiver sample."""
    air = air or solution.air
    grid = solution.grid
    pts = line.points
    band = np.empty((len(pts), N_BANDS))
    for b in range(N_BANDS):
        w = trilinear(solution.w[b], grid.origin, grid.h, pts)
        band[:, b] = spl_from_energy_density(np.maximum(w, 0.0), air)
    return LineProfile(line.distances, pts, band, band_sum_db(band, axis=1))


@dataclass(frozen=True)
class CrossingReport:
    """Per band: first sampled distance with SPL <= BNL, and a linear-interpolated estimate.

    ``None`` means the band stays above the BNL over the whole line.
    """

    sampled: tuple[float | None, ...]
    interpolated: tuple[float | None, ...]

    @property
    def all_bands(self) -> float | None:
        """Distance by which every band has reached the BNL (largest per-band crossing)."""
        if any(d is None for d in self.sampled):
            return None
        return max(self.sampled)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["band_hz", "crossing_m", "crossing_interp_m"])
        for f, s, i in zip(OCTAVE_BANDS, self.sampled, self.interpolated):
            writer.writerow([f, "none" if s is None else f"{s:.6g}", "none" if i is None else f"{i:.1f}"])
        return buf.getvalue()


def crossing_distances(profile: LineProfile, bnl) -> CrossingReport:
    bnl = as_spectrum(bnl, "bnl")
    d = np.asarray(profile.distances)
    if np.any(np.diff(d) <= 0):
        raise ValueError("profile distances must be strictly increasing")
    sampled, interp = [], []
    for b in range(N_BANDS):
        spl = profile.band_spl[:, b]
        below = np.flatnonzero(spl <= bnl[b])
        if below.size == 0:
            sampled.append(None)
            interp.append(None)
            continue
        n = int(below[0])
        sampled.append(float(d[n]))
        if n == 0:
            interp.append(round(float(d[0]), 1))
        else:
            y0, y1 = spl[n - 1] - bnl[b], spl[n] - bnl[b]
            frac = y0 / (y0 - y1)
            interp.append(round(float(d[n - 1] + frac * (d[n] - d[n - 1])), 1))
    return CrossingReport(tuple(sampled), tuple(interp))


@dataclass(frozen=True)
class ProfileDelta:
    """``a - b`` per distance: ``band`` (n, 6) and ``overall`` (n,) in dB."""

    distances: np.ndarray
    band: np.ndarray
    overall: np.ndarray

    def mean_overall(self, d_min: float = 0.0, d_max: float = np.inf) -> float:
        sel = (self.distances >= d_min - 1e-9) & (self.distances <= d_max + 1e-9)
        return float(np.mean(self.overall[sel]))

    def mean_band(self, d_min: float = 0.0, d_max: float = np.inf) -> np.ndarray:
        sel = (self.distances >= d_min - 1e-9) & (self.distances <= d_max + 1e-9)
        return self.band[sel].mean(axis=0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["distance_m", *[f"delta_{f}" for f in OCTAVE_BANDS], "delta_overall"])
        for n, d in enumerate(self.distances):
            writer.writerow([f"{d:.6g}", *(f"{v:.6f}" for v in self.band[n]), f"{self.overall[n]:.6f}"])
        return buf.getvalue()


def compare(a: LineProfile, b: LineProfile) -> ProfileDelta:
    if a.distances.shape != b.distances.shape or not np.allclose(a.distances, b.distances,
                                                                  rtol=0, atol=1e-9):
        raise ValueError("profiles are sampled on different grids")
    return ProfileDelta(a.distances.copy(), a.band_spl - b.band_spl, a.overall - b.overall)


@dataclass(frozen=True)
class SliceMap:
    """SPL on a grid-aligned plane, row-major; ``mask`` is True on solid or blind-interior cells."""

    axis: int
    offset: float
    spl: np.ndarray
    mask: np.ndarray
    u_centres: np.ndarray
    v_centres: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["v\\u", *(f"{u:.6g}" for u in self.u_centres)])
        for r, v in enumerate(self.v_centres):
            writer.writerow([f"{v:.6g}", *("nan" if self.mask[r, c] else f"{self.spl[r, c]:.4f}"
                                           for c in range(len(self.u_centres)))])
        return buf.getvalue()

    def to_pgm(self, db_min: float | None = None, db_max: float | None = None) -> bytes:
        """Binary 8-bit PGM, linear between ``db_min`` (black) and ``db_max`` (white).

        The first image row is the highest ``v``; masked cells are black.
        """
        valid = self.spl[~self.mask]
        lo = float(valid.min()) if db_min is None and valid.size else (db_min or 0.0)
        hi = float(valid.max()) if db_max is None and valid.size else (db_max or 1.0)
        if hi <= lo:
            hi = lo + 1.0
        scaled = np.clip((self.spl - lo) / (hi - lo), 0.0, 1.0)
        img = np.round(scaled * 255).astype(np.uint8)
        img[self.mask] = 0
        img = img[::-1]
        rows, cols = img.shape
        return f"P5\n{cols} {rows}\n255\n".encode() + img.tobytes()


def slice_map(solution: FieldSolution, axis: int | str, offset: float, band: int | None = None,
              air: AirProperties | None = None) -> SliceMap:
    """Nearest-cell SPL on the plane ``axis = offset``; ``band=None`` gives the overall level."""
    air = air or solution.air
    grid = solution.grid
    axis = "xyz".index(axis) if isinstance(axis, str) else int(axis)
    lo, hi = grid.origin[axis], grid.extent[axis]
    if not lo <= offset <= hi:
        raise SceneError(f"slice plane {'xyz'[axis]}={offset} lies outside the domain")
    i = min(int((offset - lo) / grid.h), grid.dims[axis] - 1)
    take = [slice(None)] * 3
    take[axis] = i
    take = tuple(take)
    if band is None:
        spl = band_sum_db(np.stack([spl_from_energy_density(solution.w[b][take], air)
                                    for b in range(N_BANDS)]), axis=0)
    else:
        spl = spl_from_energy_density(solution.w[band][take], air)
    mask = grid.subdomain[take] != 0
    u_ax, v_ax = (a for a in range(3) if a != axis)
    # rows follow v, columns follow u
    return SliceMap(axis, offset, np.asarray(spl).T, mask.T,
                    grid.axis_centres(u_ax), grid.axis_centres(v_ax))
