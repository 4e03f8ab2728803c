"""Voxelization of a :class:`~blindacoustics.scene.SceneSpec`.

The domain is split into cubic cells of edge ``h``.  Every cell is either
exterior air, blind interior air or solid (the occupancy absorber).  Cell
faces are classified per axis: internal faces sit between cells ``i`` and
``i+1`` along that axis, hull faces on the two ends of the domain.

Blind walls have zero thickness: they are the faces between interior and
exterior cells and carry an absorption coefficient on each side plus a
transmission coefficient.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc

from .acoustics import (DEFAULT_AIR, N_BANDS, AirProperties, MaterialDatabase,
                        default_materials)
from .scene import SceneError, SceneSpec, face_axes

log = logging.getLogger(__name__)

EXTERIOR, INTERIOR, SOLID = 0, 1, -1

FLUID, PARTITION, APERTURE, BOUNDARY, NONE = 0, 1, 2, 3, 4
KIND_NAMES = {FLUID: "fluid", PARTITION: "partition", APERTURE: "aperture",
              BOUNDARY: "boundary", NONE: "none"}

OPEN_WINDOW_MODES = ("aperture", "absorber")


class RefinementError(SceneError):
    """Geometry feature cannot be resolved at the requested cell size."""


@dataclass(frozen=True)
class VoxelGrid:
    origin: tuple[float, float, float]
    h: float
    dims: tuple[int, int, int]
    subdomain: np.ndarray  # int8 per cell: EXTERIOR, INTERIOR or SOLID

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def face_area(self) -> float:
        return self.h**2

    @property
    def subdomain_ids(self) -> list[int]:
        return sorted(int(s) for s in np.unique(self.subdomain) if s != SOLID)

    def axis_centres(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.h

    def locate(self, point) -> tuple[int, int, int]:
        """Index of the cell containing ``point``; points on a face go to the upper cell."""
        idx = []
        for a in range(3):
            t = (float(point[a]) - self.origin[a]) / self.h
            i = int(np.floor(t + 1e-9))
            if t < -1e-9 or t > self.dims[a] + 1e-9:
                raise SceneError(f"point {tuple(point)} lies outside the grid")
            idx.append(min(max(i, 0), self.dims[a] - 1))
        return tuple(idx)

    @property
    def extent(self) -> tuple[float, float, float]:
        return tuple(self.origin[a] + self.dims[a] * self.h for a in range(3))


@dataclass(frozen=True)
class FaceSet:
    """Classified faces of a voxel grid.

    For every axis ``a`` the internal arrays have the grid shape with
    ``dims[a] - 1`` along ``a``; entry ``[..., i, ...]`` is the face between
    cell ``i`` and ``i + 1``.  ``alpha_lo``/``alpha_hi`` index
    ``alpha_table`` for the absorbing surface facing the lower/upper cell,
    ``tau`` indexes ``tau_table``.  Index 0 of both tables is all zeros.

    ``hull[a]`` is a pair of arrays (low end, high end) over the two
    tangential axes holding an ``alpha_table`` index, or -1 where the
    adjacent cell is solid.
    """

    h: float
    dims: tuple[int, int, int]
    kind: tuple[np.ndarray, np.ndarray, np.ndarray]
    alpha_lo: tuple[np.ndarray, np.ndarray, np.ndarray]
    alpha_hi: tuple[np.ndarray, np.ndarray, np.ndarray]
    tau: tuple[np.ndarray, np.ndarray, np.ndarray]
    hull: tuple[tuple[np.ndarray, np.ndarray], ...]
    alpha_table: np.ndarray
    alpha_labels: tuple[str, ...]
    tau_table: np.ndarray
    tau_labels: tuple[str, ...]

    def count(self, kind: int, alpha_label: str | None = None, tau_label: str | None = None) -> int:
        """Number of internal faces of ``kind``, optionally filtered by surface or transmission label."""
        total = 0
        for a in range(3):
            mask = self.kind[a] == kind
            if alpha_label is not None:
                idx = self.alpha_labels.index(alpha_label) if alpha_label in self.alpha_labels else -2
                mask &= (self.alpha_lo[a] == idx) | (self.alpha_hi[a] == idx)
            if tau_label is not None:
                idx = self.tau_labels.index(tau_label) if tau_label in self.tau_labels else -2
                mask &= self.tau[a] == idx
            total += int(np.count_nonzero(mask))
        return total

    def area(self, kind: int) -> float:
        return self.count(kind) * self.h**2

    def hull_count(self) -> int:
        return sum(int(np.count_nonzero(side >= 0)) for pair in self.hull for side in pair)


class _Tables:
    """Accumulates labelled alpha / tau spectra and hands out indices."""

    def __init__(self):
        self.alpha = [np.zeros(N_BANDS)]
        self.alpha_labels = ["none"]
        self.tau = [np.zeros(N_BANDS)]
        self.tau_labels = ["none"]

    def alpha_index(self, label: str, values) -> int:
        if label in self.alpha_labels:
            return self.alpha_labels.index(label)
        self.alpha.append(np.asarray(values, dtype=float))
        self.alpha_labels.append(label)
        return len(self.alpha) - 1

    def tau_index(self, label: str, values) -> int:
        if label in self.tau_labels:
            return self.tau_labels.index(label)
        self.tau.append(np.asarray(values, dtype=float))
        self.tau_labels.append(label)
        return len(self.tau) - 1


def _alpha(db: MaterialDatabase, name: str) -> np.ndarray:
    mat = db.lookup(name)
    if mat.alpha is None:
        raise SceneError(f"material {name!r} has no absorption data")
    return mat.alpha


def _tau(db: MaterialDatabase, name: str) -> np.ndarray:
    mat = db.lookup(name)
    if mat.tau is None:
        raise SceneError(f"material {name!r} has no transmission loss data")
    return mat.tau


def _grid_dims(scene: SceneSpec, h: float) -> tuple[int, int, int]:
    dims = []
    for a, size in enumerate(scene.domain.size):
        n = int(round(size / h))
        if n < 1 or abs(n * h - size) > 1e-9 * max(1.0, size):
            raise SceneError(f"domain extent {size} m on axis {'xyz'[a]} is not a multiple of h={h}")
        dims.append(n)
    return tuple(dims)


class _Snapper:
    def __init__(self, origin, h):
        self.origin = origin
        self.h = h

    def __call__(self, value: float, axis: int, what: str) -> int:
        t = (value - self.origin[axis]) / self.h
        idx = int(np.floor(t + 0.5 + 1e-9))
        if abs(idx - t) > 1e-9:
            log.info("snapped %s %s=%.4g m to grid line %.4g m", what, "xyz"[axis], value,
                     self.origin[axis] + idx * self.h)
        return idx


def _slab(axis: int, index, ndim: int = 3):
    sl = [slice(None)] * ndim
    sl[axis] = index
    return tuple(sl)


def voxelize(scene: SceneSpec, h: float | None = None, open_window: str = "aperture",
             materials: MaterialDatabase | None = None) -> tuple[VoxelGrid, FaceSet]:
    """Discretize ``scene`` into cells of edge ``h`` (defaults to ``scene.mesh_h``).

    Blind geometry is snapped to the nearest grid line.  Open windows become
    aperture faces (``open_window="aperture"``) or fully absorbing faces on
    both sides with no transmission (``open_window="absorber"``).
    """
    h = float(scene.mesh_h if h is None else h)
    if not h > 0:
        raise SceneError("cell size h must be positive")
    if open_window not in OPEN_WINDOW_MODES:
        raise SceneError(f"open_window must be one of {OPEN_WINDOW_MODES}")
    db = materials or default_materials()
    dims = _grid_dims(scene, h)
    origin = scene.domain.min
    snap = _Snapper(origin, h)
    sub = np.full(dims, EXTERIOR, dtype=np.int8)
    tables = _Tables()

    kind, a_lo, a_hi, tau = [], [], [], []
    blind = scene.blind
    lo_idx = hi_idx = None
    if blind is not None:
        lo_idx = [snap(blind.shell.min[a], a, "blind shell") for a in range(3)]
        hi_idx = [snap(blind.shell.max[a], a, "blind shell") for a in range(3)]
        for a in range(3):
            if hi_idx[a] <= lo_idx[a]:
                raise RefinementError(f"blind collapses on axis {'xyz'[a]} at h={h}; refine the grid")
        if lo_idx[2] != 0 or min(lo_idx[0], lo_idx[1]) < 1 or any(
                hi_idx[a] >= dims[a] for a in range(3)):
            raise SceneError("blind must lie strictly inside the domain, resting on the ground")
        sub[lo_idx[0]:hi_idx[0], lo_idx[1]:hi_idx[1], lo_idx[2]:hi_idx[2]] = INTERIOR
        if blind.occupancy is not None:
            olo = [snap(blind.occupancy.min[a], a, "occupancy") for a in range(3)]
            ohi = [snap(blind.occupancy.max[a], a, "occupancy") for a in range(3)]
            if any(ohi[a] <= olo[a] for a in range(3)):
                raise RefinementError(f"occupancy box collapses at h={h}; refine the grid")
            sub[olo[0]:ohi[0], olo[1]:ohi[1], olo[2]:ohi[2]] = SOLID

    if blind is not None:
        wall_in = tables.alpha_index("wall:indoor", _alpha(db, blind.wall_indoor_material))
        wall_out = tables.alpha_index("wall:outdoor", _alpha(db, blind.wall_outdoor_material))
        ceil_in = tables.alpha_index("ceiling:indoor", _alpha(db, blind.ceiling_indoor))
        ceil_out = tables.alpha_index("ceiling:outdoor", _alpha(db, blind.ceiling_outdoor))
        wall_tau = tables.tau_index("wall", _tau(db, blind.wall_construction))
        occ = tables.alpha_index("occupancy", _alpha(db, blind.occupancy_material))
    for a in range(3):
        lo = sub[_slab(a, slice(0, -1))]
        hi = sub[_slab(a, slice(1, None))]
        k = np.full(lo.shape, NONE, dtype=np.int8)
        fluid_lo, fluid_hi = lo != SOLID, hi != SOLID
        k[fluid_lo & fluid_hi & (lo == hi)] = FLUID
        part = fluid_lo & fluid_hi & (lo != hi)
        k[part] = PARTITION
        bnd = fluid_lo ^ fluid_hi
        if np.any(bnd & ((lo == EXTERIOR) | (hi == EXTERIOR))):
            raise SceneError("occupancy box must not touch the blind envelope")
        k[bnd] = BOUNDARY
        alo = np.zeros(lo.shape, dtype=np.int16)
        ahi = np.zeros(lo.shape, dtype=np.int16)
        t = np.zeros(lo.shape, dtype=np.int16)
        if blind is not None:
            inner, outer = (ceil_in, ceil_out) if a == 2 else (wall_in, wall_out)
            lo_inside = part & (lo == INTERIOR)
            hi_inside = part & (hi == INTERIOR)
            alo[lo_inside], ahi[lo_inside] = inner, outer
            alo[hi_inside], ahi[hi_inside] = outer, inner
            t[part] = wall_tau
            alo[bnd & fluid_lo] = occ
            ahi[bnd & fluid_hi] = occ
        kind.append(k)
        a_lo.append(alo)
        a_hi.append(ahi)
        tau.append(t)

    if blind is not None:
        for n_open, op in enumerate(blind.openings):
            is_window = n_open < len(blind.windows)
            what = "window" if is_window else "door"
            normal, u_ax, v_ax = face_axes(op.face)
            short = min(op.u[1] - op.u[0], op.v[1] - op.v[0])
            if h > short + 1e-9:
                raise RefinementError(
                    f"{what} on face {op.face} ({short:g} m short edge) cannot be resolved "
                    f"at h={h}; refinement required")
            plane = hi_idx[normal] if op.face.endswith("+") else lo_idx[normal]
            u0, u1 = snap(op.u[0], u_ax, what), snap(op.u[1], u_ax, what)
            v0, v1 = snap(op.v[0], v_ax, what), snap(op.v[1], v_ax, what)
            if u1 <= u0 or v1 <= v0:
                raise RefinementError(f"{what} on face {op.face} collapses at h={h}; refinement required")
            sl = [slice(None)] * 3
            sl[normal] = plane - 1
            sl[u_ax] = slice(u0, u1)
            sl[v_ax] = slice(v0, v1)
            sl = tuple(sl)
            if not np.all(kind[normal][sl] == PARTITION):
                raise SceneError(f"{what} on face {op.face} is not on the blind envelope")
            inside_is_lo = op.face.endswith("+")
            if op.state == "closed":
                mat = op.material
                ain = tables.alpha_index(f"{what}:{mat}:indoor", _alpha(db, mat))
                aout = tables.alpha_index(f"{what}:{mat}:outdoor", _alpha(db, mat))
                kind[normal][sl] = PARTITION
                a_lo[normal][sl], a_hi[normal][sl] = (ain, aout) if inside_is_lo else (aout, ain)
                tau[normal][sl] = tables.tau_index(f"{what}:{mat}", _tau(db, mat))
            elif open_window == "aperture":
                kind[normal][sl] = APERTURE
                a_lo[normal][sl] = a_hi[normal][sl] = 0
                tau[normal][sl] = 0
            else:
                ain = tables.alpha_index("open:indoor", np.ones(N_BANDS))
                aout = tables.alpha_index("open:outdoor", np.ones(N_BANDS))
                kind[normal][sl] = PARTITION
                a_lo[normal][sl], a_hi[normal][sl] = (ain, aout) if inside_is_lo else (aout, ain)
                tau[normal][sl] = 0

    ground = tables.alpha_index("ground", _alpha(db, scene.ground_material))
    outer = tables.alpha_index("outer", scene.outer_boundary_alpha)
    floor = tables.alpha_index("floor", _alpha(db, blind.floor_material)) if blind is not None else -1
    hull = []
    for a in range(3):
        pair = []
        for end in (0, -1):
            cells = sub[_slab(a, end)]
            idx = np.full(cells.shape, outer, dtype=np.int16)
            if a == 2 and end == 0:
                idx[:] = ground
                idx[cells == INTERIOR] = floor
            idx[cells == SOLID] = -1
            pair.append(idx)
        hull.append(tuple(pair))

    grid = VoxelGrid(tuple(origin), h, dims, sub)
    faces = FaceSet(
        h=h,
        dims=dims,
        kind=tuple(kind),
        alpha_lo=tuple(a_lo),
        alpha_hi=tuple(a_hi),
        tau=tuple(tau),
        hull=tuple(hull),
        alpha_table=np.array(tables.alpha),
        alpha_labels=tuple(tables.alpha_labels),
        tau_table=np.array(tables.tau),
        tau_labels=tuple(tables.tau_labels),
    )
    return grid, faces


@dataclass(frozen=True)
class SubdomainStats:
    volume: float
    surface: float
    mean_free_path: float
    diffusion: float


def subdomain_stats(grid: VoxelGrid, faces: FaceSet,
                    air: AirProperties = DEFAULT_AIR) -> dict[int, SubdomainStats]:
    """Volume, bounding surface, mean free path ``4V/S`` and diffusion coefficient ``lambda*c/3``.

    The bounding surface counts every hull, boundary, partition and aperture
    face adjacent to a cell of the subdomain.
    """
    ids = grid.subdomain_ids
    if not ids:
        raise SceneError("grid has no air cells")
    sub = grid.subdomain
    n_faces = {s: 0 for s in ids}
    for a in range(3):
        k = faces.kind[a]
        bounding = (k == PARTITION) | (k == APERTURE) | (k == BOUNDARY)
        lo = sub[_slab(a, slice(0, -1))]
        hi = sub[_slab(a, slice(1, None))]
        for s in ids:
            n_faces[s] += int(np.count_nonzero(bounding & (lo == s)))
            n_faces[s] += int(np.count_nonzero(bounding & (hi == s)))
            for end in (0, -1):
                n_faces[s] += int(np.count_nonzero(sub[_slab(a, end)] == s))
    out = {}
    for s in ids:
        volume = int(np.count_nonzero(sub == s)) * grid.cell_volume
        surface = n_faces[s] * grid.face_area
        if surface <= 0:
            raise SceneError(f"subdomain {s} has no bounding surface")
        mfp = 4.0 * volume / surface
        out[s] = SubdomainStats(volume, surface, mfp, mfp * air.c / 3.0)
    return out


def connected_components(grid: VoxelGrid, faces: FaceSet) -> int:
    """Number of air regions connected through fluid or aperture faces."""
    n = grid.n_cells
    index = np.arange(n).reshape(grid.dims)
    rows, cols = [], []
    for a in range(3):
        k = faces.kind[a]
        link = (k == FLUID) | (k == APERTURE)
        rows.append(index[_slab(a, slice(0, -1))][link])
        cols.append(index[_slab(a, slice(1, None))][link])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n))
    _, labels = _cc(graph, directed=False)
    air = grid.subdomain.ravel() != SOLID
    return int(np.unique(labels[air]).size)
