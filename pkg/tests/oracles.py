"""Independent reference implementations used by the tests.

These are written from the governing formulas with plain loops or other
libraries, without reusing the package's vectorized code paths.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from blindacoustics.acoustics import (N_BANDS, AirProperties, Material, SourceSpec,
                                      default_materials)
from blindacoustics.scene import AxisBox, BlindSpec, Opening, ReceiverLine, SceneSpec
from blindacoustics.voxel import APERTURE, BOUNDARY, FLUID, PARTITION, SOLID

P_REF = 2e-5


def spl(w: float, rho: float = 1.21, c: float = 343.0) -> float:
    return 10 * math.log10(w * rho * c * c / P_REF**2)


def power(level: float, rho: float = 1.21, c: float = 343.0) -> float:
    return 4 * math.pi * P_REF**2 * 10 ** (level / 10) / (rho * c)


def exchange(alpha: float, c: float, model: str) -> float:
    if model == "sabine":
        return c * alpha / 4
    if model == "eyring":
        return -c * math.log(1 - min(alpha, 0.9999)) / 4
    return c * alpha / (2 * (2 - alpha))


def dense_matrix(grid, faces, stats, air: AirProperties, band: int, model: str = "sabine"):
    """Loop-based assembly of the finite-volume matrix, one face at a time."""
    dims = grid.dims
    n = int(np.prod(dims))
    idx = lambda i, j, k: (i * dims[1] + j) * dims[2] + k  # noqa: E731
    m = np.zeros((n, n))
    h = grid.h
    area = h * h
    sub = grid.subdomain
    d = {s: st.diffusion for s, st in stats.items()}
    alpha_t = faces.alpha_table[:, band]
    tau_t = faces.tau_table[:, band]
    for i in range(dims[0]):
        for j in range(dims[1]):
            for k in range(dims[2]):
                p = idx(i, j, k)
                if sub[i, j, k] == SOLID:
                    m[p, p] = 1.0
                    continue
                m[p, p] += air.c * air.m[band] * h**3
    for a in range(3):
        for c0 in np.ndindex(*faces.kind[a].shape):
            c1 = list(c0)
            c1[a] += 1
            c1 = tuple(c1)
            kind = faces.kind[a][c0]
            p, q = idx(*c0), idx(*c1)
            if kind in (FLUID, APERTURE):
                d0, d1 = d[sub[c0]], d[sub[c1]]
                g = 2 * d0 * d1 / (d0 + d1) * area / h
                m[p, p] += g
                m[q, q] += g
                m[p, q] -= g
                m[q, p] -= g
            elif kind == PARTITION:
                tau = tau_t[faces.tau[a][c0]]
                t = air.c * tau / 4 * area
                a_lo = min(alpha_t[faces.alpha_lo[a][c0]], 1 - tau)
                a_hi = min(alpha_t[faces.alpha_hi[a][c0]], 1 - tau)
                m[p, p] += exchange(a_lo, air.c, model) * area + t
                m[q, q] += exchange(a_hi, air.c, model) * area + t
                m[p, q] -= t
                m[q, p] -= t
            elif kind == BOUNDARY:
                if sub[c0] != SOLID:
                    m[p, p] += exchange(alpha_t[faces.alpha_lo[a][c0]], air.c, model) * area
                else:
                    m[q, q] += exchange(alpha_t[faces.alpha_hi[a][c0]], air.c, model) * area
        for end, side in enumerate(faces.hull[a]):
            for t_idx in np.ndindex(*side.shape):
                if side[t_idx] < 0:
                    continue
                cell = list(t_idx)
                cell.insert(a, 0 if end == 0 else dims[a] - 1)
                p = idx(*cell)
                m[p, p] += exchange(alpha_t[side[t_idx]], air.c, model) * area
    return m


def trilinear(field, origin, h, points):
    """scipy interpolation between cell centres, clamped at the outermost centres."""
    axes = [origin[a] + (np.arange(field.shape[a]) + 0.5) * h for a in range(3)]
    pts = np.array(points, dtype=float)
    for a in range(3):
        pts[:, a] = np.clip(pts[:, a], axes[a][0], axes[a][-1])
    return RegularGridInterpolator(axes, field, method="linear")(pts)


# --------------------------------------------------------------------------
# small scenes
# --------------------------------------------------------------------------

def small_blind(window_state: str = "closed", occupancy: bool = False,
                wall: str = "hardboard", glass: str = "ordinary_glass") -> BlindSpec:
    return BlindSpec(
        shell=AxisBox((1.0, 1.0, 0.0), (2.0, 2.0, 1.0)),
        windows=(Opening("x+", (1.25, 1.75), (0.25, 0.75), glass, window_state),),
        door=None,
        wall_construction=wall,
        wall_indoor_material="unperforated_wood",
        wall_outdoor_material="chipboard_mineral_wool",
        occupancy=AxisBox((1.25, 1.25, 0.0), (1.5, 1.75, 0.5)) if occupancy else None,
    )


def small_scene(blind: BlindSpec | None = None, sources=None, h: float = 0.25,
                level: float = 70.0, **kw) -> SceneSpec:
    if sources is None:
        pos = (1.6, 1.6, 0.6) if blind is not None else (1.1, 1.1, 0.9)
        sources = (SourceSpec(pos, np.full(N_BANDS, level)),)
    return SceneSpec(
        domain=AxisBox((0, 0, 0), (4.0, 3.0, 2.0)),
        blind=blind, sources=sources,
        receiver=ReceiverLine((2.5, 1.5, 0.2), length=1.5, step=0.5),
        bnl=np.zeros(N_BANDS), mesh_h=h, **kw)


def uniform_db(alpha: float):
    db = default_materials().copy()
    db.register(Material("uniform_test", np.full(N_BANDS, alpha)))
    return db


def sealed_room(size: float = 5.0, alpha: float = 0.1, h: float = 0.25, level: float = 70.0,
                source=None) -> SceneSpec:
    c = size / 2
    return SceneSpec(
        domain=AxisBox((0, 0, 0), (size, size, size)), blind=None,
        sources=(SourceSpec(source or (c, c, c), np.full(N_BANDS, level)),),
        receiver=ReceiverLine((min(h, c), c, c), length=max(size - 2 * h, 0.0), step=h),
        bnl=np.zeros(N_BANDS), ground_material="uniform_test",
        outer_boundary_alpha=np.full(N_BANDS, alpha), mesh_h=h)
