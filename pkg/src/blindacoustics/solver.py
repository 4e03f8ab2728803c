"""Steady-state acoustic diffusion solver.

Per octave band we solve the finite-volume form of

    -div(D grad w) + c m w = q

for the energy density ``w`` on the voxel grid.  Each air subdomain has its
own diffusion coefficient ``D = lambda c / 3``.  Faces contribute:

* fluid / aperture faces: ``D_f (w_j - w_i) / h * A`` with ``D_f`` the
  harmonic mean of the two cells' coefficients,
* absorbing faces: an outflux ``A_x(alpha) w A`` (Robin condition),
* partitions: absorption on each side plus the symmetric transmission
  exchange ``c tau / 4 (w_i - w_j) A``.

The resulting matrix is a symmetric M-matrix on a 7-point stencil and is
solved with Jacobi-preconditioned conjugate gradients.
"""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels
from .acoustics import DEFAULT_AIR, N_BANDS, OCTAVE_BANDS, AirProperties, SourceSpec
from .scene import SceneError, SceneSpec
from .voxel import (APERTURE, BOUNDARY, FLUID, PARTITION, SOLID, FaceSet, SubdomainStats,
                    VoxelGrid, subdomain_stats, voxelize)

log = logging.getLogger(__name__)

BOUNDARY_MODELS = ("sabine", "eyring", "modified")
EYRING_ALPHA_MAX = 0.9999


class ConvergenceError(RuntimeError):
    """The iterative solve did not reach the requested tolerance."""

    def __init__(self, message: str, history=(), band: int | None = None):
        super().__init__(message)
        self.history = np.asarray(history)
        self.band = band


def exchange_coefficient(alpha, c: float = DEFAULT_AIR.c, model: str = "sabine"):
    """Wall exchange coefficient in m/s for absorption coefficient ``alpha``.

    ``sabine``: ``c a / 4``; ``eyring``: ``-c ln(1 - a) / 4`` with ``a``
    clamped to 0.9999; ``modified``: ``c a / (2 (2 - a))``.
    """
    a = np.asarray(alpha, dtype=float)
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError("absorption coefficient must lie in [0, 1]")
    if model == "sabine":
        out = c * a / 4.0
    elif model == "eyring":
        out = -c * np.log1p(-np.minimum(a, EYRING_ALPHA_MAX)) / 4.0
    elif model == "modified":
        out = c * a / (2.0 * (2.0 - a))
    else:
        raise ValueError(f"boundary model must be one of {BOUNDARY_MODELS}")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SolveOptions:
    boundary_model: str = "sabine"
    rel_tolerance: float = 1e-8
    max_iterations: int | None = None
    threads: int = 1

    def __post_init__(self):
        if self.boundary_model not in BOUNDARY_MODELS:
            raise ValueError(f"boundary_model must be one of {BOUNDARY_MODELS}")
        if not 0 < self.rel_tolerance < 1:
            raise ValueError("rel_tolerance must lie in (0, 1)")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def iteration_limit(self, n_cells: int) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return max(1, int(10 * math.sqrt(n_cells)))


@dataclass(frozen=True)
class BandSystem:
    """Stencil form of the band matrix plus right-hand side.

    ``cx[i, j, k]`` is the (positive) coupling between cell ``(i, j, k)``
    and ``(i + 1, j, k)``; the matrix entry is its negative.  The last slab
    of each coupling array is zero.  Solid cells carry identity rows.
    """

    band: int
    diag: np.ndarray
    cx: np.ndarray
    cy: np.ndarray
    cz: np.ndarray
    rhs: np.ndarray
    blocks: np.ndarray | None = None  # subdomain id per cell, SOLID for identity rows

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.diag.shape

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return kernels.stencil_matvec(self.diag, self.cx, self.cy, self.cz,
                                      np.ascontiguousarray(x, dtype=float).reshape(self.shape))

    def to_sparse(self) -> sp.csr_matrix:
        """Assembled CSR matrix (for inspection and cross-checks)."""
        shape = self.shape
        n = int(np.prod(shape))
        index = np.arange(n).reshape(shape)
        rows, cols, vals = [index.ravel()], [index.ravel()], [self.diag.ravel()]
        for a, coup in enumerate((self.cx, self.cy, self.cz)):
            sl_lo = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo[a] = slice(0, -1)
            sl_hi[a] = slice(1, None)
            i = index[tuple(sl_lo)].ravel()
            j = index[tuple(sl_hi)].ravel()
            v = -coup[tuple(sl_lo)].ravel()
            rows += [i, j]
            cols += [j, i]
            vals += [v, v]
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n))


@dataclass(frozen=True)
class _FaceTerms:
    coupling: tuple[np.ndarray, ...]       # per axis, face-shaped, m^3/s
    absorb_lo: tuple[np.ndarray, ...]      # absorption conductance seen by the lower cell
    absorb_hi: tuple[np.ndarray, ...]
    hull: tuple[tuple[np.ndarray, np.ndarray], ...]
    air: np.ndarray                        # c m V per cell


def _slab(axis, index):
    sl = [slice(None)] * 3
    sl[axis] = index
    return tuple(sl)


def _check_conforming(grid: VoxelGrid, faces: FaceSet):
    if tuple(faces.dims) != tuple(grid.dims) or faces.h != grid.h:
        raise ValueError("face set does not match the voxel grid")
    for a in range(3):
        expect = list(grid.dims)
        expect[a] -= 1
        for arr in (faces.kind[a], faces.alpha_lo[a], faces.alpha_hi[a], faces.tau[a]):
            if arr.shape != tuple(expect):
                raise ValueError(f"face data on axis {'xyz'[a]} has shape {arr.shape}, expected {tuple(expect)}")


def cell_diffusion(grid: VoxelGrid, stats: dict[int, SubdomainStats]) -> np.ndarray:
    d = np.zeros(grid.dims)
    for s, st in stats.items():
        d[grid.subdomain == s] = st.diffusion
    return d


def _face_terms(grid: VoxelGrid, faces: FaceSet, stats, air: AirProperties, band: int,
                model: str) -> _FaceTerms:
    _check_conforming(grid, faces)
    area = grid.face_area
    alpha = faces.alpha_table[:, band]
    tau = faces.tau_table[:, band]
    ex = exchange_coefficient(alpha, air.c, model)
    # partition sides cannot absorb more than the energy not transmitted
    ex_part = np.zeros((len(alpha), len(tau)))
    for t in range(len(tau)):
        ex_part[:, t] = exchange_coefficient(np.minimum(alpha, 1.0 - tau[t]), air.c, model)
    trans = air.c * tau / 4.0
    d = cell_diffusion(grid, stats)

    coupling, absorb_lo, absorb_hi = [], [], []
    for a in range(3):
        k = faces.kind[a]
        d_lo, d_hi = d[_slab(a, slice(0, -1))], d[_slab(a, slice(1, None))]
        conn = (k == FLUID) | (k == APERTURE)
        with np.errstate(invalid="ignore", divide="ignore"):
            d_face = np.where(conn, 2.0 * d_lo * d_hi / (d_lo + d_hi), 0.0)
        coup = d_face * grid.h  # D A / h
        part = k == PARTITION
        t_idx = faces.tau[a]
        coup = np.where(part, trans[t_idx] * area, coup)
        lo_abs = np.zeros(k.shape)
        hi_abs = np.zeros(k.shape)
        lo_abs[part] = ex_part[faces.alpha_lo[a][part], t_idx[part]] * area
        hi_abs[part] = ex_part[faces.alpha_hi[a][part], t_idx[part]] * area
        bnd = k == BOUNDARY
        lo_abs[bnd] = ex[faces.alpha_lo[a][bnd]] * area
        hi_abs[bnd] = ex[faces.alpha_hi[a][bnd]] * area
        coupling.append(coup)
        absorb_lo.append(lo_abs)
        absorb_hi.append(hi_abs)

    hull = []
    for a in range(3):
        pair = []
        for side in faces.hull[a]:
            pair.append(np.where(side >= 0, ex[np.maximum(side, 0)] * area, 0.0))
        hull.append(tuple(pair))
    air_loss = np.where(grid.subdomain != SOLID, air.c * air.m[band] * grid.cell_volume, 0.0)
    return _FaceTerms(tuple(coupling), tuple(absorb_lo), tuple(absorb_hi), tuple(hull), air_loss)


def _source_rhs(grid: VoxelGrid, sources: Sequence[tuple[tuple[float, float, float], float]]):
    rhs = np.zeros(grid.dims)
    for pos, power in sources:
        idx = grid.locate(pos)
        if grid.subdomain[idx] == SOLID:
            raise SceneError(f"source at {tuple(pos)} falls in a solid cell")
        rhs[idx] += power
    return rhs


def assemble(grid: VoxelGrid, faces: FaceSet, stats: dict[int, SubdomainStats],
             air: AirProperties = DEFAULT_AIR, band: int = 0,
             options: SolveOptions = SolveOptions(),
             sources: Sequence[tuple[tuple[float, float, float], float]] = ()) -> BandSystem:
    """Finite-volume system for one band.

    ``band`` is the band index (0 = 125 Hz).  ``sources`` is a sequence of
    ``(position, power_W)`` pairs; each power is deposited in the containing cell.
    """
    terms = _face_terms(grid, faces, stats, air, band, options.boundary_model)
    diag = terms.air.copy()
    coup_full = []
    for a in range(3):
        c = terms.coupling[a]
        diag[_slab(a, slice(0, -1))] += c + terms.absorb_lo[a]
        diag[_slab(a, slice(1, None))] += c + terms.absorb_hi[a]
        lo_end, hi_end = terms.hull[a]
        diag[_slab(a, 0)] += lo_end
        diag[_slab(a, -1)] += hi_end
        full = np.zeros(grid.dims)
        full[_slab(a, slice(0, -1))] = c
        coup_full.append(full)
    solid = grid.subdomain == SOLID
    diag[solid] = 1.0
    rhs = _source_rhs(grid, sources)
    if np.any(diag[~solid] <= 0):
        raise SceneError("air region without any absorption: the steady state does not exist")
    return BandSystem(band, diag, coup_full[0], coup_full[1], coup_full[2], rhs, grid.subdomain)


@dataclass
class BandDiagnostics:
    band_hz: int
    iterations: int
    residual: float
    negative_cells: int
    min_before_clamp: float
    max_value: float
    seconds: float
    backend: str
    block_residual: float = 0.0
    imbalance: float | None = None
    history: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("history")
        return d


def block_residuals(system: BandSystem, x: np.ndarray, r: np.ndarray) -> dict[int, float]:
    """Relative residual restricted to each subdomain.

    Each block is scaled by its own energy flow ``||diag * x|| + ||b||``, so a
    weakly coupled exterior is held to the same relative accuracy as the
    source room even when its energy is many decades smaller.
    """
    if system.blocks is None:
        ids, masks = [0], [np.ones(system.shape, dtype=bool)]
    else:
        ids = [int(s) for s in np.unique(system.blocks) if s != SOLID]
        masks = [system.blocks == s for s in ids]
    out = {}
    for s, m in zip(ids, masks):
        scale = float(np.linalg.norm(system.diag[m] * x[m])) + float(np.linalg.norm(system.rhs[m]))
        rn = float(np.linalg.norm(r[m]))
        out[s] = rn / scale if scale > 0 else (0.0 if rn == 0 else np.inf)
    return out


def solve_band(system: BandSystem, options: SolveOptions = SolveOptions(),
               backend=None) -> tuple[np.ndarray, BandDiagnostics]:
    """Solve one band system; returns the clamped field and diagnostics.

    Converged means the global relative residual ``||r|| / ||b||`` and every
    subdomain's block residual (see :func:`block_residuals`) are at most
    ``options.rel_tolerance``.  Raises :class:`ConvergenceError` otherwise.
    """
    kern = backend or kernels
    t0 = time.perf_counter()
    band_hz = OCTAVE_BANDS[system.band]
    shape = system.shape
    n = int(np.prod(shape))
    maxit = options.iteration_limit(n)
    tol = options.rel_tolerance
    x = np.zeros(shape)
    b = system.rhs
    bnorm = float(np.linalg.norm(b))
    history: list[np.ndarray] = []
    used = 0
    residual = 0.0
    worst = 0.0
    if bnorm > 0:
        inner_tol = tol
        for _restart in range(16):
            it, hist = kern.pcg(system.diag, system.cx, system.cy, system.cz, b, x, inner_tol,
                                maxit - used)
            used += int(it)
            history.append(hist if not history else hist[1:])
            r = b - kern.stencil_matvec(system.diag, system.cx, system.cy, system.cz, x)
            residual = float(np.linalg.norm(r)) / bnorm
            worst = max(block_residuals(system, x, r).values())
            if (residual <= tol and worst <= tol) or used >= maxit:
                break
            # tighten the global target until the weakest block is resolved
            reached = min(inner_tol, float(hist[-1]))
            inner_tol = max(reached * min(1.0, tol / max(worst, residual)) * 0.5, 1e-300)
        hist_all = np.concatenate(history)
        if not (residual <= tol and worst <= tol):
            raise ConvergenceError(
                f"{band_hz} Hz band: relative residual {residual:.3e} (worst subdomain "
                f"{worst:.3e}) > {tol:.1e} after {used} iterations", hist_all, band_hz)
    else:
        hist_all = np.zeros(1)
    xmin = float(x.min())
    negative = int(np.count_nonzero(x < 0))
    if negative:
        log.debug("%d Hz: clamping %d negative cells (min %.3e)", band_hz, negative, xmin)
        np.maximum(x, 0.0, out=x)
    diag = BandDiagnostics(band_hz, used, residual, negative, xmin, float(x.max()), time.perf_counter() - t0,
                           kern.BACKEND, block_residual=worst, history=hist_all)
    return x, diag


@dataclass
class FieldSolution:
    """Per-band steady-state energy density (J/m^3) on every cell."""

    grid: VoxelGrid
    faces: FaceSet
    stats: dict[int, SubdomainStats]
    w: np.ndarray  # shape (N_BANDS, *dims)
    injected: np.ndarray  # source power per band, W
    diagnostics: list[BandDiagnostics]
    options: SolveOptions
    air: AirProperties = DEFAULT_AIR

    def band(self, index: int) -> np.ndarray:
        return self.w[index]

    def run_report(self) -> dict:
        return {
            "backend": kernels.BACKEND,
            "boundary_model": self.options.boundary_model,
            "rel_tolerance": self.options.rel_tolerance,
            "h": self.grid.h,
            "dims": list(self.grid.dims),
            "subdomains": {str(k): asdict(v) for k, v in self.stats.items()},
            "bands": {str(d.band_hz): d.to_dict() for d in self.diagnostics},
        }

    def run_report_json(self) -> str:
        return json.dumps(self.run_report(), indent=2)


def source_powers(sources: Sequence[SourceSpec], air: AirProperties = DEFAULT_AIR,
                  radiation: str = "spherical") -> list[tuple[tuple[float, float, float], np.ndarray]]:
    return [(s.position, s.power(air, radiation)) for s in sources]


def solve_all_bands(grid: VoxelGrid, faces: FaceSet, sources: Sequence[SourceSpec],
                    air: AirProperties = DEFAULT_AIR, options: SolveOptions = SolveOptions(),
                    radiation: str = "spherical", stats: dict[int, SubdomainStats] | None = None,
                    backend=None) -> FieldSolution:
    """Six independent band solves with the sources' band powers."""
    stats = stats if stats is not None else subdomain_stats(grid, faces, air)
    powers = source_powers(sources, air, radiation)

    def one(b):
        system = assemble(grid, faces, stats, air, b, options,
                          [(pos, float(p[b])) for pos, p in powers])
        try:
            w, diag = solve_band(system, options, backend)
        except ConvergenceError as exc:
            exc.band = OCTAVE_BANDS[b]
            raise
        diag.imbalance = None
        return w, diag

    if options.threads > 1:
        with ThreadPoolExecutor(max_workers=options.threads) as pool:
            results = list(pool.map(one, range(N_BANDS)))
    else:
        results = [one(b) for b in range(N_BANDS)]
    w = np.stack([r[0] for r in results])
    injected = np.array([sum(float(p[b]) for _, p in powers) for b in range(N_BANDS)])
    sol = FieldSolution(grid, faces, stats, w, injected, [r[1] for r in results], options, air)
    for b, bal in enumerate(energy_balance(sol)):
        sol.diagnostics[b].imbalance = bal.imbalance
    return sol


@dataclass(frozen=True)
class EnergyBalance:
    band_hz: int
    injected: float
    absorbed: dict[str, float]
    transmitted: float
    imbalance: float

    @property
    def absorbed_total(self) -> float:
        return float(sum(self.absorbed.values()))


def energy_balance(solution: FieldSolution, faces: FaceSet | None = None,
                   air: AirProperties | None = None) -> list[EnergyBalance]:
    """Audit of injected vs absorbed power per band.

    Absorption is grouped by surface label (``"ground"``, ``"wall:indoor"``,
    ...).  ``transmitted`` is the net power crossing from the blind interior
    to the exterior through partitions and apertures; it is an internal
    transfer and does not enter the balance.
    """
    faces = faces or solution.faces
    air = air or solution.air
    grid = solution.grid
    labels = faces.alpha_labels
    out = []
    for b in range(N_BANDS):
        w = solution.w[b]
        terms = _face_terms(grid, faces, solution.stats, air, b, solution.options.boundary_model)
        absorbed = np.zeros(len(labels))
        transmitted = 0.0
        for a in range(3):
            w_lo, w_hi = w[_slab(a, slice(0, -1))], w[_slab(a, slice(1, None))]
            absorbed += np.bincount(faces.alpha_lo[a].ravel(), (terms.absorb_lo[a] * w_lo).ravel(),
                                    minlength=len(labels))
            absorbed += np.bincount(faces.alpha_hi[a].ravel(), (terms.absorb_hi[a] * w_hi).ravel(),
                                    minlength=len(labels))
            for end, side in enumerate(faces.hull[a]):
                w_end = w[_slab(a, 0 if end == 0 else -1)]
                absorbed += np.bincount(np.maximum(side, 0).ravel(), (terms.hull[a][end] * w_end).ravel(),
                                        minlength=len(labels))
            k = faces.kind[a]
            sub_lo = grid.subdomain[_slab(a, slice(0, -1))]
            sub_hi = grid.subdomain[_slab(a, slice(1, None))]
            crossing = ((k == PARTITION) | (k == APERTURE)) & (sub_lo != sub_hi)
            flux = terms.coupling[a] * (w_lo - w_hi)  # lower -> upper
            sign = np.where(sub_lo == 1, 1.0, -1.0)
            transmitted += float(np.sum((flux * sign)[crossing]))
        result = {lab: float(v) for lab, v in zip(labels, absorbed) if lab != "none"}
        air_loss = float(np.sum(terms.air * w))
        if air_loss:
            result["air"] = air_loss
        injected = float(solution.injected[b])
        total = sum(result.values())
        imbalance = abs(injected - total) / injected if injected > 0 else 0.0
        out.append(EnergyBalance(OCTAVE_BANDS[b], injected, result, transmitted, imbalance))
    return out


def simulate(scene: SceneSpec, h: float | None = None, open_window: str = "aperture",
             options: SolveOptions = SolveOptions(), air: AirProperties = DEFAULT_AIR,
             radiation: str = "spherical", materials=None) -> FieldSolution:
    """Voxelize ``scene`` and solve all bands."""
    grid, faces = voxelize(scene, h, open_window, materials)
    return solve_all_bands(grid, faces, scene.sources, air, options, radiation)
