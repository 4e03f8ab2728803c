"""Octave bands, materials and decibel arithmetic.

All spectral quantities are carried as float arrays of length six, one
value per octave band from 125 Hz to 4000 Hz.  Helpers here validate and
freeze those arrays so they can be shared safely.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

log = logging.getLogger(__name__)

OCTAVE_BANDS: tuple[int, ...] = (125, 250, 500, 1000, 2000, 4000)
N_BANDS = len(OCTAVE_BANDS)

P_REF = 2e-5
"""Reference sound pressure in Pa."""

ENERGY_FLOOR = 1e-20
"""Default energy density floor (J/m^3) applied before taking logs."""

SPEECH_CLASSES = ("soft", "normal", "loud")


class MaterialError(KeyError):
    """Raised for unknown material names or malformed material records."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


def as_spectrum(values, name: str = "spectrum") -> np.ndarray:
    """Return ``values`` as a read-only float array with one entry per band.

    Scalars are broadcast to all six bands.
    """
    arr = np.array(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(N_BANDS, float(arr))
    if arr.shape != (N_BANDS,):
        raise ValueError(f"{name}: expected {N_BANDS} band values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: band values must be finite")
    arr.setflags(write=False)
    return arr


def band_index(frequency: int) -> int:
    try:
        return OCTAVE_BANDS.index(int(frequency))
    except ValueError:
        raise ValueError(f"{frequency} Hz is not an octave band centre {OCTAVE_BANDS}") from None


# --------------------------------------------------------------------------
# decibel arithmetic and energy conversions
# --------------------------------------------------------------------------

def transmission_coefficient(tl_db):
    """Energy transmission coefficient ``10**(-TL/10)`` for a transmission loss in dB."""
    tl = np.asarray(tl_db, dtype=float)
    if np.any(tl < 0) or not np.all(np.isfinite(tl)):
        raise ValueError("transmission loss must be finite and non-negative")
    tau = 10.0 ** (-tl / 10.0)
    return float(tau) if tau.ndim == 0 else tau


def band_sum_db(levels, axis: int = -1):
    """Energetic sum of band levels, ``10*log10(sum(10**(L/10)))``.

    ``-inf`` entries contribute nothing, so they can be used to switch bands off.
    """
    levels = np.asarray(levels, dtype=float)
    if np.any(np.isnan(levels)) or np.any(levels == np.inf):
        raise ValueError("band levels must be finite or -inf")
    # factor out the maximum to keep 10**(L/10) in range
    top = np.max(levels, axis=axis, keepdims=True)
    safe_top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        total = np.sum(10.0 ** ((levels - safe_top) / 10.0), axis=axis, keepdims=True)
        out = safe_top + 10.0 * np.log10(total)
    out = np.squeeze(out, axis=axis)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AirProperties:
    """Propagation medium.

    Parameters
    ----------
    c : float
        Speed of sound in m/s.
    rho : float
        Density in kg/m^3.
    m : array_like
        Per-band atmospheric energy attenuation coefficient in 1/m.
    """

    c: float = 343.0
    rho: float = 1.21
    m: np.ndarray = field(default_factory=lambda: as_spectrum(0.0, "m"))

    def __post_init__(self):
        object.__setattr__(self, "m", as_spectrum(self.m, "m"))
        if not self.c > 0 or not self.rho > 0:
            raise ValueError("speed of sound and density must be positive")
        if np.any(self.m < 0):
            raise ValueError("attenuation coefficients must be non-negative")

    @property
    def impedance(self) -> float:
        return self.rho * self.c


DEFAULT_AIR = AirProperties()


def spl_from_energy_density(w, air: AirProperties = DEFAULT_AIR, floor: float = ENERGY_FLOOR):
    """Sound pressure level in dB from diffuse-field energy density ``w`` (J/m^3).

    Uses ``p^2 = w * rho * c^2``.  Values below ``floor`` are clamped to it.
    """
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("energy density must be non-negative")
    p2 = np.maximum(w, floor) * air.rho * air.c**2
    spl = 10.0 * np.log10(p2 / P_REF**2)
    return float(spl) if spl.ndim == 0 else spl


def energy_density_from_spl(spl, air: AirProperties = DEFAULT_AIR):
    """Inverse of :func:`spl_from_energy_density` above the floor."""
    spl = np.asarray(spl, dtype=float)
    w = P_REF**2 * 10.0 ** (spl / 10.0) / (air.rho * air.c**2)
    return float(w) if w.ndim == 0 else w


RADIATION_SOLID_ANGLE = {"spherical": 4.0 * math.pi, "hemispherical": 2.0 * math.pi}


def source_power_from_spl1m(level_at_1m, air: AirProperties = DEFAULT_AIR,
                            radiation: str = "spherical"):
    """Sound power (W) of a point source producing ``level_at_1m`` dB SPL at 1 m.

    Free-field radiation over the full sphere by default, ``W = 4*pi*p^2/(rho*c)``.
    ``radiation="hemispherical"`` uses ``2*pi`` (3 dB less power for the same level).
    """
    try:
        omega = RADIATION_SOLID_ANGLE[radiation]
    except KeyError:
        raise ValueError(f"radiation must be one of {sorted(RADIATION_SOLID_ANGLE)}") from None
    level = np.asarray(level_at_1m, dtype=float)
    if not np.all(np.isfinite(level)):
        raise ValueError("source level must be finite")
    power = omega * P_REF**2 * 10.0 ** (level / 10.0) / air.impedance
    return float(power) if power.ndim == 0 else power


# --------------------------------------------------------------------------
# materials
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Material:
    """Per-band absorption and (optionally) transmission loss of a surface.

    ``alpha`` may be ``None`` for constructions that are only tabulated by
    their transmission loss (e.g. a wall build-up whose faces are lined with
    other materials).
    """

    name: str
    alpha: np.ndarray | None
    tl_db: np.ndarray | None = None
    description: str = ""

    def __post_init__(self):
        if self.alpha is None and self.tl_db is None:
            raise ValueError(f"material {self.name!r} needs alpha and/or tl_db")
        if self.alpha is not None:
            alpha = as_spectrum(self.alpha, f"{self.name}.alpha")
            if np.any(alpha < 0) or np.any(alpha > 1):
                raise ValueError(f"material {self.name!r}: alpha must lie in [0, 1]")
            object.__setattr__(self, "alpha", alpha)
        if self.tl_db is not None:
            tl = as_spectrum(self.tl_db, f"{self.name}.tl_db")
            if np.any(tl < 0):
                raise ValueError(f"material {self.name!r}: transmission loss must be >= 0")
            object.__setattr__(self, "tl_db", tl)
            if self.alpha is not None and np.any(self.alpha + self.tau > 1 + 1e-12):
                raise ValueError(
                    f"material {self.name!r}: absorbed plus transmitted fraction exceeds 1"
                )

    @property
    def tau(self) -> np.ndarray | None:
        if self.tl_db is None:
            return None
        return transmission_coefficient(self.tl_db)

    def to_dict(self) -> dict:
        return {
            "description": self.description,
            "alpha": None if self.alpha is None else [float(a) for a in self.alpha],
            "tl_db": None if self.tl_db is None else [float(t) for t in self.tl_db],
        }


def _material_from_record(name: str, record: Mapping) -> Material:
    alpha = record.get("alpha")
    if alpha is not None:
        alpha = np.array(alpha, dtype=float)
        if np.any(alpha > 1):
            bands = [OCTAVE_BANDS[i] for i in np.flatnonzero(alpha > 1)]
            log.warning("material %r: absorption coefficient above 1 at %s Hz clamped to 1.0",
                        name, bands)
            alpha = np.minimum(alpha, 1.0)
    return Material(name, alpha, record.get("tl_db"), record.get("description", ""))


class MaterialDatabase:
    """Name -> :class:`Material` registry backed by a JSON document.

    The JSON layout is ``{name: {"alpha": [6 numbers] | null,
    "tl_db": [6 numbers] | null, "description": str}}`` with bands ordered
    125 Hz to 4000 Hz.
    """

    def __init__(self, materials: Iterable[Material] = ()):
        self._materials: dict[str, Material] = {}
        for mat in materials:
            self.register(mat)

    @classmethod
    def from_json(cls, source) -> "MaterialDatabase":
        if isinstance(source, (str, Path)):
            data = json.loads(Path(source).read_text())
        else:
            data = dict(source)
        return cls(_material_from_record(name, rec) for name, rec in data.items())

    def register(self, material: Material, replace: bool = False) -> None:
        if material.name in self._materials and not replace:
            raise ValueError(f"material {material.name!r} already registered")
        self._materials[material.name] = material

    def lookup(self, name: str) -> Material:
        try:
            return self._materials[name]
        except KeyError:
            raise MaterialError(
                f"unknown material {name!r}; available: {', '.join(self.names())}"
            ) from None

    __getitem__ = lookup

    def __contains__(self, name) -> bool:
        return name in self._materials

    def __len__(self) -> int:
        return len(self._materials)

    def names(self) -> list[str]:
        return sorted(self._materials)

    def copy(self) -> "MaterialDatabase":
        return MaterialDatabase(self._materials.values())

    def to_json(self) -> str:
        return json.dumps({n: self._materials[n].to_dict() for n in self.names()}, indent=2)


def _data_text(filename: str) -> str:
    return resources.files("blindacoustics").joinpath("data", filename).read_text()


@lru_cache(maxsize=None)
def default_materials() -> MaterialDatabase:
    """The built-in database with the blind construction materials."""
    return MaterialDatabase.from_json(json.loads(_data_text("materials.json")))


def material_lookup(name: str, database: MaterialDatabase | None = None) -> Material:
    return (database or default_materials()).lookup(name)


# --------------------------------------------------------------------------
# sources
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _speech_table() -> dict:
    return json.loads(_data_text("speech_spectra.json"))["classes"]


def speech_spectrum(effort: str) -> np.ndarray:
    """Shipped octave-band levels at 1 m (dB) for a speech effort class."""
    try:
        return as_spectrum(_speech_table()[effort]["levels_db"], effort)
    except KeyError:
        raise ValueError(f"speech class must be one of {SPEECH_CLASSES}") from None


def speech_overall_db(effort: str) -> float:
    return float(_speech_table()[effort]["overall_db"])


@dataclass(frozen=True)
class SourceSpec:
    """Omnidirectional point source.

    ``level_at_1m`` holds the free-field band levels in dB SPL at 1 m.
    """

    position: tuple[float, float, float]
    level_at_1m: np.ndarray
    label: str = ""

    def __post_init__(self):
        pos = tuple(float(p) for p in self.position)
        if len(pos) != 3 or not all(math.isfinite(p) for p in pos):
            raise ValueError("source position must be three finite coordinates")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "level_at_1m", as_spectrum(self.level_at_1m, "level_at_1m"))

    @classmethod
    def speech(cls, position, effort: str) -> "SourceSpec":
        return cls(position, speech_spectrum(effort), label=effort)

    @property
    def overall_db(self) -> float:
        return band_sum_db(self.level_at_1m)

    def power(self, air: AirProperties = DEFAULT_AIR, radiation: str = "spherical") -> np.ndarray:
        return source_power_from_spl1m(self.level_at_1m, air, radiation)
