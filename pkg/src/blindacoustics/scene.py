"""Declarative scene description and the SS/MS blind scenario presets.

Coordinates are metres with ``z`` up.  The blind's window facade faces
``+x`` and the receiver line runs along ``+x`` from 1.5 m in front of it.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .acoustics import N_BANDS, SourceSpec, as_spectrum, band_sum_db, speech_spectrum

FACES = ("x-", "x+", "y-", "y+", "z+")
"""Blind shell faces that may carry openings (the floor rests on the ground)."""


class SceneError(ValueError):
    """Invalid scene geometry or configuration."""


def _point(p, name="point") -> tuple[float, float, float]:
    out = tuple(float(v) for v in p)
    if len(out) != 3:
        raise SceneError(f"{name} must have three coordinates")
    return out


@dataclass(frozen=True)
class AxisBox:
    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        lo, hi = _point(self.min, "box min"), _point(self.max, "box max")
        if not all(a < b for a, b in zip(lo, hi)):
            raise SceneError(f"box min {lo} must be below max {hi} on every axis")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def size(self) -> tuple[float, float, float]:
        return tuple(b - a for a, b in zip(self.min, self.max))

    @property
    def volume(self) -> float:
        sx, sy, sz = self.size
        return sx * sy * sz

    @property
    def surface(self) -> float:
        sx, sy, sz = self.size
        return 2.0 * (sx * sy + sx * sz + sy * sz)

    def contains(self, p, strict: bool = True) -> bool:
        if strict:
            return all(a < v < b for a, v, b in zip(self.min, p, self.max))
        return all(a <= v <= b for a, v, b in zip(self.min, p, self.max))

    def contains_box(self, other: "AxisBox", strict: bool = False) -> bool:
        if strict:
            return all(a < oa and ob < b for a, oa, ob, b in
                       zip(self.min, other.min, other.max, self.max))
        return all(a <= oa and ob <= b for a, oa, ob, b in
                   zip(self.min, other.min, other.max, self.max))

    def to_dict(self) -> dict:
        return {"min": list(self.min), "max": list(self.max)}

    @classmethod
    def from_dict(cls, d) -> "AxisBox":
        return cls(d["min"], d["max"])


def face_axes(face: str) -> tuple[int, int, int]:
    """(normal axis, first tangential axis, second tangential axis) of a shell face."""
    if face not in FACES:
        raise SceneError(f"unknown face {face!r}; expected one of {FACES}")
    normal = "xyz".index(face[0])
    u, v = (a for a in range(3) if a != normal)
    return normal, u, v


@dataclass(frozen=True)
class Opening:
    """A window or door rectangle on a blind shell face.

    ``u`` and ``v`` are coordinate ranges along the face's two tangential
    axes in increasing axis order (for ``x+``: ``u`` is y, ``v`` is z).
    """

    face: str
    u: tuple[float, float]
    v: tuple[float, float]
    material: str
    state: str = "closed"

    def __post_init__(self):
        face_axes(self.face)
        u = tuple(float(x) for x in self.u)
        v = tuple(float(x) for x in self.v)
        if len(u) != 2 or len(v) != 2 or not (u[0] < u[1] and v[0] < v[1]):
            raise SceneError(f"opening on {self.face}: empty rectangle u={u} v={v}")
        if self.state not in ("open", "closed"):
            raise SceneError(f"opening state must be 'open' or 'closed', got {self.state!r}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def area(self) -> float:
        return (self.u[1] - self.u[0]) * (self.v[1] - self.v[0])

    def overlaps(self, other: "Opening") -> bool:
        if self.face != other.face:
            return False
        return (min(self.u[1], other.u[1]) > max(self.u[0], other.u[0])
                and min(self.v[1], other.v[1]) > max(self.v[0], other.v[0]))

    def to_dict(self) -> dict:
        return {"face": self.face, "u": list(self.u), "v": list(self.v),
                "material": self.material, "state": self.state}

    @classmethod
    def from_dict(cls, d) -> "Opening":
        return cls(d["face"], d["u"], d["v"], d["material"], d.get("state", "closed"))


@dataclass(frozen=True)
class BlindSpec:
    shell: AxisBox
    windows: tuple[Opening, ...]
    door: Opening | None
    wall_construction: str
    wall_indoor_material: str
    wall_outdoor_material: str
    floor_material: str = "linoleum_on_concrete"
    ceiling_indoor_material: str | None = None
    ceiling_outdoor_material: str | None = None
    occupancy: AxisBox | None = None
    occupancy_material: str = "wooden_bench_person"

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        openings = self.openings
        for op in openings:
            lo, hi = self.face_rect(op.face)
            if not (lo[0] <= op.u[0] and op.u[1] <= hi[0] and lo[1] <= op.v[0] and op.v[1] <= hi[1]):
                raise SceneError(f"opening {op.to_dict()} does not lie within face {op.face}")
        for i, a in enumerate(openings):
            for b in openings[i + 1:]:
                if a.overlaps(b):
                    raise SceneError(f"openings overlap on face {a.face}")
        if self.occupancy is not None and not self.shell.contains_box(self.occupancy):
            raise SceneError("occupancy box must lie inside the blind shell")

    @property
    def openings(self) -> tuple[Opening, ...]:
        return self.windows + ((self.door,) if self.door is not None else ())

    @property
    def ceiling_indoor(self) -> str:
        return self.ceiling_indoor_material or self.wall_indoor_material

    @property
    def ceiling_outdoor(self) -> str:
        return self.ceiling_outdoor_material or self.wall_outdoor_material

    def face_rect(self, face: str):
        """Lower and upper (u, v) corners of a shell face."""
        _, u, v = face_axes(face)
        return ((self.shell.min[u], self.shell.min[v]), (self.shell.max[u], self.shell.max[v]))

    def to_dict(self) -> dict:
        return {
            "shell": self.shell.to_dict(),
            "windows": [w.to_dict() for w in self.windows],
            "door": None if self.door is None else self.door.to_dict(),
            "wall_construction": self.wall_construction,
            "wall_indoor_material": self.wall_indoor_material,
            "wall_outdoor_material": self.wall_outdoor_material,
            "floor_material": self.floor_material,
            "ceiling_indoor_material": self.ceiling_indoor_material,
            "ceiling_outdoor_material": self.ceiling_outdoor_material,
            "occupancy": None if self.occupancy is None else self.occupancy.to_dict(),
            "occupancy_material": self.occupancy_material,
        }

    @classmethod
    def from_dict(cls, d) -> "BlindSpec":
        return cls(
            shell=AxisBox.from_dict(d["shell"]),
            windows=tuple(Opening.from_dict(w) for w in d.get("windows", [])),
            door=None if d.get("door") is None else Opening.from_dict(d["door"]),
            wall_construction=d["wall_construction"],
            wall_indoor_material=d["wall_indoor_material"],
            wall_outdoor_material=d["wall_outdoor_material"],
            floor_material=d.get("floor_material", "linoleum_on_concrete"),
            ceiling_indoor_material=d.get("ceiling_indoor_material"),
            ceiling_outdoor_material=d.get("ceiling_outdoor_material"),
            occupancy=None if d.get("occupancy") is None else AxisBox.from_dict(d["occupancy"]),
            occupancy_material=d.get("occupancy_material", "wooden_bench_person"),
        )


@dataclass(frozen=True)
class ReceiverLine:
    """Straight line of receivers, sampled every ``step`` metres over ``length``."""

    start: tuple[float, float, float]
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    length: float = 30.0
    step: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "start", _point(self.start, "receiver start"))
        d = np.asarray(_point(self.direction, "receiver direction"))
        norm = float(np.linalg.norm(d))
        if norm == 0:
            raise SceneError("receiver direction must be non-zero")
        object.__setattr__(self, "direction", tuple(float(x) for x in d / norm))
        if not self.step > 0 or not self.length >= 0:
            raise SceneError("receiver step must be positive and length non-negative")

    @property
    def distances(self) -> np.ndarray:
        n = int(np.floor(self.length / self.step + 1e-9))
        return np.arange(n + 1) * self.step

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.start) + np.outer(self.distances, self.direction)

    def to_dict(self) -> dict:
        return {"start": list(self.start), "direction": list(self.direction),
                "length": self.length, "step": self.step}

    @classmethod
    def from_dict(cls, d) -> "ReceiverLine":
        return cls(d["start"], d.get("direction", (1.0, 0.0, 0.0)),
                   d.get("length", 30.0), d.get("step", 0.5))


@dataclass(frozen=True)
class SceneSpec:
    domain: AxisBox
    blind: BlindSpec | None
    sources: tuple[SourceSpec, ...]
    receiver: ReceiverLine
    bnl: np.ndarray
    ground_material: str = "soil_vegetation"
    outer_boundary_alpha: np.ndarray = field(default_factory=lambda: as_spectrum(1.0))
    mesh_h: float = 0.1
    name: str = "scene"

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "bnl", as_spectrum(self.bnl, "bnl"))
        alpha = as_spectrum(self.outer_boundary_alpha, "outer_boundary_alpha")
        if np.any(alpha < 0) or np.any(alpha > 1):
            raise SceneError("outer_boundary_alpha must lie in [0, 1]")
        object.__setattr__(self, "outer_boundary_alpha", alpha)
        if not self.mesh_h > 0:
            raise SceneError("mesh_h must be positive")
        if self.blind is not None:
            shell = self.blind.shell
            if not (self.domain.contains_box(shell) and shell.min[2] == self.domain.min[2]
                    and all(self.domain.min[a] < shell.min[a] for a in (0, 1))
                    and all(shell.max[a] < self.domain.max[a] for a in range(3))):
                raise SceneError("blind must lie strictly inside the domain, resting on the ground")
        for src in self.sources:
            if not self.domain.contains(src.position):
                raise SceneError(f"source at {src.position} lies outside the domain")
            if self.blind is not None:
                inside = self.blind.shell.contains(src.position)
                occ = self.blind.occupancy
                if occ is not None and occ.contains(src.position, strict=False):
                    raise SceneError(f"source at {src.position} lies inside the occupancy box")
                if not inside:
                    raise SceneError(f"source at {src.position} lies outside the blind interior")
        for p in self.receiver.points:
            if not self.domain.contains(p, strict=False):
                raise SceneError(f"receiver point {tuple(p)} lies outside the domain")

    def with_sources(self, sources) -> "SceneSpec":
        return replace(self, sources=tuple(sources))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "domain": self.domain.to_dict(),
            "ground_material": self.ground_material,
            "outer_boundary_alpha": [float(a) for a in self.outer_boundary_alpha],
            "blind": None if self.blind is None else self.blind.to_dict(),
            "sources": [
                {"position": list(s.position), "level_at_1m": [float(x) for x in s.level_at_1m],
                 "label": s.label}
                for s in self.sources
            ],
            "bnl": [float(b) for b in self.bnl],
            "mesh_h": self.mesh_h,
            "receiver": self.receiver.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "SceneSpec":
        try:
            return cls(
                domain=AxisBox.from_dict(d["domain"]),
                blind=None if d.get("blind") is None else BlindSpec.from_dict(d["blind"]),
                sources=tuple(SourceSpec(s["position"], s["level_at_1m"], s.get("label", ""))
                              for s in d.get("sources", [])),
                receiver=ReceiverLine.from_dict(d["receiver"]),
                bnl=d["bnl"],
                ground_material=d.get("ground_material", "soil_vegetation"),
                outer_boundary_alpha=d.get("outer_boundary_alpha", [1.0] * N_BANDS),
                mesh_h=float(d.get("mesh_h", 0.1)),
                name=d.get("name", "scene"),
            )
        except KeyError as exc:
            raise SceneError(f"scene document is missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, SceneError):
                raise
            raise SceneError(f"invalid scene document: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SceneError(f"scene file is not valid JSON: {exc}") from None
        return cls.from_dict(data)


def load_scene(path) -> SceneSpec:
    return SceneSpec.from_json(Path(path).read_text())


def save_scene(scene: SceneSpec, path) -> None:
    Path(path).write_text(scene.to_json() + "\n")


# --------------------------------------------------------------------------
# scenario presets
# --------------------------------------------------------------------------

SCENARIO_IDS = tuple(f"{size}0{k}" for size in ("SS", "MS") for k in range(1, 8))

# row -> (windows open, high TL, high AC, speech effort)
_SCENARIO_ROWS = {
    1: (True, False, False, "loud"),
    2: (True, False, False, "normal"),
    3: (True, False, False, "soft"),
    4: (False, False, False, "loud"),
    5: (False, False, True, "loud"),
    6: (False, True, False, "loud"),
    7: (False, True, True, "loud"),
}

# (wall construction, window, door)
_LOW_TL = ("hardboard", "ordinary_glass", "hollow_core_door")
_HIGH_TL = ("single_stud_resilient_wall", "heavy_glass", "solid_timber_door")

DOMAIN = AxisBox((0.0, 0.0, 0.0), (35.0, 15.0, 10.0))
BLIND_BACK_X = 0.5
BLIND_DEPTH = 2.5
BLIND_HEIGHT = 2.7
FACADE_X = BLIND_BACK_X + BLIND_DEPTH
WINDOW_WIDTH = 0.5
WINDOW_HEIGHT = 0.4
WINDOW_CENTRE_Z = 1.0
DOOR_WIDTH = 1.0
DOOR_HEIGHT = 2.0
SOURCE_HEIGHT = 1.0
SOURCE_SETBACK = 0.5
RECEIVER_OFFSET = 1.5
RECEIVER_HEIGHT = 0.2
OCCUPANCY_DEPTH = 0.5
OCCUPANCY_HEIGHT = 1.2
OCCUPANCY_SETBACK = 1.0

_SIZES = {
    # width along the facade, window count, source count, bench length
    "SS": (3.0, 4, 2, 2.0),
    "MS": (6.0, 8, 4, 4.0),
}


@dataclass(frozen=True)
class ScenarioFlags:
    size: str
    windows_open: bool
    high_tl: bool
    high_ac: bool
    speech: str

    @property
    def n_sources(self) -> int:
        return _SIZES[self.size][2]


def scenario_flags(scenario_id: str) -> ScenarioFlags:
    m = re.fullmatch(r"(SS|MS)0([1-7])", scenario_id.upper())
    if m is None:
        raise SceneError(f"unknown scenario {scenario_id!r}; expected one of {', '.join(SCENARIO_IDS)}")
    opened, high_tl, high_ac, speech = _SCENARIO_ROWS[int(m.group(2))]
    return ScenarioFlags(m.group(1), opened, high_tl, high_ac, speech)


def default_bnl() -> np.ndarray:
    from .analysis import reference_bnl

    return reference_bnl()


def _window_spans(y0: float, width: float, count: int) -> list[tuple[float, float]]:
    gap = (width - count * WINDOW_WIDTH) / (count + 1)
    spans = []
    for k in range(count):
        lo = y0 + gap * (k + 1) + WINDOW_WIDTH * k
        spans.append((round(lo, 6), round(lo + WINDOW_WIDTH, 6)))
    return spans


def build_scenario(scenario_id: str, mesh_h: float = 0.1) -> SceneSpec:
    """Scene for one analysis of the SS01..MS07 matrix.

    Window state, transmission-loss and absorption variants and the speech
    effort follow the scenario row.  Sources stand 0.5 m behind every second
    window at 1.0 m height.
    """
    flags = scenario_flags(scenario_id)
    width, n_windows, n_sources, bench = _SIZES[flags.size]
    y_mid = 0.5 * (DOMAIN.min[1] + DOMAIN.max[1])
    y0, y1 = y_mid - width / 2, y_mid + width / 2
    shell = AxisBox((BLIND_BACK_X, y0, 0.0), (FACADE_X, y1, BLIND_HEIGHT))

    wall, glass, door_mat = _HIGH_TL if flags.high_tl else _LOW_TL
    lining = "perforated_wood" if flags.high_ac else "unperforated_wood"
    state = "open" if flags.windows_open else "closed"
    z_span = (WINDOW_CENTRE_Z - WINDOW_HEIGHT / 2, WINDOW_CENTRE_Z + WINDOW_HEIGHT / 2)
    spans = _window_spans(y0, width, n_windows)
    windows = tuple(Opening("x+", span, z_span, glass, state) for span in spans)
    door = Opening("x-", (y_mid - DOOR_WIDTH / 2, y_mid + DOOR_WIDTH / 2), (0.0, DOOR_HEIGHT),
                   door_mat, "closed")
    occupancy = AxisBox(
        (FACADE_X - OCCUPANCY_SETBACK - OCCUPANCY_DEPTH, y_mid - bench / 2, 0.0),
        (FACADE_X - OCCUPANCY_SETBACK, y_mid + bench / 2, OCCUPANCY_HEIGHT),
    )
    blind = BlindSpec(
        shell=shell,
        windows=windows,
        door=door,
        wall_construction=wall,
        wall_indoor_material=lining,
        wall_outdoor_material="chipboard_mineral_wool",
        occupancy=occupancy,
    )

    level = speech_spectrum(flags.speech)
    sources = []
    for k in range(n_sources):
        lo, hi = spans[2 * k]
        pos = (FACADE_X - SOURCE_SETBACK, 0.5 * (lo + hi), SOURCE_HEIGHT)
        sources.append(SourceSpec(pos, level, label=flags.speech))

    receiver = ReceiverLine((FACADE_X + RECEIVER_OFFSET, y_mid, RECEIVER_HEIGHT))
    return SceneSpec(
        domain=DOMAIN,
        blind=blind,
        sources=tuple(sources),
        receiver=receiver,
        bnl=default_bnl(),
        mesh_h=mesh_h,
        name=scenario_id.upper(),
    )


def overall_source_level(scene: SceneSpec) -> float:
    """Energetic sum over all sources and bands, dB re 1 m."""
    return band_sum_db([band_sum_db(s.level_at_1m) for s in scene.sources]) if scene.sources else float("-inf")
