import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blindacoustics.acoustics import SourceSpec, transmission_coefficient
from blindacoustics.scene import (SCENARIO_IDS, AxisBox, BlindSpec, Opening, ReceiverLine,
                                  SceneError, SceneSpec, build_scenario, load_scene, save_scene,
                                  scenario_flags)
from blindacoustics.voxel import (APERTURE, BOUNDARY, EXTERIOR, FLUID, INTERIOR, PARTITION, SOLID,
                                  RefinementError, connected_components, subdomain_stats, voxelize)

import oracles


class TestAxisBox:
    def test_volume_surface(self):
        b = AxisBox((0, 0, 0), (2.5, 3, 2.7))
        assert b.volume == pytest.approx(20.25)
        assert b.surface == pytest.approx(2 * (7.5 + 6.75 + 8.1))

    def test_invalid(self):
        with pytest.raises(SceneError):
            AxisBox((0, 0, 0), (1, 0, 1))


class TestScenarios:
    def test_ss01(self):
        f = scenario_flags("SS01")
        sc = build_scenario("SS01")
        assert (f.windows_open, f.high_tl, f.high_ac, f.speech) == (True, False, False, "loud")
        assert len(sc.sources) == 2
        assert all(w.state == "open" for w in sc.blind.windows)
        assert sc.blind.wall_construction == "hardboard"
        assert sc.blind.wall_indoor_material == "unperforated_wood"

    def test_ms04(self):
        sc = build_scenario("MS04")
        assert all(w.state == "closed" for w in sc.blind.windows)
        assert {w.material for w in sc.blind.windows} == {"ordinary_glass"}
        assert sc.blind.door.material == "hollow_core_door"
        assert len(sc.sources) == 4
        assert all(s.label == "loud" for s in sc.sources)

    def test_ss07(self):
        sc = build_scenario("SS07")
        b = sc.blind
        assert all(w.state == "closed" and w.material == "heavy_glass" for w in b.windows)
        assert b.wall_construction == "single_stud_resilient_wall"
        assert b.door.material == "solid_timber_door"
        assert b.wall_indoor_material == "perforated_wood"

    @pytest.mark.parametrize("sid", SCENARIO_IDS)
    def test_counts_and_geometry(self, sid):
        sc = build_scenario(sid)
        small = sid.startswith("SS")
        assert len(sc.sources) == (2 if small else 4)
        assert len(sc.blind.windows) == (4 if small else 8)
        assert sc.blind.shell.size == pytest.approx((2.5, 3.0 if small else 6.0, 2.7))
        for w in sc.blind.windows:
            assert (w.u[1] - w.u[0], w.v[1] - w.v[0]) == pytest.approx((0.5, 0.4))
        facade = sc.blind.shell.max[0]
        for s in sc.sources:
            assert s.position[2] == 1.0
            assert facade - s.position[0] == pytest.approx(0.5)
            centres = [0.5 * (w.u[0] + w.u[1]) for w in sc.blind.windows]
            assert min(abs(s.position[1] - c) for c in centres) < 1e-9
        assert sc.receiver.start[0] - facade == pytest.approx(1.5)
        assert sc.receiver.start[2] == 0.2
        assert len(sc.receiver.distances) == 61

    @pytest.mark.parametrize("sid", SCENARIO_IDS)
    def test_deterministic(self, sid):
        assert build_scenario(sid).to_dict() == build_scenario(sid).to_dict()

    def test_speech_rows(self):
        assert [scenario_flags(f"SS0{k}").speech for k in range(1, 8)] == \
            ["loud", "normal", "soft", "loud", "loud", "loud", "loud"]

    def test_unknown(self):
        with pytest.raises(SceneError):
            build_scenario("SS08")


class TestSceneValidation:
    def test_opening_outside_face(self):
        with pytest.raises(SceneError):
            BlindSpec(AxisBox((1, 1, 0), (2, 2, 1)), (Opening("x+", (1.5, 2.5), (0.2, 0.6), "ordinary_glass"),),
                      None, "hardboard", "unperforated_wood", "chipboard_mineral_wool")

    def test_overlapping_openings(self):
        w = Opening("x+", (1.2, 1.6), (0.2, 0.6), "ordinary_glass")
        v = Opening("x+", (1.5, 1.9), (0.3, 0.7), "ordinary_glass")
        with pytest.raises(SceneError):
            BlindSpec(AxisBox((1, 1, 0), (2, 2, 1)), (w, v), None, "hardboard", "unperforated_wood",
                      "chipboard_mineral_wool")

    def test_source_outside_blind(self):
        with pytest.raises(SceneError):
            oracles.small_scene(oracles.small_blind(), sources=(SourceSpec((3, 1.5, 0.5), 60.0),))

    def test_blind_not_on_ground(self):
        b = oracles.small_blind()
        lifted = BlindSpec(AxisBox((1, 1, 0.5), (2, 2, 1.5)), (), None, b.wall_construction,
                           b.wall_indoor_material, b.wall_outdoor_material)
        with pytest.raises(SceneError):
            oracles.small_scene(lifted, sources=(SourceSpec((1.5, 1.5, 1.0), 60.0),))

    def test_receiver_outside(self):
        with pytest.raises(SceneError):
            SceneSpec(AxisBox((0, 0, 0), (4, 3, 2)), None, (), ReceiverLine((2.5, 1.5, 0.2), length=5),
                      np.zeros(6))

    def test_json_round_trip(self, tmp_path):
        sc = build_scenario("MS05", mesh_h=0.25)
        path = tmp_path / "s.json"
        save_scene(sc, path)
        again = load_scene(path)
        assert again.to_dict() == sc.to_dict()
        assert json.loads(path.read_text())["blind"]["windows"][0]["face"] == "x+"

    def test_missing_field(self):
        d = build_scenario("SS01").to_dict()
        del d["receiver"]
        with pytest.raises(SceneError, match="receiver"):
            SceneSpec.from_dict(d)

    def test_bad_json(self):
        with pytest.raises(SceneError):
            SceneSpec.from_json("{not json")


class TestVoxelize:
    def test_no_blind(self):
        grid, faces = voxelize(oracles.small_scene(None))
        assert faces.count(PARTITION) == 0 and faces.count(APERTURE) == 0
        assert np.all(grid.subdomain == EXTERIOR)

    def test_ss_window_faces(self):
        sc = build_scenario("SS04", mesh_h=0.1)
        grid, faces = voxelize(sc)
        # four closed windows of 0.5 x 0.4 m at h = 0.1 m
        assert faces.count(PARTITION, tau_label="window:ordinary_glass") == 4 * 20

    def test_ss_interior_cells(self):
        sc = build_scenario("SS04", mesh_h=0.1)
        grid, _ = voxelize(sc)
        occ = sc.blind.occupancy
        occ_cells = round(occ.volume / 0.1**3)
        assert np.count_nonzero(grid.subdomain == INTERIOR) == 25 * 30 * 27 - occ_cells
        assert np.count_nonzero(grid.subdomain == SOLID) == occ_cells

    def test_ss_interior_stats(self):
        sc = build_scenario("SS04", mesh_h=0.1)
        blind = BlindSpec(**{**sc.blind.__dict__, "occupancy": None})
        grid, faces = voxelize(SceneSpec(**{**sc.__dict__, "blind": blind}))
        st_in = subdomain_stats(grid, faces)[INTERIOR]
        assert st_in.volume == pytest.approx(20.25)
        assert st_in.surface == pytest.approx(44.7)
        assert st_in.mean_free_path == pytest.approx(1.8121, abs=1e-4)
        assert st_in.diffusion == pytest.approx(207.18, abs=0.01)

    @pytest.mark.parametrize("h", [0.1, 0.25])
    def test_outdoor_stats_against_analytic(self, h):
        sc = build_scenario("SS04", mesh_h=h)
        grid, faces = voxelize(sc)
        ext = subdomain_stats(grid, faces)[EXTERIOR]
        box, shell = sc.domain, sc.blind.shell
        v = box.volume - shell.volume
        s = box.surface + shell.surface - 2 * shell.size[0] * shell.size[1]
        # one cell volume (area) per cell touching the blind envelope
        n_boundary = round((shell.surface - shell.size[0] * shell.size[1]) / h**2)
        assert ext.volume == pytest.approx(v, abs=n_boundary * h**3)
        assert ext.surface == pytest.approx(s, abs=n_boundary * h**2)
        if h == 0.1:  # the shell is grid-aligned, so the tally is exact
            assert ext.volume == pytest.approx(v, rel=1e-12)
            assert ext.surface == pytest.approx(s, rel=1e-12)

    def test_unit_cube(self):
        sc = oracles.sealed_room(size=1.0, h=0.25)
        grid, faces = voxelize(sc, materials=oracles.uniform_db(0.1))
        st0 = subdomain_stats(grid, faces)[EXTERIOR]
        assert st0.mean_free_path == pytest.approx(4 / 6)

    def test_open_window_modes(self):
        sc = oracles.small_scene(oracles.small_blind("open"))
        _, faces = voxelize(sc, open_window="aperture")
        assert faces.count(APERTURE) == 4
        _, faces = voxelize(sc, open_window="absorber")
        assert faces.count(APERTURE) == 0
        assert faces.count(PARTITION, alpha_label="open:indoor") == 4
        with pytest.raises(SceneError):
            voxelize(sc, open_window="curtain")

    def test_faces_classified(self):
        sc = oracles.small_scene(oracles.small_blind("open", occupancy=True))
        grid, faces = voxelize(sc)
        sub = grid.subdomain
        for a in range(3):
            lo = sub[tuple(slice(0, -1) if i == a else slice(None) for i in range(3))]
            hi = sub[tuple(slice(1, None) if i == a else slice(None) for i in range(3))]
            k = faces.kind[a]
            air_lo, air_hi = lo != SOLID, hi != SOLID
            assert np.all((k == PARTITION) <= ((lo != hi) & air_lo & air_hi))
            assert np.all((k == APERTURE) <= ((lo != hi) & air_lo & air_hi))
            assert np.all((k == FLUID) == ((lo == hi) & air_lo))
            assert np.all((k == BOUNDARY) == (air_lo ^ air_hi))
            # every hull face next to air is absorbing
            for side, end in zip(faces.hull[a], (0, -1)):
                cells = sub[tuple(end if i == a else slice(None) for i in range(3))]
                assert np.all((side >= 0) == (cells != SOLID))

    def test_ground_and_floor_hull(self):
        sc = oracles.small_scene(oracles.small_blind())
        grid, faces = voxelize(sc)
        bottom = faces.hull[2][0]
        labels = np.array(faces.alpha_labels)[bottom]
        assert set(labels[grid.subdomain[:, :, 0] == INTERIOR]) == {"floor"}
        assert set(labels[grid.subdomain[:, :, 0] == EXTERIOR]) == {"ground"}
        assert set(np.array(faces.alpha_labels)[faces.hull[2][1]].ravel()) == {"outer"}

    def test_partition_data(self):
        sc = oracles.small_scene(oracles.small_blind())
        _, faces = voxelize(sc)
        i = faces.tau_labels.index("wall")
        assert np.allclose(faces.tau_table[i], transmission_coefficient([7, 12.5, 19, 23.5, 29, 36.5]))
        j = faces.tau_labels.index("window:ordinary_glass")
        assert np.allclose(faces.tau_table[j], transmission_coefficient([20, 21, 25, 26, 31, 30]))
        # window faces sit on the x+ facade with the indoor side below
        k = faces.kind[0]
        win = (faces.tau[0] == j) & (k == PARTITION)
        assert np.count_nonzero(win) == 4
        assert set(np.array(faces.alpha_labels)[faces.alpha_lo[0][win]]) == {"window:ordinary_glass:indoor"}

    def test_refinement_required(self):
        sc = build_scenario("SS04")
        with pytest.raises(RefinementError):
            voxelize(sc, h=0.5)

    def test_domain_not_multiple(self):
        with pytest.raises(SceneError):
            voxelize(oracles.small_scene(None), h=0.3)

    def test_conservative_volume(self):
        sc = build_scenario("MS04", mesh_h=0.25)
        grid, _ = voxelize(sc)
        assert grid.n_cells * grid.cell_volume == pytest.approx(sc.domain.volume, rel=1e-12)

    @pytest.mark.parametrize("state,components", [("closed", 2), ("open", 1)])
    def test_topology_under_refinement(self, state, components):
        sc = oracles.small_scene(oracles.small_blind(state))
        areas = []
        for h in (0.25, 0.125):
            grid, faces = voxelize(sc, h=h)
            assert connected_components(grid, faces) == components
            areas.append(faces.area(PARTITION) + faces.area(APERTURE))
        perimeter = 4 * 1.0 + 2 * 4 * 1.0
        assert abs(areas[0] - areas[1]) <= 2 * 0.25 * perimeter

    @given(st.sampled_from([0.25, 0.125]), st.floats(1.0, 1.5), st.floats(1.0, 1.5))
    def test_snapping_keeps_cell_totals(self, h, x0, y0):
        blind = BlindSpec(AxisBox((x0, y0, 0.0), (x0 + 1.0, y0 + 1.0, 1.0)), (), None, "hardboard",
                          "unperforated_wood", "chipboard_mineral_wool")
        src = SourceSpec((x0 + 0.5, y0 + 0.5, 0.5), 60.0)
        grid, faces = voxelize(oracles.small_scene(blind, sources=(src,), h=h))
        n_int = np.count_nonzero(grid.subdomain == INTERIOR)
        assert n_int * h**3 == pytest.approx(1.0, abs=1e-9)
        assert faces.count(PARTITION) * h**2 == pytest.approx(5.0)
