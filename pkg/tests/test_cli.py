import json

import pytest

from blindacoustics.analysis import LineProfile
from blindacoustics.cli import main
from blindacoustics.scene import load_scene, save_scene

H = "0.25"


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    """SS04 through the scenario id and through a dumped scene file."""
    base = tmp_path_factory.mktemp("runs")
    assert main(["scenario", "dump", "SS04", "--out", str(base / "ss04.json")]) == 0
    assert main(["run", "--scenario", "SS04", "--h", H, "--out", str(base / "by_id")]) == 0
    assert main(["run", "--scene", str(base / "ss04.json"), "--h", H, "--out", str(base / "by_file")]) == 0
    assert main(["run", "--scenario", "SS04", "--h", H, "--out", str(base / "again")]) == 0
    return base


class TestRun:
    def test_outputs(self, runs):
        d = runs / "by_id"
        lines = (d / "profile.csv").read_text().splitlines()
        assert len(lines) == 1 + 61
        assert lines[1].startswith("0,") and lines[-1].startswith("30,")
        for name in ("crossings.csv", "run_report.json", "scene.json", "slice_z0.2.csv", "slice_z0.2.pgm"):
            assert (d / name).exists()
        rep = json.loads((d / "run_report.json").read_text())
        for band in rep["bands"].values():
            assert {"iterations", "residual", "imbalance", "negative_cells", "seconds"} <= set(band)

    @pytest.mark.parametrize("name", ["profile.csv", "crossings.csv", "slice_z0.2.csv", "slice_z0.2.pgm"])
    def test_round_trip_bit_identical(self, runs, name):
        assert (runs / "by_id" / name).read_bytes() == (runs / "by_file" / name).read_bytes()

    @pytest.mark.parametrize("name", ["profile.csv", "crossings.csv", "slice_z0.2.csv"])
    def test_repeatable(self, runs, name):
        assert (runs / "by_id" / name).read_bytes() == (runs / "again" / name).read_bytes()

    def test_ss07_crossings(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "run", "--scenario", "SS07", "--h", H, "--out", tmp_path,
                               "--no-slices")
        assert code == 0
        rows = (tmp_path / "crossings.csv").read_text().splitlines()[1:]
        crossings = [float(r.split(",")[1]) for r in rows]
        assert len(crossings) == 6 and max(crossings) <= 8.0
        assert not (tmp_path / "slice_z0.2.csv").exists()

    def test_both_inputs(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "run", "--scenario", "SS01", "--scene", tmp_path / "x.json")
        assert code == 2
        assert json.loads(err.strip().splitlines()[-1])["exit_code"] == 2

    def test_no_input(self, capsys):
        code, _, err = run_cli(capsys, "run")
        assert code == 2 and "error" in json.loads(err.strip().splitlines()[-1])

    def test_unknown_scenario(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "run", "--scenario", "SS09", "--out", tmp_path)
        assert code == 2

    def test_unresolvable_mesh(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "run", "--scenario", "SS01", "--h", "0.5", "--out", tmp_path)
        assert code == 2 and "refinement" in json.loads(err.strip().splitlines()[-1])["error"]

    def test_non_convergence(self, tmp_path, capsys):
        scene = tmp_path / "small.json"
        # the shipped preset at h = 0.25, capped at two iterations
        main(["scenario", "dump", "SS04", "--out", str(scene)])
        capsys.readouterr()
        code, _, err = run_cli(capsys, "run", "--scene", scene, "--h", H, "--max-iterations", 2,
                               "--out", tmp_path / "o")
        doc = json.loads(err.strip().splitlines()[-1])
        assert code == 3 and doc["band_hz"] == 125 and doc["residual_tail"]

    def test_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code, _, err = run_cli(capsys, "run", "--scenario", "SS04", "--h", H, "--out", blocker / "sub",
                               "--no-slices")
        assert code == 4

    def test_missing_scene_file(self, tmp_path, capsys):
        code, _, _ = run_cli(capsys, "run", "--scene", tmp_path / "none.json", "--out", tmp_path)
        assert code == 4


class TestCompare:
    def test_identical(self, runs, capsys):
        code, out, _ = run_cli(capsys, "compare", runs / "by_id", runs / "again")
        assert code == 0
        rows = [r.split(",") for r in out.splitlines()[1:62]]
        assert len(rows) == 61 and all(float(v) == 0 for r in rows for v in r[1:])
        assert "mean delta overall 0-10 m: +0.00 dB" in out

    def test_doubled_sources(self, runs, tmp_path, capsys):
        scene = load_scene(runs / "ss04.json")
        save_scene(scene.with_sources(scene.sources * 2), tmp_path / "doubled.json")
        assert main(["run", "--scene", str(tmp_path / "doubled.json"), "--h", H, "--out",
                     str(tmp_path / "doubled"), "--no-slices"]) == 0
        capsys.readouterr()
        code, out, _ = run_cli(capsys, "compare", tmp_path / "doubled", runs / "by_id", "--out",
                               tmp_path / "delta.csv")
        assert code == 0
        rows = [r.split(",") for r in (tmp_path / "delta.csv").read_text().splitlines()[1:]]
        assert all(abs(float(v) - 3.0103) < 1e-5 for r in rows for v in r[1:])

    def test_grid_mismatch(self, runs, tmp_path, capsys):
        prof = LineProfile.from_csv((runs / "by_id" / "profile.csv").read_text())
        short = "\n".join((runs / "by_id" / "profile.csv").read_text().splitlines()[:10]) + "\n"
        (tmp_path / "profile.csv").write_text(short)
        code, _, err = run_cli(capsys, "compare", runs / "by_id", tmp_path)
        assert code == 2 and len(prof.distances) == 61


class TestMaterials:
    def test_show_heavy_glass(self, capsys):
        code, out, _ = run_cli(capsys, "materials", "show", "heavy_glass")
        assert code == 0 and "tl_db    29 34 35 35 34 45" in out

    def test_show_soil(self, capsys):
        code, out, _ = run_cli(capsys, "materials", "show", "soil_vegetation")
        assert "alpha    0.39 0.68 0.78 0.94 0.95 0.83" in out

    def test_list(self, capsys):
        code, out, _ = run_cli(capsys, "materials", "list")
        assert code == 0 and len(out.splitlines()) >= 12

    def test_unknown(self, capsys):
        code, _, err = run_cli(capsys, "materials", "show", "granite")
        assert code == 2 and "available" in json.loads(err.strip().splitlines()[-1])["error"]


class TestScenarioAndValidate:
    def test_dump_stdout(self, capsys):
        code, out, _ = run_cli(capsys, "scenario", "dump", "ms07")
        doc = json.loads(out)
        assert code == 0 and doc["name"] == "MS07" and len(doc["sources"]) == 4

    def test_validate(self, runs, capsys):
        code, out, _ = run_cli(capsys, "validate", runs / "ss04.json", "--h", H)
        assert code == 0 and "subdomain 1" in out

    def test_validate_bad(self, tmp_path, capsys):
        (tmp_path / "bad.json").write_text('{"domain": 1}')
        code, _, err = run_cli(capsys, "validate", tmp_path / "bad.json")
        assert code == 2


@pytest.mark.slow
def test_reproduce_paper(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "reproduce-paper", "--h", H, "--out", tmp_path)
    assert code in (0, 1)
    lines = out.splitlines()
    table = {l.split()[0]: [float(v) for v in l.split()[1:4]] for l in lines if l[:2] in ("SS", "MS")}
    assert len(table) == 14
    ss = [table[f"SS0{k}"][0] for k in (1, 4, 5, 6, 7)]
    assert all(a > b for a, b in zip(ss, ss[1:]))
    for sid in ("SS01", "SS04"):
        assert abs(table["MS" + sid[2:]][0] - table[sid][0] - 3) <= 1.5
    verdicts = [l for l in lines if l.startswith("C")]
    assert [v.split()[0] for v in verdicts] == ["C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8", "C10"]
    assert (tmp_path / "SS01" / "profile.csv").exists()
