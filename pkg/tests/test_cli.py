import csv
import json

import pytest

from gradslice.cli import exit_code_for, main, run_bench
from gradslice.errors import BedBounds, ConfigError, DesignSyntaxError, NoTransition, ResolutionError
from gradslice.fixtures import dogbone_design
from gradslice.gcode import parse_gcode
from gradslice.profile import MachineProfile


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "mix.toml").write_text("syntax = \"mix\"\nv_melt = 68.56\n")
    return tmp_path


def test_exit_code_mapping():
    assert exit_code_for(ConfigError("x")) == 2
    assert exit_code_for(DesignSyntaxError("x")) == 2
    assert exit_code_for(ResolutionError("x")) == 3
    assert exit_code_for(NoTransition("x")) == 3
    assert exit_code_for(BedBounds("x")) == 4


def test_slice_fixture_with_report_and_svg(work):
    rc = main(["slice", "@dogbone", "--max-layers", "2", "--profile", "mix.toml", "-o", "out/d.gcode",
               "--report", "r.json", "--svg", "svg"])
    assert rc == 0
    prog = parse_gcode((work / "out" / "d.gcode").read_text())
    assert prog.extrusion_length() > 0
    report = json.loads((work / "r.json").read_text())
    assert report["layers"] == 2 and report["purge_towers"] == 4
    assert sorted(p.name for p in (work / "svg").iterdir()) == ["layer_0000.svg", "layer_0001.svg"]


def test_slice_design_file(work):
    (work / "d.vcad").write_text(dogbone_design(0.2))
    assert main(["slice", "d.vcad", "--strategy", "2", "--colors", "3", "-o", "d.gcode"]) == 0
    text = (work / "d.gcode").read_text()
    assert text.count(";LAYER:") == 1


@pytest.mark.filterwarnings("ignore::gradslice.toolpath.ShortSegmentWarning")
def test_slice_palette_mesh_fixture(work):
    rc = main(["slice", "@palette", "--max-layers", "1", "--colors", "2", "--perimeters", "1",
               "-o", "p.gcode"])
    assert rc == 0
    assert "M165" in (work / "p.gcode").read_text()


def test_calibration_slice_and_simulate(work):
    assert main(["slice", "--calibration", "--profile", "mix.toml", "--lookahead", "0", "-o", "c0.gcode"]) == 0
    assert main(["slice", "--calibration", "--profile", "mix.toml", "-o", "c1.gcode"]) == 0
    assert main(["simulate", "c0.gcode", "--calibration", "--profile", "mix.toml", "--report", "s0.json",
                 "--table"]) == 0
    assert main(["simulate", "c1.gcode", "--calibration", "--profile", "mix.toml", "--report", "s1.json",
                 "--svg", "sim"]) == 0
    s0 = json.loads((work / "s0.json").read_text())
    s1 = json.loads((work / "s1.json").read_text())
    assert s0["boundary_error"] == pytest.approx(6.4, abs=1e-2)
    assert abs(s1["boundary_error"]) < 0.4
    assert len(s0["table"]) == s0["segments"]
    assert (work / "sim" / "layer_0000.svg").exists()


def test_simulate_stdout(work, capsys):
    (work / "e.gcode").write_text("; nothing\n")
    assert main(["simulate", "e.gcode"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"segments": 0, "volume": 0, "boundary_error": None, "table": []}


def test_preview_modes(work):
    assert main(["preview", "@dogbone", "--max-layers", "1", "--profile", "mix.toml", "-o", "c.svg"]) == 0
    assert main(["preview", "@dogbone", "--max-layers", "1", "--profile", "mix.toml", "--mode", "simulated",
                 "-o", "s.svg"]) == 0
    assert (work / "c.svg").read_text().startswith("<svg")
    assert "polyline" in (work / "s.svg").read_text()
    assert main(["preview", "@dogbone", "--max-layers", "1", "--layer", "5", "-o", "x.svg"]) == 2


def test_bench_small_suite(work):
    (work / "suite.toml").write_text("[[case]]\nstrategy = 1\ncolors = 2\n[[case]]\nstrategy = 2\ncolors = 3\n")
    assert main(["bench", "--suite", "suite.toml", "--max-layers", "1", "-o", "b.csv"]) == 0
    rows = list(csv.DictReader((work / "b.csv").open()))
    assert [r["strategy"] for r in rows] == ["1", "2"]
    assert rows[0]["dimensions"] == "135 x 175 x 2"
    assert rows[0]["zippering"] == "No" and rows[1]["zippering"] == "NA"
    assert all(float(r["seconds"]) > 0 for r in rows)


def test_run_bench_api(work):
    rows = run_bench([("palette", 1, 2, 2.0)], MachineProfile(), max_layers=1)
    assert rows[0]["zippering"] == "Yes" and rows[0]["layers"] == 1


@pytest.mark.parametrize("argv,code", [
    (["slice", "missing.vcad"], 2),
    (["slice", "@nothing"], 2),
    (["simulate", "missing.gcode"], 2),
    (["slice", "bad.vcad"], 2),
    (["slice", "@dogbone", "--max-layers", "1", "--profile", "small.toml"], 3),
    (["slice", "@dogbone", "--max-layers", "1", "--profile", "tiny.toml"], 4),
    (["slice", "@dogbone", "--profile", "nope.toml"], 2),
])
def test_exit_codes(work, capsys, argv, code):
    (work / "bad.vcad").write_text("rectprism(10, 10,;")
    (work / "small.toml").write_text("v_melt = 68.56\nbed_size = [130, 40]\n")
    (work / "tiny.toml").write_text("bed_size = [50, 50]\n")
    assert main(argv) == code
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert set(err) == {"error", "message"}
