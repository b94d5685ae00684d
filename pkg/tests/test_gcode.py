import math
import re
import warnings

import numpy as np
import pytest

from gradslice.errors import BedBounds, GcodeParseError, InvalidBead, OutOfRange, StateMissing
from gradslice.fixtures import dogbone_design
from gradslice.gcode import (capsule_area, emit_gcode, emit_layer_svg, filament_area, flow_percent,
                             lookahead_distance, parse_gcode, state_commands, state_fraction)
from gradslice.palette import MixState, blend_hex, TemperatureState, ToolState, build_palette
from gradslice.profile import MachineProfile
from gradslice.slicer import GradientSlicer
from gradslice.strategy import Extrude, LayerPlan, SetState
from gradslice.toolpath import PrintSettings, ToolPath

from conftest import V_960


def pla(t):
    # reference cubic, evaluated term by term
    return 100 * (8.35479e-6 * t ** 3 - 5.37075e-3 * t ** 2 + 1.13374 * t - 77.814)


def straight_plan(length=10.0, color=0, x0=0.0):
    return [LayerPlan(0.1, 0, [SetState(color), Extrude(ToolPath([[x0, 0], [x0 + length, 0]], "infill",
                                                                 color=color))])]


def test_capsule_area():
    assert capsule_area(0.2, 0.4) == pytest.approx(0.04 + math.pi * 0.01, abs=1e-12)
    assert capsule_area(0.2, 0.2) == pytest.approx(math.pi * 0.01, abs=1e-12)
    with pytest.raises(InvalidBead):
        capsule_area(0.2, 0.1)
    with pytest.raises(InvalidBead):
        capsule_area(0.0, 0.4)


def test_lookahead_distance():
    a = 0.2 * 0.2 + math.pi * 0.2 ** 2 / 4
    assert lookahead_distance(V_960, 0.2, 0.4) == V_960 / a
    assert lookahead_distance(0.0, 0.2, 0.4) == 0.0
    assert lookahead_distance(V_960, 0.2, 0.4) == pytest.approx(960, abs=0.1)


def test_flow_polynomials():
    for t in (190, 200, 225, 240):
        assert flow_percent(t, "PLA") == pytest.approx(pla(t), rel=1e-12)
    assert flow_percent(210, "TPU") == pytest.approx(100 * (3.09637e-4 * 210 ** 2 - 1.38401e-1 * 210 + 15.9560))
    ts = np.linspace(190, 225, 200)
    vals = [flow_percent(t, "pla") for t in ts]
    assert np.all(np.diff(vals) < 0)
    with pytest.raises(OutOfRange):
        flow_percent(250, "PLA")
    with pytest.raises(ValueError):
        flow_percent(200, "ABS")


def test_state_commands():
    prof = MachineProfile(syntax="temperature", flow_material="PLA")
    assert state_commands(MixState((0.25, 0.75)), prof) == ["M165 A0.250 B0.750"]
    assert state_commands(ToolState(4), prof) == ["T4"]
    assert state_commands(TemperatureState(225.0), prof) == ["M104 S225", f"M221 T0 S{pla(225):.1f}"]
    assert state_commands(TemperatureState(207.5), MachineProfile(syntax="temperature")) == ["M104 S207.5"]


def test_delta_e_for_10mm_move():
    text = emit_gcode(straight_plan(10.0), MachineProfile(), PrintSettings(), build_palette(1), (100, 100))
    e = [float(m) for m in re.findall(r"^G1 X[\d.]+ Y[\d.]+ E([\d.]+)", text, re.M)]
    assert e == [pytest.approx(0.29692, abs=1e-4)]
    ratio = capsule_area(0.2, 0.4) / (math.pi * 0.875 ** 2)
    assert e[0] == pytest.approx(10 * ratio, abs=1e-5)


def test_layer_header_and_feeds():
    text = emit_gcode(straight_plan(10.0), MachineProfile(), PrintSettings(), build_palette(1), (100, 100))
    lines = text.splitlines()
    k = lines.index(";LAYER:0")
    assert lines[k + 1] == "G1 Z0.200 F6000"
    assert lines[k + 2] == "G92 E0"
    assert "M165 A0.500 B0.500" in lines
    assert "G0 X100.000 Y100.000 F6000" in lines
    assert lines[-1] == "M84"


def test_bed_bounds():
    with pytest.raises(BedBounds):
        emit_gcode(straight_plan(10.0, x0=295), MachineProfile(), PrintSettings(), build_palette(1))


def test_state_missing():
    plans = [LayerPlan(0.1, 0, [Extrude(ToolPath([[0, 0], [1, 0]], color=0))])]
    with pytest.raises(StateMissing):
        emit_gcode(plans, MachineProfile(), PrintSettings(), build_palette(1), (10, 10))


def test_parse_errors():
    with pytest.raises(GcodeParseError):
        parse_gcode(";LAYER:x\n")
    with pytest.raises(GcodeParseError):
        parse_gcode("G1 X=abc\n")
    with pytest.raises(GcodeParseError):
        parse_gcode("M165 A0 B0\n")


def test_parse_relative_and_absolute_e():
    prog = parse_gcode("M83\nT1\nG1 X1 Y0 E0.5\nG1 X2 Y0 E0.5\nM82\nG92 E0\nG1 X3 Y0 E1.0\n")
    assert [m.de for m in prog.moves] == [0.5, 0.5, 1.0]
    assert prog.states == [ToolState(1)]
    assert prog.extrusion_length() == pytest.approx(3.0)


@pytest.fixture(scope="module")
def dogbone_fit():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return GradientSlicer(strategy=1, n_colors=4, profile=MachineProfile(v_melt=V_960),
                              max_layers=2).fit(dogbone_design(0.4))


def test_roundtrip_length_and_e(dogbone_fit):
    text = dogbone_fit.to_gcode()
    prog = parse_gcode(text)
    planned = sum(p.total_length for p in dogbone_fit.plans_)
    assert prog.extrusion_length() == pytest.approx(planned, rel=1e-6)
    ratio = capsule_area(0.2, 0.4) / filament_area(dogbone_fit.profile_)
    assert prog.total_e() == pytest.approx(planned * ratio, rel=1e-6)
    layers = sorted({m.layer for m in prog.moves})
    assert layers == [0, 1]
    states = [state_fraction(s, dogbone_fit.profile_)[1] for s in prog.states]
    assert states == pytest.approx([0.125, 0.375, 0.625, 0.875, 0.625, 0.375, 0.125])


def test_state_fraction_machines():
    assert state_fraction(ToolState(4), MachineProfile(syntax="multitool", tools=5)) == (0.0, 1.0)
    assert state_fraction(TemperatureState(207.5), MachineProfile(syntax="temperature")) == (0.5, 0.5)


def test_temperature_machine_emits_flow():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = GradientSlicer(strategy=1, n_colors=2, profile=MachineProfile(syntax="temperature",
                           flow_material="PLA"), max_layers=1).fit(dogbone_design(0.2))
    text = s.to_gcode()
    assert "M109 S198.8" in text
    assert "M104 S198.8" in text and "M104 S216.2" in text
    assert re.search(r"^M221 T0 S\d+\.\d$", text, re.M)


def test_svg_empty_and_commanded(dogbone_fit):
    pal, prof, st = dogbone_fit.palette_, dogbone_fit.profile_, dogbone_fit.settings_
    empty = emit_layer_svg(LayerPlan(0.1, 0, []), pal, prof, st)
    assert empty.startswith("<svg") and "polyline" not in empty
    svg = dogbone_fit.layer_svg(0)
    strokes = set(re.findall(r'stroke="(#[0-9a-f]{6})" stroke-width="0.4"', svg))
    # display blends at the four interval midpoints
    display = [prof.display_color(m) for m in pal.materials]
    assert display == ["#f2d21b", "#1f4fd8"]
    assert strokes == {blend_hex(pal.composition(c), display) for c in range(4)}
    assert 'stroke-dasharray' in svg
    with pytest.raises(ValueError):
        dogbone_fit.layer_svg(0, mode="xray")
