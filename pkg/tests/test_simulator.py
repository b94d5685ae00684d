import math

import pytest

from gradslice.errors import NonConvergence, NoTransition
from gradslice.gcode import emit_gcode, lookahead_distance, parse_gcode
from gradslice.profile import MachineProfile
from gradslice.simulator import (Move, PerfectMix, PlugFlow, StateChange, ThermalLag, calibrate_lookahead,
                                 calibration_design, calibration_plan, chamber_for, incorrect_segments,
                                 measure_calibration, moves_from_gcode, moves_from_plans,
                                 realized_boundary_error, realized_crossing, simulate)
from gradslice.toolpath import PrintSettings

from conftest import V_960

A, B = (1.0, 0.0), (0.0, 1.0)


def step_stream(v1=100.0, v2=100.0):
    # 1 mm^3 per mm of travel along x
    return [StateChange(A), Move((0, 0), (v1, 0), v1), StateChange(B), Move((v1, 0), (v1 + v2, 0), v2)]


def test_zero_dead_volume_is_identity():
    segs = simulate(step_stream(), PlugFlow(0.0))
    assert all(s.realized == s.commanded for s in segs)
    segs = simulate(step_stream(), PerfectMix(0.0))
    assert all(s.realized == s.commanded for s in segs)


def test_plug_flow_step_delay():
    segs = simulate(step_stream(), PlugFlow(30.0))
    assert realized_crossing(segs) == pytest.approx((130.0, 0.0))
    cum = 0.0
    for s in segs:
        if s.realized == B:
            break
        cum += s.volume
    assert cum == pytest.approx(130.0)


def test_plug_flow_conserves_volume():
    stream = step_stream(37.5, 81.25)
    segs = simulate(stream, PlugFlow(30.0))
    assert sum(s.volume for s in segs) == pytest.approx(37.5 + 81.25, rel=1e-12)


def test_plug_flow_tiny_moves_split_exactly():
    stream = [StateChange(A)]
    x = 0.0
    for k in range(40):
        stream.append(Move((x, 0), (x + 2.5, 0), 2.5))
        x += 2.5
        if k == 9:
            stream.append(StateChange(B))
    segs = simulate(stream, PlugFlow(12.0))
    assert realized_crossing(segs)[0] == pytest.approx(25.0 + 12.0)


def test_perfect_mix_one_chamber_volume():
    stream = [StateChange(A), Move((0, 0), (1, 0), 1.0), StateChange(B), Move((1, 0), (2, 0), 30.0)]
    segs = simulate(stream, PerfectMix(30.0))
    assert segs[-1].fraction == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert segs[-1].fraction == pytest.approx(0.632, abs=1e-3)


def test_thermal_lag_time_constant():
    stream = [StateChange(A), Move((0, 0), (1, 0), 1.0, duration=0.0), StateChange(B),
              Move((1, 0), (2, 0), 1.0, duration=8.0)]
    segs = simulate(stream, ThermalLag(8.0))
    assert segs[-1].fraction == pytest.approx(1 - math.exp(-1))


def test_chamber_selection():
    assert chamber_for(MachineProfile(v_melt=5)) == PlugFlow(5)
    assert chamber_for(MachineProfile(v_melt=5, chamber_model="perfect_mix")) == PerfectMix(5)
    assert chamber_for(MachineProfile(syntax="temperature")) == ThermalLag(8.0)
    assert chamber_for(MachineProfile(v_melt=5), "perfect_mix") == PerfectMix(5)


def test_empty_stream():
    assert simulate([], PlugFlow(3.0)) == []
    assert realized_crossing([]) is None


def test_no_transition():
    design = calibration_design()
    segs = simulate([StateChange(A), Move((-10, 0), (-5, 0), 1.0)], PlugFlow(0.0))
    with pytest.raises(NoTransition):
        realized_boundary_error(segs, design, materials=["yellow", "blue"])


def test_calibration_plan_geometry():
    prof = MachineProfile(v_melt=V_960)
    design, plans = calibration_plan(prof)
    ext = plans[0].extrusions()
    assert len(ext) == 2
    total = sum(e.path.length for e in ext)
    # 101 lines of 59.6 mm plus 100 connectors of 0.4 mm
    assert total == pytest.approx(101 * 59.6 + 100 * 0.4)
    assert ext[0].path.end[0] == pytest.approx(0.0)


def test_uncompensated_error_recovers_lookahead():
    prof = MachineProfile(v_melt=V_960)
    L = lookahead_distance(V_960, 0.2, 0.4)
    e = measure_calibration(prof, 0.0)
    assert e > 0
    assert e == pytest.approx(6.4, abs=1e-9)
    assert abs(incorrect_segments(e, 0.4) * 60 - L) <= 60


def test_compensated_error_below_bead():
    prof = MachineProfile(v_melt=V_960)
    L = lookahead_distance(V_960, 0.2, 0.4)
    assert abs(measure_calibration(prof, L)) < 0.4


def test_calibration_loop_converges():
    prof = MachineProfile(v_melt=V_960)
    hist = []
    L = calibrate_lookahead(prof, history=hist)
    assert len(hist) <= 5
    assert abs(L - lookahead_distance(V_960, 0.2, 0.4)) <= 60
    assert abs(hist[-1][1]) < 0.4


def test_calibration_half_length():
    prof = MachineProfile(v_melt=V_960)
    assert measure_calibration(prof, 0.0, length_y=30) == pytest.approx(12.8, abs=1e-9)
    L = calibrate_lookahead(prof, length_y=30)
    assert abs(L - lookahead_distance(V_960, 0.2, 0.4)) <= 30


def test_calibration_nonconvergence():
    with pytest.raises(NonConvergence):
        calibrate_lookahead(MachineProfile(v_melt=V_960), max_iters=1)
    # delay longer than the whole object: the second material never shows
    with pytest.raises(NoTransition):
        calibrate_lookahead(MachineProfile(v_melt=V_960 * 10))


def test_incorrect_segments():
    assert incorrect_segments(6.4, 0.4) == 16
    assert incorrect_segments(-0.39, 0.4) == 1
    assert incorrect_segments(0.0, 0.4) == 0


def test_gcode_and_plan_streams_agree():
    prof = MachineProfile(v_melt=V_960)
    st = PrintSettings()
    _, plans = calibration_plan(prof)
    offset = (150.0, 150.0)
    text = emit_gcode(plans, prof, st, None, offset)
    from_plan = moves_from_plans(plans, st, None, prof)
    from_code = moves_from_gcode(parse_gcode(text), prof, offset, -st.h / 2)
    vol = lambda ms: sum(m.volume for m in ms if isinstance(m, Move))
    assert vol(from_code) == pytest.approx(vol(from_plan), rel=1e-6)
    e1 = realized_boundary_error(simulate(from_plan, PlugFlow(V_960)), calibration_design(), 0.1)
    e2 = realized_boundary_error(simulate(from_code, PlugFlow(V_960)), calibration_design(), 0.1)
    assert e2 == pytest.approx(e1, abs=1e-3)
