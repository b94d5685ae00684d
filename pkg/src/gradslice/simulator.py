"""Melt-chamber dead-volume simulation and look-ahead calibration."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from shapely.geometry import box

from .errors import NoTransition, NonConvergence
from .gcode import GMove, capsule_area, filament_area, state_fraction
from .palette import map_color, state_for_fraction
from .strategy import Extrude, LayerPlan, SetState, apply_lookahead
from .toolpath import PrintSettings, ToolPath, rectilinear_infill, split_at_lengths


@dataclass(frozen=True)
class Move:
    start: tuple
    end: tuple
    volume: float = 0.0
    z: float = 0.0
    duration: float = 0.0

    @property
    def travel(self):
        return self.volume <= 0

    @property
    def length(self):
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])


@dataclass(frozen=True)
class StateChange:
    composition: tuple


@dataclass(frozen=True)
class RealizedSegment:
    start: tuple
    end: tuple
    volume: float
    commanded: tuple
    realized: tuple
    z: float = 0.0
    constant: bool = True     # False: ``realized`` is the value at ``end``

    @property
    def fraction(self):
        """Realised gradient coordinate (second material)."""
        return self.realized[1] if len(self.realized) > 1 else 0.0


# --------------------------------------------------------------------------
# move streams

def moves_from_plans(plans, settings, palette, profile, offset=(0.0, 0.0)):
    """Flatten layer plans into a move stream with volumes from the bead model."""
    area = capsule_area(settings.h, settings.w)
    ox, oy = offset
    out = []
    pos = None
    for plan in plans:
        for it in plan.items:
            if isinstance(it, SetState):
                state = it.state if it.state is not None else map_color(it.color, palette, profile)
                out.append(StateChange(state_fraction(state, profile)))
                continue
            pts = it.path.vertices + (ox, oy)
            if pos is not None and (pos != tuple(pts[0])):
                d = math.dist(pos, pts[0])
                out.append(Move(pos, tuple(pts[0]), 0.0, plan.z, 60 * d / profile.travel_speed))
            for a, b in zip(pts[:-1], pts[1:]):
                d = float(np.hypot(*(b - a)))
                out.append(Move(tuple(a), tuple(b), d * area, plan.z, 60 * d / profile.print_speed))
            pos = tuple(pts[-1])
    return out


def moves_from_gcode(program, profile, offset=(0.0, 0.0), z_shift=0.0):
    """Move stream from a parsed G-code program (volumes from E and M221).

    ``offset`` is subtracted from XY and ``z_shift`` added to Z, mapping bed
    coordinates back to design coordinates.
    """
    fa = filament_area(profile)
    ox, oy = offset
    out = []
    for item in program.stream:
        if not isinstance(item, GMove):
            out.append(StateChange(state_fraction(item, profile)))
            continue
        vol = max(0.0, item.de) * fa * item.flow / 100.0
        speed = profile.print_speed if vol > 0 else profile.travel_speed
        out.append(Move((item.start[0] - ox, item.start[1] - oy), (item.end[0] - ox, item.end[1] - oy),
                        vol, item.z + z_shift, 60 * item.length / speed))
    return out


# --------------------------------------------------------------------------
# chamber models

@dataclass(frozen=True)
class PlugFlow:
    v_melt: float


@dataclass(frozen=True)
class PerfectMix:
    v_melt: float


@dataclass(frozen=True)
class ThermalLag:
    tau: float


def chamber_for(profile, model=None):
    """Chamber model for a profile; temperature machines default to thermal lag."""
    if model is None:
        model = "thermal" if profile.syntax == "temperature" else profile.chamber_model
    if model == "thermal":
        return ThermalLag(profile.thermal_tau)
    if model == "perfect_mix":
        return PerfectMix(profile.v_melt)
    return PlugFlow(profile.v_melt)


def _first_composition(stream):
    for item in stream:
        if isinstance(item, StateChange):
            return item.composition
    return None


def _lerp(a, b, t):
    return (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))


def simulate(stream, model):
    """Realised composition of every extrusion move.

    Plug flow is exact: a move whose outflow spans several buffered chunks is
    split at the chunk boundaries.  The chamber starts full of the first
    commanded composition.
    """
    c0 = _first_composition(stream)
    if c0 is None:
        return []
    commanded = c0
    out = []
    if isinstance(model, PlugFlow):
        fifo = deque()
        if model.v_melt > 0:
            fifo.append([model.v_melt, c0])
        for item in stream:
            if isinstance(item, StateChange):
                commanded = item.composition
                continue
            if item.travel:
                continue
            if fifo and fifo[-1][1] == commanded:
                fifo[-1][0] += item.volume
            else:
                fifo.append([item.volume, commanded])
            need = item.volume
            done = 0.0
            while need > 1e-12 * max(1.0, item.volume) and fifo:
                chunk = fifo[0]
                take = min(chunk[0], need)
                a = _lerp(item.start, item.end, done / item.volume)
                b = _lerp(item.start, item.end, (done + take) / item.volume)
                if take >= need:
                    b = item.end
                out.append(RealizedSegment(a, b, take, commanded, chunk[1], item.z))
                chunk[0] -= take
                need -= take
                done += take
                if chunk[0] <= 1e-12:
                    fifo.popleft()
        return _merge(out)
    c = np.asarray(c0, dtype=float)
    for item in stream:
        if isinstance(item, StateChange):
            commanded = item.composition
            continue
        if isinstance(model, ThermalLag):
            k = 1.0 if model.tau <= 0 else 1 - math.exp(-item.duration / model.tau)
        elif item.travel:
            continue
        else:
            k = 1.0 if model.v_melt <= 0 else 1 - math.exp(-item.volume / model.v_melt)
        c = c + k * (np.asarray(commanded, dtype=float) - c)
        if not item.travel:
            out.append(RealizedSegment(item.start, item.end, item.volume, commanded,
                                       tuple(float(v) for v in c), item.z, constant=False))
    return out


def _merge(segments):
    """Drop zero-volume slivers left by floating point chunk arithmetic."""
    return [s for s in segments if s.volume > 1e-12]


# --------------------------------------------------------------------------
# boundary error

def _design_m(design, materials, pts, z):
    from .vcad import fraction_field
    field = fraction_field(design, materials)
    pts = np.atleast_2d(pts)
    f = field(pts[:, 0], pts[:, 1], np.full(len(pts), z))
    return f[..., 1]


def _design_crossing(segments, design, materials, z, level=0.5):
    if not segments:
        return None
    starts = np.array([s.start for s in segments])
    ends = np.array([s.end for s in segments])
    ms = _design_m(design, materials, starts, z)
    me = _design_m(design, materials, ends, z)
    side0 = ms[0] >= level
    for k in range(len(segments)):
        if (ms[k] >= level) != side0:
            return tuple(starts[k])
        if (me[k] >= level) != side0:
            a, b = starts[k], ends[k]
            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = (lo + hi) / 2
                p = a + mid * (b - a)
                if (_design_m(design, materials, p, z)[0] >= level) != side0:
                    hi = mid
                else:
                    lo = mid
            return tuple(a + hi * (b - a))
    return None


def realized_crossing(segments, level=0.5):
    """Point where the realised fraction first leaves its initial side of ``level``."""
    if not segments:
        return None
    side0 = segments[0].fraction >= level
    prev = segments[0]
    for s in segments[1:]:
        if (s.fraction >= level) != side0:
            if s.constant:
                return s.start
            # values are known at move ends; interpolate between them
            t = (level - prev.fraction) / (s.fraction - prev.fraction)
            return _lerp(prev.end, s.end, min(1.0, max(0.0, t)))
        prev = s
    return None


def realized_boundary_error(segments, design, z=None, materials=None, level=0.5):
    """Signed x distance from the designed material boundary to the realised one.

    Positive means the transition shows up later (further along +x) than
    designed.
    """
    from .vcad import design_materials
    if z is not None:
        segments = [s for s in segments if abs(s.z - z) < 1e-6]
    materials = materials or design_materials(design)
    x_real = realized_crossing(segments, level)
    if x_real is None:
        raise NoTransition("realised composition never crosses the 0.5 level")
    zz = z if z is not None else (segments[0].z if segments else 0.0)
    x_design = _design_crossing(segments, design, materials, zz, level)
    if x_design is None:
        raise NoTransition("designed composition never crosses the 0.5 level")
    return float(x_real[0] - x_design[0])


# --------------------------------------------------------------------------
# calibration object

CALIBRATION_MATERIALS = ("yellow", "blue")


def calibration_design(width=40.4, length_y=60.0, height=0.2):
    """Half/half rectangular block: second material for x >= 0."""
    from .vcad import parse_design
    return parse_design(f'fgrade(["-floor(x/1000)", "floor(x/1000)+1"], ["yellow", "blue"])'
                        f'{{ rectprism({width!r}, {length_y!r}, {height!r}); }}')


def _cross2(a, b):
    return a[0] * b[1] - a[1] * b[0]


def calibration_plan(profile, settings=None, length_y=60.0, width=40.4, lookahead=0.0):
    """Single-layer serpentine of y-parallel lines, x increasing, with one
    state change commanded where the design changes material."""
    settings = settings or PrintSettings()
    w = settings.w
    design = calibration_design(width, length_y, settings.h)
    region = box(-width / 2, -length_y / 2 + w / 2, width / 2, length_y / 2 - w / 2)
    paths = rectilinear_infill(region, w, -90.0)
    if len(paths) != 1:
        raise RuntimeError("calibration serpentine did not come out as one path")
    path = paths[0]
    pts = path.vertices
    z = settings.h / 2
    seg = [RealizedSegment(tuple(a), tuple(b), 0.0, (1, 0), (1, 0), z) for a, b in zip(pts[:-1], pts[1:])]
    cross = _design_crossing(seg, design, list(CALIBRATION_MATERIALS), z)
    # arc length of the crossing along the path
    d = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(d)])
    k = next(i for i, s in enumerate(seg)
             if abs(_cross2(np.subtract(s.end, s.start), np.subtract(cross, s.start))) < 1e-9
             and min(s.start[0], s.end[0]) - 1e-9 <= cross[0] <= max(s.start[0], s.end[0]) + 1e-9
             and min(s.start[1], s.end[1]) - 1e-9 <= cross[1] <= max(s.start[1], s.end[1]) + 1e-9)
    at = cum[k] + math.dist(seg[k].start, cross)
    first, second = split_at_lengths(pts, [at])
    items = [SetState(0, state_for_fraction(0.0, profile)),
             Extrude(ToolPath(first, "infill", False, 0)),
             SetState(1, state_for_fraction(1.0, profile)),
             Extrude(ToolPath(second, "infill", False, 1))]
    plans = [LayerPlan(z, 0, items)]
    if lookahead:
        plans = apply_lookahead(plans, lookahead)
    return design, plans


def measure_calibration(profile, lookahead, settings=None, length_y=60.0, width=40.4, model=None):
    settings = settings or PrintSettings()
    design, plans = calibration_plan(profile, settings, length_y, width, lookahead)
    stream = moves_from_plans(plans, settings, None, profile)
    segs = simulate(stream, chamber_for(profile, model))
    return realized_boundary_error(segs, design, settings.h / 2, list(CALIBRATION_MATERIALS))


def incorrect_segments(error, w):
    """Number of bead-width segments covered by a boundary error."""
    return math.ceil(round(abs(error) / w, 9))


def calibrate_lookahead(profile, settings=None, length_y=60.0, width=40.4, max_iters=5,
                        initial=0.0, model=None, history=None):
    """Iterate print -> measure -> adjust until the boundary error is below one bead width.

    Each step adds (or removes) ``ceil(|e| / w)`` serpentine passes of length
    ``length_y``.  ``history`` (a list) receives ``(L, error)`` per iteration.
    """
    settings = settings or PrintSettings()
    w = settings.w
    L = float(initial)
    for _ in range(max_iters):
        e = measure_calibration(profile, L, settings, length_y, width, model)
        if history is not None:
            history.append((L, e))
        if abs(e) < w:
            return L
        L = max(0.0, L + math.copysign(incorrect_segments(e, w) * length_y, e))
    raise NonConvergence(f"look-ahead calibration did not converge in {max_iters} iterations (L={L:g})")
