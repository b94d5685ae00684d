"""Marlin G-code emission, re-parsing and SVG previews."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from string import Template

import numpy as np

from .errors import BedBounds, GcodeParseError, InvalidBead, OutOfRange, StateMissing
from .palette import MixState, TemperatureState, ToolState, blend_hex, map_color
from .strategy import Extrude, SetState

MIX_AXES = "ABCDEF"

_PLA = (8.35479e-6, -5.37075e-3, 1.13374, -77.814)
_TPU = (3.09637e-4, -1.38401e-1, 15.9560)


def capsule_area(h, w):
    """Bead cross-section: a ``h x (w - h)`` rectangle capped by two half discs."""
    if not h > 0:
        raise InvalidBead(f"layer height must be positive, got {h}")
    if w < h:
        raise InvalidBead(f"bead width {w} is smaller than layer height {h}")
    return h * (w - h) + math.pi * h * h / 4


def lookahead_distance(v_melt, h, w):
    """Path length whose deposited volume equals the melt chamber volume."""
    return v_melt / capsule_area(h, w)


def flow_percent(t, material):
    """Foaming flow compensation (percent) at nozzle temperature ``t``."""
    if not 180 <= t <= 240:
        raise OutOfRange(f"temperature {t} outside the 180-240 C range of the flow model")
    material = material.upper()
    if material == "PLA":
        a, b, c, d = _PLA
        return 100 * (((a * t + b) * t + c) * t + d)
    if material == "TPU":
        a, b, c = _TPU
        return 100 * ((a * t + b) * t + c)
    raise ValueError(f"no flow model for {material!r}")


def filament_area(profile):
    return math.pi * (profile.filament_diameter / 2) ** 2


def _num(v, digits):
    s = f"{v:.{digits}f}"
    if s.startswith("-") and float(s) == 0:
        s = s[1:]
    return s


def _short(v):
    s = f"{v:.1f}"
    return s[:-2] if s.endswith(".0") else s


def state_commands(state, profile):
    if isinstance(state, MixState):
        total = sum(state.ratios)
        parts = [f"{MIX_AXES[k]}{r / total:.3f}" for k, r in enumerate(state.ratios)]
        return ["M165 " + " ".join(parts)]
    if isinstance(state, ToolState):
        return [f"T{state.index}"]
    if isinstance(state, TemperatureState):
        out = [f"M104 S{_short(state.temperature)}"]
        if profile.flow_material:
            out.append(f"M221 T0 S{flow_percent(state.temperature, profile.flow_material):.1f}")
        return out
    raise TypeError(f"unknown command state {state!r}")


def resolve_state(event, palette, profile):
    return event.state if event.state is not None else map_color(event.color, palette, profile)


def emit_gcode(plans, profile, settings, palette, offset=(0.0, 0.0)):
    """Render layer plans as Marlin G-code text.

    Extrusion uses absolute E (``M82``) reset with ``G92 E0`` at every layer;
    ``E`` grows by ``length * capsule_area / filament_area``.  Foaming flow
    compensation is left to ``M221`` so it is not applied twice.
    """
    area = capsule_area(settings.h, settings.w)
    ratio = area / filament_area(profile)
    bx, by = profile.bed_size
    ox, oy = offset
    feed_p = _num(profile.print_speed, 0)
    feed_t = _num(profile.travel_speed, 0)

    first_state = None
    for plan in plans:
        for it in plan.items:
            if isinstance(it, SetState):
                first_state = resolve_state(it, palette, profile)
                break
        if first_state is not None:
            break
    temp0 = first_state.temperature if isinstance(first_state, TemperatureState) else profile.temp_lo
    header = Template(profile.start_gcode).safe_substitute(
        bed_x=_short(bx), bed_y=_short(by), temperature=_short(temp0),
        layer_height=settings.h, bead_width=settings.w)

    lines = ["; gradslice", header.rstrip("\n"), "M82", "G92 E0"]
    pos = None
    state = None
    for plan in plans:
        zp = plan.z + settings.h / 2
        lines.append(f";LAYER:{plan.index}")
        lines.append(f"G1 Z{_num(zp, 3)} F{feed_t}")
        lines.append("G92 E0")
        e = 0.0
        for it in plan.items:
            if isinstance(it, SetState):
                state = resolve_state(it, palette, profile)
                lines.extend(state_commands(state, profile))
                continue
            if state is None:
                raise StateMissing("extrusion before any machine state was set")
            pts = it.path.vertices + (ox, oy)
            if (pts[:, 0].min() < -1e-9 or pts[:, 1].min() < -1e-9
                    or pts[:, 0].max() > bx + 1e-9 or pts[:, 1].max() > by + 1e-9):
                raise BedBounds(f"{it.role} path leaves the {bx:g} x {by:g} mm bed")
            if pos is None or abs(pos[0] - pts[0, 0]) > 1e-9 or abs(pos[1] - pts[0, 1]) > 1e-9:
                lines.append(f"G0 X{_num(pts[0, 0], 3)} Y{_num(pts[0, 1], 3)} F{feed_t}")
            seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            feed = f" F{feed_p}"
            for p, d in zip(pts[1:], seg):
                e += d * ratio
                lines.append(f"G1 X{_num(p[0], 3)} Y{_num(p[1], 3)} E{_num(e, 5)}{feed}")
                feed = ""
            pos = pts[-1]
    lines.append(Template(profile.end_gcode).safe_substitute(bed_x=_short(bx), bed_y=_short(by)).rstrip("\n"))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# reading

@dataclass
class GMove:
    start: tuple
    end: tuple
    de: float
    layer: int
    state: object
    flow: float = 100.0
    z: float = 0.0

    @property
    def length(self):
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])

    @property
    def extruding(self):
        return self.de > 0


@dataclass
class GcodeProgram:
    stream: list = field(default_factory=list)   # GMove or state objects, in order

    @property
    def moves(self):
        return [s for s in self.stream if isinstance(s, GMove)]

    @property
    def states(self):
        return [s for s in self.stream if not isinstance(s, GMove)]

    def extrusion_length(self):
        return sum(m.length for m in self.moves if m.extruding)

    def total_e(self):
        return sum(m.de for m in self.moves if m.extruding)


_WORD = re.compile(r"([A-Za-z])\s*([-+]?(?:\d+\.?\d*|\.\d+))")


def parse_gcode(text):
    """Read the subset of Marlin G-code this package emits."""
    prog = GcodeProgram()
    x = y = z = 0.0
    e = 0.0
    relative_e = False
    layer = -1
    state = None
    flow = 100.0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split(";", 1)[0].strip()
        if raw.startswith(";LAYER:"):
            try:
                layer = int(raw[7:].split()[0])
            except (ValueError, IndexError) as exc:
                raise GcodeParseError(f"line {lineno}: bad layer marker {raw!r}") from exc
        if not line:
            continue
        head, _, rest = line.partition(" ")
        code = head.upper()
        try:
            words = {k.upper(): float(v) for k, v in _WORD.findall(rest)}
        except ValueError as exc:
            raise GcodeParseError(f"line {lineno}: {raw!r}") from exc
        if rest.strip() and not words and code not in ("M117",):
            raise GcodeParseError(f"line {lineno}: cannot read parameters in {raw!r}")
        if code in ("G0", "G1"):
            nx, ny = words.get("X", x), words.get("Y", y)
            z = words.get("Z", z)
            de = 0.0
            if "E" in words:
                de = words["E"] if relative_e else words["E"] - e
                e = words["E"] if not relative_e else e + words["E"]
            if (nx, ny) != (x, y) or de:
                prog.stream.append(GMove((x, y), (nx, ny), de, layer, state, flow, z))
            x, y = nx, ny
        elif code == "G92":
            if "E" in words:
                e = words["E"]
        elif code == "M82":
            relative_e = False
        elif code == "M83":
            relative_e = True
        elif code == "M165":
            ratios = tuple(words.get(a, 0.0) for a in MIX_AXES if a in words)
            total = sum(ratios)
            if total <= 0:
                raise GcodeParseError(f"line {lineno}: M165 without positive factors")
            state = MixState(tuple(r / total for r in ratios))
            prog.stream.append(state)
        elif re.fullmatch(r"T\d+", code):
            state = ToolState(int(code[1:]))
            prog.stream.append(state)
        elif code == "M104":
            if "S" in words:
                state = TemperatureState(words["S"])
                prog.stream.append(state)
        elif code == "M221":
            flow = words.get("S", 100.0)
    return prog


def state_fraction(state, profile):
    """Gradient coordinate (second material fraction) represented by a state."""
    if isinstance(state, MixState):
        return tuple(state.ratios)
    if isinstance(state, ToolState):
        m = state.index / max(1, profile.tools - 1)
        return (1 - m, m)
    if isinstance(state, TemperatureState):
        span = profile.temp_hi - profile.temp_lo
        m = 0.0 if span == 0 else (state.temperature - profile.temp_lo) / span
        return (1 - m, m)
    raise TypeError(f"unknown command state {state!r}")


# --------------------------------------------------------------------------
# previews

def _svg_header(profile):
    bx, by = profile.bed_size
    return [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="0 0 {bx:g} {by:g}" '
            f'width="{bx * 4:g}" height="{by * 4:g}">',
            f'<g transform="matrix(1 0 0 -1 0 {by:g})">',
            f'<rect x="0" y="0" width="{bx:g}" height="{by:g}" fill="none" stroke="#999" stroke-width="0.5"/>']


def _poly(pts, stroke, width, dash=False):
    d = " ".join(f"{p[0]:.3f},{p[1]:.3f}" for p in pts)
    extra = ' stroke-dasharray="1,1"' if dash else ""
    return (f'<polyline points="{d}" fill="none" stroke="{stroke}" stroke-width="{width:g}" '
            f'stroke-linecap="round" stroke-linejoin="round"{extra}/>')


def emit_layer_svg(plan, palette, profile, settings, mode="commanded", segments=None, offset=(0.0, 0.0)):
    """One layer as SVG; strokes use the blend of material display colours.

    ``mode="simulated"`` colours by the realised composition of ``segments``
    (from :func:`gradslice.simulator.simulate`) instead of the commanded one.
    """
    display = [profile.display_color(m) for m in palette.materials]
    out = _svg_header(profile)
    ox, oy = offset
    if mode == "simulated":
        for seg in segments or []:
            pts = np.array([seg.start, seg.end]) + (ox, oy)
            out.append(_poly(pts, blend_hex(seg.realized, display), settings.w))
    elif mode == "commanded":
        pos = None
        for it in plan.items:
            if not isinstance(it, Extrude):
                continue
            pts = it.path.vertices + (ox, oy)
            if pos is not None and np.hypot(*(pts[0] - pos)) > 1e-9:
                out.append(_poly([pos, pts[0]], "#888888", settings.w / 4, dash=True))
            color = blend_hex(palette.composition(it.color), display) if it.color is not None else "#000000"
            out.append(_poly(pts, color, settings.w))
            pos = pts[-1]
    else:
        raise ValueError(f"unknown preview mode {mode!r}")
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
