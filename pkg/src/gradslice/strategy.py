"""Layer plans for the two gradient toolpath strategies.

Strategy 1 slices the outline with conventional perimeters and rectilinear
infill, cuts those paths at face boundaries and prints them colour by colour,
with a purge tower after each state change.  Strategy 2 fills every face on
its own (concentric or rectilinear) and relies on issuing state changes
early (look-ahead) instead of purging.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from shapely.geometry import box

from .errors import BedOverflow, OrderInversion
from .palette import traversal_order
from .toolpath import (ToolPath, clip_paths_to_faces, concentric_fill, generate_perimeters,
                       infill_region, rectilinear_infill, split_at_lengths)


class FaceTooThin(UserWarning):
    """A face vanished after the half-bead inset and was skipped."""


class LookaheadClampWarning(UserWarning):
    """A state change could not be moved early enough (before print start)."""


@dataclass(frozen=True)
class SetState:
    color: int
    state: object = None


@dataclass(frozen=True)
class Extrude:
    path: ToolPath

    @property
    def color(self):
        return self.path.color

    @property
    def role(self):
        return self.path.role


@dataclass
class LayerPlan:
    z: float
    index: int
    items: list = field(default_factory=list)

    def extrusions(self):
        return [it for it in self.items if isinstance(it, Extrude)]

    def events(self):
        return [it for it in self.items if isinstance(it, SetState)]

    def region_colors(self):
        """Colours of part regions in print order (purge paths excluded)."""
        out = []
        for it in self.items:
            if isinstance(it, Extrude) and it.role != "purge" and (not out or out[-1] != it.color):
                out.append(it.color)
        return out

    def length_by_color(self, include_purge=False):
        out = {}
        for it in self.extrusions():
            if it.role == "purge" and not include_purge:
                continue
            out[it.color] = out.get(it.color, 0.0) + it.path.length
        return out

    def purge_count(self):
        return sum(1 for it in self.extrusions() if it.role == "purge")

    @property
    def total_length(self):
        return sum(it.path.length for it in self.extrusions())


def _group_by_color(paths):
    groups = {}
    for p in paths:
        groups.setdefault(p.color, []).append(p)
    return groups


def _assemble(z, index, groups, order):
    items = []
    for c in order:
        if c not in groups:
            continue
        items.append(SetState(c))
        items.extend(Extrude(p) for p in groups[c])
    return LayerPlan(z, index, items)


# --------------------------------------------------------------------------
# strategy 1

def strategy1_paths(layer, settings, layer_index):
    """Conventional perimeters and infill for the layer outline (unlabelled)."""
    outline = layer.outline
    w = settings.w
    paths = generate_perimeters(outline, settings.perimeters, w)
    region = infill_region(outline, settings.perimeters, w)
    paths += rectilinear_infill(region, settings.spacing, settings.infill_angle_for(layer_index))
    return paths


def slice_layer_strategy1(layer, settings, palette, zipper=None, layer_index=0):
    """Clip conventional toolpaths to the layer's coloured faces and order by colour."""
    paths = strategy1_paths(layer, settings, layer_index)
    if not paths or not layer.faces:
        return LayerPlan(layer.z, layer_index, [])
    labeled = clip_paths_to_faces(paths, layer.faces, settings.min_segment)
    if zipper is not None and zipper.enabled:
        labeled = apply_zippering(labeled, zipper, palette)
    return _assemble(layer.z, layer_index, _group_by_color(labeled), traversal_order(palette, layer_index))


def apply_zippering(paths, zipper, palette):
    """Alternate band pieces between the two colours adjacent to their boundary.

    Pieces are counted per band in generation order: even -> lower colour,
    odd -> upper colour.
    """
    if zipper is None or not zipper.enabled:
        return list(paths)
    counters = {}
    out = []
    for p in paths:
        if p.band is None or p.band < 0:
            out.append(p)
            continue
        k = counters.get(p.band, 0)
        counters[p.band] = k + 1
        lower = p.band
        out.append(p.with_color(lower if k % 2 == 0 else lower + 1))
    return out


# --------------------------------------------------------------------------
# strategy 2

def face_fill(face, settings, layer_index):
    w = settings.w
    if settings.fill == "concentric":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            paths = concentric_fill(face.polygon, w)
    else:
        inner = face.polygon.buffer(-w / 2, join_style="mitre", mitre_limit=2.0)
        paths = (rectilinear_infill(inner, w, settings.infill_angle_for(layer_index), phase=0.0)
                 if not inner.is_empty else [])
    return [p.with_color(face.color) for p in paths]


def slice_layer_strategy2(layer, settings, palette, layer_index=0):
    """Dense fill of every face, one state change per colour."""
    groups = {}
    for face in layer.faces:
        paths = face_fill(face, settings, layer_index)
        if not paths:
            warnings.warn(f"face of colour {face.color} near {face.point} is thinner than one bead "
                          "and was skipped", FaceTooThin, stacklevel=2)
            continue
        groups.setdefault(face.color, []).extend(paths)
    return _assemble(layer.z, layer_index, groups, traversal_order(palette, layer_index))


# --------------------------------------------------------------------------
# purge towers

@dataclass(frozen=True)
class PurgeTowerLayout:
    locations: dict
    side: float
    spacing: float
    length: float
    w: float = 0.4

    def paths(self, color, layer_index):
        cx, cy = self.locations[color]
        return tower_layer_paths((cx, cy), self.side, self.w, self.spacing, layer_index, color)

    def footprint(self, color):
        cx, cy = self.locations[color]
        h = self.side / 2
        return (cx - h, cy - h, cx + h, cy + h)


def tower_layer_paths(center, side, w, spacing, layer_index=0, color=None):
    cx, cy = center
    sq = box(cx - side / 2, cy - side / 2, cx + side / 2, cy + side / 2)
    paths = generate_perimeters(sq, 1, w)
    paths += rectilinear_infill(infill_region(sq, 1, w), spacing, 90.0 * (layer_index % 2))
    return [replace(p, role="purge", color=color) for p in paths]


def tower_side(length, spacing, w):
    """Smallest side (0.1 mm steps, from sqrt(L * spacing)) whose layer path covers ``length``."""
    if length <= 0:
        return 0.0
    side = math.ceil(round(math.sqrt(length * spacing) * 10, 9)) / 10
    while sum(p.length for p in tower_layer_paths((0, 0), side, w, spacing)) < length:
        side = round(side + 0.1, 10)
    return side


def bed_offset(part_bbox, profile):
    """Translation taking design coordinates to bed coordinates (part centred)."""
    x0, y0, x1, y1 = part_bbox
    bx, by = profile.bed_size
    return (bx / 2 - (x0 + x1) / 2, by / 2 - (y0 + y1) / 2)


def place_towers(colors, side, part_bbox, profile):
    """Tower centres (design coordinates) for ``colors``, nearest the part first."""
    colors = list(colors)
    ox, oy = bed_offset(part_bbox, profile)
    if profile.purge_locations:
        locs = list(profile.purge_locations)
        if len(locs) < len(colors):
            raise BedOverflow(f"{len(colors)} towers needed but only {len(locs)} purge locations configured")
        return {c: (float(x) - ox, float(y) - oy) for c, (x, y) in zip(colors, locs)}
    gap = profile.purge_gap
    bx, by = profile.bed_size
    px0, py0, px1, py1 = (part_bbox[0] + ox - gap, part_bbox[1] + oy - gap,
                          part_bbox[2] + ox + gap, part_bbox[3] + oy + gap)
    pitch = side + gap
    xs = np.arange(gap + side / 2, bx - gap - side / 2 + 1e-9, pitch)
    ys = np.arange(gap + side / 2, by - gap - side / 2 + 1e-9, pitch)
    slots = []
    for x in xs:
        for y in ys:
            h = side / 2
            if x + h > px0 and x - h < px1 and y + h > py0 and y - h < py1:
                continue
            dx = max(px0 - x, 0, x - px1)
            dy = max(py0 - y, 0, y - py1)
            slots.append((round(math.hypot(dx, dy), 6), round(y, 6), round(x, 6)))
    slots.sort()
    if len(slots) < len(colors):
        raise BedOverflow(f"{len(colors)} purge towers of side {side:.1f} mm do not fit on the "
                          f"{bx:g} x {by:g} mm bed next to the part")
    return {c: (float(x - ox), float(y - oy)) for c, (_, y, x) in zip(colors, slots)}


def _change(palette, a, b):
    if a is None:
        return math.inf
    ca, cb = palette.composition(a), palette.composition(b)
    return max(abs(p - q) for p, q in zip(ca, cb))


def insert_purge_towers(plans, profile, settings, palette, part_bbox, threshold=None, layout=None):
    """Add a tower layer after every qualifying state change.

    Once a multi-colour print has towers they are printed on every layer
    (lockstep growth) so each stays supported; a single-colour print only
    primes once.  Returns ``(plans, layout)``; ``layout`` is None when no purge
    is needed.
    """
    from .gcode import lookahead_distance
    threshold = profile.purge_threshold if threshold is None else threshold
    length = lookahead_distance(profile.v_melt, settings.h, settings.w)
    if length <= 0:
        return list(plans), None
    # colours whose entry ever qualifies for purging
    qualifying = []
    state = None
    for plan in plans:
        for ev in plan.events():
            if ev.color != state and _change(palette, state, ev.color) > threshold:
                if ev.color not in qualifying:
                    qualifying.append(ev.color)
            state = ev.color
    if not qualifying:
        return list(plans), None
    if layout is None:
        side = tower_side(length, settings.spacing, settings.w)
        order = [c for c in traversal_order(palette, 0) if c in qualifying]
        layout = PurgeTowerLayout(place_towers(order, side, part_bbox, profile), side,
                              settings.spacing, length, settings.w)
    lockstep = len(qualifying) > 1
    out = []
    state = None
    for plan in plans:
        groups = {}
        for it in plan.extrusions():
            groups.setdefault(it.color, []).append(it.path)
        present = [ev.color for ev in plan.events()]
        order = [c for c in traversal_order(palette, plan.index)
                 if c in groups or c in present or (lockstep and c in layout.locations)]
        items = []
        for c in order:
            changed = c != state
            qualifies = changed and _change(palette, state, c) > threshold
            if changed:
                items.append(SetState(c))
                state = c
            if c in layout.locations and (lockstep or qualifies):
                items.extend(Extrude(p) for p in layout.paths(c, plan.index))
            items.extend(Extrude(p) for p in groups.get(c, []))
        out.append(LayerPlan(plan.z, plan.index, items))
    return out, layout


def drop_redundant_states(plans):
    """Remove state events that repeat the machine's current state."""
    out = []
    state = None
    for plan in plans:
        items = []
        for it in plan.items:
            if isinstance(it, SetState):
                if it.color == state:
                    continue
                state = it.color
            items.append(it)
        out.append(LayerPlan(plan.z, plan.index, items))
    return out


# --------------------------------------------------------------------------
# look-ahead

def apply_lookahead(plans, distance):
    """Issue every state change ``distance`` mm of extrusion earlier.

    Positions are cumulative extruded path length over the whole print.
    Extrusions are split where an event lands inside them.  Events pushed
    before the start of the print are clamped there (with a warning); when
    several collapse onto the same position only the last survives.
    """
    plans = list(plans)
    if distance < 0:
        raise ValueError("look-ahead distance must be >= 0")
    if distance == 0:
        return [LayerPlan(p.z, p.index, list(p.items)) for p in plans]
    extrusions = []     # (layer, start, Extrude)
    events = []         # [position, SetState]
    pos = 0.0
    for li, plan in enumerate(plans):
        for it in plan.items:
            if isinstance(it, SetState):
                events.append([pos, it])
            else:
                extrusions.append((li, pos, it))
                pos += it.path.length
    moved = []
    clamped = 0
    for p, ev in events:
        q = p - distance
        if q <= 0:
            if p > 0:
                clamped += 1
            q = 0.0
        moved.append((q, ev))
    if clamped:
        warnings.warn(f"{clamped} state change(s) clamped to the start of the print",
                      LookaheadClampWarning, stacklevel=2)
    # collapse events sharing the clamped start onto the latest one
    at_start = [k for k, (q, _) in enumerate(moved) if q == 0.0]
    if len(at_start) > 1:
        drop = set(at_start[:-1])
        moved = [m for k, m in enumerate(moved) if k not in drop]
    for a, b in zip(moved, moved[1:]):
        if b[0] < a[0]:
            raise OrderInversion("state changes would swap order")

    new_items = [[] for _ in plans]
    k = 0
    eps = 1e-9
    for li, start, ext in extrusions:
        length = ext.path.length
        end = start + length
        while k < len(moved) and moved[k][0] <= start + eps:
            new_items[li].append(moved[k][1])
            k += 1
        cuts = []
        inside = []
        while k < len(moved) and moved[k][0] < end - eps:
            cuts.append(moved[k][0] - start)
            inside.append(moved[k][1])
            k += 1
        if not cuts:
            new_items[li].append(ext)
            continue
        pieces = split_at_lengths(ext.path.vertices, cuts)
        for j, piece in enumerate(pieces):
            if len(piece) >= 2:
                new_items[li].append(Extrude(ToolPath(piece, ext.path.role, False, ext.path.color,
                                                      ext.path.band)))
            if j < len(inside):
                new_items[li].append(inside[j])
    last = len(plans) - 1
    while k < len(moved):
        new_items[last].append(moved[k][1])
        k += 1
    return [LayerPlan(p.z, p.index, items) for p, items in zip(plans, new_items)]
