"""Conventional toolpath primitives and clipping of paths against coloured faces."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
import shapely
from shapely import affinity
from shapely.geometry import LineString

from .errors import UncoveredSegment
from .geom import polygons_of, region_from_rings, rings_to_segments, segment_intersections

ROLES = ("perimeter", "infill", "skin", "purge")


class ShortSegmentWarning(UserWarning):
    """A clipped toolpath piece is shorter than the minimum segment length."""


class ThinRegionWarning(UserWarning):
    """A region is thinner than one bead width and received no fill."""


@dataclass(frozen=True)
class ToolPath:
    points: np.ndarray
    role: str = "perimeter"
    closed: bool = False
    color: int | None = None
    band: int = -1

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")

    @property
    def vertices(self):
        """Vertex sequence including the return to the start for closed paths."""
        if self.closed:
            return np.vstack([self.points, self.points[:1]])
        return self.points

    @property
    def length(self):
        return float(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1).sum())

    @property
    def start(self):
        return self.points[0]

    @property
    def end(self):
        return self.points[0] if self.closed else self.points[-1]

    def with_color(self, color, band=None):
        return replace(self, color=color, band=self.band if band is None else band)

    def reversed(self):
        if self.closed:
            return replace(self, points=np.vstack([self.points[:1], self.points[1:][::-1]]))
        return replace(self, points=self.points[::-1])

    def midpoint(self):
        return point_at(self.vertices, self.length / 2)

    def __eq__(self, other):
        return (isinstance(other, ToolPath) and self.role == other.role and self.closed == other.closed
                and self.color == other.color and self.band == other.band
                and self.points.shape == other.points.shape and np.array_equal(self.points, other.points))

    def __hash__(self):
        return hash((self.role, self.closed, self.color, self.points.tobytes()))


@dataclass(frozen=True)
class PrintSettings:
    layer_height: float = 0.2
    bead_width: float = 0.4
    perimeters: int = 3
    infill_density: float = 1.0
    infill_angle: float = 0.0
    alternate_infill: bool = True
    min_segment: float = 5.0
    resolution: float | None = None
    fill: str = "concentric"
    first_layer_z: float | None = None

    def __post_init__(self):
        if not self.layer_height > 0:
            raise ValueError("layer height must be positive")
        if not self.bead_width > self.layer_height:
            raise ValueError("bead width must exceed layer height")
        if not 0 < self.infill_density <= 1:
            raise ValueError("infill density must be in (0, 1]")
        if self.perimeters < 0:
            raise ValueError("perimeter count must be >= 0")
        if self.fill not in ("concentric", "rectilinear"):
            raise ValueError(f"unknown fill {self.fill!r}")
        if self.resolution is not None and not self.resolution > 0:
            raise ValueError("resolution must be positive")

    @property
    def h(self):
        return self.layer_height

    @property
    def w(self):
        return self.bead_width

    @property
    def xy_resolution(self):
        return self.resolution if self.resolution is not None else self.bead_width / 4

    @property
    def spacing(self):
        return self.bead_width / self.infill_density

    def infill_angle_for(self, layer_index):
        extra = 90.0 if (self.alternate_infill and layer_index % 2) else 0.0
        return self.infill_angle + extra

    def layer_heights(self, height):
        """Slice planes (mid-layer) for a part of the given height."""
        n = int(math.floor(height / self.layer_height + 1e-9))
        return [(k + 0.5) * self.layer_height for k in range(n)]


def as_region(outline):
    """Accept shapely geometry or a list of rings (even-odd) and return geometry."""
    if hasattr(outline, "geom_type"):
        return outline
    return region_from_rings(outline)


def _rings_of(poly):
    poly = shapely.geometry.polygon.orient(poly, 1.0)
    out = [np.asarray(poly.exterior.coords)[:-1]]
    out.extend(np.asarray(r.coords)[:-1] for r in poly.interiors)
    return out


def _loops(geom, role):
    paths = []
    for poly in polygons_of(geom):
        for ring in _rings_of(poly):
            if len(ring) >= 2 and LineString(np.vstack([ring, ring[:1]])).length > 1e-6:
                paths.append(ToolPath(ring, role, closed=True))
    return paths


def generate_perimeters(outline, count, w):
    """``count`` inward offsets at ``(k + 0.5) * w``; vanishing offsets are dropped."""
    region = as_region(outline)
    paths = []
    if region.is_empty or region.area <= 0:
        return paths
    for k in range(count):
        off = region.buffer(-(k + 0.5) * w, join_style="mitre", mitre_limit=2.0)
        if off.is_empty:
            break
        paths.extend(_loops(off, "perimeter"))
    return paths


def infill_region(outline, count, w):
    """Area left for infill: ``count * w`` inside the outline."""
    region = as_region(outline)
    if count <= 0:
        return region
    return region.buffer(-count * w, join_style="mitre", mitre_limit=2.0)


def rectilinear_infill(region, spacing, angle=0.0, role="infill", phase=None):
    """Parallel hatch lines at ``spacing`` clipped to ``region``.

    Lines sit at ``min + phase + k*spacing`` perpendicular to the hatch
    direction (``phase`` defaults to half the spacing; ``phase=0`` puts the
    outermost lines on the region boundary).  Consecutive lines are joined
    into a serpentine whenever the connecting move stays inside the region.
    """
    region = as_region(region)
    if region.is_empty or region.area <= 0 or not spacing > 0:
        return []
    rot = affinity.rotate(region, -angle, origin=(0, 0)) if angle else region
    xmin, ymin, xmax, ymax = rot.bounds
    phase = spacing / 2 if phase is None else phase
    ys = ymin + phase + spacing * np.arange(int(math.floor((ymax - ymin - phase) / spacing + 1e-9)) + 1)
    if phase > 0:
        ys = ys[ys < ymax]
    else:
        # lines on the boundary itself would clip to nothing
        ys = np.clip(ys, ymin + 1e-7, ymax - 1e-7)
    if len(ys) == 0:
        return []
    pad = 1.0
    lines = shapely.linestrings(np.stack([np.stack([np.full_like(ys, xmin - pad), ys], 1),
                                          np.stack([np.full_like(ys, xmax + pad), ys], 1)], 1))
    cut = shapely.intersection(lines, rot)
    guard = rot.buffer(1e-7)
    chains = []          # list of lists of points
    open_chains = []     # indices of chains ending on the previous line
    for k, geom in enumerate(cut):
        segs = []
        for g in _linestrings(geom):
            c = np.asarray(g.coords)
            if len(c) >= 2 and c[-1, 0] - c[0, 0] > 1e-9:
                segs.append(np.array([c[0], c[-1]]) if c[0, 0] <= c[-1, 0] else np.array([c[-1], c[0]]))
        segs.sort(key=lambda s: s[0, 0])
        forward = k % 2 == 0
        if not forward:
            segs = [s[::-1] for s in segs[::-1]]
        next_open = []
        for seg in segs:
            best, best_d = None, None
            for ci in open_chains:
                tail = chains[ci][-1]
                d = float(np.hypot(*(seg[0] - tail)))
                if d > 3 * spacing:
                    continue
                if best_d is None or d < best_d:
                    if guard.covers(LineString([tail, seg[0]])):
                        best, best_d = ci, d
            if best is not None:
                chains[best].extend([seg[0], seg[1]])
                open_chains.remove(best)
                next_open.append(best)
            else:
                chains.append([seg[0], seg[1]])
                next_open.append(len(chains) - 1)
        open_chains = next_open
    paths = []
    for chain in chains:
        pts = np.asarray(chain)
        if angle:
            pts = _rotate(pts, angle)
        paths.append(ToolPath(_dedupe(pts), role, closed=False))
    return paths


def _linestrings(geom):
    if geom is None or geom.is_empty:
        return []
    if geom.geom_type == "LineString":
        return [geom]
    if hasattr(geom, "geoms"):
        out = []
        for g in geom.geoms:
            out.extend(_linestrings(g))
        return out
    return []


def _rotate(pts, angle):
    a = math.radians(angle)
    c, s = math.cos(a), math.sin(a)
    return np.stack([pts[:, 0] * c - pts[:, 1] * s, pts[:, 0] * s + pts[:, 1] * c], axis=1)


def _dedupe(pts, tol=1e-6):
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.linalg.norm(np.diff(pts, axis=0), axis=1) >= tol
    return pts[keep]


def concentric_fill(region, w, role="infill"):
    """Inward offsets by ``w`` starting half a bead inside the boundary.

    Wherever a component of the remaining area is too narrow for another
    full loop, it gets one gap-fill loop so the fill covers the region.
    """
    region = as_region(region)
    if region.is_empty or region.area <= 0:
        return []
    paths = []
    k = 0
    off = region.buffer(-0.5 * w, join_style="mitre", mitre_limit=2.0)
    if off.is_empty:
        warnings.warn("region is thinner than one bead width; no fill generated",
                      ThinRegionWarning, stacklevel=2)
        return []
    while not off.is_empty:
        paths.extend(_loops(off, role))
        k += 1
        inner = region.buffer(-k * w, join_style="mitre", mitre_limit=2.0)
        nxt = region.buffer(-(k + 0.5) * w, join_style="mitre", mitre_limit=2.0)
        # strips the next loop will not reach
        reach = nxt.buffer(0.5 * w + 1e-6, join_style="mitre", mitre_limit=2.0)
        for part in polygons_of(inner.difference(reach)):
            if part.buffer(-w / 8).is_empty:
                continue
            core = part.buffer(-w / 4, join_style="mitre", mitre_limit=2.0)
            paths.extend(_loops(core if not core.is_empty else part, role))
        off = nxt
    return paths


# --------------------------------------------------------------------------
# clipping

def point_at(vertices, s):
    """Point at arc length ``s`` along a vertex sequence."""
    seg = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    k = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1))
    t = 0.0 if seg[k] == 0 else (s - cum[k]) / seg[k]
    return vertices[k] + t * (vertices[k + 1] - vertices[k])


def split_at_lengths(vertices, lengths):
    """Split an open vertex sequence at the given arc lengths (sorted)."""
    seg = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    pieces = []
    cur = [vertices[0]]
    k = 0
    for s in lengths:
        while k < len(seg) and cum[k + 1] <= s:
            k += 1
            cur.append(vertices[k])
        if k >= len(seg):
            break
        t = (s - cum[k]) / seg[k] if seg[k] > 0 else 0.0
        p = vertices[k] + t * (vertices[k + 1] - vertices[k])
        cur.append(p)
        pieces.append(np.asarray(cur))
        cur = [p]
    cur.extend(vertices[k + 1:])
    pieces.append(np.asarray(cur))
    return [_dedupe(p, 1e-12) for p in pieces]


def _piece_arrays(path, cuts):
    """Split one path at positions ``seg_index + t``; returns vertex arrays."""
    verts = path.vertices
    segs = np.linalg.norm(np.diff(verts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(segs)])
    total = cum[-1]
    if len(cuts):
        idx = np.floor(cuts).astype(int)
        idx = np.clip(idx, 0, len(segs) - 1)
        s = cum[idx] + (cuts - idx) * segs[idx]
        s = np.unique(np.round(s, 12))
        s = s[(s > 1e-9) & (s < total - 1e-9)] if not path.closed else s
    else:
        s = np.zeros(0)
    if path.closed:
        s = np.unique(np.round(np.mod(s, total), 12))
        s = np.unique(np.where(s > total - 1e-9, 0.0, s))
        if len(s) == 0:
            return [verts], True
        s0 = s[0]
        rolled = verts
        if s0 > 1e-9:
            # roll the loop so it starts at the first cut
            head, tail = split_at_lengths(verts, [s0])
            rolled = np.vstack([tail, head[1:]])
        rest = np.unique(np.round(np.mod(s - s0, total), 12))
        rest = rest[(rest > 1e-9) & (rest < total - 1e-9)]
        return split_at_lengths(rolled, rest), False
    return split_at_lengths(verts, s), False


def clip_paths_to_faces(paths, faces, min_segment=5.0, tol=1e-9):
    """Split paths at face boundaries and label every piece by its midpoint's face.

    Consecutive pieces landing in faces with the same ``(color, band)`` key are
    merged back together.  Returns labelled :class:`ToolPath` objects in input
    order.
    """
    paths = list(paths)
    if not paths:
        return []
    polys = [f.polygon for f in faces]
    if not polys:
        raise UncoveredSegment("no faces to clip against")
    tree = shapely.STRtree(polys)
    rings = []
    for poly in polys:
        for part in polygons_of(poly):
            rings.append(np.asarray(part.exterior.coords)[:-1])
            rings.extend(np.asarray(r.coords)[:-1] for r in part.interiors)
    B = rings_to_segments(rings, closed=True)

    seg_owner, seg_local, P = [], [], []
    for i, p in enumerate(paths):
        v = p.vertices
        n = len(v) - 1
        if n <= 0:
            continue
        P.append(np.stack([v[:-1], v[1:]], axis=1))
        seg_owner.append(np.full(n, i))
        seg_local.append(np.arange(n))
    P = np.concatenate(P)
    seg_owner = np.concatenate(seg_owner)
    seg_local = np.concatenate(seg_local)
    (ci, ct, _), _ = segment_intersections(P, B, tol=max(tol, 1e-12))
    cut_pos = [[] for _ in paths]
    for k, t in zip(ci.tolist(), ct.tolist()):
        cut_pos[seg_owner[k]].append(seg_local[k] + t)

    split = []
    for i, p in enumerate(paths):
        pieces, still_closed = _piece_arrays(p, np.sort(np.asarray(cut_pos[i], dtype=float)))
        for arr in pieces:
            if len(arr) >= 2:
                split.append((i, arr, still_closed))

    mids = np.array([point_at(arr, _len(arr) / 2) for _, arr, _ in split])
    owner = np.full(len(split), -1)
    pi, fi = tree.query(shapely.points(mids), predicate="within")
    for a, b in zip(pi.tolist(), fi.tolist()):
        if owner[a] < 0 or b < owner[a]:
            owner[a] = b
    missing = np.nonzero(owner < 0)[0]
    if len(missing):
        near_idx = tree.query_nearest(shapely.points(mids[missing]), max_distance=1e-6, all_matches=False)
        found = dict(zip(near_idx[0].tolist(), near_idx[1].tolist()))
        for j, m in enumerate(missing.tolist()):
            if j not in found:
                raise UncoveredSegment(f"toolpath piece with midpoint {tuple(np.round(mids[m], 6))} "
                                       "lies in no face")
            owner[m] = found[j]

    out = []
    short = 0
    start = 0
    while start < len(split):
        i = split[start][0]
        end = start
        while end < len(split) and split[end][0] == i:
            end += 1
        group = [(split[k][1], split[k][2], faces[owner[k]]) for k in range(start, end)]
        merged = _merge_group(paths[i], group)
        for piece in merged:
            if piece.length < min_segment:
                short += 1
        out.extend(merged)
        start = end
    if short:
        warnings.warn(f"{short} clipped toolpath piece(s) shorter than {min_segment} mm",
                      ShortSegmentWarning, stacklevel=2)
    return out


def _len(arr):
    return float(np.linalg.norm(np.diff(arr, axis=0), axis=1).sum())


def _key(face):
    return face.color, getattr(face, "band", -1)


def _merge_group(path, group):
    if len(group) == 1 and group[0][1]:
        arr, _, face = group[0]
        return [replace(path, color=face.color, band=getattr(face, "band", -1))]
    runs = []
    for arr, _, face in group:
        if runs and _key(runs[-1][1]) == _key(face):
            runs[-1][0].append(arr)
        else:
            runs.append(([arr], face))
    if path.closed and len(runs) > 1 and _key(runs[0][1]) == _key(runs[-1][1]):
        last = runs.pop()
        runs[0] = (last[0] + runs[0][0], runs[0][1])
    if path.closed and len(runs) == 1:
        arrs, face = runs[0]
        joined = _join(arrs)
        return [ToolPath(joined[:-1], path.role, closed=True, color=face.color,
                         band=getattr(face, "band", -1))]
    return [ToolPath(_join(arrs), path.role, closed=False, color=face.color,
                     band=getattr(face, "band", -1)) for arrs, face in runs]


def _join(arrs):
    out = [arrs[0]]
    for a in arrs[1:]:
        out.append(a[1:])
    return np.vstack(out)
