"""Planar arrangement of geometry polygons and material iso-polylines.

Segments are split at every pairwise intersection, endpoints are snapped and
a doubly connected edge list is built.  Half-edge ``2e`` runs along edge ``e``
from its first to its second vertex and ``2e + 1`` is its twin, so
``twin(h) == h ^ 1``.  Face cycles follow ``next`` with the face on the left.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import shapely
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from shapely.geometry import Point, Polygon

from .contour import Contour
from .geom import (merge_points, polygons_of, region_from_rings, representative_point,
                   rings_to_segments, segment_intersections)

log = logging.getLogger(__name__)


class FaceSpanWarning(UserWarning):
    """A face's boundary samples span more than one palette interval."""


@dataclass
class Face:
    outer: np.ndarray
    holes: list
    halfedges: np.ndarray
    component: int
    point: tuple | None = None

    @cached_property
    def polygon(self):
        poly = Polygon(self.outer, [h for h in self.holes if len(h) >= 3])
        if not poly.is_valid:
            poly = shapely.make_valid(poly)
            parts = polygons_of(poly)
            poly = max(parts, key=lambda p: p.area) if parts else Polygon()
        return poly

    @property
    def area(self):
        return self.polygon.area


@dataclass
class Arrangement:
    vertices: np.ndarray
    origin: np.ndarray
    next: np.ndarray
    cycle: np.ndarray
    cycle_area: np.ndarray
    vertex_component: np.ndarray
    outer_cycles: dict
    faces: list
    face_of_cycle: dict = field(default_factory=dict)

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_edges(self):
        return len(self.origin) // 2

    def twin(self, h):
        return np.bitwise_xor(h, 1)

    def dest(self, h):
        return self.origin[np.bitwise_xor(h, 1)]

    def face_of(self, h):
        """Bounded face index left of half-edge ``h`` or -1 for the outer face."""
        return self.face_of_cycle.get(int(self.cycle[h]), -1)

    def euler_characteristics(self):
        """``V - E + F`` for every connected component (F includes the outer face)."""
        out = {}
        comp_of_edge = self.vertex_component[self.origin[::2]]
        for c in np.unique(self.vertex_component):
            v = int(np.sum(self.vertex_component == c))
            e = int(np.sum(comp_of_edge == c))
            # one cycle per bounded face plus the component's outer cycle
            cycles = np.unique(self.cycle[self.vertex_component[self.origin] == c])
            out[int(c)] = v - e + len(cycles)
        return out

    def face_count(self):
        return len(self.faces)


def _gather(polygons, polylines):
    closed, open_ = [], []
    for src, is_closed in ((polygons, True), (polylines, False)):
        if src is None:
            continue
        if isinstance(src, Contour):
            closed.extend(src.polygons)
            open_.extend(src.polylines)
        elif is_closed:
            closed.extend(src)
        else:
            open_.extend(src)
    segs = np.concatenate([rings_to_segments(closed, True), rings_to_segments(open_, False)])
    return segs


def build_arrangement(polygons, polylines=(), snap_tol=1e-6):
    """Overlay closed rings and open polylines into a DCEL."""
    segs = _gather(polygons, polylines)
    if len(segs):
        keep = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1) > snap_tol
        segs = segs[keep]
    if len(segs) == 0:
        return _empty()
    (ci, ct, cp), _ = segment_intersections(segs, None, snap_tol)
    m = len(segs)
    seg_id = np.concatenate([np.arange(m), np.arange(m), ci])
    param = np.concatenate([np.zeros(m), np.ones(m), ct])
    pts = np.concatenate([segs[:, 0], segs[:, 1], cp])
    order = np.lexsort((param, seg_id))
    seg_id, pts = seg_id[order], pts[order]
    labels, verts = merge_points(pts, snap_tol)
    same = seg_id[1:] == seg_id[:-1]
    edges = np.stack([labels[:-1][same], labels[1:][same]], axis=1)
    edges = edges[edges[:, 0] != edges[:, 1]]
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    if len(edges) == 0:
        return _empty()
    used, edges = np.unique(edges, return_inverse=True)
    edges = edges.reshape(-1, 2)
    verts = verts[used]
    return _build_dcel(verts, edges)


def _empty():
    return Arrangement(np.zeros((0, 2)), np.zeros(0, int), np.zeros(0, int), np.zeros(0, int),
                       np.zeros(0), np.zeros(0, int), {}, [])


def _build_dcel(verts, edges):
    nv, ne = len(verts), len(edges)
    origin = edges.reshape(-1)                       # 2e -> edges[e,0], 2e+1 -> edges[e,1]
    dest = edges[:, ::-1].reshape(-1)
    d = verts[dest] - verts[origin]
    angle = np.arctan2(d[:, 1], d[:, 0])
    order = np.lexsort((angle, origin))
    pos = np.empty_like(order)
    pos[order] = np.arange(len(order))
    start = np.searchsorted(origin[order], np.arange(nv))
    end = np.searchsorted(origin[order], np.arange(nv), side="right")
    # next(h): outgoing edge at dest(h) just clockwise of twin(h)
    tw = np.arange(2 * ne) ^ 1
    p = pos[tw]
    v = origin[tw]
    prev = np.where(p > start[v], p - 1, end[v] - 1)
    nxt = order[prev]

    cycle = np.full(2 * ne, -1)
    nxt_list = nxt.tolist()
    cycles = []
    for h0 in range(2 * ne):
        if cycle[h0] >= 0:
            continue
        cid = len(cycles)
        hs = [h0]
        cycle[h0] = cid
        h = nxt_list[h0]
        while h != h0:
            cycle[h] = cid
            hs.append(h)
            h = nxt_list[h]
        cycles.append(np.asarray(hs))
    po, pd = verts[origin], verts[dest]
    contrib = 0.5 * (po[:, 0] * pd[:, 1] - po[:, 1] * pd[:, 0])
    area = np.bincount(cycle, weights=contrib, minlength=len(cycles))

    graph = coo_matrix((np.ones(ne), (edges[:, 0], edges[:, 1])), shape=(nv, nv))
    _, vcomp = connected_components(graph, directed=False)
    cycle_comp = np.array([vcomp[origin[c[0]]] for c in cycles])

    outer = {}
    for c in np.unique(cycle_comp):
        ids = np.nonzero(cycle_comp == c)[0]
        outer[int(c)] = int(ids[np.argmin(area[ids])])

    faces = []
    face_of_cycle = {}
    outer_ids = set(outer.values())
    for cid, hs in enumerate(cycles):
        if cid in outer_ids:
            continue
        ring = _clean_ring(origin[hs].tolist())
        face_of_cycle[cid] = len(faces)
        faces.append(Face(verts[ring], [], hs, int(cycle_comp[cid])))

    _assign_holes(faces, face_of_cycle, outer, cycles, origin, verts, vcomp)
    return Arrangement(verts, origin, nxt, cycle, area, vcomp, outer, faces, face_of_cycle)


def _clean_ring(ids):
    """Drop antenna spikes (``a b a``) from a cyclic vertex sequence."""
    st = []
    for v in ids:
        if len(st) >= 2 and st[-2] == v:
            st.pop()
        elif st and st[-1] == v:
            continue
        else:
            st.append(v)
    changed = True
    while changed and len(st) >= 3:
        changed = False
        if st[0] == st[-1]:
            st.pop()
            changed = True
        elif st[-1] == st[1]:
            del st[0]
            del st[0]
            changed = True
        elif st[-2] == st[0]:
            st.pop()
            st.pop()
            changed = True
    return st if len(st) >= 3 else []


def _assign_holes(faces, face_of_cycle, outer, cycles, origin, verts, vcomp):
    if len(outer) < 2 or not faces:
        return
    polys = [Polygon(f.outer) if len(f.outer) >= 3 else Polygon() for f in faces]
    areas = np.array([p.area for p in polys])
    tree = shapely.STRtree(polys)
    comps = sorted(outer)
    probes = [Point(verts[origin[cycles[outer[c]][0]]]) for c in comps]
    pi, fi = tree.query(probes, predicate="within")
    best = {}
    for p_idx, f_idx in zip(pi.tolist(), fi.tolist()):
        comp = comps[p_idx]
        if faces[f_idx].component == comp:
            continue
        if comp not in best or areas[f_idx] < areas[best[comp]]:
            best[comp] = f_idx
    for comp, f_idx in best.items():
        hs = cycles[outer[comp]]
        ring = _clean_ring(origin[hs].tolist())
        face = faces[f_idx]
        if ring:
            face.holes.append(verts[ring])
        face.halfedges = np.concatenate([face.halfedges, hs])
        face_of_cycle[outer[comp]] = f_idx


# --------------------------------------------------------------------------

def inside_rings(rings):
    """Point predicate for the even-odd region bounded by ``rings``."""
    region = region_from_rings(rings)

    def inside(points):
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return shapely.contains_xy(region, points[:, 0], points[:, 1])
    return inside


def inside_sdf(design, z):
    from .vcad import sdf_field
    field = sdf_field(design)

    def inside(points):
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return field(points[:, 0], points[:, 1], np.full(len(points), z)) <= 0
    return inside


def extract_bounded_faces(arr, inside=None):
    """Bounded faces of ``arr`` whose representative point satisfies ``inside``."""
    kept = []
    for face in arr.faces:
        poly = face.polygon
        if poly.is_empty or poly.area <= 0:
            continue
        if face.point is None:
            face.point = representative_point(poly)
        kept.append(face)
    if inside is not None and kept:
        mask = np.asarray(inside(np.array([f.point for f in kept])), dtype=bool)
        kept = [f for f, ok in zip(kept, mask) if ok]
    return kept


@dataclass
class ColoredFace:
    polygon: Polygon
    color: int
    point: tuple
    fraction: float = 0.0
    band: int = -1

    @property
    def outer(self):
        return np.asarray(self.polygon.exterior.coords)[:-1]

    @property
    def holes(self):
        return [np.asarray(r.coords)[:-1] for r in self.polygon.interiors]

    @property
    def area(self):
        return self.polygon.area


def classify_faces(faces, fractions, palette, z, w=0.4):
    """Label faces with palette colours.

    ``fractions`` is a vectorised ``f(x, y, z) -> (..., n_materials)`` field
    (see :func:`gradslice.vcad.fraction_field`).  Faces smaller than
    ``w**2 / 4`` are merged into the neighbour sharing the longest boundary.
    """
    if not faces:
        return []
    pts = np.array([f.point if f.point is not None else representative_point(f.polygon)
                    for f in faces], dtype=float)
    frac = np.asarray(fractions(pts[:, 0], pts[:, 1], np.full(len(pts), z)), dtype=float)
    colors = np.atleast_1d(palette.color_of_fractions(frac))
    grad = frac[:, 1] if frac.shape[1] > 1 else np.zeros(len(pts))
    out = [ColoredFace(f.polygon, int(c), (float(p[0]), float(p[1])), float(g))
           for f, c, p, g in zip(faces, colors, pts, grad)]
    out = _merge_slivers(out, w * w / 4)
    if palette.components == 2 and palette.n > 1:
        _check_span(out, fractions, palette, z)
    return out


def _merge_slivers(faces, min_area):
    small = sorted((i for i, f in enumerate(faces) if f.area < min_area), key=lambda i: faces[i].area)
    if not small:
        return faces
    alive = [True] * len(faces)
    polys = [f.polygon for f in faces]
    tree = shapely.STRtree(polys)
    for i in small:
        if not alive[i]:
            continue
        best, best_len = None, 0.0
        for j in tree.query(polys[i], predicate="intersects").tolist():
            if j == i or not alive[j] or j in small and faces[j].area < faces[i].area:
                continue
            shared = polys[i].boundary.intersection(faces[j].polygon.boundary).length
            if shared > best_len:
                best, best_len = j, shared
        alive[i] = False
        if best is None:
            log.debug("dropping isolated sliver face of area %.3g", faces[i].area)
            continue
        merged = faces[best].polygon.union(faces[i].polygon)
        parts = polygons_of(merged)
        if len(parts) == 1:
            faces[best].polygon = parts[0]
        else:
            faces[best].polygon = max(parts, key=lambda p: p.area)
    return [f for f, ok in zip(faces, alive) if ok]


def _check_span(faces, fractions, palette, z):
    tol = 0.25 / palette.n
    for f in faces:
        ring = np.asarray(f.polygon.exterior.coords)
        if len(ring) > 200:
            ring = ring[np.linspace(0, len(ring) - 1, 200).astype(int)]
        m = np.asarray(fractions(ring[:, 0], ring[:, 1], np.full(len(ring), z)))[:, 1]
        lo = palette.color_of(m.min() + tol)
        hi = palette.color_of(m.max() - tol)
        if hi - lo > 1:
            warnings.warn(f"face near {f.point} spans palette colours {lo}..{hi}; "
                          "consider a finer sampling resolution", FaceSpanWarning, stacklevel=3)


def faces_to_svg(faces, palette, display_colors, size=None):
    """Debug dump: faces filled with their colour's display blend."""
    from .palette import blend_hex
    if not faces:
        return '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="1" height="1"/>\n'
    bounds = np.array([f.polygon.bounds for f in faces])
    x0, y0 = bounds[:, 0].min(), bounds[:, 1].min()
    x1, y1 = bounds[:, 2].max(), bounds[:, 3].max()
    w, h = x1 - x0, y1 - y0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
           f'viewBox="{x0:.3f} {-y1:.3f} {w:.3f} {h:.3f}" width="{size or 800}" '
           f'height="{(size or 800) * h / max(w, 1e-9):.0f}">']
    for f in faces:
        fill = blend_hex(palette.composition(f.color), display_colors)
        d = []
        for ring in [f.outer] + f.holes:
            d.append("M " + " L ".join(f"{x:.3f} {-y:.3f}" for x, y in ring) + " Z")
        out.append(f'<path d="{" ".join(d)}" fill="{fill}" fill-rule="evenodd" '
                   f'stroke="black" stroke-width="0.05"><title>colour {f.color}</title></path>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
