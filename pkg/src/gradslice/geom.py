"""Small planar-geometry kernel shared by contouring, arrangement and clipping."""
from __future__ import annotations

import functools

import numpy as np
import shapely
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from shapely.geometry import Polygon

from .errors import NumericalDegeneracy


def cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def signed_area(pts):
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def path_length(pts, closed=False):
    pts = np.asarray(pts, dtype=float)
    if closed:
        pts = np.vstack([pts, pts[:1]])
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def merge_points(points, tol):
    """Cluster points closer than ``tol`` via spatial bucketing.

    Returns ``(labels, reps)``: a cluster label per input point and one
    representative coordinate per cluster (the lexicographically smallest
    member, so the result does not depend on input order).
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        return np.zeros(0, dtype=int), np.zeros((0, 2))
    keys = np.floor(points / tol).astype(np.int64)
    keys -= keys.min(axis=0)
    span = int(keys[:, 1].max()) + 3
    flat = (keys[:, 0] + 1) * span + (keys[:, 1] + 1)
    uniq, inverse = np.unique(flat, return_inverse=True)
    inverse = inverse.ravel()
    n = len(uniq)
    rows, cols = [], []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            nb = uniq + dx * span + dy
            pos = np.minimum(np.searchsorted(uniq, nb), n - 1)
            hit = uniq[pos] == nb
            if hit.any():
                rows.append(np.nonzero(hit)[0])
                cols.append(pos[hit])
    if rows:
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        # a bucket's first point stands in for the bucket when testing closeness
        order = np.argsort(inverse, kind="stable")
        first = order[np.searchsorted(inverse[order], np.arange(n))]
        close = np.linalg.norm(points[first[rows]] - points[first[cols]], axis=1) <= tol
        graph = coo_matrix((np.ones(int(close.sum())), (rows[close], cols[close])), shape=(n, n))
        _, cluster = connected_components(graph, directed=False)
    else:
        cluster = np.arange(n)
    labels = cluster[inverse]
    order = np.lexsort((points[:, 1], points[:, 0], labels))
    starts = np.r_[0, np.nonzero(np.diff(labels[order]))[0] + 1]
    reps = points[order[starts]]
    _, labels = np.unique(labels, return_inverse=True)
    return labels.ravel(), reps


def _candidate_pairs(A, B, tol, same):
    ga = shapely.linestrings(A)
    if same:
        gb = ga
    else:
        gb = shapely.linestrings(B)
    tree = shapely.STRtree(gb)
    lo = A.min(axis=1) - tol
    hi = A.max(axis=1) + tol
    boxes = shapely.box(lo[:, 0], lo[:, 1], hi[:, 0], hi[:, 1])
    ia, ib = tree.query(boxes)
    if same:
        keep = ia < ib
        ia, ib = ia[keep], ib[keep]
    return ia, ib


def segment_intersections(A, B=None, tol=1e-6):
    """All pairwise intersections between segment sets.

    ``A`` and ``B`` are ``(m, 2, 2)`` arrays; with ``B=None`` the set ``A`` is
    intersected with itself.  Returns two records ``(index, param, point)``,
    one for cuts on ``A`` and one for cuts on ``B`` (merged into the first
    when ``B`` is None).  Collinear overlaps cut each segment at the other's
    endpoints.
    """
    A = np.asarray(A, dtype=float).reshape(-1, 2, 2)
    same = B is None
    B = A if same else np.asarray(B, dtype=float).reshape(-1, 2, 2)
    empty = (np.zeros(0, int), np.zeros(0), np.zeros((0, 2)))
    if len(A) == 0 or len(B) == 0:
        return empty, empty
    ia, ib = _candidate_pairs(A, B, tol, same)
    if len(ia) == 0:
        return empty, empty
    p, q = A[ia, 0], B[ib, 0]
    r, s = A[ia, 1] - p, B[ib, 1] - q
    rl = np.linalg.norm(r, axis=1)
    sl = np.linalg.norm(s, axis=1)
    denom = cross(r, s)
    qp = q - p
    parallel = np.abs(denom) <= 1e-10 * rl * sl
    # signed offsets of both ends of the other segment from this one's line
    with np.errstate(divide="ignore", invalid="ignore"):
        d0 = cross(qp, r) / rl
        d1 = cross(qp + s, r) / rl
    # converging pairs are not a parallel band; let the crossing test see them
    parallel &= ~((np.abs(d0 - d1) > 0.5 * tol) & (denom != 0))

    cuts_a, cuts_b = [], []

    # proper crossings
    npi = ~parallel
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross(qp, s) / denom
        u = cross(qp, r) / denom
    et, eu = tol / rl, tol / sl
    hit = npi & (t >= -et) & (t <= 1 + et) & (u >= -eu) & (u <= 1 + eu)
    if hit.any():
        t, u = np.clip(t[hit], 0, 1), np.clip(u[hit], 0, 1)
        pp, rr, qq, ss = p[hit], r[hit], q[hit], s[hit]
        X = pp + t[:, None] * rr
        # snap to exact endpoints so that shared vertices stay bit-identical
        for cond, val in ((u * sl[hit] <= tol, qq), (u * sl[hit] >= sl[hit] - tol, qq + ss),
                          (t * rl[hit] <= tol, pp), (t * rl[hit] >= rl[hit] - tol, pp + rr)):
            X = np.where(cond[:, None], val, X)
        cuts_a.append((ia[hit], t, X))
        cuts_b.append((ib[hit], u, X))

    # near-parallel bands that are neither collinear nor clearly apart
    if parallel.any():
        sel = np.nonzero(parallel)[0]
        dist = 0.5 * np.abs(d0[sel] + d1[sel])
        near = sel[(dist > tol) & (dist <= 10 * tol)]
        if len(near):
            k = near[0]
            ta = np.dot(qp[k], r[k]) / rl[k] ** 2
            tb = np.dot(qp[k] + s[k], r[k]) / rl[k] ** 2
            if max(ta, tb) > 0 and min(ta, tb) < 1:
                raise NumericalDegeneracy("near-parallel overlapping segments closer than the snap "
                                          "tolerance allows", tuple(np.round(p[k], 9)))

    # an endpoint lying on the other segment's interior cuts it there
    # (covers collinear overlaps and shallow T-junctions alike)
    for seg_idx, segs, others, target in ((ia, A, B[ib], cuts_a), (ib, B, A[ia], cuts_b)):
        base = segs[seg_idx, 0]
        d = segs[seg_idx, 1] - base
        dlen = np.linalg.norm(d, axis=1)
        for pt in (others[:, 0], others[:, 1]):
            rel = pt - base
            prm = np.einsum("ij,ij->i", rel, d) / dlen ** 2
            off = np.abs(cross(rel, d)) / dlen
            inner = (off <= tol) & (prm * dlen > tol) & (prm * dlen < dlen - tol)
            if inner.any():
                target.append((seg_idx[inner], prm[inner], pt[inner]))

    def pack(items):
        if not items:
            return empty
        return (np.concatenate([i[0] for i in items]), np.concatenate([i[1] for i in items]),
                np.concatenate([i[2] for i in items]))

    if same:
        return pack(cuts_a + cuts_b), empty
    return pack(cuts_a), pack(cuts_b)


def rings_to_segments(rings, closed=True):
    segs = []
    for ring in rings:
        ring = np.asarray(ring, dtype=float)
        if len(ring) < 2:
            continue
        pts = np.vstack([ring, ring[:1]]) if closed else ring
        segs.append(np.stack([pts[:-1], pts[1:]], axis=1))
    return np.concatenate(segs) if segs else np.zeros((0, 2, 2))


def region_from_rings(rings):
    """Even-odd filled region bounded by closed rings (shapely geometry)."""
    polys = []
    for ring in rings:
        ring = np.asarray(ring, dtype=float)
        if len(ring) < 3:
            continue
        poly = Polygon(ring)
        if not poly.is_valid:
            poly = shapely.make_valid(poly)
        if not poly.is_empty and poly.area > 0:
            polys.append(poly)
    if not polys:
        return Polygon()
    # nesting depth parity decides inside/outside
    return functools.reduce(lambda a, b: a.symmetric_difference(b), polys)


def polygons_of(geom):
    """Iterate the polygon parts of any shapely geometry."""
    if geom is None or geom.is_empty:
        return []
    if geom.geom_type == "Polygon":
        return [geom]
    if hasattr(geom, "geoms"):
        out = []
        for g in geom.geoms:
            out.extend(polygons_of(g))
        return out
    return []


# --------------------------------------------------------------------------
# ear clipping

def _bridge_holes(outer, holes):
    """Splice holes into the outer ring via mutually visible vertex bridges."""
    ring = [tuple(p) for p in outer]
    hole_list = sorted((list(map(tuple, h)) for h in holes if len(h) >= 3),
                       key=lambda h: -max(p[0] for p in h))
    for hole in hole_list:
        mi = max(range(len(hole)), key=lambda k: (hole[k][0], -hole[k][1]))
        mx, my = hole[mi]
        # closest edge hit by a ray towards +x
        best, best_x = None, np.inf
        n = len(ring)
        for k in range(n):
            a, b = ring[k], ring[(k + 1) % n]
            if (a[1] - my) * (b[1] - my) > 0 or a[1] == b[1]:
                continue
            xi = a[0] + (my - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            if mx <= xi < best_x:
                best_x, best = xi, k
        if best is None:
            best = min(range(n), key=lambda k: (ring[k][0] - mx) ** 2 + (ring[k][1] - my) ** 2)
            cand = best
        else:
            a, b = ring[best], ring[(best + 1) % n]
            cand = best if a[0] > b[0] else (best + 1) % n
            px, py = ring[cand]
            # reflex vertices inside the triangle (M, I, P) block visibility
            ix = best_x
            tri = np.array([[mx, my], [ix, my], [px, py]])
            for k in range(n):
                if k == cand:
                    continue
                v = ring[k]
                if v[0] < mx or not _in_triangle(v, tri):
                    continue
                prev, nxt = ring[k - 1], ring[(k + 1) % n]
                if (v[0] - prev[0]) * (nxt[1] - v[1]) - (v[1] - prev[1]) * (nxt[0] - v[0]) >= 0:
                    continue
                ang_c = abs(np.arctan2(ring[cand][1] - my, ring[cand][0] - mx))
                ang_v = abs(np.arctan2(v[1] - my, v[0] - mx))
                if ang_v < ang_c or (ang_v == ang_c and (v[0] - mx) < (ring[cand][0] - mx)):
                    cand = k
        spliced = hole[mi:] + hole[:mi] + [hole[mi]]
        ring = ring[:cand + 1] + spliced + [ring[cand]] + ring[cand + 1:]
    return ring


def _in_triangle(p, tri):
    a, b, c = tri
    d1 = (p[0] - b[0]) * (a[1] - b[1]) - (a[0] - b[0]) * (p[1] - b[1])
    d2 = (p[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (p[1] - c[1])
    d3 = (p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])
    neg = d1 < 0 or d2 < 0 or d3 < 0
    pos = d1 > 0 or d2 > 0 or d3 > 0
    return not (neg and pos)


def ear_clip(outer, holes=()):
    """Triangulate a polygon with holes; returns an ``(k, 3, 2)`` array.

    ``outer`` may have either orientation; holes are bridged into it first.
    Quadratic in the vertex count, so callers should simplify large rings.
    """
    outer = np.asarray(outer, dtype=float)
    if signed_area(outer) < 0:
        outer = outer[::-1]
    fixed = []
    for h in holes:
        h = np.asarray(h, dtype=float)
        fixed.append(h[::-1] if signed_area(h) > 0 else h)
    ring = _bridge_holes(outer, fixed)
    idx = list(range(len(ring)))
    pts = ring
    tris = []
    guard = 0
    while len(idx) > 3 and guard < 4 * len(pts) ** 2:
        guard += 1
        clipped = False
        n = len(idx)
        for k in range(n):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % n]
            a, b, c = pts[i0], pts[i1], pts[i2]
            turn = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if turn <= 0:
                continue
            tri = (a, b, c)
            blocked = False
            for j in idx:
                v = pts[j]
                if v == a or v == b or v == c:
                    continue
                if _in_triangle(v, tri):
                    blocked = True
                    break
            if blocked:
                continue
            tris.append(tri)
            del idx[k]
            clipped = True
            break
        if not clipped:
            break
    if len(idx) == 3:
        a, b, c = (pts[i] for i in idx)
        if (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) > 0:
            tris.append((a, b, c))
    return np.asarray(tris, dtype=float).reshape(-1, 3, 2)


def representative_point(polygon, max_vertices=300):
    """Deterministic interior point: centroid of the largest ear-clipping triangle.

    Rings are simplified (topology preserving) until small enough for
    quadratic ear clipping; the centroid is verified against the original
    polygon and replaced by shapely's ``point_on_surface`` if it falls outside.
    """
    poly = polygon
    tol = 1e-3
    while (len(poly.exterior.coords) + sum(len(r.coords) for r in poly.interiors)) > max_vertices:
        simp = polygon.simplify(tol, preserve_topology=True)
        if simp.geom_type != "Polygon" or simp.is_empty:
            break
        poly = simp
        tol *= 2
    tris = ear_clip(np.asarray(poly.exterior.coords)[:-1],
                    [np.asarray(r.coords)[:-1] for r in poly.interiors])
    if len(tris):
        areas = np.abs(cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]))
        k = int(np.argmax(areas))
        c = tris[k].mean(axis=0)
        if areas[k] > 0 and polygon.contains(shapely.Point(c)):
            return float(c[0]), float(c[1])
    p = polygon.point_on_surface()
    return float(p.x), float(p.y)
