"""Iso-contour extraction on z-planes.

Fields are sampled on a regular grid, cut with marching squares and the
resulting unordered segments are stitched into ordered polygons (closed
components) and polylines (open components).  Triangle meshes are sliced
directly by plane intersection and reuse the same stitching.
"""
from __future__ import annotations

import logging
import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ResolutionError, StlError
from .geom import merge_points, signed_area

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6


class OpenMeshWarning(UserWarning):
    """Slicing a mesh produced open polylines: the mesh is not watertight."""


class DegenerateSegmentWarning(UserWarning):
    """Segments shorter than the stitching tolerance were dropped."""


@dataclass
class ScalarGrid:
    """Field samples ``values[j, i]`` at ``(x0 + i * cell, y0 + j * cell)``."""
    origin: tuple
    cell: float
    values: np.ndarray
    z: float = 0.0
    field: object = None

    def __post_init__(self):
        if not self.cell > 0:
            raise ResolutionError(f"cell size must be positive, got {self.cell}")
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    @property
    def nx(self):
        return self.values.shape[1]

    @property
    def ny(self):
        return self.values.shape[0]

    @property
    def xs(self):
        return self.origin[0] + np.arange(self.nx) * self.cell

    @property
    def ys(self):
        return self.origin[1] + np.arange(self.ny) * self.cell

    def interpolate(self, x, y):
        """Bilinear interpolation of the samples (clamped to the grid)."""
        fx = np.clip((np.asarray(x, float) - self.origin[0]) / self.cell, 0, self.nx - 1 - 1e-9)
        fy = np.clip((np.asarray(y, float) - self.origin[1]) / self.cell, 0, self.ny - 1 - 1e-9)
        i, j = np.floor(fx).astype(int), np.floor(fy).astype(int)
        tx, ty = fx - i, fy - j
        v = self.values
        return ((1 - tx) * (1 - ty) * v[j, i] + tx * (1 - ty) * v[j, i + 1]
                + tx * ty * v[j + 1, i + 1] + (1 - tx) * ty * v[j + 1, i])


@dataclass
class Contour:
    """Stitched iso-contour: closed polygons and open polylines (2D arrays)."""
    polygons: list = field(default_factory=list)
    polylines: list = field(default_factory=list)

    def __len__(self):
        return len(self.polygons) + len(self.polylines)

    def extend(self, other):
        self.polygons.extend(other.polygons)
        self.polylines.extend(other.polylines)
        return self


def inflate_bbox(bbox, cell, cells=2):
    xmin, ymin, xmax, ymax = bbox
    pad = cells * cell
    return (xmin - pad, ymin - pad, xmax + pad, ymax + pad)


def sample_grid(field, z, bbox, resolution):
    """Sample ``field(x, y, z)`` on a grid covering ``bbox`` inclusively.

    ``bbox`` is ``(xmin, ymin, xmax, ymax)``.  Callers that contour geometry
    should inflate the box beforehand (see :func:`inflate_bbox`) so every
    contour closes inside the grid.
    """
    xmin, ymin, xmax, ymax = (float(v) for v in bbox)
    extent = max(xmax - xmin, ymax - ymin)
    if not resolution > 0:
        raise ResolutionError(f"resolution must be positive, got {resolution}")
    if extent <= 0 or resolution > extent:
        raise ResolutionError(f"resolution {resolution} exceeds bounding box extent {extent}")
    nx = int(math.ceil((xmax - xmin) / resolution - 1e-9)) + 1
    ny = int(math.ceil((ymax - ymin) / resolution - 1e-9)) + 1
    xs = xmin + np.arange(nx) * resolution
    ys = ymin + np.arange(ny) * resolution
    X, Y = np.meshgrid(xs, ys)
    values = np.asarray(field(X, Y, np.full_like(X, z)), dtype=float)
    values = np.broadcast_to(values, X.shape).copy()
    return ScalarGrid((xmin, ymin), float(resolution), values, z=float(z), field=field)


# edge ids: 0 bottom (a-b), 1 right (b-c), 2 top (d-c), 3 left (a-d)
# corner bits: a=1 (i, j), b=2 (i+1, j), c=4 (i+1, j+1), d=8 (i, j+1)
_SINGLE = {
    1: (3, 0), 2: (0, 1), 3: (3, 1), 4: (1, 2), 6: (0, 2), 7: (2, 3),
    8: (2, 3), 9: (0, 2), 11: (1, 2), 12: (1, 3), 13: (0, 1), 14: (3, 0),
}
# saddles: (segments when the centre is high, segments when it is low)
_SADDLE = {
    5: (((0, 1), (2, 3)), ((3, 0), (1, 2))),
    10: (((3, 0), (1, 2)), ((0, 1), (2, 3))),
}


def _edge_points(edge, i, j, a, b, c, d, iso, x0, y0, h):
    xi = x0 + i * h
    yj = y0 + j * h
    xi1 = x0 + (i + 1) * h
    yj1 = y0 + (j + 1) * h
    with np.errstate(invalid="ignore", divide="ignore"):
        if edge == 0:
            t = (iso - a) / (b - a)
            return np.stack([xi + t * h, yj], axis=-1)
        if edge == 1:
            t = (iso - b) / (c - b)
            return np.stack([xi1, yj + t * h], axis=-1)
        if edge == 2:
            t = (iso - d) / (c - d)
            return np.stack([xi + t * h, yj1], axis=-1)
        t = (iso - a) / (d - a)
        return np.stack([xi, yj + t * h], axis=-1)


def marching_squares(grid, iso):
    """Return an ``(m, 2, 2)`` array of unordered iso-line segments.

    Crossing points are linearly interpolated along cell edges; a corner
    equal to ``iso`` counts as above it.  Saddle cells are disambiguated by
    sampling the field at the cell centre when the grid carries it, else by
    the mean of the four corners.
    """
    v = grid.values
    if v.shape[0] < 2 or v.shape[1] < 2:
        return np.zeros((0, 2, 2))
    above = v >= iso
    case = (above[:-1, :-1].astype(np.uint8) | (above[:-1, 1:] << 1)
            | (above[1:, 1:] << 2) | (above[1:, :-1] << 3))
    jj, ii = np.nonzero((case != 0) & (case != 15))
    if len(ii) == 0:
        return np.zeros((0, 2, 2))
    cases = case[jj, ii]
    a, b = v[jj, ii], v[jj, ii + 1]
    c, d = v[jj + 1, ii + 1], v[jj + 1, ii]
    x0, y0 = grid.origin
    h = grid.cell

    out = []
    for code, (e0, e1) in _SINGLE.items():
        sel = cases == code
        if not sel.any():
            continue
        args = (ii[sel], jj[sel], a[sel], b[sel], c[sel], d[sel], iso, x0, y0, h)
        out.append(np.stack([_edge_points(e0, *args), _edge_points(e1, *args)], axis=1))

    saddle = (cases == 5) | (cases == 10)
    if saddle.any():
        si, sj = ii[saddle], jj[saddle]
        if grid.field is not None:
            xc = x0 + (si + 0.5) * h
            yc = y0 + (sj + 0.5) * h
            centre = np.asarray(grid.field(xc, yc, np.full_like(xc, grid.z)), dtype=float)
        else:
            centre = (a[saddle] + b[saddle] + c[saddle] + d[saddle]) / 4
        high = centre >= iso
        for code, (hi_pairs, lo_pairs) in _SADDLE.items():
            for is_high, pairs in ((True, hi_pairs), (False, lo_pairs)):
                sel = (cases[saddle] == code) & (high == is_high)
                if not sel.any():
                    continue
                sub = np.nonzero(saddle)[0][sel]
                args = (ii[sub], jj[sub], a[sub], b[sub], c[sub], d[sub], iso, x0, y0, h)
                for e0, e1 in pairs:
                    out.append(np.stack([_edge_points(e0, *args), _edge_points(e1, *args)], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 2, 2))


def stitch_segments(segments, tol=DEFAULT_TOL):
    """Join unordered segments into ordered polygons and polylines.

    Endpoints within ``tol`` become one vertex; each connected component is
    walked depth-first.  Components that close on themselves are returned as
    polygons (first vertex not repeated), the rest as open polylines.
    """
    segs = np.asarray(segments, dtype=float).reshape(-1, 2, 2)
    if not tol > 0:
        raise ValueError("tol must be positive")
    if len(segs) == 0:
        return Contour()
    lengths = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)
    short = lengths < tol
    if short.any():
        warnings.warn(f"dropped {int(short.sum())} degenerate segment(s) shorter than {tol}",
                      DegenerateSegmentWarning, stacklevel=2)
        segs = segs[~short]
        if len(segs) == 0:
            return Contour()
    labels, verts = merge_points(segs.reshape(-1, 2), tol)
    edges = labels.reshape(-1, 2)
    edges = edges[edges[:, 0] != edges[:, 1]]
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    return _walk(edges, verts)


def _walk(edges, verts):
    nv = len(verts)
    if len(edges) == 0:
        return Contour()
    ends = np.concatenate([edges[:, 0], edges[:, 1]])
    other = np.concatenate([edges[:, 1], edges[:, 0]])
    eid = np.concatenate([np.arange(len(edges))] * 2)
    order = np.lexsort((other, ends))
    adj_v = other[order].tolist()
    adj_e = eid[order].tolist()
    start = np.searchsorted(ends[order], np.arange(nv + 1)).tolist()
    degree = np.diff(start)
    used = [False] * len(edges)
    cursor = start[:-1].copy()
    contour = Contour()

    def next_edge(v):
        k = cursor[v]
        while k < start[v + 1] and used[adj_e[k]]:
            k += 1
        cursor[v] = k
        if k < start[v + 1]:
            return adj_v[k], adj_e[k]
        return None

    def trail(v0):
        path = [v0]
        v = v0
        while True:
            step = next_edge(v)
            if step is None:
                return path
            w, e = step
            used[e] = True
            path.append(w)
            v = w

    # open components first: start walks at odd-degree vertices
    for v in np.nonzero(degree % 2 == 1)[0].tolist():
        if next_edge(v) is None:
            continue
        _emit(contour, trail(v), verts)
    for v in range(nv):
        while next_edge(v) is not None:
            _emit(contour, trail(v), verts)
    return contour


def _emit(contour, path, verts):
    if len(path) >= 4 and path[0] == path[-1]:
        pts = verts[path[:-1]]
        if abs(signed_area(pts)) > 0:
            contour.polygons.append(pts)
            return
    if len(path) >= 2:
        contour.polylines.append(verts[path])


def contour_field(field, z, bbox, resolution, iso, tol=DEFAULT_TOL):
    """Sample, march and stitch in one call."""
    grid = sample_grid(field, z, bbox, resolution)
    return stitch_segments(drop_degenerate(marching_squares(grid, iso), tol), tol)


def drop_degenerate(segments, tol=DEFAULT_TOL):
    """Remove zero-length segments (a grid corner sitting exactly on the iso value)."""
    segments = np.asarray(segments, dtype=float).reshape(-1, 2, 2)
    keep = np.linalg.norm(segments[:, 1] - segments[:, 0], axis=1) >= tol
    return segments[keep]


# --------------------------------------------------------------------------
# meshes

def slice_mesh(triangles, z, tol=DEFAULT_TOL):
    """Intersect a triangle soup ``(n, 3, 3)`` with the plane at height ``z``."""
    tri = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    if len(tri) == 0:
        return Contour()
    above = tri[:, :, 2] >= z
    count = above.sum(axis=1)
    sel = (count == 1) | (count == 2)
    tri, above = tri[sel], above[sel]
    if len(tri) == 0:
        return Contour()
    segs = np.empty((len(tri), 2, 2))
    for k in range(len(tri)):
        pts = []
        for e0, e1 in ((0, 1), (1, 2), (2, 0)):
            if above[k, e0] != above[k, e1]:
                p, q = tri[k, e0], tri[k, e1]
                t = (z - p[2]) / (q[2] - p[2])
                pts.append(p[:2] + t * (q[:2] - p[:2]))
        segs[k] = pts
    contour = stitch_segments(segs, tol)
    if contour.polylines:
        warnings.warn(f"mesh slice at z={z} left {len(contour.polylines)} open polyline(s); "
                      "the mesh is not watertight", OpenMeshWarning, stacklevel=2)
    return contour


def read_stl(path):
    """Read a binary or ASCII STL file into an ``(n, 3, 3)`` float array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if 84 + 50 * count == len(data):
            rec = np.frombuffer(data, dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)),
                                                     ("attr", "<u2")]), count=count, offset=84)
            return rec["v"].astype(float)
    text = data.decode("ascii", errors="replace")
    if not text.lstrip().lower().startswith("solid"):
        raise StlError(f"{path}: not a valid STL file")
    verts = []
    for line in text.splitlines():
        parts = line.split()
        if parts and parts[0].lower() == "vertex":
            try:
                verts.append([float(v) for v in parts[1:4]])
            except ValueError as exc:
                raise StlError(f"{path}: bad vertex line {line.strip()!r}") from exc
    if len(verts) % 3:
        raise StlError(f"{path}: vertex count {len(verts)} is not a multiple of 3")
    return np.asarray(verts, dtype=float).reshape(-1, 3, 3)


def write_stl(path, triangles, ascii=False):
    tri = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.divide(normals, norm, out=np.zeros_like(normals), where=norm > 0)
    if ascii:
        lines = ["solid gradslice"]
        for n, t in zip(normals, tri):
            lines.append(f"  facet normal {n[0]:.6e} {n[1]:.6e} {n[2]:.6e}")
            lines.append("    outer loop")
            for v in t:
                lines.append(f"      vertex {v[0]:.9e} {v[1]:.9e} {v[2]:.9e}")
            lines.append("    endloop")
            lines.append("  endfacet")
        lines.append("endsolid gradslice")
        with open(path, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
        return
    rec = np.zeros(len(tri), dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]))
    rec["n"] = normals
    rec["v"] = tri
    with open(path, "wb") as fh:
        fh.write(b"gradslice binary stl".ljust(80, b"\0"))
        fh.write(struct.pack("<I", len(tri)))
        fh.write(rec.tobytes())
