"""Per-layer geometry: outline contours, material iso-lines and coloured faces."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import shapely

from . import vcad
from .arrangement import (build_arrangement, classify_faces, extract_bounded_faces, inside_rings,
                          inside_sdf)
from .contour import (Contour, drop_degenerate, inflate_bbox, marching_squares, read_stl,
                      sample_grid, slice_mesh, stitch_segments, ScalarGrid)
from .errors import MeshNotLoaded
from .geom import region_from_rings


@dataclass
class DesignModel:
    """A parsed design plus everything needed to slice it repeatedly."""
    design: object
    materials: list
    triangles: np.ndarray | None = None
    mesh_offset: tuple = (0.0, 0.0, 0.0)
    bounds: tuple = None          # (xmin, ymin, zmin, xmax, ymax, zmax)

    def __post_init__(self):
        self.fractions = vcad.fraction_field(self.design, self.materials)
        self.sdf = None if self.triangles is not None else vcad.sdf_field(self.design)

    @property
    def has_gradient(self):
        return any(isinstance(n, vcad.FGrade) for n in vcad.iter_nodes(self.design))

    @property
    def height(self):
        return self.bounds[5] - self.bounds[2]

    @property
    def bbox2d(self):
        b = self.bounds
        return (b[0], b[1], b[3], b[4])


def _mesh_chain(node):
    """Follow fgrade/translate wrappers down to a mesh leaf; returns (mesh, offset)."""
    offset = np.zeros(3)
    while True:
        if isinstance(node, vcad.Mesh):
            return node, offset
        if isinstance(node, vcad.FGrade):
            node = node.child
        elif isinstance(node, vcad.Translate):
            offset = offset + np.asarray(node.offset, dtype=float)
            node = node.child
        elif isinstance(node, vcad.Union) and len(node.children) == 1:
            node = node.children[0]
        else:
            raise MeshNotLoaded("mesh nodes are only supported as the sole geometry "
                                "(optionally under fgrade/translate)")


def prepare_design(design, base_dir=None, materials=None):
    """Resolve meshes and bounds for a design AST (or source text)."""
    if isinstance(design, str):
        design = vcad.parse_design(design)
    materials = list(materials or vcad.design_materials(design))
    if vcad.has_mesh(design):
        mesh, offset = _mesh_chain(design)
        path = mesh.path
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        tri = read_stl(path) + offset
        lo, hi = tri.reshape(-1, 3).min(axis=0), tri.reshape(-1, 3).max(axis=0)
        return DesignModel(design, materials, tri, tuple(offset), tuple(lo) + tuple(hi))
    box = vcad.bounding_box(design)
    return DesignModel(design, materials, None, (0.0, 0.0, 0.0), tuple(box))


@dataclass
class LayerGeometry:
    z: float
    rings: list
    outline: object
    material_lines: Contour
    faces: list = field(default_factory=list)


def _simplify(lines, tol, closed):
    if tol <= 0:
        return list(lines)
    out = []
    for pts in lines:
        pts = np.asarray(pts)
        if closed:
            geom = shapely.linearrings(pts)
        else:
            geom = shapely.linestrings(pts)
        simp = shapely.simplify(geom, tol, preserve_topology=False)
        c = np.asarray(simp.coords)
        if closed:
            c = c[:-1]
            if len(c) < 3:
                continue
        elif len(c) < 2:
            continue
        out.append(c)
    return out


def geometry_contour(model, z, settings):
    res = settings.xy_resolution
    if model.triangles is not None:
        return slice_mesh(model.triangles, z)
    bbox = inflate_bbox(model.bbox2d, res)
    # negated so points exactly on the surface count as solid; otherwise seams
    # where two unioned primitives touch (distance exactly 0) show up as walls
    grid = sample_grid(lambda x, y, zz: -model.sdf(x, y, zz), z, bbox, res)
    return stitch_segments(drop_degenerate(marching_squares(grid, 0.0)))


def material_contours(model, z, settings, levels):
    """Iso-lines of material fractions at ``levels`` = [(material index, value), ...]."""
    out = Contour()
    if not levels:
        return out
    res = settings.xy_resolution
    x0, y0, x1, y1 = inflate_bbox(model.bbox2d, res)
    base = sample_grid(lambda x, y, zz: np.zeros_like(x), z, (x0, y0, x1, y1), res)
    X, Y = np.meshgrid(base.xs, base.ys)
    frac = model.fractions(X, Y, np.full_like(X, z))
    for k, level in levels:
        def component(x, y, zz, k=k):
            return model.fractions(x, y, zz)[..., k]
        grid = ScalarGrid(base.origin, base.cell, frac[..., k], z=z, field=component)
        if frac[..., k].min() > level or frac[..., k].max() < level:
            continue
        out.extend(stitch_segments(drop_degenerate(marching_squares(grid, level))))
    return out


def compute_layer(model, z, settings, palette, extra_levels=(), zipper=None, simplify=None):
    """Contours, arrangement and coloured faces for the slice plane at ``z``."""
    tol = settings.xy_resolution / 4 if simplify is None else simplify
    geo = geometry_contour(model, z, settings)
    rings = _simplify(geo.polygons, tol, closed=True)
    outline = region_from_rings(rings)
    levels = list(palette.iso_levels()) + list(extra_levels) if model.has_gradient else []
    mat = material_contours(model, z, settings, levels)
    lines = Contour(_simplify(mat.polygons, tol, True), _simplify(mat.polylines, tol, False))
    layer = LayerGeometry(z, rings, outline, lines)
    if not rings:
        return layer
    arr = build_arrangement(rings + lines.polygons, lines.polylines)
    inside = inside_rings(rings) if model.triangles is not None else inside_sdf(model.design, z)
    faces = extract_bounded_faces(arr, inside)
    colored = classify_faces(faces, model.fractions, palette, z, settings.w)
    if zipper is not None and zipper.enabled:
        for f in colored:
            f.band = zipper.band_of(f.fraction)
    layer.faces = colored
    return layer
