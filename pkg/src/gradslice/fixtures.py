"""Reference objects used by tests, benchmarks and the command line."""
from __future__ import annotations

import os

import numpy as np

from .contour import write_stl

# sin/cos pattern in x and y (period ~ 150-250 mm)
XY_GRADIENT = "(1+sin(0.02*x+0.03*y)*cos(0.03*x-0.02*y))/2"
PALETTE_GRADIENT = "(1+sin(0.025*x+0.0375*y)*cos(0.0375*x-0.025*y))/2"


def box_triangles(sx, sy, sz, center=(0.0, 0.0, 0.0)):
    """12 outward-facing triangles of an axis-aligned box (centred in x/y, z from 0)."""
    cx, cy, cz = center
    x0, x1 = cx - sx / 2, cx + sx / 2
    y0, y1 = cy - sy / 2, cy + sy / 2
    z0, z1 = cz, cz + sz
    v = np.array([[x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
                  [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]])
    faces = [(0, 2, 1), (0, 3, 2), (4, 5, 6), (4, 6, 7), (0, 1, 5), (0, 5, 4),
             (1, 2, 6), (1, 6, 5), (2, 3, 7), (2, 7, 6), (3, 0, 4), (3, 4, 7)]
    return v[np.array(faces)]


def write_palette_stl(path, size=(135.0, 175.0, 2.0)):
    write_stl(path, box_triangles(*size))
    return path


def palette_design(stl_name="palette.stl"):
    """Flat colour-palette slab from a mesh with the two-axis sine gradient."""
    g = PALETTE_GRADIENT
    return f'fgrade(["{g}", "1-{g}"], ["yellow", "blue"]) {{\n    mesh("{stl_name}");\n}}\n'


def write_palette_fixture(directory):
    """Write ``palette.stl`` and ``palette.vcad`` into ``directory``; return the design path."""
    os.makedirs(directory, exist_ok=True)
    write_palette_stl(os.path.join(directory, "palette.stl"))
    path = os.path.join(directory, "palette.vcad")
    with open(path, "w") as fh:
        fh.write(palette_design("palette.stl"))
    return path


def xy_gradient_design(width=100.0, depth=100.0, height=0.4):
    g = XY_GRADIENT
    return f'fgrade(["1-{g}", "{g}"], ["yellow", "blue"]) {{ rectprism({width:g}, {depth:g}, {height:g}); }}'


def dogbone_design(height=3.2):
    """Tensile bar (grips + gauge section) with a linear grade along x."""
    return (
        'fgrade(["0.5-x/115", "x/115+0.5"], ["yellow", "blue"]) {\n'
        '    union() {\n'
        f'        translate([-45, 0, 0]) {{ rectprism(25, 19, {height:g}); }}\n'
        f'        rectprism(65, 6, {height:g});\n'
        f'        translate([45, 0, 0]) {{ rectprism(25, 19, {height:g}); }}\n'
        '    }\n'
        '}\n')


def benchy_design(alpha=25.0):
    """Boat-like CSG part (60 x 31 x 48 mm) with a three-axis periodic grade."""
    k = f"2*pi/{alpha:g}"
    g = f"0.5+0.5*sin({k}*x)*cos({k}*y)*sin({k}*z)"
    return (
        f'fgrade(["1-({g})", "{g}"], ["yellow", "blue"]) {{\n'
        '    union() {\n'
        '        difference() {\n'
        '            rectprism(60, 31, 20);\n'
        '            translate([0, 0, 2]) { rectprism(54, 25, 20); }\n'
        '            translate([30, 0, 0]) { cylinder(12, 30); }\n'
        '        }\n'
        '        translate([-8, 0, 20]) {\n'
        '            difference() {\n'
        '                rectprism(22, 20, 16);\n'
        '                translate([0, 0, 2]) { rectprism(18, 16, 16); }\n'
        '            }\n'
        '        }\n'
        '        translate([-12, 0, 36]) { cylinder(4, 12); }\n'
        '    }\n'
        '}\n')


def radial_design(n_outer=20.0, height=0.4):
    return (f'fgrade(["1-rho/{n_outer:g}", "rho/{n_outer:g}"], ["yellow", "blue"]) '
            f'{{ cylinder({n_outer:g}, {height:g}); }}')


FIXTURES = {
    "dogbone": dogbone_design,
    "benchy": benchy_design,
    "xy": xy_gradient_design,
    "radial": radial_design,
}
