import math
import threading
import warnings

import numpy as np
import pytest

from gradslice import vcad
from gradslice.errors import (ArityError, DesignSyntaxError, EvalError, MeshNotLoaded,
                              UnknownIdentifier)


# ---------------------------------------------------------------- expressions

@pytest.mark.parametrize("text, expected", [
    ("2+3*4", 14.0),
    ("pi", 3.141592653589793),
    ("2^3^2", 64.0),           # equal precedence groups left
    ("-2^2", -4.0),            # ^ binds tighter than unary minus
    ("10-4-3", 3.0),           # left-assoc
    ("8/4/2", 1.0),
    ("(2+3)*4", 20.0),
    ("max(1, 7, 3)", 7.0),
    ("min(4, -1)", -1.0),
    ("abs(-2.5)", 2.5),
    ("floor(2.7)+ceil(2.2)", 5.0),
])
def test_expression_constants(text, expected):
    assert vcad.evaluate(vcad.parse_expression(text), 0.0, 0.0, 0.0) == pytest.approx(expected, abs=1e-12)


def test_expression_cylindrical_variables():
    ast = vcad.parse_expression("rho + phi")
    assert vcad.evaluate(ast, 3.0, 4.0, 0.0) == pytest.approx(5.0 + math.atan2(4.0, 3.0))


def test_expression_xy_gradient_parses_and_is_half_at_origin():
    ast = vcad.parse_expression("(1+sin(0.02*x+0.03*y)*cos(0.03*x-0.02*y))/2")
    assert vcad.evaluate(ast, 0.0, 0.0, 12.0) == pytest.approx(0.5)


def test_expression_vectorised():
    f = vcad.compile_expression(vcad.parse_expression("x*y+z"))
    out = f(np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.array([0.5, 0.5]))
    np.testing.assert_allclose(out, [3.5, 8.5])


@pytest.mark.parametrize("text", ["2+", "(1+2", "1 2", "sin()", "3*/4"])
def test_expression_syntax_errors(text):
    with pytest.raises(DesignSyntaxError):
        vcad.parse_expression(text)


def test_expression_unknown_identifier():
    with pytest.raises(UnknownIdentifier):
        vcad.parse_expression("foo + x")


def test_expression_round_trip():
    src = "(1+sin(0.02*x+0.03*y)*cos(0.03*x-0.02*y))/2"
    ast = vcad.parse_expression(src)
    assert vcad.parse_expression(vcad.expression_source(ast)) == ast


# ---------------------------------------------------------------- designs

def test_parse_fgrade_over_cylinder():
    d = vcad.parse_design('fgrade(["z/70","1-z/70"],["blue","yellow"]){ cylinder(15,70); }')
    assert isinstance(d, vcad.FGrade)
    assert d.materials == ("blue", "yellow")
    assert d.child == vcad.Cylinder(15.0, 70.0)


def test_plain_primitive_has_default_material():
    d = vcad.parse_design("cylinder(15,70);")
    assert d == vcad.Cylinder(15.0, 70.0)
    f = vcad.eval_fractions(d, (0, 0, 1))
    assert list(f.names) == [vcad.DEFAULT_MATERIAL]
    assert list(f.values) == [1.0]


def test_fgrade_arity_error():
    with pytest.raises(ArityError):
        vcad.parse_design('fgrade(["z"],["a","b"]){ sphere(1); }')


def test_syntax_error_has_location():
    with pytest.raises(DesignSyntaxError) as info:
        vcad.parse_design("union() {\n  cylinder(1, 2);\n")
    assert info.value.line is not None


def test_unknown_node():
    with pytest.raises(DesignSyntaxError) as info:
        vcad.parse_design("cube(1);")
    assert info.value.line == 1 and info.value.column == 1


def test_design_round_trip():
    src = ('fgrade(["abs(phi)/pi","1 - abs(phi)/pi"],["blue","yellow"]) {'
           ' difference() { cylinder(50, 15); cylinder(15, 15); } }')
    d = vcad.parse_design(src)
    assert vcad.parse_design(vcad.to_source(d)) == d


# ---------------------------------------------------------------- evaluation

def test_sdf_cylinder_axis():
    d = vcad.parse_design("cylinder(15,70);")
    assert vcad.eval_sdf(d, (0, 0, 35)) == pytest.approx(-15.0)


def test_sdf_rectprism_face():
    d = vcad.parse_design("rectprism(150,75,2.5);")
    assert vcad.eval_sdf(d, (0, 37.5, 1)) == pytest.approx(0.0, abs=1e-12)


def test_sdf_difference_ring():
    # max(outer, -inner) with outer = -20, -inner = 15 - 30 + ... evaluated by hand:
    # outer radial distance 30 - 50 = -20, axial min(7.5, 7.5) -> -7.5, so outer = -7.5;
    # inner = 30 - 15 = 15 -> -inner = -15; max(-7.5, -15) = -7.5
    d = vcad.parse_design("difference(){cylinder(50,15); cylinder(15,15);}")
    assert vcad.eval_sdf(d, (30, 0, 7.5)) == pytest.approx(-7.5)


def test_sdf_sphere_and_translate():
    d = vcad.parse_design("translate([1,2,3]){ sphere(2); }")
    assert vcad.eval_sdf(d, (1, 2, 5)) == pytest.approx(-2.0)
    assert vcad.eval_sdf(d, (1, 2, 10)) == pytest.approx(3.0)


def test_sdf_union_intersection():
    a = "rectprism(2,2,2);"
    b = "translate([1,0,0]){ rectprism(2,2,2); }"
    u = vcad.parse_design(f"union(){{ {a} {b} }}")
    i = vcad.parse_design(f"intersection(){{ {a} {b} }}")
    p = (1.8, 0, 1)
    da, db = vcad.eval_sdf(vcad.parse_design(a), p), vcad.eval_sdf(vcad.parse_design(b), p)
    assert vcad.eval_sdf(u, p) == pytest.approx(min(da, db))
    assert vcad.eval_sdf(i, p) == pytest.approx(max(da, db))


def test_sdf_mesh_not_loaded():
    d = vcad.parse_design('mesh("x.stl");')
    with pytest.raises(MeshNotLoaded):
        vcad.eval_sdf(d, (0, 0, 0))


def test_fractions_linear_midpoint():
    d = vcad.parse_design('fgrade(["z/70","1-z/70"],["blue","yellow"]){ cylinder(15,70); }')
    f = vcad.eval_fractions(d, (0, 0, 35))
    assert f["blue"] == pytest.approx(0.5) and f["yellow"] == pytest.approx(0.5)


def test_fractions_three_axis_grade():
    a = 25.0
    g = f"0.5+0.5*sin(2*pi*x/{a})*cos(2*pi*y/{a})*sin(2*pi*z/{a})"
    d = vcad.parse_design(f'fgrade(["{g}", "1-({g})"],["blue","yellow"]){{ sphere(100); }}')
    assert vcad.eval_fractions(d, (6.25, 0, 6.25))["blue"] == pytest.approx(1.0)


def test_fractions_clamped_and_normalised():
    d = vcad.parse_design('fgrade(["2","1"],["a","b"]){ sphere(1); }')
    with pytest.warns(UserWarning):
        f = vcad.eval_fractions(d, (0, 0, 0))
    assert list(f.values) == pytest.approx([0.5, 0.5])


def test_fractions_non_finite():
    d = vcad.parse_design('fgrade(["1/x","1-1/x"],["a","b"]){ sphere(1); }')
    with pytest.raises(EvalError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vcad.eval_fractions(d, (0, 0, 0))


def test_innermost_fgrade_wins():
    src = ('fgrade(["1","0"],["a","b"]){ union(){ sphere(5); '
           'fgrade(["0","1"],["a","b"]){ translate([20,0,0]){ sphere(5); } } } }')
    d = vcad.parse_design(src)
    assert vcad.eval_fractions(d, (0, 0, 5))["a"] == pytest.approx(1.0)
    assert vcad.eval_fractions(d, (20, 0, 5))["b"] == pytest.approx(1.0)


def test_bounding_box_conventions():
    assert vcad.bounding_box(vcad.parse_design("cylinder(15,70);")) == (-15, -15, 0, 15, 15, 70)
    assert vcad.bounding_box(vcad.parse_design("rectprism(150,75,2.5);")) == (-75, -37.5, 0, 75, 37.5, 2.5)


def test_concurrent_evaluation_matches_sequential():
    d = vcad.parse_design('fgrade(["x/50+0.5","0.5-x/50"],["a","b"]){ cylinder(25, 10); }')
    pts = [(float(x), float(y), 5.0) for x in range(-20, 21, 5) for y in range(-20, 21, 5)]
    expected = [(vcad.eval_sdf(d, p), tuple(vcad.eval_fractions(d, p).values)) for p in pts]
    results = [None] * len(pts)

    def work(k):
        results[k] = (vcad.eval_sdf(d, pts[k]), tuple(vcad.eval_fractions(d, pts[k]).values))

    threads = [threading.Thread(target=work, args=(k,)) for k in range(len(pts))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == expected
