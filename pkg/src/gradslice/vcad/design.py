"""Design documents: CSG geometry with volume-fraction material fields.

A design is a tree of primitives, boolean operators, translations and
``fgrade`` nodes.  Two evaluators are exposed: :func:`eval_sdf` (signed
distance, negative inside) and :func:`eval_fractions` (per-material volume
fractions, defined everywhere in space).

Primitives are XY-centred and sit on the build plate: they occupy
``z in [0, height]`` (a sphere of radius ``r`` is centred at ``(0, 0, r)``).
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ArityError, DesignSyntaxError, EvalError, MeshNotLoaded
from .expr import compile_expression, parse_expression, to_source as expr_source

DEFAULT_MATERIAL = "default"


@dataclass(frozen=True)
class Cylinder:
    radius: float
    height: float


@dataclass(frozen=True)
class RectPrism:
    width: float
    depth: float
    height: float


@dataclass(frozen=True)
class Sphere:
    radius: float


@dataclass(frozen=True)
class Mesh:
    path: str


@dataclass(frozen=True)
class Union:
    children: tuple


@dataclass(frozen=True)
class Difference:
    children: tuple


@dataclass(frozen=True)
class Intersection:
    children: tuple


@dataclass(frozen=True)
class Translate:
    offset: tuple
    child: object


@dataclass(frozen=True)
class FGrade:
    expressions: tuple
    materials: tuple
    child: object


DesignAST = Cylinder | RectPrism | Sphere | Mesh | Union | Difference | Intersection | Translate | FGrade

_PRIMITIVES = {"cylinder": 2, "rectprism": 3, "sphere": 1, "mesh": 1}
_BOOLEANS = {"union": Union, "difference": Difference, "intersection": Intersection}


# --------------------------------------------------------------------------
# parsing

_DESIGN_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<num>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<punct>[(){}\[\],;])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass
class _Tok:
    kind: str
    value: str
    line: int
    column: int


def _tokenize_design(text):
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _DESIGN_TOKEN_RE.match(text, pos)
        if m is None:
            raise DesignSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind, value = m.lastgroup, m.group()
        if kind not in ("ws", "comment"):
            tokens.append(_Tok(kind, value, line, pos - line_start + 1))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rfind("\n") + 1
        pos = m.end()
    tokens.append(_Tok("eof", "", line, pos - line_start + 1))
    return tokens


def _unquote(tok):
    body = tok.value[1:-1]
    return re.sub(r"\\(.)", r"\1", body)


class _DesignParser:
    def __init__(self, text):
        self.tokens = _tokenize_design(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return DesignSyntaxError(message, tok.line, tok.column)

    def expect(self, value):
        tok = self.take()
        if tok.value != value or tok.kind not in ("punct",):
            raise self.error(f"expected {value!r}, found {tok.value or 'end of input'!r}", tok)
        return tok

    def parse(self):
        nodes = []
        while self.peek().kind != "eof":
            nodes.append(self.node())
        if not nodes:
            raise self.error("empty design")
        return nodes[0] if len(nodes) == 1 else Union(tuple(nodes))

    def node(self):
        tok = self.take()
        if tok.kind != "ident":
            raise self.error(f"expected a node name, found {tok.value or 'end of input'!r}", tok)
        name = tok.value
        if name not in _PRIMITIVES and name not in _BOOLEANS and name not in ("translate", "fgrade"):
            raise self.error(f"unknown node {name!r}", tok)
        self.expect("(")
        args = []
        if self.peek().value != ")":
            args.append(self.arg())
            while self.peek().value == ",":
                self.take()
                args.append(self.arg())
        self.expect(")")

        if name in _PRIMITIVES:
            node = self._primitive(name, args, tok)
            if self.peek().value == "{":
                self.take()
                self.expect("}")
            else:
                self.expect(";")
            return node

        children = self.block(tok)
        if self.peek().value == ";":
            self.take()
        if name in _BOOLEANS:
            if args:
                raise self.error(f"{name}() takes no arguments", tok)
            if not children:
                raise self.error(f"{name}() needs at least one child", tok)
            return _BOOLEANS[name](tuple(children))
        child = children[0] if len(children) == 1 else Union(tuple(children))
        if not children:
            raise self.error(f"{name}() needs a child", tok)
        if name == "translate":
            if len(args) != 1 or not isinstance(args[0], list) or len(args[0]) not in (2, 3) \
                    or not all(isinstance(v, float) for v in args[0]):
                raise self.error("translate() expects one [x, y, z] vector", tok)
            offset = tuple(args[0]) + (0.0,) * (3 - len(args[0]))
            return Translate(offset, child)
        return self._fgrade(args, child, tok)

    def block(self, tok):
        if self.peek().value != "{":
            raise self.error(f"{tok.value}() needs a {{ ... }} block")
        self.take()
        children = []
        while self.peek().value != "}":
            if self.peek().kind == "eof":
                raise self.error("unbalanced braces: missing '}'")
            children.append(self.node())
        self.take()
        return children

    def arg(self):
        tok = self.take()
        if tok.kind == "num":
            return float(tok.value)
        if tok.kind == "str":
            return (tok, _unquote(tok))
        if tok.value == "[":
            items = []
            if self.peek().value != "]":
                items.append(self.arg())
                while self.peek().value == ",":
                    self.take()
                    items.append(self.arg())
            self.expect("]")
            return items
        raise self.error(f"unexpected {tok.value or 'end of input'!r} in argument list", tok)

    def _primitive(self, name, args, tok):
        if len(args) != _PRIMITIVES[name]:
            raise self.error(f"{name}() takes {_PRIMITIVES[name]} argument(s), got {len(args)}", tok)
        if name == "mesh":
            if not isinstance(args[0], tuple):
                raise self.error("mesh() expects a file path string", tok)
            return Mesh(args[0][1])
        if not all(isinstance(a, float) for a in args):
            raise self.error(f"{name}() expects numeric arguments", tok)
        if any(a <= 0 for a in args):
            raise self.error(f"{name}() dimensions must be positive", tok)
        if name == "cylinder":
            return Cylinder(*args)
        if name == "rectprism":
            return RectPrism(*args)
        return Sphere(*args)

    def _fgrade(self, args, child, tok):
        if len(args) != 2 or not all(isinstance(a, list) for a in args):
            raise self.error("fgrade() expects an expression list and a material list", tok)
        exprs, names = args
        if not all(isinstance(e, tuple) for e in exprs + names):
            raise self.error("fgrade() lists must contain strings", tok)
        if len(exprs) != len(names):
            raise ArityError(f"fgrade() has {len(exprs)} expression(s) but {len(names)} material(s) "
                             f"(line {tok.line}, column {tok.column})")
        if not exprs:
            raise ArityError(f"fgrade() needs at least one material (line {tok.line}, column {tok.column})")
        parsed = tuple(parse_expression(text, line=t.line, column=t.column + 1) for t, text in exprs)
        return FGrade(parsed, tuple(text for _, text in names), child)


def parse_design(text):
    """Parse design source text into a tree of nodes."""
    return _DesignParser(text).parse()


def _fmt(v):
    return repr(float(v))


def to_source(node, indent=0):
    """Pretty-print a design tree; re-parsing yields an equal tree."""
    pad = "    " * indent
    if isinstance(node, Cylinder):
        return f"{pad}cylinder({_fmt(node.radius)}, {_fmt(node.height)});\n"
    if isinstance(node, RectPrism):
        return f"{pad}rectprism({_fmt(node.width)}, {_fmt(node.depth)}, {_fmt(node.height)});\n"
    if isinstance(node, Sphere):
        return f"{pad}sphere({_fmt(node.radius)});\n"
    if isinstance(node, Mesh):
        path = node.path.replace("\\", "\\\\").replace('"', '\\"')
        return f'{pad}mesh("{path}");\n'
    if isinstance(node, (Union, Difference, Intersection)):
        name = {Union: "union", Difference: "difference", Intersection: "intersection"}[type(node)]
        body = "".join(to_source(c, indent + 1) for c in node.children)
        return f"{pad}{name}() {{\n{body}{pad}}}\n"
    if isinstance(node, Translate):
        vec = ", ".join(_fmt(v) for v in node.offset)
        return f"{pad}translate([{vec}]) {{\n{to_source(node.child, indent + 1)}{pad}}}\n"
    if isinstance(node, FGrade):
        exprs = ", ".join(f'"{expr_source(e)}"' for e in node.expressions)
        names = ", ".join(f'"{m}"' for m in node.materials)
        return f"{pad}fgrade([{exprs}], [{names}]) {{\n{to_source(node.child, indent + 1)}{pad}}}\n"
    raise TypeError(f"not a design node: {node!r}")


# --------------------------------------------------------------------------
# structure queries

def iter_nodes(node):
    yield node
    if isinstance(node, (Union, Difference, Intersection)):
        for c in node.children:
            yield from iter_nodes(c)
    elif isinstance(node, (Translate, FGrade)):
        yield from iter_nodes(node.child)


def design_materials(node):
    """Ordered material names used by the design (``["default"]`` if ungraded)."""
    names = []
    for n in iter_nodes(node):
        if isinstance(n, FGrade):
            for m in n.materials:
                if m not in names:
                    names.append(m)
    return names or [DEFAULT_MATERIAL]


def has_mesh(node):
    return any(isinstance(n, Mesh) for n in iter_nodes(node))


def bounding_box(node):
    """Axis-aligned bounds ``(xmin, ymin, zmin, xmax, ymax, zmax)`` or None if unknown.

    Bounds of mesh leaves are not known without loading the file; boolean
    bounds are conservative (difference keeps the first child's bounds).
    """
    if isinstance(node, Cylinder):
        r = node.radius
        return (-r, -r, 0.0, r, r, node.height)
    if isinstance(node, RectPrism):
        return (-node.width / 2, -node.depth / 2, 0.0, node.width / 2, node.depth / 2, node.height)
    if isinstance(node, Sphere):
        r = node.radius
        return (-r, -r, 0.0, r, r, 2 * r)
    if isinstance(node, Mesh):
        return None
    if isinstance(node, Translate):
        b = bounding_box(node.child)
        if b is None:
            return None
        o = node.offset
        return (b[0] + o[0], b[1] + o[1], b[2] + o[2], b[3] + o[0], b[4] + o[1], b[5] + o[2])
    if isinstance(node, FGrade):
        return bounding_box(node.child)
    if isinstance(node, Difference):
        return bounding_box(node.children[0])
    boxes = [bounding_box(c) for c in node.children]
    if any(b is None for b in boxes):
        return None
    lo = np.min([b[:3] for b in boxes], axis=0)
    hi = np.max([b[3:] for b in boxes], axis=0)
    if isinstance(node, Intersection):
        lo = np.max([b[:3] for b in boxes], axis=0)
        hi = np.min([b[3:] for b in boxes], axis=0)
    return tuple(float(v) for v in (*lo, *hi))


# --------------------------------------------------------------------------
# signed distance

def _sdf(node, x, y, z):
    if isinstance(node, Cylinder):
        dr = np.hypot(x, y) - node.radius
        dz = np.abs(z - node.height / 2) - node.height / 2
        return np.minimum(np.maximum(dr, dz), 0.0) + np.hypot(np.maximum(dr, 0.0), np.maximum(dz, 0.0))
    if isinstance(node, RectPrism):
        qx = np.abs(x) - node.width / 2
        qy = np.abs(y) - node.depth / 2
        qz = np.abs(z - node.height / 2) - node.height / 2
        outside = np.sqrt(np.maximum(qx, 0) ** 2 + np.maximum(qy, 0) ** 2 + np.maximum(qz, 0) ** 2)
        return outside + np.minimum(np.maximum(qx, np.maximum(qy, qz)), 0.0)
    if isinstance(node, Sphere):
        return np.sqrt(x * x + y * y + (z - node.radius) ** 2) - node.radius
    if isinstance(node, Mesh):
        raise MeshNotLoaded(f"mesh({node.path!r}) has no signed distance; slice it with slice_mesh")
    if isinstance(node, Union):
        out = _sdf(node.children[0], x, y, z)
        for c in node.children[1:]:
            out = np.minimum(out, _sdf(c, x, y, z))
        return out
    if isinstance(node, Intersection):
        out = _sdf(node.children[0], x, y, z)
        for c in node.children[1:]:
            out = np.maximum(out, _sdf(c, x, y, z))
        return out
    if isinstance(node, Difference):
        out = _sdf(node.children[0], x, y, z)
        for c in node.children[1:]:
            out = np.maximum(out, -_sdf(c, x, y, z))
        return out
    if isinstance(node, Translate):
        ox, oy, oz = node.offset
        return _sdf(node.child, x - ox, y - oy, z - oz)
    if isinstance(node, FGrade):
        return _sdf(node.child, x, y, z)
    raise TypeError(f"not a design node: {node!r}")


def sdf_field(design):
    """Vectorised ``f(x, y, z) -> signed distance`` for a design."""
    def field(x, y, z):
        x, y, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(z, float))
        return _sdf(design, x, y, z)
    return field


def eval_sdf(design, p):
    """Signed distance (mm) from point ``p`` to the design surface."""
    x, y, z = p
    return float(_sdf(design, np.float64(x), np.float64(y), np.float64(z)))


# --------------------------------------------------------------------------
# material fractions

@dataclass(frozen=True)
class FractionVector:
    """Material fractions at one point; entries sum to 1."""
    items: tuple

    @property
    def names(self):
        return tuple(n for n, _ in self.items)

    @property
    def values(self):
        return tuple(v for _, v in self.items)

    def __getitem__(self, name):
        return dict(self.items)[name]

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


def _raw_fractions(node, x, y, z, materials):
    """Return (fractions | None, enclosed-mask) for the subtree.

    ``fractions`` holds unnormalised expression values scattered into the
    global material order, ``mask`` marks points enclosed by the geometry of
    the fgrade that produced them, so an inner fgrade wins only inside its
    own geometry.
    """
    if isinstance(node, FGrade):
        own = np.zeros(x.shape + (len(materials),))
        for expr, name in zip(node.expressions, node.materials):
            own[..., materials.index(name)] += compile_expression(expr)(x, y, z)
        inner, inner_mask = _raw_fractions(node.child, x, y, z, materials)
        if inner is not None:
            own = np.where(inner_mask[..., None], inner, own)
        try:
            mask = _sdf(node.child, x, y, z) <= 0
        except MeshNotLoaded:
            mask = np.ones(x.shape, dtype=bool)
        return own, mask
    if isinstance(node, Translate):
        ox, oy, oz = node.offset
        return _raw_fractions(node.child, x - ox, y - oy, z - oz, materials)
    if isinstance(node, (Union, Intersection, Difference)):
        children = node.children[:1] if isinstance(node, Difference) else node.children
        out, mask = None, np.zeros(x.shape, dtype=bool)
        for c in children:
            frac, cmask = _raw_fractions(c, x, y, z, materials)
            if frac is None:
                continue
            if out is None:
                out, mask = frac, cmask
            else:
                take = cmask & ~mask
                out = np.where(take[..., None], frac, out)
                mask = mask | cmask
        return out, mask
    return None, np.zeros(x.shape, dtype=bool)


def fraction_field(design, materials=None):
    """Vectorised ``f(x, y, z) -> array[..., n_materials]`` of volume fractions.

    Expression values are clamped to [0, 1] and renormalised to sum to 1.  A
    warning is emitted when the unclamped sum drifts from 1 by more than 1e-3.
    """
    materials = list(materials or design_materials(design))

    def field(x, y, z):
        x, y, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(z, float))
        raw, _ = _raw_fractions(design, x, y, z, materials)
        if raw is None:
            out = np.zeros(x.shape + (len(materials),))
            out[..., 0] = 1.0
            return out
        if not np.all(np.isfinite(raw)):
            bad = np.argwhere(~np.isfinite(raw).all(axis=-1))[0]
            point = tuple(float(a[tuple(bad)]) for a in (x, y, z)) if x.ndim else (float(x), float(y), float(z))
            raise EvalError(f"material expression is not finite at {point}")
        total = raw.sum(axis=-1)
        if np.any(np.abs(total - 1.0) > 1e-3):
            warnings.warn("material fractions do not sum to 1; renormalising", stacklevel=2)
        clamped = np.clip(raw, 0.0, 1.0)
        s = clamped.sum(axis=-1, keepdims=True)
        uniform = np.full_like(clamped, 1.0 / len(materials))
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(s > 0, clamped / np.where(s > 0, s, 1.0), uniform)
    return field


def eval_fractions(design, p):
    """Material fractions at ``p`` as a :class:`FractionVector`."""
    materials = design_materials(design)
    values = fraction_field(design, materials)(*p)
    return FractionVector(tuple((m, float(v)) for m, v in zip(materials, values)))


def gradient_coordinate(fractions):
    """Scalar position in the two-material gradient: the second material's fraction."""
    fractions = np.asarray(fractions)
    if fractions.shape[-1] < 2:
        return np.zeros(fractions.shape[:-1])
    return fractions[..., 1]
