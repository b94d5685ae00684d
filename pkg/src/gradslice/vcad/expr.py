"""Arithmetic expressions used inside ``fgrade`` material fields.

Expressions are parsed once into a small immutable AST and compiled into a
closure that evaluates on numpy arrays, so a whole sampling grid is evaluated
in one call.

Precedence, tightest first: ``^``, unary minus, ``* /``, ``+ -``.  Operators
of equal precedence associate to the left (``2^3^2 == 64``).
"""
from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass

import numpy as np

from ..errors import DesignSyntaxError, UnknownIdentifier

VARIABLES = ("x", "y", "z", "rho", "phi")
CONSTANTS = {"pi": math.pi}

# name -> (min arity, max arity or None for variadic)
FUNCTIONS = {
    "sin": (1, 1),
    "cos": (1, 1),
    "tan": (1, 1),
    "abs": (1, 1),
    "sqrt": (1, 1),
    "exp": (1, 1),
    "floor": (1, 1),
    "ceil": (1, 1),
    "atan2": (2, 2),
    "min": (2, None),
    "max": (2, None),
}

_NUMPY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "abs": np.abs,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "floor": np.floor,
    "ceil": np.ceil,
    "atan2": np.arctan2,
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


ExprAST = Num | Var | Unary | Binary | Call


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(text, line=1, column=1):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            ln, col = _locate(text, pos, line, column)
            raise DesignSyntaxError(f"unexpected character {text[pos]!r}", ln, col)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


def _locate(text, pos, line, column):
    """Map an offset inside ``text`` to an absolute line/column."""
    before = text[:pos]
    newlines = before.count("\n")
    if newlines:
        return line + newlines, pos - before.rfind("\n")
    return line, column + pos


class _Parser:
    def __init__(self, text, line, column):
        self.text = text
        self.line = line
        self.column = column
        self.tokens = _tokenize(text, line, column)
        self.i = 0

    def error(self, message, tok=None):
        tok = tok or self.tokens[self.i]
        ln, col = _locate(self.text, tok[2], self.line, self.column)
        return DesignSyntaxError(message, ln, col)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        tok = self.take()
        if tok[1] != value or tok[0] == "eof":
            raise self.error(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok)
        return tok

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "eof":
            raise self.error(f"unexpected {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] in ("-", "+"):
            op = self.take()[1]
            operand = self.unary()
            return Unary("-", operand) if op == "-" else operand
        return self.power()

    def power(self):
        node = self.primary()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            node = Binary("^", node, self.exponent())
        return node

    def exponent(self):
        if self.peek()[0] == "op" and self.peek()[1] in ("-", "+"):
            op = self.take()[1]
            operand = self.exponent()
            return Unary("-", operand) if op == "-" else operand
        return self.primary()

    def primary(self):
        tok = self.take()
        kind, value, _ = tok
        if kind == "num":
            return Num(float(value))
        if kind == "ident":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                return self.call(value, tok)
            if value in VARIABLES or value in CONSTANTS:
                return Var(value)
            ln, col = _locate(self.text, tok[2], self.line, self.column)
            raise UnknownIdentifier(f"unknown identifier {value!r} (line {ln}, column {col})")
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise self.error(f"unexpected {value or 'end of input'!r}", tok)

    def call(self, name, tok):
        if name not in FUNCTIONS:
            ln, col = _locate(self.text, tok[2], self.line, self.column)
            raise UnknownIdentifier(f"unknown function {name!r} (line {ln}, column {col})")
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == "," and self.peek()[0] == "op":
            self.take()
            args.append(self.expr())
        self.expect(")")
        lo, hi = FUNCTIONS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            raise self.error(f"{name}() takes {lo if lo == hi else f'at least {lo}'} "
                             f"argument(s), got {len(args)}", tok)
        return Call(name, tuple(args))


def parse_expression(text, *, line=1, column=1):
    """Parse an expression string into an AST.

    ``line``/``column`` give the position of ``text`` inside an enclosing
    document so that errors point at the right place.
    """
    return _Parser(text, line, column).parse()


def to_source(node):
    """Render an AST back to text that parses to an identical AST."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, Binary):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def _build(node):
    if isinstance(node, Num):
        value = node.value
        return lambda env: value
    if isinstance(node, Var):
        if node.name in CONSTANTS:
            value = CONSTANTS[node.name]
            return lambda env: value
        name = node.name
        return lambda env: env(name)
    if isinstance(node, Unary):
        inner = _build(node.operand)
        return lambda env: -inner(env)
    if isinstance(node, Binary):
        a, b = _build(node.left), _build(node.right)
        op = node.op
        if op == "+":
            return lambda env: a(env) + b(env)
        if op == "-":
            return lambda env: a(env) - b(env)
        if op == "*":
            return lambda env: a(env) * b(env)
        if op == "/":
            return lambda env: np.divide(a(env), b(env))
        return lambda env: np.power(a(env), b(env))
    if isinstance(node, Call):
        args = [_build(arg) for arg in node.args]
        if node.func in ("min", "max"):
            reduce = np.minimum if node.func == "min" else np.maximum

            def extremum(env):
                out = args[0](env)
                for arg in args[1:]:
                    out = reduce(out, arg(env))
                return out
            return extremum
        fn = _NUMPY_FUNCS[node.func]
        return lambda env: fn(*(arg(env) for arg in args))
    raise TypeError(f"not an expression node: {node!r}")


class _Env:
    __slots__ = ("x", "y", "z", "_cache")

    def __init__(self, x, y, z):
        self.x, self.y, self.z = x, y, z
        self._cache = {}

    def __call__(self, name):
        if name == "x":
            return self.x
        if name == "y":
            return self.y
        if name == "z":
            return self.z
        if name not in self._cache:
            if name == "rho":
                self._cache[name] = np.hypot(self.x, self.y)
            else:
                self._cache[name] = np.arctan2(self.y, self.x)
        return self._cache[name]


@functools.lru_cache(maxsize=512)
def compile_expression(node):
    """Return ``f(x, y, z)`` evaluating ``node`` with numpy broadcasting."""
    fn = _build(node)

    def evaluate(x, y, z):
        x, y, z = np.broadcast_arrays(np.asarray(x, dtype=float),
                                      np.asarray(y, dtype=float),
                                      np.asarray(z, dtype=float))
        with np.errstate(all="ignore"):
            out = fn(_Env(x, y, z))
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape)
    return evaluate


def evaluate(node, x, y, z):
    return compile_expression(node)(x, y, z)
