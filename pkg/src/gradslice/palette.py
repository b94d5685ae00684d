"""Discretisation of a continuous gradient into N process states ("colours").

For two materials the gradient coordinate ``m`` is the fraction of the
second material and the palette splits ``[0, 1]`` into N equal intervals.
Three materials are discretised on a barycentric triangle grid with N
subdivisions per side, giving N**2 colours.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BandOverlap, InvalidCount, Unsupported


@dataclass(frozen=True)
class MixState:
    ratios: tuple

    def __post_init__(self):
        r = np.asarray(self.ratios, dtype=float)
        if np.any(r < -1e-12) or np.any(r > 1 + 1e-12) or abs(r.sum() - 1) > 1e-9:
            raise ValueError(f"mix ratios must lie in [0, 1] and sum to 1: {self.ratios}")


@dataclass(frozen=True)
class ToolState:
    index: int


@dataclass(frozen=True)
class TemperatureState:
    temperature: float


CommandState = MixState | ToolState | TemperatureState


@dataclass(frozen=True)
class Palette:
    n: int
    materials: tuple = ("a", "b")

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise InvalidCount(f"palette needs at least one colour, got {self.n!r}")
        if len(self.materials) < 1:
            raise InvalidCount("palette needs at least one material")
        if len(self.materials) > 3:
            raise Unsupported("palettes over more than three base materials are not supported")

    @property
    def components(self):
        return max(2, len(self.materials))

    @property
    def alpha(self):
        return 1.0 / self.n

    @property
    def boundaries(self):
        return tuple(k / self.n for k in range(1, self.n))

    @property
    def midpoints(self):
        return tuple((k + 0.5) / self.n for k in range(self.n))

    @property
    def size(self):
        return self.n if self.components == 2 else self.n * self.n

    def color_of(self, m):
        """Colour index of gradient coordinate(s) ``m``.

        Intervals are half-open ``[k/N, (k+1)/N)`` except the last, which is
        closed, so ``m == 1`` maps to ``N - 1``.
        """
        m = np.asarray(m, dtype=float)
        out = np.clip(np.floor(m * self.n), 0, self.n - 1).astype(int)
        return int(out) if out.ndim == 0 else out

    def color_of_fractions(self, fractions):
        """Colour index from full fraction vectors (last axis = materials)."""
        f = np.asarray(fractions, dtype=float)
        if self.components == 2:
            m = f[..., 1] if f.shape[-1] > 1 else np.zeros(f.shape[:-1])
            return self.color_of(m)
        return _triangle_index(f[..., 1], f[..., 2], self.n)

    def composition(self, color):
        """Designed fraction vector at the centre of ``color``'s interval."""
        self._check(color)
        if self.components == 2:
            m = self.midpoints[color]
            return (1.0 - m, m)
        i, j, up = _triangle_cell(color, self.n)
        if up:
            u, v = (i + 1 / 3) / self.n, (j + 1 / 3) / self.n
        else:
            u, v = (i + 2 / 3) / self.n, (j + 2 / 3) / self.n
        return (1.0 - u - v, u, v)

    def midpoint(self, color):
        return self.composition(color)[1]

    def iso_levels(self):
        """(material index, level) pairs whose iso-lines separate the colours."""
        if self.components == 2:
            return [(1, b) for b in self.boundaries]
        return [(k, b) for k in range(3) for b in self.boundaries]

    def _check(self, color):
        if not 0 <= color < self.size:
            raise IndexError(f"colour {color} outside palette of size {self.size}")


def build_palette(n, materials=("a", "b")):
    return Palette(int(n) if isinstance(n, (int, np.integer)) else n, tuple(materials))


# --------------------------------------------------------------------------
# three-material triangle grid
#
# Row j (0-based, v in [j/n, (j+1)/n)) holds 2(n-j)-1 triangles ordered along
# u: up(0), down(0), up(1), down(1), ... up(n-1-j).  Colours are numbered row
# after row in that order.

def _row_start(j, n):
    return j * (2 * n - j)


def _triangle_cell(color, n):
    j = 0
    while _row_start(j + 1, n) <= color:
        j += 1
    p = color - _row_start(j, n)
    return p // 2, j, p % 2 == 0


def _triangle_index(u, v, n):
    u = np.clip(np.asarray(u, float), 0, 1)
    v = np.clip(np.asarray(v, float), 0, 1)
    j = np.clip(np.floor(v * n), 0, n - 1).astype(int)
    i = np.clip(np.floor(u * n), 0, n - 1 - j).astype(int)
    fu, fv = u * n - i, v * n - j
    down = (fu + fv >= 1) & (i < n - 1 - j)
    out = _row_start(j, n) + 2 * i + down.astype(int)
    return int(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------

def state_for_fraction(m, profile, composition=None):
    """Machine state realising gradient coordinate ``m`` on ``profile``."""
    if profile.syntax == "mix":
        ratios = composition if composition is not None else (1.0 - m, m)
        ratios = tuple(min(1.0, max(0.0, float(r))) for r in ratios)
        total = sum(ratios)
        return MixState(tuple(r / total for r in ratios))
    if composition is not None and len(composition) > 2:
        raise Unsupported(f"{profile.syntax} machines only support two-material gradients")
    if profile.syntax == "multitool":
        # round half up so the mapping stays monotone
        return ToolState(int(math.floor(m * (profile.tools - 1) + 0.5)))
    return TemperatureState(profile.temp_lo + m * (profile.temp_hi - profile.temp_lo))


def map_color(color, palette, profile):
    comp = palette.composition(color)
    return state_for_fraction(comp[1], profile, comp)


def traversal_order(palette, layer_index, components=None):
    """Colour print order for a layer, minimising mixture change between regions."""
    components = components or palette.components
    if components > 3:
        raise Unsupported("traversal order is only defined for two or three materials")
    if components < 2:
        raise Unsupported("traversal order needs at least two components")
    if components == 2:
        order = list(range(palette.n))
    else:
        n = palette.n
        order = []
        for j in range(n):
            row = list(range(_row_start(j, n), _row_start(j + 1, n)))
            order.extend(row if j % 2 == 0 else row[::-1])
    return order[::-1] if layer_index % 2 else order


@dataclass(frozen=True)
class ZipperSpec:
    beta: float
    bands: tuple

    @property
    def enabled(self):
        return self.beta > 0

    def band_of(self, m):
        """Index of the band containing ``m`` or -1."""
        for k, (lo, hi) in enumerate(self.bands):
            if lo <= m <= hi:
                return k
        return -1


def zipper_bands(palette, beta):
    """One overlap band of width ``beta`` (fraction space) per interior boundary."""
    beta = float(beta)
    if beta < 0:
        raise BandOverlap(f"zipper bandwidth must be >= 0, got {beta}")
    if palette.n > 1 and beta >= palette.alpha:
        raise BandOverlap(f"zipper bandwidth {beta} must be smaller than the interval width {palette.alpha}")
    if palette.components != 2 and beta > 0:
        raise Unsupported("zippering is only implemented for two-material gradients")
    bands = tuple((b - beta / 2, b + beta / 2) for b in palette.boundaries)
    return ZipperSpec(beta, bands)


def blend_hex(composition, display_colors):
    """Mix display colours (``#rrggbb``) by material fractions."""
    rgb = np.zeros(3)
    for frac, hexcol in zip(composition, display_colors):
        hexcol = hexcol.lstrip("#")
        rgb += frac * np.array([int(hexcol[k:k + 2], 16) for k in (0, 2, 4)], dtype=float)
    r, g, b = (int(round(min(255.0, max(0.0, c)))) for c in rgb)
    return f"#{r:02x}{g:02x}{b:02x}"
