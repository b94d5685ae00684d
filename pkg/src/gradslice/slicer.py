"""End-to-end slicing behind a scikit-learn style estimator."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import vcad
from .errors import ConfigError
from .gcode import capsule_area, emit_gcode, emit_layer_svg, lookahead_distance
from .layer import DesignModel, compute_layer, prepare_design
from .palette import build_palette, zipper_bands
from .profile import MachineProfile, load_profile
from .strategy import (apply_lookahead, bed_offset, drop_redundant_states, insert_purge_towers,
                       slice_layer_strategy1, slice_layer_strategy2)
from .toolpath import PrintSettings


# --------------------------------------------------------------------------
# validation helpers

def check_design(design, base_dir=None, materials=None):
    """Return a :class:`DesignModel` from source text, an AST or a model."""
    if isinstance(design, DesignModel):
        return design
    return prepare_design(design, base_dir, materials)


def check_profile(profile):
    if profile is None:
        return MachineProfile()
    if isinstance(profile, MachineProfile):
        return profile
    if isinstance(profile, dict):
        return load_profile(None, **profile)
    return load_profile(profile)


def check_settings(layer_height=0.2, bead_width=0.4, resolution=None, perimeters=3, fill="concentric",
                   min_segment=5.0):
    try:
        return PrintSettings(layer_height=layer_height, bead_width=bead_width, resolution=resolution,
                             perimeters=perimeters, fill=fill, min_segment=min_segment)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def check_strategy(strategy):
    try:
        s = int(strategy)
    except (TypeError, ValueError):
        s = None
    if s not in (1, 2):
        raise ConfigError(f"strategy must be 1 or 2, got {strategy!r}")
    return s


def check_lookahead(lookahead, profile, settings):
    """Resolve ``"auto"``/None to the bead-model distance; numbers pass through."""
    if lookahead is None or lookahead == "auto":
        if profile.lookahead is not None:
            return float(profile.lookahead)
        return lookahead_distance(profile.v_melt, settings.h, settings.w)
    try:
        value = float(lookahead)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"look-ahead must be a distance in mm or 'auto', got {lookahead!r}") from exc
    if value < 0 or not math.isfinite(value):
        raise ConfigError(f"look-ahead must be >= 0, got {lookahead!r}")
    return value


def strip_gradient(design):
    """The same geometry with every fgrade removed (conventional slicing input)."""
    if isinstance(design, str):
        design = vcad.parse_design(design)
    if isinstance(design, vcad.FGrade):
        return strip_gradient(design.child)
    if isinstance(design, vcad.Translate):
        return vcad.Translate(design.offset, strip_gradient(design.child))
    for cls in (vcad.Union, vcad.Difference, vcad.Intersection):
        if isinstance(design, cls):
            return cls(tuple(strip_gradient(c) for c in design.children))
    return design


@dataclass
class SliceReport:
    layers: int = 0
    regions_per_layer: list = field(default_factory=list)
    colors_used: list = field(default_factory=list)
    state_changes: int = 0
    purge_towers: int = 0
    purge_tower_layers: int = 0
    purge_length: float = 0.0
    purge_volume: float = 0.0
    purge_mass: float = 0.0
    lookahead: float = 0.0
    path_length_by_color: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class GradientSlicer(BaseEstimator):
    """Compile a graded design into layer plans and G-code.

    ``fit`` runs the geometric pipeline and stores ``plans_``; ``transform``
    (or :meth:`to_gcode`) renders them.  Parameters mirror the command line.
    """

    def __init__(self, strategy=1, n_colors=4, zipper_beta=0.0, layer_height=0.2, bead_width=0.4,
                 resolution=None, perimeters=3, fill="concentric", min_segment=5.0, lookahead="auto",
                 purge_threshold=None, profile=None, max_layers=None, base_dir=None):
        self.strategy = strategy
        self.n_colors = n_colors
        self.zipper_beta = zipper_beta
        self.layer_height = layer_height
        self.bead_width = bead_width
        self.resolution = resolution
        self.perimeters = perimeters
        self.fill = fill
        self.min_segment = min_segment
        self.lookahead = lookahead
        self.purge_threshold = purge_threshold
        self.profile = profile
        self.max_layers = max_layers
        self.base_dir = base_dir

    def fit(self, design, y=None):
        timings = {}
        t0 = time.perf_counter()
        strategy = check_strategy(self.strategy)
        profile = check_profile(self.profile)
        settings = check_settings(self.layer_height, self.bead_width, self.resolution, self.perimeters,
                                  self.fill, self.min_segment)
        model = check_design(design, self.base_dir)
        palette = build_palette(self.n_colors, model.materials)
        zipper = zipper_bands(palette, self.zipper_beta) if strategy == 1 else None
        timings["parse"] = time.perf_counter() - t0

        zmin = model.bounds[2]
        zs = [zmin + z for z in settings.layer_heights(model.height)]
        if self.max_layers is not None:
            zs = zs[: int(self.max_layers)]
        extra = []
        if zipper is not None and zipper.enabled:
            extra = [(1, v) for band in zipper.bands for v in band]

        layers, plans = [], []
        t_geom = t_path = 0.0
        for i, z in enumerate(zs):
            t1 = time.perf_counter()
            layer = compute_layer(model, z, settings, palette, extra, zipper)
            t2 = time.perf_counter()
            if strategy == 1:
                plan = slice_layer_strategy1(layer, settings, palette, zipper, i)
            else:
                plan = slice_layer_strategy2(layer, settings, palette, i)
            t_geom += t2 - t1
            t_path += time.perf_counter() - t2
            layers.append(layer)
            plans.append(plan)
        timings["geometry"] = t_geom
        timings["toolpaths"] = t_path

        t1 = time.perf_counter()
        layout = None
        look = 0.0
        if strategy == 1:
            plans, layout = insert_purge_towers(plans, profile, settings, palette, model.bbox2d,
                                              threshold=self.purge_threshold)
        else:
            look = check_lookahead(self.lookahead, profile, settings)
        plans = drop_redundant_states(plans)
        if look > 0:
            plans = apply_lookahead(plans, look)
        timings["ordering"] = time.perf_counter() - t1

        self.model_ = model
        self.settings_ = settings
        self.palette_ = palette
        self.zipper_ = zipper
        self.profile_ = profile
        self.layers_ = layers
        self.plans_ = plans
        self.purge_layout_ = layout
        self.lookahead_ = look
        self.offset_ = bed_offset(model.bbox2d, profile)
        self.timings_ = timings
        return self

    def to_gcode(self):
        check_is_fitted(self, "plans_")
        t0 = time.perf_counter()
        text = emit_gcode(self.plans_, self.profile_, self.settings_, self.palette_, self.offset_)
        self.timings_["emit"] = time.perf_counter() - t0
        return text

    def transform(self, design=None):
        if design is not None:
            self.fit(design)
        return self.to_gcode()

    def fit_transform(self, design, y=None):
        return self.fit(design).to_gcode()

    def layer_svg(self, index, mode="commanded", segments=None):
        check_is_fitted(self, "plans_")
        return emit_layer_svg(self.plans_[index], self.palette_, self.profile_, self.settings_, mode,
                              segments, self.offset_)

    def report(self):
        check_is_fitted(self, "plans_")
        r = SliceReport(layers=len(self.plans_), lookahead=self.lookahead_, timings=dict(self.timings_))
        r.regions_per_layer = [len(layer.faces) for layer in self.layers_]
        used = set()
        for plan in self.plans_:
            r.state_changes += len(plan.events())
            r.purge_tower_layers += len({it.color for it in plan.extrusions() if it.role == "purge"})
            for c, length in plan.length_by_color().items():
                used.add(c)
                r.path_length_by_color[c] = r.path_length_by_color.get(c, 0.0) + length
            r.purge_length += sum(it.path.length for it in plan.extrusions() if it.role == "purge")
        r.colors_used = sorted(used)
        r.path_length_by_color = {int(k): round(v, 6) for k, v in sorted(r.path_length_by_color.items())}
        layout = self.purge_layout_
        if layout is not None:
            area = capsule_area(self.settings_.h, self.settings_.w)
            r.purge_towers = len(layout.locations)
            r.purge_volume = r.purge_length * area
            r.purge_mass = r.purge_tower_layers * layout.length * area * self.profile_.filament_density
        return r


def slice_design(design, **params):
    """Convenience wrapper: fit a :class:`GradientSlicer` and return it."""
    return GradientSlicer(**params).fit(design)
