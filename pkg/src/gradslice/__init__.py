"""Gradient-aware slicing of implicit multi-material designs into G-code."""
from .errors import *  # noqa: F401,F403
from .gcode import (capsule_area, emit_gcode, emit_layer_svg, flow_percent, lookahead_distance,
                    parse_gcode)
from .palette import Palette, build_palette, map_color, traversal_order, zipper_bands
from .profile import MachineProfile, load_profile
from .simulator import calibrate_lookahead, realized_boundary_error, simulate
from .slicer import GradientSlicer, slice_design
from .toolpath import PrintSettings
from .vcad import parse_design, parse_expression

__version__ = "0.1.0"
