"""Machine profiles: command syntax class, melt chamber volume and G-code templates.

Profiles are TOML files.  Every key is optional; missing keys keep the
defaults below::

    syntax = "mix"            # mix | multitool | temperature
    v_melt = 68.56            # mm^3
    lookahead = "auto"        # mm, or "auto" to derive it from v_melt
    bed_size = [300, 300]
    tools = 5
    flow_material = "PLA"     # PLA | TPU | none
    start_gcode = "G28\\nM104 S${temperature}"
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SYNTAXES = ("mix", "multitool", "temperature")
FLOW_MATERIALS = ("PLA", "TPU", None)

DEFAULT_START = """\
G21
G90
M82
M107
M109 S${temperature}
G28
G92 E0
"""

DEFAULT_END = """\
M107
G91
G1 Z5 F600
G90
M84
"""

DEFAULT_DISPLAY = {
    "default": "#808080",
    "blue": "#1f4fd8",
    "yellow": "#f2d21b",
    "red": "#d62728",
    "green": "#2ca02c",
    "white": "#f5f5f5",
    "black": "#202020",
    "cyan": "#17becf",
    "magenta": "#c71585",
    "orange": "#ff7f0e",
}


@dataclass(frozen=True)
class MachineProfile:
    syntax: str = "mix"
    v_melt: float = 0.0
    lookahead: float | None = None
    filament_diameter: float = 1.75
    bed_size: tuple = (300.0, 300.0)
    temp_lo: float = 190.0
    temp_hi: float = 225.0
    tools: int = 2
    flow_material: str | None = None
    print_speed: float = 1800.0
    travel_speed: float = 6000.0
    filament_density: float = 1.24e-3
    purge_locations: tuple | None = None
    purge_threshold: float = 0.0
    purge_gap: float = 5.0
    chamber_model: str = "plug_flow"
    thermal_tau: float = 8.0
    start_gcode: str = DEFAULT_START
    end_gcode: str = DEFAULT_END
    display_colors: tuple = ()

    def __post_init__(self):
        if self.syntax not in SYNTAXES:
            raise ConfigError(f"unknown syntax class {self.syntax!r}; expected one of {SYNTAXES}")
        if self.v_melt < 0:
            raise ConfigError("v_melt must be >= 0")
        if not self.filament_diameter > 0:
            raise ConfigError("filament_diameter must be > 0")
        if self.lookahead is not None and self.lookahead < 0:
            raise ConfigError("lookahead must be >= 0")
        if self.tools < 1:
            raise ConfigError("tools must be >= 1")
        if len(self.bed_size) != 2 or min(self.bed_size) <= 0:
            raise ConfigError("bed_size must be two positive numbers")
        if self.flow_material not in FLOW_MATERIALS:
            raise ConfigError(f"flow_material must be PLA, TPU or none, got {self.flow_material!r}")
        if self.chamber_model not in ("plug_flow", "perfect_mix"):
            raise ConfigError(f"unknown chamber model {self.chamber_model!r}")
        if self.temp_hi < self.temp_lo:
            raise ConfigError("temp_hi must be >= temp_lo")

    def display_color(self, material):
        colors = dict(self.display_colors)
        return colors.get(material) or DEFAULT_DISPLAY.get(material, "#808080")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name for f in dataclasses.fields(MachineProfile)}


def profile_from_dict(data):
    data = dict(data)
    unknown = sorted(set(data) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown profile key(s): {', '.join(unknown)}")
    if data.get("lookahead") == "auto":
        data["lookahead"] = None
    if isinstance(data.get("flow_material"), str) and data["flow_material"].lower() == "none":
        data["flow_material"] = None
    for key in ("bed_size", "purge_locations"):
        if data.get(key) is not None:
            value = data[key]
            data[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
    if "display_colors" in data:
        data["display_colors"] = tuple(sorted(dict(data["display_colors"]).items()))
    try:
        return MachineProfile(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_profile(path=None, **overrides):
    """Read a TOML profile (or the defaults when ``path`` is None) and apply overrides."""
    data = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read profile {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        data = data.get("machine", data)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return profile_from_dict(data)
