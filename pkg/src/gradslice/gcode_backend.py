"""G-code emission and re-parsing."""
from .gcode import *  # noqa: F401,F403
from . import gcode as _impl

__all__ = [n for n in dir(_impl) if not n.startswith("_")]
