"""Offsets, infill and clipping of bead paths."""
from .toolpath import *  # noqa: F401,F403
from . import toolpath as _impl

__all__ = [n for n in dir(_impl) if not n.startswith("_")]
