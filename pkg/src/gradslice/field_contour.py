"""Iso-contours of sampled fields and mesh sections."""
from .contour import *  # noqa: F401,F403
from . import contour as _impl

__all__ = [n for n in dir(_impl) if not n.startswith("_")]
