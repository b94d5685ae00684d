"""Melt-chamber dead-volume models and look-ahead calibration."""
from .simulator import *  # noqa: F401,F403
from . import simulator as _impl

__all__ = [n for n in dir(_impl) if not n.startswith("_")]
