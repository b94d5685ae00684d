"""Design language parsing and field evaluation."""
from .vcad import *  # noqa: F401,F403
from . import vcad as _impl

__all__ = [n for n in dir(_impl) if not n.startswith("_")]
