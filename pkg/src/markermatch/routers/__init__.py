"""
API routers package.
"""
from . import alignment, health

__all__ = ["alignment", "health"]
