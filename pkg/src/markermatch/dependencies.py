"""
FastAPI dependency injection providers.
"""
from typing import Optional

from fastapi import Depends

from .config import Settings, get_settings
from .services.alignment import AlignmentService

# Cached instances
_alignment_service: Optional[AlignmentService] = None


def get_alignment_service(settings: Settings = Depends(get_settings)) -> AlignmentService:
    """Get alignment service instance (singleton)."""
    global _alignment_service
    if _alignment_service is None:
        _alignment_service = AlignmentService(settings)
    return _alignment_service
