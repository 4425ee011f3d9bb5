"""
Health check router for liveness probes.
"""
from fastapi import APIRouter, Depends, status
from pydantic import BaseModel

from ..config import Settings, get_settings

router = APIRouter(tags=["health"])


class HealthResponse(BaseModel):
    """Health check response."""
    status: str
    version: str


@router.get(
    "/health",
    response_model=HealthResponse,
    status_code=status.HTTP_200_OK,
    summary="Health check",
)
async def health_check(settings: Settings = Depends(get_settings)) -> HealthResponse:
    """Always returns 200 if the service is running."""
    return HealthResponse(status="healthy", version=settings.app_version)
