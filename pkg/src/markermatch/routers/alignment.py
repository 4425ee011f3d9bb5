"""
Alignment router: align spot lists or screen their markers.
"""
import logging
from typing import Any, Dict, List

from fastapi import APIRouter, Depends, HTTPException, status
from pydantic import BaseModel, Field, ValidationError

from ..config import load_run_config
from ..dependencies import get_alignment_service
from ..exceptions import ConfigError, MarkerMatchError
from ..models.report import AlignmentReport, QCReport
from ..models.run_config import RunConfig
from ..models.spots import SpotRecord
from ..services.alignment import AlignmentService, configurations_from_records

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api", tags=["alignment"])


class AlignRequest(BaseModel):
    """Two spot lists plus RunConfig overrides."""
    mu: List[SpotRecord] = Field(description="Spots mapped onto x")
    x: List[SpotRecord] = Field(description="Reference spots")
    config: Dict[str, Any] = Field(default_factory=dict)
    reverse_check: bool = False


def _run_config(request: AlignRequest) -> RunConfig:
    try:
        return load_run_config(overrides=request.config)
    except ValidationError as e:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail={"stage": "config", "exit_code": 2, "message": str(e)},
        )
    except ConfigError as e:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=_error_detail(e)
        )


def _error_detail(e: MarkerMatchError) -> Dict[str, Any]:
    return {"stage": e.stage, "exit_code": e.exit_code, "message": e.message}


@router.post(
    "/align",
    response_model=AlignmentReport,
    summary="Align spot lists",
    description="Estimate the affine transform of mu onto x and the spot matching",
)
def align(
    request: AlignRequest,
    service: AlignmentService = Depends(get_alignment_service),
) -> AlignmentReport:
    """Run the full pipeline; pipeline errors come back as 422 with the failing stage."""
    config = _run_config(request)
    try:
        mu, x = configurations_from_records(request.mu, request.x, config.n_markers)
        run = service.align(mu, x, config, reverse_check=request.reverse_check)
    except MarkerMatchError as e:
        logger.warning(f"Alignment request failed: {e}")
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=_error_detail(e)
        )
    return run.report


@router.post(
    "/qc-markers",
    response_model=QCReport,
    summary="Screen markers",
    description="Flag grossly misallocated markers",
)
def qc_markers(
    request: AlignRequest,
    service: AlignmentService = Depends(get_alignment_service),
) -> QCReport:
    config = _run_config(request)
    try:
        mu, x = configurations_from_records(request.mu, request.x, config.n_markers)
        return service.screen(mu, x, config).report
    except MarkerMatchError as e:
        logger.warning(f"Marker screening request failed: {e}")
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=_error_detail(e)
        )
