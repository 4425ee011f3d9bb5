"""
Pydantic models for per-run parameters.
"""
from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field


class PriorVariant(str, Enum):
    """Marker-identity prior options for the main alignment."""
    GAUSSIAN_DISTANCE = "gaussian_distance"
    GROSS_FLAT = "gross_flat"
    CLUSTER_ADAPTIVE = "cluster_adaptive"


class QCScale(str, Enum):
    """How the screening pass estimates sigma^2 when none is given."""
    REWEIGHTED = "reweighted"
    MEDIAN = "median"
    ALL_MARKERS = "all_markers"


class MatchingMode(str, Enum):
    """Hardening constraint options."""
    HARD = "hard"
    SOFT = "soft"


class RunConfig(BaseModel):
    """Run configuration for one alignment."""

    # Prior
    prior: PriorVariant = Field(
        default=PriorVariant.GAUSSIAN_DISTANCE, description="Marker-identity prior"
    )
    sigma_star2: Optional[float] = Field(
        default=None, gt=0, description="Marker-prior variance (px^2); None = sigma^2"
    )
    cluster_radius: float = Field(default=5.0, gt=0, description="Cluster prior radius (px)")

    # Marker screening
    qc_markers: bool = Field(default=True, description="Screen for misallocated markers")
    p_m: float = Field(default=0.99, gt=0, lt=1, description="Marker-identity probability")
    qc_scale: QCScale = Field(
        default=QCScale.REWEIGHTED, description="Screening sigma^2 when sigma2 is unset"
    )

    # EM
    convergence_exponent: float = Field(default=8, ge=1, description="l in 10^-l")
    max_iterations: int = Field(default=500, ge=1)
    sigma2: Optional[float] = Field(default=None, gt=0, description="Error variance override")
    omega_margin: float = Field(default=3.0, ge=0, description="Background margin in sigma")

    # Hardening
    matching: MatchingMode = Field(default=MatchingMode.HARD)

    # Marker count; None = largest marker index seen in either file
    n_markers: Optional[int] = Field(default=None, ge=1)

    # Synthetic generation only
    seed: int = Field(default=0, ge=0)
