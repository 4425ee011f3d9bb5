"""
Pydantic models for marker screening and alignment reports.
"""
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class MarkerOutcome(str, Enum):
    """Per-marker result of the screening pass or of missing-marker resolution."""
    MATCHED_TO_SELF = "matched_to_self"
    UNMATCHED_IN_X = "unmatched_in_x"
    MU_UNMATCHED = "mu_unmatched"
    CROSS_MATCHED = "cross_matched"
    MISSING_CASE = "missing_case"


class MissingCase(str, Enum):
    """Where a marker label was located."""
    BOTH = "a"
    MU_ONLY = "b"
    X_ONLY = "c"
    NEITHER = "d"


class MarkerQC(BaseModel):
    """Outcome for one marker label."""
    marker: int = Field(ge=1)
    outcome: MarkerOutcome
    partner: Optional[int] = Field(default=None, description="Other marker of a cross-match")
    missing_case: Optional[MissingCase] = None
    x_matched: Optional[bool] = None
    mu_matched: Optional[bool] = None


class QCReport(BaseModel):
    """Screening result: one outcome per marker plus the retained set."""
    markers: List[MarkerQC] = Field(default_factory=list)
    retained_markers: List[int] = Field(default_factory=list)
    sigma2: Optional[float] = None
    rmsd_before: Optional[float] = None
    rmsd_after: Optional[float] = None

    @model_validator(mode="after")
    def _check_partition(self) -> "QCReport":
        labels = [m.marker for m in self.markers]
        if len(labels) != len(set(labels)):
            raise ValueError("each marker receives exactly one outcome")
        if not set(self.retained_markers) <= set(labels):
            raise ValueError("retained markers must be screened markers")
        return self

    @property
    def excluded_markers(self) -> List[int]:
        kept = set(self.retained_markers)
        return [m.marker for m in self.markers if m.marker not in kept]

    def outcome_of(self, marker: int) -> MarkerQC:
        for entry in self.markers:
            if entry.marker == marker:
                return entry
        raise KeyError(marker)


class MatchEntry(BaseModel):
    """One x spot and the mu spot it was matched to (None = unmatched)."""
    x_spot_id: str
    mu_spot_id: Optional[str] = None
    posterior: float = Field(ge=0, le=1)


class RmsdStats(BaseModel):
    """Root mean squared distances over matched pairs (px)."""
    markers_initial: Optional[float] = None
    matches_em: Optional[float] = None
    matches_refit: Optional[float] = None
    n_pairs: int = 0


class TransformReport(BaseModel):
    A: List[List[float]]
    b: List[float]


class ReverseCheck(BaseModel):
    """Agreement between the forward match list and the one from aligning x onto mu."""
    agreement: float = Field(ge=0, le=1)
    n_forward: int
    n_reverse: int
    n_common: int


class AlignmentReport(BaseModel):
    """Everything one alignment produced."""
    schema_version: str
    transform_em: TransformReport
    transform: TransformReport
    iterations: int
    converged: bool
    observed_loglik: float
    sigma2: float
    sigma_star2: float
    omega_area: float
    matching: str
    n_matched: int
    matches: List[MatchEntry] = Field(default_factory=list)
    marker_qc: Optional[QCReport] = None
    missing_markers: Dict[int, MissingCase] = Field(default_factory=dict)
    rmsd: RmsdStats = Field(default_factory=RmsdStats)
    reverse_check: Optional[ReverseCheck] = None
    parameters: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_matches(self) -> "AlignmentReport":
        if self.matching == "hard":
            used = [m.mu_spot_id for m in self.matches if m.mu_spot_id is not None]
            if len(used) != len(set(used)):
                raise ValueError("hard matching uses each mu spot at most once")
        return self
