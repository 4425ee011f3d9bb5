"""
Pydantic models for spot files and synthetic ground truth.
"""
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from .configuration import Configuration


class SpotRecord(BaseModel):
    """One detected spot; `marker` is the 1-based marker index when labeled."""
    spot_id: str
    x: float
    y: float
    marker: Optional[int] = Field(default=None, ge=1)
    metadata: Dict[str, str] = Field(default_factory=dict)


class SpotFile(BaseModel):
    """Tabular spot list with unique ids and unique marker labels."""
    spots: List[SpotRecord] = Field(default_factory=list)
    extra_columns: List[str] = Field(
        default_factory=list, description="Opaque columns carried through (e.g. pI, mass)"
    )

    @model_validator(mode="after")
    def _check_unique(self) -> "SpotFile":
        ids = [s.spot_id for s in self.spots]
        if len(ids) != len(set(ids)):
            raise ValueError("spot ids must be unique")
        markers = [s.marker for s in self.spots if s.marker is not None]
        if len(markers) != len(set(markers)):
            raise ValueError("marker indices must be unique")
        return self

    @property
    def max_marker(self) -> int:
        return max((s.marker for s in self.spots if s.marker is not None), default=0)

    def to_configuration(self, n_markers: Optional[int] = None) -> Configuration:
        """
        Points in file order; marker k sits in slot k-1, absent when unlisted.

        Args:
            n_markers: K; defaults to the largest marker index in the file
        """
        n_slots = max(n_markers or 0, self.max_marker)
        slots: List[Optional[int]] = [None] * n_slots
        for index, spot in enumerate(self.spots):
            if spot.marker is not None:
                slots[spot.marker - 1] = index
        return Configuration(
            points=[[s.x, s.y] for s in self.spots],
            marker_slots=tuple(slots),
            spot_ids=tuple(s.spot_id for s in self.spots),
            marker_labels=tuple(range(1, n_slots + 1)),
        )


class SyntheticTruth(BaseModel):
    """Generator ledger for a synthetic pair."""
    A: List[List[float]]
    b: List[float]
    correspondence: Dict[str, Optional[str]] = Field(
        default_factory=dict, description="x spot id -> true mu spot id (None if spurious)"
    )
    marker_cases: Dict[int, str] = Field(
        default_factory=dict, description="marker label -> missing case a/b/c/d"
    )
    corrupted_markers: List[int] = Field(default_factory=list)
    spurious_ids: List[str] = Field(default_factory=list)


class SyntheticPair(BaseModel):
    """A generated mu/x spot file pair plus its ground truth."""
    mu: SpotFile
    x: SpotFile
    truth: SyntheticTruth

    def configurations(self) -> Tuple[Configuration, Configuration]:
        k = max(self.mu.max_marker, self.x.max_marker)
        return self.mu.to_configuration(k), self.x.to_configuration(k)
