"""
Pydantic models for point configurations, the background region and model parameters.
"""
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def frozen_array(value: object, ndim: int) -> np.ndarray:
    """Copy to a read-only float64 array of the given rank."""
    array = np.array(value, dtype=np.float64)
    if array.ndim != ndim:
        raise ValueError(f"expected a {ndim}-D array, got shape {array.shape}")
    array.setflags(write=False)
    return array


class Configuration(BaseModel):
    """
    An ordered d-dimensional point set with a marker prefix.

    `marker_slots[k]` is the point index of marker k+1, or None when that marker was not
    located. Every other point is a nonmarker.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray
    marker_slots: Tuple[Optional[int], ...] = ()
    spot_ids: Tuple[str, ...] = ()
    marker_labels: Tuple[int, ...] = ()

    @field_validator("points", mode="before")
    @classmethod
    def _as_points(cls, value: object) -> np.ndarray:
        array = np.array(value, dtype=np.float64)
        if array.size == 0:
            array = array.reshape(0, 2 if array.ndim < 2 else array.shape[-1])
        return frozen_array(array, 2)

    @model_validator(mode="after")
    def _check_slots(self) -> "Configuration":
        n = self.points.shape[0]
        located = [s for s in self.marker_slots if s is not None]
        if any(s < 0 or s >= n for s in located):
            raise ValueError("marker slot outside the point range")
        if len(set(located)) != len(located):
            raise ValueError("marker slots must reference distinct points")
        if self.spot_ids and len(self.spot_ids) != n:
            raise ValueError("spot_ids must name every point")
        if self.marker_labels and len(self.marker_labels) != len(self.marker_slots):
            raise ValueError("marker_labels must label every slot")
        return self

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def n_points(self) -> int:
        return int(self.points.shape[0])

    @property
    def n_slots(self) -> int:
        """K, the number of marker labels (located or not)."""
        return len(self.marker_slots)

    @property
    def n_markers_located(self) -> int:
        return sum(1 for s in self.marker_slots if s is not None)

    @property
    def n_nonmarkers(self) -> int:
        return self.n_points - self.n_markers_located

    def labels(self) -> Tuple[int, ...]:
        """Marker labels, defaulting to 1..K."""
        return self.marker_labels or tuple(range(1, self.n_slots + 1))

    def ids(self) -> Tuple[str, ...]:
        """Spot ids, defaulting to point indices."""
        return self.spot_ids or tuple(str(i) for i in range(self.n_points))

    def marker_points(self) -> np.ndarray:
        """Coordinates of located markers in slot order."""
        located = [s for s in self.marker_slots if s is not None]
        return self.points[located] if located else np.empty((0, self.dim))

    def with_slots(
        self, marker_slots: Tuple[Optional[int], ...], marker_labels: Tuple[int, ...]
    ) -> "Configuration":
        """Same points, new marker assignment."""
        return Configuration(
            points=self.points,
            marker_slots=marker_slots,
            spot_ids=self.spot_ids,
            marker_labels=marker_labels,
        )

    def with_points(self, points: np.ndarray) -> "Configuration":
        """Same markers, new coordinates."""
        return Configuration(
            points=points,
            marker_slots=self.marker_slots,
            spot_ids=self.spot_ids,
            marker_labels=self.marker_labels,
        )

    def padded(self, n_slots: int) -> "Configuration":
        """Extend the slot list with absent markers up to n_slots."""
        if n_slots <= self.n_slots:
            return self
        extra = n_slots - self.n_slots
        labels = self.labels() + tuple(range(self.n_slots + 1, n_slots + 1))
        return self.with_slots(self.marker_slots + (None,) * extra, labels)


class Region(BaseModel):
    """Axis-aligned box Omega holding every point of x; unmatched points are uniform on it."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lower: np.ndarray
    upper: np.ndarray

    @field_validator("lower", "upper", mode="before")
    @classmethod
    def _as_vector(cls, value: object) -> np.ndarray:
        return frozen_array(value, 1)

    @model_validator(mode="after")
    def _check_bounds(self) -> "Region":
        if self.lower.shape != self.upper.shape:
            raise ValueError("region bounds differ in dimension")
        if not np.all(self.upper > self.lower):
            raise ValueError("region must have positive extent on every axis")
        return self

    @property
    def area(self) -> float:
        """|Omega| (px^d)."""
        return float(np.prod(self.upper - self.lower))

    def contains(self, points: np.ndarray) -> bool:
        return bool(np.all(points >= self.lower) and np.all(points <= self.upper))


class ModelParams(BaseModel):
    """Fixed parameters of one EM run."""

    model_config = ConfigDict(frozen=True)

    sigma2: float = Field(gt=0, description="Error variance (px^2)")
    sigma_star2: float = Field(gt=0, description="Marker-prior variance (px^2)")
    p_m: float = Field(default=0.99, gt=0, lt=1)
    convergence_exponent: float = Field(default=8, ge=1)
    max_iterations: int = Field(default=500, ge=1)
