"""
Pydantic models for prior, posterior and hard matching matrices and EM state.

Row index 0 is always the "unmatched" background row; row i >= 1 is mu point i-1.
Column j is x point j.
"""
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .configuration import frozen_array
from .run_config import MatchingMode, PriorVariant
from .transform import AffineTransform

COLUMN_SUM_TOL = 1e-12
ROW_SUM_TOL = 1e-10


class PriorMatrix(BaseModel):
    """(K+m+1) x (K+n) column-stochastic prior q_ij = p(M_ij = 1)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    q: np.ndarray

    @field_validator("q", mode="before")
    @classmethod
    def _as_matrix(cls, value: object) -> np.ndarray:
        return frozen_array(value, 2)

    @model_validator(mode="after")
    def _check_stochastic(self) -> "PriorMatrix":
        if np.any(self.q < 0) or np.any(self.q > 1):
            raise ValueError("prior entries must lie in [0, 1]")
        sums = self.q.sum(axis=0)
        if not np.allclose(sums, 1.0, rtol=0, atol=COLUMN_SUM_TOL):
            raise ValueError(f"prior columns must sum to 1 (worst {sums.min():.15f})")
        return self

    @property
    def n_rows(self) -> int:
        return int(self.q.shape[0])

    @property
    def n_columns(self) -> int:
        return int(self.q.shape[1])

    def log_q(self) -> np.ndarray:
        """Elementwise log with exact zeros mapped to -inf."""
        with np.errstate(divide="ignore"):
            return np.log(self.q)


class MarkerIdentityModel(BaseModel):
    """Which function of distance sets the prior on the true marker position."""

    model_config = ConfigDict(frozen=True)

    variant: PriorVariant = PriorVariant.GAUSSIAN_DISTANCE
    sigma_star2: Optional[float] = Field(default=None, gt=0)
    p_m: float = Field(default=0.99, gt=0, lt=1)
    cluster_radius: float = Field(default=5.0, gt=0)


class PosteriorMatrix(BaseModel):
    """(K+n) x (K+m+1) posterior p[j, i] = p(M_ij = 1 | x_j); rows sum to 1."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    p: np.ndarray

    @field_validator("p", mode="before")
    @classmethod
    def _as_matrix(cls, value: object) -> np.ndarray:
        return frozen_array(value, 2)

    @model_validator(mode="after")
    def _check_rows(self) -> "PosteriorMatrix":
        if self.p.shape[0] and not np.allclose(
            self.p.sum(axis=1), 1.0, rtol=0, atol=ROW_SUM_TOL
        ):
            raise ValueError("posterior rows must sum to 1")
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return (int(self.p.shape[0]), int(self.p.shape[1]))

    def log_p(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.p)


class MatchMatrix(BaseModel):
    """Hard correspondence stored column-wise: assignment[j] = i, with 0 = unmatched."""

    model_config = ConfigDict(frozen=True)

    assignment: Tuple[int, ...]
    n_rows: int = Field(ge=1, description="K+m+1, including the unmatched row")

    @model_validator(mode="after")
    def _check_range(self) -> "MatchMatrix":
        if any(i < 0 or i >= self.n_rows for i in self.assignment):
            raise ValueError("assignment row outside the matrix")
        return self

    @property
    def n_columns(self) -> int:
        return len(self.assignment)

    def is_one_to_one(self) -> bool:
        used = [i for i in self.assignment if i > 0]
        return len(used) == len(set(used))

    def matched_pairs(self) -> List[Tuple[int, int]]:
        """(x index j, mu index i-1) for every matched column."""
        return [(j, i - 1) for j, i in enumerate(self.assignment) if i > 0]

    def n_matched(self) -> int:
        return sum(1 for i in self.assignment if i > 0)

    def dense(self) -> np.ndarray:
        """The (K+m+1) x (K+n) 0/1 matrix M."""
        m = np.zeros((self.n_rows, self.n_columns), dtype=np.int8)
        m[list(self.assignment), list(range(self.n_columns))] = 1
        return m


class HardeningProblem(BaseModel):
    """Log posteriors to be hardened; -inf marks an impossible cell."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    log_post: np.ndarray
    mode: MatchingMode = MatchingMode.HARD

    @field_validator("log_post", mode="before")
    @classmethod
    def _as_matrix(cls, value: object) -> np.ndarray:
        array = frozen_array(value, 2)
        if np.any(np.isnan(array)) or np.any(array == np.inf):
            raise ValueError("log posteriors must be finite or -inf")
        return array

    @classmethod
    def from_posterior(
        cls, posterior: PosteriorMatrix, mode: MatchingMode = MatchingMode.HARD
    ) -> "HardeningProblem":
        return cls(log_post=posterior.log_p(), mode=mode)


class IterationRecord(BaseModel):
    """One EM iteration for the machine-readable trace."""

    iteration: int
    loglik: float
    delta: float
    A: List[List[float]]
    b: List[float]


class EMState(BaseModel):
    """Result of an EM run."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    transform: AffineTransform
    posteriors: PosteriorMatrix
    iteration: int
    observed_loglik: float
    converged: bool
    trace: Tuple[IterationRecord, ...] = ()


class InitRegression(BaseModel):
    """(d+1) x d regression matrix R = (mu*' mu*)^-1 mu*' x."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    R: np.ndarray

    @field_validator("R", mode="before")
    @classmethod
    def _as_matrix(cls, value: object) -> np.ndarray:
        return frozen_array(value, 2)

    def to_transform(self) -> AffineTransform:
        """First row of R is b; the remaining d x d block is A'."""
        return AffineTransform(A=self.R[1:].T, b=self.R[0])
