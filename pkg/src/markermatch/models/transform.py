"""
Affine transform g(mu) = A mu + b.
"""
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ..exceptions import InvalidTransformError
from .configuration import frozen_array

SINGULAR_DET = 1e-12


class AffineTransform(BaseModel):
    """Nonsingular d x d matrix A plus translation b (px). Reflections are allowed."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: np.ndarray
    b: np.ndarray

    @field_validator("A", mode="before")
    @classmethod
    def _as_matrix(cls, value: object) -> np.ndarray:
        return frozen_array(value, 2)

    @field_validator("b", mode="before")
    @classmethod
    def _as_vector(cls, value: object) -> np.ndarray:
        return frozen_array(value, 1)

    @model_validator(mode="after")
    def _check_shape(self) -> "AffineTransform":
        d = self.b.shape[0]
        if self.A.shape != (d, d):
            raise ValueError(f"A must be {d}x{d}, got {self.A.shape}")
        return self

    @classmethod
    def identity(cls, dim: int = 2) -> "AffineTransform":
        return cls(A=np.eye(dim), b=np.zeros(dim))

    @property
    def dim(self) -> int:
        return int(self.b.shape[0])

    def is_singular(self) -> bool:
        return bool(abs(np.linalg.det(self.A)) <= SINGULAR_DET)

    def require_nonsingular(self) -> None:
        if self.is_singular():
            raise InvalidTransformError(
                f"affine matrix is singular (|det A| = {abs(np.linalg.det(self.A)):.3g})"
            )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map row-vector points: each p -> A p + b."""
        return np.asarray(points, dtype=np.float64) @ self.A.T + self.b

    def inverse(self) -> "AffineTransform":
        self.require_nonsingular()
        a_inv = np.linalg.inv(self.A)
        return AffineTransform(A=a_inv, b=-a_inv @ self.b)

    def as_lists(self) -> Tuple[List[List[float]], List[float]]:
        return self.A.tolist(), self.b.tolist()
