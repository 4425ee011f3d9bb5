"""
Exception hierarchy with CLI exit codes.
"""
from typing import Optional


class MarkerMatchError(Exception):
    """Base error; carries the exit code and the pipeline stage it surfaced in."""

    exit_code: int = 1

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self) -> str:
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


class SpotFileParseError(MarkerMatchError):
    """Malformed spot file."""

    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None, stage: Optional[str] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, stage)
        self.line = line


class ConfigError(MarkerMatchError):
    """Invalid run configuration or batch manifest."""

    exit_code = 2


class GeometryError(MarkerMatchError):
    """Input geometry cannot support the requested estimate."""

    exit_code = 3


class InvalidTransformError(GeometryError):
    """Affine matrix is singular."""


class InvalidRegionError(GeometryError):
    """Background region is empty or too small to act as a density."""


class DegenerateGeometryError(GeometryError):
    """Design or scatter matrix is rank deficient (e.g. collinear markers)."""


class InsufficientMarkersError(GeometryError):
    """Too few paired markers for the estimate."""


class InsufficientMatchesError(GeometryError):
    """Too few matched pairs for the final refit."""


class PriorConstructionError(GeometryError):
    """Inputs do not fit the requested prior."""


class ShapeMismatchError(GeometryError):
    """Matrices that must agree in shape do not."""


class EmptyInputError(GeometryError):
    """An operation received no data."""


class InfeasibleMatchingError(MarkerMatchError):
    """No matching satisfies the constraints."""

    exit_code = 4
