"""
Pydantic model exports for easy importing.
"""
from .batch import BatchItemResult, BatchManifest, BatchPair, BatchSummary
from .configuration import Configuration, ModelParams, Region
from .matching import (
    EMState,
    HardeningProblem,
    InitRegression,
    IterationRecord,
    MarkerIdentityModel,
    MatchMatrix,
    PosteriorMatrix,
    PriorMatrix,
)
from .report import (
    AlignmentReport,
    MarkerOutcome,
    MarkerQC,
    MatchEntry,
    MissingCase,
    QCReport,
    ReverseCheck,
    RmsdStats,
    TransformReport,
)
from .run_config import MatchingMode, PriorVariant, QCScale, RunConfig
from .spots import SpotFile, SpotRecord, SyntheticPair, SyntheticTruth
from .transform import AffineTransform

__all__ = [
    # Geometry
    "Configuration",
    "Region",
    "ModelParams",
    "AffineTransform",
    # Matching
    "PriorMatrix",
    "MarkerIdentityModel",
    "PosteriorMatrix",
    "MatchMatrix",
    "HardeningProblem",
    "EMState",
    "IterationRecord",
    "InitRegression",
    # Reports
    "AlignmentReport",
    "MarkerOutcome",
    "MarkerQC",
    "MatchEntry",
    "MissingCase",
    "QCReport",
    "ReverseCheck",
    "RmsdStats",
    "TransformReport",
    # Run configuration
    "RunConfig",
    "PriorVariant",
    "MatchingMode",
    "QCScale",
    # Batch
    "BatchManifest",
    "BatchPair",
    "BatchItemResult",
    "BatchSummary",
    # Spot files
    "SpotFile",
    "SpotRecord",
    "SyntheticPair",
    "SyntheticTruth",
]
