"""
Services package initialization.
"""
from .alignment import AlignmentRun, AlignmentService, QCRun, configurations_from_records
from .em_engine import (
    converged,
    e_step,
    estimate_sigma2,
    fit_regression,
    initial_transform,
    m_step,
    observed_loglik,
    run_em,
)
from .geometry import apply_transform, bounding_region, match_density, rmsd
from .hardening import harden, matching_objective
from .marker_qc import annotate_missing, detect_misallocated, final_refit, resolve_missing
from .overlay import emit_overlay
from .priors import (
    build_cluster_prior,
    build_gross_prior,
    build_missing_prior,
    build_standard_prior,
)
from .spot_io import parse_spot_file, read_spot_file, write_report, write_spot_file
from .synthetic import generate_synthetic

__all__ = [
    "AlignmentService",
    "AlignmentRun",
    "QCRun",
    "configurations_from_records",
    "apply_transform",
    "match_density",
    "rmsd",
    "bounding_region",
    "build_standard_prior",
    "build_gross_prior",
    "build_missing_prior",
    "build_cluster_prior",
    "fit_regression",
    "initial_transform",
    "estimate_sigma2",
    "e_step",
    "m_step",
    "converged",
    "observed_loglik",
    "run_em",
    "harden",
    "matching_objective",
    "detect_misallocated",
    "resolve_missing",
    "final_refit",
    "annotate_missing",
    "parse_spot_file",
    "read_spot_file",
    "write_spot_file",
    "write_report",
    "generate_synthetic",
    "emit_overlay",
]
