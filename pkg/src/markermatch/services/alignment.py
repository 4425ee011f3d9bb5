"""
Alignment pipeline service.
Runs missing-marker resolution, marker screening, initialisation, EM, hardening and the
final refit, and assembles the report.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from ..config import Settings, load_yaml_config
from ..exceptions import ConfigError, MarkerMatchError
from ..models.batch import BatchItemResult, BatchManifest, BatchPair, BatchSummary
from ..models.configuration import Configuration, ModelParams
from ..models.matching import HardeningProblem, IterationRecord, MarkerIdentityModel
from ..models.report import (
    AlignmentReport,
    MatchEntry,
    MissingCase,
    QCReport,
    ReverseCheck,
    RmsdStats,
    TransformReport,
)
from ..models.run_config import RunConfig
from ..models.spots import SpotFile, SpotRecord
from ..models.transform import AffineTransform
from ..telemetry import stage
from .em_engine import estimate_sigma2, initial_transform, run_em
from .geometry import bounding_region, rmsd_arrays
from .hardening import harden
from .marker_qc import (
    annotate_missing,
    detect_misallocated,
    final_refit,
    resolve_missing,
    screen_configurations,
)
from .overlay import emit_overlay
from .priors import build_prior
from .spot_io import parse_spot_file, write_report

logger = logging.getLogger(__name__)


class AlignmentRun(BaseModel):
    """Report plus what the report was computed from (for overlays and traces)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    report: AlignmentReport
    mu: Configuration
    x: Configuration
    trace: Tuple[IterationRecord, ...] = ()


class QCRun(BaseModel):
    """Screening report with the marker coordinates and fits it was based on."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    report: QCReport
    mu_markers: np.ndarray
    x_markers: np.ndarray
    labels: Tuple[int, ...]
    before: AffineTransform
    after: AffineTransform


def _transform_report(t: AffineTransform) -> TransformReport:
    a, b = t.as_lists()
    return TransformReport(A=a, b=b)


def _matched_pairs(report: AlignmentReport) -> Set[Tuple[str, str]]:
    return {(m.x_spot_id, m.mu_spot_id) for m in report.matches if m.mu_spot_id is not None}


class AlignmentService:
    """Aligns mu onto x for one pair of configurations, or for a batch manifest."""

    def __init__(self, settings: Settings):
        """Initialize alignment service."""
        self.settings = settings

    def _sigma_floor(self, sigma2: float) -> float:
        if sigma2 < self.settings.min_sigma2:
            logger.warning(
                f"sigma^2 = {sigma2:.3g} (exact marker fit); using the floor "
                f"{self.settings.min_sigma2:.3g}"
            )
            return self.settings.min_sigma2
        return sigma2

    def screen(self, mu: Configuration, x: Configuration, config: RunConfig) -> QCRun:
        """Screen the markers located in both configurations."""
        with stage("resolve_missing"):
            mu_r, x_r, cases = resolve_missing(mu, x)
        return self._screen_resolved(mu_r, x_r, config, cases)

    def _screen_resolved(
        self,
        mu: Configuration,
        x: Configuration,
        config: RunConfig,
        cases: Dict[int, MissingCase],
    ) -> QCRun:
        mu_markers, x_markers = mu.marker_points(), x.marker_points()
        labels = mu.labels()
        with stage("marker_qc", n_markers=len(labels)) as span:
            report = detect_misallocated(
                mu_markers,
                x_markers,
                p_m=config.p_m,
                sigma2=config.sigma2,
                labels=labels,
                scale=config.qc_scale,
                omega_margin=config.omega_margin,
                convergence_exponent=config.convergence_exponent,
                max_iterations=config.max_iterations,
            )
            span["n_excluded"] = len(report.excluded_markers)
        report = annotate_missing(report, cases)

        keep = [k for k, label in enumerate(labels) if label in set(report.retained_markers)]
        return QCRun(
            report=report,
            mu_markers=mu_markers,
            x_markers=x_markers,
            labels=labels,
            before=initial_transform(mu_markers, x_markers),
            after=initial_transform(mu_markers[keep], x_markers[keep]),
        )

    def align(
        self,
        mu: Configuration,
        x: Configuration,
        config: RunConfig,
        reverse_check: bool = False,
    ) -> AlignmentRun:
        """
        Full pipeline for one pair.

        Args:
            mu: configuration mapped onto x
            x: reference configuration
            config: run parameters
            reverse_check: also align x onto mu and report how far the match lists agree

        Returns:
            AlignmentRun whose report is deterministic for identical inputs
        """
        run = self._align_once(mu, x, config)
        if not reverse_check:
            return run

        with stage("reverse_check"):
            reverse = self._align_once(x, mu, config)
        forward_pairs = _matched_pairs(run.report)
        reverse_pairs = {(x_id, mu_id) for mu_id, x_id in _matched_pairs(reverse.report)}
        common = len(forward_pairs & reverse_pairs)
        larger = max(len(forward_pairs), len(reverse_pairs))
        check = ReverseCheck(
            agreement=common / larger if larger else 1.0,
            n_forward=len(forward_pairs),
            n_reverse=len(reverse_pairs),
            n_common=common,
        )
        logger.info(f"Reverse-role agreement {check.agreement:.3f} ({common} common matches)")
        return run.model_copy(
            update={"report": run.report.model_copy(update={"reverse_check": check})}
        )

    def _align_once(self, mu: Configuration, x: Configuration, config: RunConfig) -> AlignmentRun:
        with stage("resolve_missing") as span:
            mu_r, x_r, cases = resolve_missing(mu, x)
            span["n_markers"] = mu_r.n_slots

        qc_report: Optional[QCReport] = None
        if config.qc_markers:
            qc_report = self._screen_resolved(mu_r, x_r, config, cases).report
            mu_r, x_r = screen_configurations(mu_r, x_r, qc_report)

        mu_markers, x_markers = mu_r.marker_points(), x_r.marker_points()
        with stage("initial_transform", n_markers=mu_r.n_slots):
            t0 = initial_transform(mu_markers, x_markers)
            rmsd_markers = rmsd_arrays(t0.apply(mu_markers), x_markers)

        with stage("estimate_sigma2"):
            sigma2 = config.sigma2
            if sigma2 is None:
                sigma2 = estimate_sigma2(mu_markers, x_markers, t0)
            sigma2 = self._sigma_floor(sigma2)
        sigma_star2 = config.sigma_star2 if config.sigma_star2 is not None else sigma2

        with stage("build_prior", variant=config.prior.value):
            omega = bounding_region(x_r.points, config.omega_margin * math.sqrt(sigma2))
            model = MarkerIdentityModel(
                variant=config.prior,
                sigma_star2=sigma_star2,
                p_m=config.p_m,
                cluster_radius=config.cluster_radius,
            )
            q = build_prior(model, mu_r, x_r, omega)

        params = ModelParams(
            sigma2=sigma2,
            sigma_star2=sigma_star2,
            p_m=config.p_m,
            convergence_exponent=config.convergence_exponent,
            max_iterations=config.max_iterations,
        )
        with stage("em", n_x=x_r.n_points, n_mu=mu_r.n_points) as span:
            state = run_em(x_r, mu_r, q, params, t0, sigma2, omega)
            span["iterations"] = state.iteration
            span["converged"] = state.converged

        with stage("harden", mode=config.matching.value) as span:
            problem = HardeningProblem.from_posterior(state.posteriors, config.matching)
            matching = harden(problem, self.settings.tie_break_max_cells)
            span["n_matched"] = matching.n_matched()

        with stage("final_refit"):
            transform, rmsd_refit = final_refit(x_r, mu_r, matching)

        pairs = matching.matched_pairs()
        x_idx = [j for j, _ in pairs]
        mu_idx = [i for _, i in pairs]
        rmsd_em = (
            rmsd_arrays(state.transform.apply(mu_r.points[mu_idx]), x_r.points[x_idx])
            if pairs
            else None
        )

        x_ids, mu_ids = x_r.ids(), mu_r.ids()
        matches = [
            MatchEntry(
                x_spot_id=x_ids[j],
                mu_spot_id=mu_ids[i - 1] if i > 0 else None,
                posterior=min(1.0, float(state.posteriors.p[j, i])),
            )
            for j, i in enumerate(matching.assignment)
        ]

        report = AlignmentReport(
            schema_version=self.settings.report_schema_version,
            transform_em=_transform_report(state.transform),
            transform=_transform_report(transform),
            iterations=state.iteration,
            converged=state.converged,
            observed_loglik=state.observed_loglik,
            sigma2=sigma2,
            sigma_star2=sigma_star2,
            omega_area=omega.area,
            matching=config.matching.value,
            n_matched=matching.n_matched(),
            matches=matches,
            marker_qc=qc_report,
            missing_markers=cases,
            rmsd=RmsdStats(
                markers_initial=rmsd_markers,
                matches_em=rmsd_em,
                matches_refit=rmsd_refit,
                n_pairs=len(pairs),
            ),
            parameters=config.model_dump(mode="json"),
        )
        logger.info(
            f"Aligned {mu_r.n_points} mu spots onto {x_r.n_points} x spots: "
            f"{report.n_matched} matched, RMSD {rmsd_refit:.3f}"
        )
        return AlignmentRun(report=report, mu=mu_r, x=x_r, trace=state.trace)

    def align_files(
        self,
        mu_path: Path,
        x_path: Path,
        config: RunConfig,
        columns: Optional[Dict[str, str]] = None,
        reverse_check: bool = False,
    ) -> AlignmentRun:
        """Parse both spot files and align."""
        with stage("parse"):
            mu = parse_spot_file(mu_path, columns, config.n_markers)
            x = parse_spot_file(x_path, columns, config.n_markers)
        # both files share one marker numbering
        k = max(mu.n_slots, x.n_slots)
        return self.align(mu.padded(k), x.padded(k), config, reverse_check=reverse_check)

    def load_manifest(self, path: Path) -> BatchManifest:
        data = load_yaml_config(path)
        if not data:
            raise ConfigError(f"batch manifest {path} is missing or empty")
        try:
            return BatchManifest(**data)
        except ValidationError as e:
            raise ConfigError(f"invalid batch manifest {path}: {e}")

    def _run_pair(
        self,
        pair: BatchPair,
        base: Dict[str, Any],
        manifest: BatchManifest,
        root: Path,
    ) -> BatchItemResult:
        output_dir = root / manifest.output_dir
        report_path = output_dir / (pair.report or Path(f"{pair.name}.json"))
        try:
            try:
                config = RunConfig(**{**base, **manifest.defaults, **pair.config})
            except ValidationError as e:
                raise ConfigError(f"invalid configuration for pair {pair.name}: {e}")
            run = self.align_files(root / pair.mu, root / pair.x, config, manifest.columns or None)
            write_report(run.report, report_path)
            if pair.overlay is not None:
                emit_overlay(run.report, run.mu, run.x, output_dir / pair.overlay)
            return BatchItemResult(
                name=pair.name,
                status="ok",
                report=str(report_path),
                n_matched=run.report.n_matched,
            )
        except MarkerMatchError as e:
            logger.error(f"Pair {pair.name} failed: {e}")
            return BatchItemResult(
                name=pair.name,
                status="error",
                exit_code=e.exit_code,
                stage=e.stage,
                message=e.message,
            )
        except Exception as e:
            logger.exception(f"Pair {pair.name} failed unexpectedly")
            return BatchItemResult(name=pair.name, status="error", exit_code=1, message=str(e))

    def run_batch(
        self,
        manifest_path: Path,
        config: RunConfig,
        max_workers: Optional[int] = None,
    ) -> BatchSummary:
        """
        Align every manifest pair on a thread pool; one failing pair does not stop the rest.

        Returns:
            BatchSummary in manifest order
        """
        manifest = self.load_manifest(manifest_path)
        root = manifest_path.parent
        base = config.model_dump()
        workers = max_workers or manifest.max_workers
        logger.info(f"Aligning {len(manifest.pairs)} pairs with {workers} workers")

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results: List[BatchItemResult] = list(
                pool.map(lambda pair: self._run_pair(pair, base, manifest, root), manifest.pairs)
            )

        summary = BatchSummary(results=results)
        if summary.n_failed:
            logger.warning(f"{summary.n_failed} of {len(results)} pairs failed")
        return summary


def configurations_from_records(
    mu_records: Sequence[SpotRecord], x_records: Sequence[SpotRecord], n_markers: Optional[int]
) -> Tuple[Configuration, Configuration]:
    """Configurations for in-memory spot lists sharing one marker numbering."""
    try:
        mu_file = SpotFile(spots=list(mu_records))
        x_file = SpotFile(spots=list(x_records))
    except ValidationError as e:
        raise ConfigError(f"invalid spot list: {e}")
    k = max(mu_file.max_marker, x_file.max_marker, n_markers or 0)
    return mu_file.to_configuration(k), x_file.to_configuration(k)
