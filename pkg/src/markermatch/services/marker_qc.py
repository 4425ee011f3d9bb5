"""
Marker screening before the main alignment.

detect_misallocated runs the EM on the markers alone under the flat marker-identity prior
and keeps marker k only when the hardened matching pairs mu_k with x_k.
resolve_missing reduces the marker set to labels located in both configurations.
"""
import logging
import math
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import chi2

from ..config import get_settings
from ..exceptions import (
    DegenerateGeometryError,
    InsufficientMarkersError,
    InsufficientMatchesError,
)
from ..models.configuration import Configuration, ModelParams
from ..models.matching import HardeningProblem, MatchMatrix
from ..models.report import MarkerOutcome, MarkerQC, MissingCase, QCReport
from ..models.run_config import MatchingMode, QCScale
from ..models.transform import AffineTransform
from .em_engine import (
    degrees_of_freedom,
    estimate_sigma2,
    fit_regression,
    initial_transform,
    run_em,
)
from .geometry import bounding_region, rmsd_arrays
from .hardening import harden
from .priors import build_gross_prior, marker_cases

logger = logging.getLogger(__name__)

# Exhaustive (d+1)-subsets up to this many, sampled beyond it
ELEMENTAL_SUBSETS = 500
C_STEP_STARTS = 10
C_STEP_LIMIT = 50
INLIER_QUANTILE = 0.975


def robust_sigma2(mu_markers: np.ndarray, x_markers: np.ndarray, t0: AffineTransform) -> float:
    """
    Median-based error variance of the marker fit.

    ||r||^2 / sigma^2 is chi-square with d degrees of freedom, so
    median ||r||^2 / median(chi2_d) estimates sigma^2 with a 50% breakdown point.
    """
    residual = np.asarray(x_markers) - t0.apply(mu_markers)
    squared = np.sum(residual**2, axis=1)
    return float(np.median(squared) / chi2.ppf(0.5, df=residual.shape[1]))


def _squared_residuals(t: AffineTransform, mu: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.sum((x - t.apply(mu)) ** 2, axis=1)


def _trimmed_sum(squared: np.ndarray, h: int) -> float:
    return float(np.sum(np.partition(squared, h - 1)[:h]))


def _elemental_subsets(k_total: int, d: int) -> List[Tuple[int, ...]]:
    size = d + 1
    if math.comb(k_total, size) <= ELEMENTAL_SUBSETS:
        return list(combinations(range(k_total), size))
    rng = np.random.default_rng(0)
    return [
        tuple(sorted(int(i) for i in rng.choice(k_total, size, replace=False)))
        for _ in range(ELEMENTAL_SUBSETS)
    ]


def _concentrate(
    mu: np.ndarray, x: np.ndarray, t: AffineTransform, h: int
) -> Tuple[AffineTransform, np.ndarray, float]:
    """Refit on the h best-fitting pairs until the trimmed sum stops falling."""
    squared = _squared_residuals(t, mu, x)
    objective = _trimmed_sum(squared, h)
    for _ in range(C_STEP_LIMIT):
        subset = np.argsort(squared, kind="stable")[:h]
        try:
            candidate = fit_regression(mu[subset], x[subset]).to_transform()
        except DegenerateGeometryError:
            break
        candidate_squared = _squared_residuals(candidate, mu, x)
        candidate_objective = _trimmed_sum(candidate_squared, h)
        if candidate_objective >= objective:
            break
        t, squared, objective = candidate, candidate_squared, candidate_objective
    return t, squared, objective


def reweighted_marker_fit(
    mu_markers: np.ndarray, x_markers: np.ndarray
) -> Tuple[AffineTransform, float, np.ndarray]:
    """
    Outlier-resistant affine fit and error variance of the marker pairs.

    A least-trimmed-squares fit over the best h = (K + d + 2) // 2 pairs, started from
    exact fits to (d+1)-subsets, gives an initial scale from the median residual. Pairs
    within the 97.5% chi-square cutoff of that scale are refitted by least squares and
    sigma^2 is their residual variance, corrected for the truncation at the cutoff.

    Returns:
        (transform, sigma2, inlier mask)

    Raises:
        DegenerateGeometryError: every (d+1)-subset of markers is collinear
    """
    mu_markers = np.asarray(mu_markers, dtype=np.float64)
    x_markers = np.asarray(x_markers, dtype=np.float64)
    k_total, d = mu_markers.shape
    h = (k_total + d + 2) // 2

    starts: List[Tuple[float, AffineTransform]] = []
    for subset in _elemental_subsets(k_total, d):
        idx = list(subset)
        try:
            t = fit_regression(mu_markers[idx], x_markers[idx]).to_transform()
        except DegenerateGeometryError:
            continue
        starts.append((_trimmed_sum(_squared_residuals(t, mu_markers, x_markers), h), t))
    if not starts:
        raise DegenerateGeometryError("every elemental subset of markers is collinear")
    starts.sort(key=lambda start: start[0])

    t_trim, squared, _ = min(
        (_concentrate(mu_markers, x_markers, t, h) for _, t in starts[:C_STEP_STARTS]),
        key=lambda fit: fit[2],
    )
    nu = degrees_of_freedom(k_total, d)
    scale0 = float(np.median(squared) / chi2.ppf(0.5, df=d)) * d * k_total / max(nu, 1)
    scale0 = _floor_sigma2(scale0)

    cutoff = chi2.ppf(INLIER_QUANTILE, df=d)
    inliers = squared <= scale0 * cutoff
    k_in = int(inliers.sum())
    if k_in <= d + 1:
        return t_trim, scale0, inliers
    try:
        t_in = fit_regression(mu_markers[inliers], x_markers[inliers]).to_transform()
    except DegenerateGeometryError:
        return t_trim, scale0, inliers

    rss = float(np.sum(_squared_residuals(t_in, mu_markers[inliers], x_markers[inliers])))
    consistency = chi2.cdf(cutoff, df=d + 2) / chi2.cdf(cutoff, df=d)
    t_in.require_nonsingular()
    sigma2 = rss / degrees_of_freedom(k_in, d) / consistency
    logger.debug(f"Reweighted marker fit kept {k_in} of {k_total} pairs, sigma^2 = {sigma2:.4g}")
    return t_in, _floor_sigma2(sigma2), inliers


def _floor_sigma2(sigma2: float) -> float:
    floor = get_settings().min_sigma2
    if sigma2 < floor:
        logger.warning(f"sigma^2 = {sigma2:.3g} is below the floor; using {floor:.3g}")
        return floor
    return sigma2


def _classify(k_total: int, matching: MatchMatrix, labels: Sequence[int]) -> List[MarkerQC]:
    """
    One outcome per marker, first applicable wins: matched to self, x_k unmatched,
    mu_k unmatched, cross-matched.

    partner is the marker whose mu point x_k was matched to, when that is not mu_k.
    """
    # x marker j -> mu marker index, and the reverse
    x_to_mu: Dict[int, int] = dict(matching.matched_pairs())
    mu_to_x: Dict[int, int] = {i: j for j, i in x_to_mu.items()}

    outcomes = []
    for k in range(k_total):
        mu_partner = mu_to_x.get(k)
        x_partner = x_to_mu.get(k)
        if x_partner == k:
            outcome = MarkerOutcome.MATCHED_TO_SELF
        elif x_partner is None:
            outcome = MarkerOutcome.UNMATCHED_IN_X
        elif mu_partner is None:
            outcome = MarkerOutcome.MU_UNMATCHED
        else:
            outcome = MarkerOutcome.CROSS_MATCHED
        partner: Optional[int] = None
        if x_partner is not None and x_partner != k:
            partner = labels[x_partner]
        outcomes.append(
            MarkerQC(
                marker=labels[k],
                outcome=outcome,
                partner=partner,
                x_matched=x_partner is not None,
                mu_matched=mu_partner is not None,
            )
        )
    return outcomes


def detect_misallocated(
    mu_markers: np.ndarray,
    x_markers: np.ndarray,
    p_m: float = 0.99,
    sigma2: Optional[float] = None,
    labels: Optional[Sequence[int]] = None,
    scale: QCScale = QCScale.REWEIGHTED,
    omega_margin: float = 3.0,
    convergence_exponent: float = 8,
    max_iterations: int = 500,
) -> QCReport:
    """
    Highlight grossly misallocated markers.

    Args:
        mu_markers: K x d allocated markers in mu, row k = marker k
        x_markers: K x d allocated markers in x
        p_m: probability that an allocated pair truly corresponds
        sigma2: error variance; None = estimate it as scale says
        labels: marker numbers for the report (default 1..K)
        scale: reweighted (trimmed fit, EM started from it), median of the all-marker
            residuals, or the all-marker residual variance

    Returns:
        QCReport with one outcome per marker and the retained set

    Raises:
        InsufficientMarkersError: fewer than d+2 markers given or retained
    """
    mu_markers = np.asarray(mu_markers, dtype=np.float64)
    x_markers = np.asarray(x_markers, dtype=np.float64)
    k_total, d = mu_markers.shape
    labels = list(labels) if labels is not None else list(range(1, k_total + 1))
    if k_total < d + 2:
        raise InsufficientMarkersError(
            f"marker screening in {d}-D needs at least {d + 2} markers, got {k_total}"
        )

    t_all = initial_transform(mu_markers, x_markers)
    rmsd_before = rmsd_arrays(t_all.apply(mu_markers), x_markers)
    t0 = t_all
    if scale is QCScale.REWEIGHTED:
        t0, fitted_sigma2, _ = reweighted_marker_fit(mu_markers, x_markers)
        sigma2 = fitted_sigma2 if sigma2 is None else sigma2
    elif sigma2 is None:
        sigma2 = (
            robust_sigma2(mu_markers, x_markers, t_all)
            if scale is QCScale.MEDIAN
            else estimate_sigma2(mu_markers, x_markers, t_all)
        )
    sigma2 = _floor_sigma2(sigma2)
    logger.debug(f"Screening {k_total} markers with sigma^2 = {sigma2:.4f}, p_M = {p_m}")

    slots = tuple(range(k_total))
    mu_c = Configuration(points=mu_markers, marker_slots=slots)
    x_c = Configuration(points=x_markers, marker_slots=slots)
    omega = bounding_region(x_markers, omega_margin * float(np.sqrt(sigma2)))
    params = ModelParams(
        sigma2=sigma2,
        sigma_star2=sigma2,
        p_m=p_m,
        convergence_exponent=convergence_exponent,
        max_iterations=max_iterations,
    )
    state = run_em(x_c, mu_c, build_gross_prior(k_total, p_m), params, t0, sigma2, omega)
    matching = harden(HardeningProblem.from_posterior(state.posteriors, MatchingMode.HARD))

    outcomes = _classify(k_total, matching, labels)
    keep = [k for k, entry in enumerate(outcomes) if entry.outcome is MarkerOutcome.MATCHED_TO_SELF]
    excluded = [outcomes[k].marker for k in range(k_total) if k not in keep]
    if excluded:
        logger.info(f"Marker screening excluded markers {excluded}")

    if len(keep) < d + 2:
        raise InsufficientMarkersError(
            f"only {len(keep)} of {k_total} markers survived screening; need {d + 2}"
        )

    if excluded:
        t_kept = initial_transform(mu_markers[keep], x_markers[keep])
        rmsd_after = rmsd_arrays(t_kept.apply(mu_markers[keep]), x_markers[keep])
    else:
        rmsd_after = rmsd_before

    return QCReport(
        markers=outcomes,
        retained_markers=[labels[k] for k in keep],
        sigma2=sigma2,
        rmsd_before=rmsd_before,
        rmsd_after=rmsd_after,
    )


def screen_configurations(
    mu: Configuration, x: Configuration, report: QCReport
) -> Tuple[Configuration, Configuration]:
    """Demote every excluded marker to a nonmarker in both configurations."""
    kept = set(report.retained_markers)
    slots = [
        (label, mu_slot, x_slot)
        for label, mu_slot, x_slot in zip(mu.labels(), mu.marker_slots, x.marker_slots)
        if label in kept
    ]
    labels = tuple(label for label, _, _ in slots)
    return (
        mu.with_slots(tuple(s for _, s, _ in slots), labels),
        x.with_slots(tuple(s for _, _, s in slots), labels),
    )


def resolve_missing(
    mu: Configuration, x: Configuration
) -> Tuple[Configuration, Configuration, Dict[int, MissingCase]]:
    """
    Keep only markers located in both configurations.

    A marker located in one configuration alone becomes a nonmarker there; a marker located
    in neither is dropped. No point is removed, and the surviving markers keep their
    original labels.

    Raises:
        InsufficientMarkersError: no marker is located in both
    """
    cases = marker_cases(mu, x)
    k_total = len(cases)
    mu_full, x_full = mu.padded(k_total), x.padded(k_total)

    labels: List[int] = []
    mu_slots: List[Optional[int]] = []
    x_slots: List[Optional[int]] = []
    for label, mu_slot, x_slot in zip(mu_full.labels(), mu_full.marker_slots, x_full.marker_slots):
        if cases[label] is MissingCase.BOTH:
            labels.append(label)
            mu_slots.append(mu_slot)
            x_slots.append(x_slot)

    if not labels:
        raise InsufficientMarkersError("no marker is located in both configurations")

    reclassified = [label for label, case in cases.items() if case is not MissingCase.BOTH]
    if reclassified:
        logger.info(
            f"Markers {reclassified} are not located in both configurations; K = {len(labels)}"
        )

    return (
        mu_full.with_slots(tuple(mu_slots), tuple(labels)),
        x_full.with_slots(tuple(x_slots), tuple(labels)),
        cases,
    )


def final_refit(
    x: Configuration, mu: Configuration, m: MatchMatrix
) -> Tuple[AffineTransform, float]:
    """
    Least-squares affine fit over the hardened matches, treated as known.

    Returns:
        (transform, RMSD over the matched pairs)

    Raises:
        InsufficientMatchesError: fewer than d+1 matched pairs
    """
    pairs = m.matched_pairs()
    d = x.dim
    if len(pairs) < d + 1:
        raise InsufficientMatchesError(
            f"the final refit needs {d + 1} matched pairs, got {len(pairs)}"
        )
    x_idx = [j for j, _ in pairs]
    mu_idx = [i for _, i in pairs]
    transform = initial_transform(mu.points[mu_idx], x.points[x_idx])
    return transform, rmsd_arrays(transform.apply(mu.points[mu_idx]), x.points[x_idx])


def annotate_missing(report: QCReport, cases: Dict[int, MissingCase]) -> QCReport:
    """Add a missing_case outcome for every label not located in both configurations."""
    screened = {entry.marker for entry in report.markers}
    missing = [
        MarkerQC(marker=label, outcome=MarkerOutcome.MISSING_CASE, missing_case=case)
        for label, case in cases.items()
        if case is not MissingCase.BOTH and label not in screened
    ]
    if not missing:
        return report
    markers = sorted(report.markers + missing, key=lambda entry: entry.marker)
    return report.model_copy(update={"markers": markers})
