"""
Prior matching matrices Q.

Rows: 0 is "x_j unmatched", i >= 1 is mu point i-1. Columns: x points in order.
A column belongs to a marker when its x point and the same-label mu point are both located;
every other column is a nonmarker column with a uniform prior.
"""
import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..exceptions import InvalidRegionError, PriorConstructionError
from ..models.configuration import Configuration, Region
from ..models.matching import MarkerIdentityModel, PriorMatrix
from ..models.report import MissingCase
from ..models.run_config import PriorVariant

logger = logging.getLogger(__name__)

# Weights over mu points for a marker column, given the allocated mu marker index.
ColumnWeights = Callable[[int], np.ndarray]


def marker_cases(mu: Configuration, x: Configuration) -> Dict[int, MissingCase]:
    """Missing-marker case for every label 1..K (K = the longer slot list)."""
    k_total = max(mu.n_slots, x.n_slots)
    mu_full = mu.padded(k_total)
    mu_slots = mu_full.marker_slots
    x_slots = x.padded(k_total).marker_slots
    labels = mu_full.labels()

    cases: Dict[int, MissingCase] = {}
    for label, mu_slot, x_slot in zip(labels, mu_slots, x_slots):
        if mu_slot is not None and x_slot is not None:
            cases[label] = MissingCase.BOTH
        elif mu_slot is not None:
            cases[label] = MissingCase.MU_ONLY
        elif x_slot is not None:
            cases[label] = MissingCase.X_ONLY
        else:
            cases[label] = MissingCase.NEITHER
    return cases


def paired_markers(mu: Configuration, x: Configuration) -> List[Tuple[int, int]]:
    """(mu point index, x point index) for every marker located in both."""
    pairs = []
    for mu_slot, x_slot in zip(mu.marker_slots, x.marker_slots):
        if mu_slot is not None and x_slot is not None:
            pairs.append((mu_slot, x_slot))
    return pairs


def _background_probability(omega: Region) -> float:
    q0 = 1.0 / omega.area
    if q0 >= 1.0:
        raise InvalidRegionError(
            f"|Omega| = {omega.area:.3g} is too small for 1/|Omega| to be a probability"
        )
    return q0


def _assemble(
    mu: Configuration,
    x: Configuration,
    omega: Region,
    column_weights: ColumnWeights,
) -> PriorMatrix:
    q0 = _background_probability(omega)
    n_rows = mu.n_points + 1
    q = np.full((n_rows, x.n_points), 1.0 / n_rows)

    for mu_index, x_index in paired_markers(mu, x):
        weights = column_weights(mu_index)
        column = np.empty(n_rows)
        column[0] = q0
        column[1:] = weights * ((1.0 - q0) / weights.sum())
        q[:, x_index] = column

    return PriorMatrix(q=q)


def _gaussian_weights(mu: Configuration, sigma_star2: float) -> ColumnWeights:
    if sigma_star2 <= 0:
        raise PriorConstructionError("sigma_star2 must be positive")

    def weights(anchor: int) -> np.ndarray:
        distance2 = np.sum((mu.points - mu.points[anchor]) ** 2, axis=1)
        # anchor has distance 0, so the largest exponent is 0 and the sum is >= 1
        return np.exp(-distance2 / (2 * sigma_star2))

    return weights


def _cluster_weights(mu: Configuration, epsilon: float) -> ColumnWeights:
    if epsilon <= 0:
        raise PriorConstructionError("cluster radius must be positive")

    def weights(anchor: int) -> np.ndarray:
        inside = cluster_members(mu, anchor, epsilon)
        return inside / inside.sum()

    return weights


def cluster_members(mu: Configuration, anchor: int, epsilon: float) -> np.ndarray:
    """Indicator over mu points of d(mu_i, mu_anchor) <= epsilon; C_j is its sum."""
    distance = np.sqrt(np.sum((mu.points - mu.points[anchor]) ** 2, axis=1))
    return (distance <= epsilon).astype(np.float64)


def _require_all_located(mu: Configuration, x: Configuration) -> None:
    if mu.n_slots != x.n_slots:
        raise PriorConstructionError(
            f"marker counts differ (mu K={mu.n_slots}, x K={x.n_slots}); "
            "use build_missing_prior"
        )
    if mu.n_markers_located != mu.n_slots or x.n_markers_located != x.n_slots:
        raise PriorConstructionError("some markers are not located; use build_missing_prior")
    if mu.n_slots == 0:
        raise PriorConstructionError("at least one marker is required")


def build_standard_prior(
    mu: Configuration, x: Configuration, omega: Region, sigma_star2: float
) -> PriorMatrix:
    """
    Gaussian distance prior with every marker located in both configurations.

    Marker column j: q_0j = 1/|Omega| and q_ij proportional to
    exp(-||mu_i - mu_j||^2 / (2 sigma_star2)), scaled to total 1 - 1/|Omega|.
    Nonmarker columns are uniform over the K+m+1 rows.
    """
    _require_all_located(mu, x)
    return _assemble(mu, x, omega, _gaussian_weights(mu, sigma_star2))


def build_gross_prior(k: int, p_m: float) -> PriorMatrix:
    """
    Flat marker-identity prior for marker-only configurations, (K+1) x K.

    q_jj = p_M, every other row (including row 0) gets (1 - p_M)/K. Rows 0..K without j
    are K rows, so each column already totals 1; the normalisation only guards rounding.
    """
    if not 0 < p_m < 1:
        raise PriorConstructionError("p_M must lie strictly between 0 and 1")
    if k < 1:
        raise PriorConstructionError("at least one marker is required")
    q = np.full((k + 1, k), (1.0 - p_m) / k)
    q[np.arange(1, k + 1), np.arange(k)] = p_m
    q /= q.sum(axis=0, keepdims=True)
    return PriorMatrix(q=q)


def build_missing_prior(
    mu: Configuration,
    x: Configuration,
    omega: Region,
    sigma_star2: float,
    variant: PriorVariant = PriorVariant.GAUSSIAN_DISTANCE,
    cluster_radius: Optional[float] = None,
) -> PriorMatrix:
    """
    Prior when markers may be missing from either configuration.

    Case (a) labels get a marker column. A mu-only marker is just another candidate row, an
    x-only marker gets the uniform 1/(K_mu+m+1) column, and labels absent from both add
    nothing.
    """
    cases = marker_cases(mu, x)
    k_total = len(cases)
    mu_full, x_full = mu.padded(k_total), x.padded(k_total)
    counts = {case: sum(1 for c in cases.values() if c is case) for case in MissingCase}
    logger.debug(
        "Marker cases: "
        + ", ".join(f"{case.value}={count}" for case, count in counts.items())
    )

    if variant is PriorVariant.CLUSTER_ADAPTIVE:
        if cluster_radius is None:
            raise PriorConstructionError("cluster prior needs a radius")
        weights = _cluster_weights(mu_full, cluster_radius)
    elif variant is PriorVariant.GAUSSIAN_DISTANCE:
        weights = _gaussian_weights(mu_full, sigma_star2)
    else:
        raise PriorConstructionError(f"prior variant {variant.value} needs marker-only input")
    return _assemble(mu_full, x_full, omega, weights)


def build_cluster_prior(
    mu: Configuration, x: Configuration, omega: Region, epsilon: float
) -> PriorMatrix:
    """
    Cluster-adaptive prior: a marker column spreads its mass evenly over the C_j mu points
    within epsilon of the allocated marker and gives zero to the rest.
    """
    _require_all_located(mu, x)
    return _assemble(mu, x, omega, _cluster_weights(mu, epsilon))


def build_prior(
    model: MarkerIdentityModel,
    mu: Configuration,
    x: Configuration,
    omega: Region,
) -> PriorMatrix:
    """Prior for the main alignment as selected by the run configuration."""
    sigma_star2 = model.sigma_star2
    if model.variant is PriorVariant.GAUSSIAN_DISTANCE and sigma_star2 is None:
        raise PriorConstructionError("gaussian distance prior needs sigma_star2")
    if model.variant is PriorVariant.GROSS_FLAT:
        if mu.n_nonmarkers or x.n_nonmarkers:
            raise PriorConstructionError("the flat marker prior takes marker-only input")
        return build_gross_prior(mu.n_slots, model.p_m)
    return build_missing_prior(
        mu,
        x,
        omega,
        sigma_star2 if sigma_star2 is not None else 1.0,
        variant=model.variant,
        cluster_radius=model.cluster_radius,
    )
