"""
EM estimation of the affine transform with soft correspondences.

E-step: Bayes posteriors p(M_ij = 1 | x_j) under the prior Q and the Gaussian / uniform
error model. M-step: closed-form weighted least squares for A and b, with the unmatched
row left out. sigma^2 stays fixed for the whole run.
"""
import logging
import math
from typing import Callable, List, Optional

import numpy as np
from scipy.special import logsumexp

from ..exceptions import (
    DegenerateGeometryError,
    InsufficientMarkersError,
    ShapeMismatchError,
)
from ..models.configuration import Configuration, ModelParams, Region
from ..models.matching import EMState, InitRegression, IterationRecord, PosteriorMatrix, PriorMatrix
from ..models.transform import AffineTransform
from .geometry import log_density_matrix

logger = logging.getLogger(__name__)
trace_logger = logging.getLogger("markermatch.trace")

RANK_RTOL = 1e-10

IterationCallback = Callable[[IterationRecord], None]


def fit_regression(mu_markers: np.ndarray, x_markers: np.ndarray) -> InitRegression:
    """R = (mu*' mu*)^-1 mu*' x with mu* = (1, mu)."""
    mu_markers = np.asarray(mu_markers, dtype=np.float64)
    x_markers = np.asarray(x_markers, dtype=np.float64)
    if mu_markers.shape != x_markers.shape:
        raise ShapeMismatchError(
            f"marker arrays differ in shape: {mu_markers.shape} vs {x_markers.shape}"
        )
    k, d = mu_markers.shape
    if k < d + 1:
        raise InsufficientMarkersError(f"an affine fit in {d}-D needs {d + 1} markers, got {k}")

    design = np.hstack([np.ones((k, 1)), mu_markers])
    singular_values = np.linalg.svd(design, compute_uv=False)
    if singular_values[-1] <= RANK_RTOL * singular_values[0]:
        raise DegenerateGeometryError("marker positions are collinear; the fit is not unique")

    r, *_ = np.linalg.lstsq(design, x_markers, rcond=None)
    return InitRegression(R=r)


def initial_transform(mu_markers: np.ndarray, x_markers: np.ndarray) -> AffineTransform:
    """Least-squares affine map of the paired mu markers onto the x markers."""
    transform = fit_regression(mu_markers, x_markers).to_transform()
    transform.require_nonsingular()
    return transform


def degrees_of_freedom(k: int, d: int) -> int:
    """nu = dK - d^2 - d."""
    return d * k - d * d - d


def estimate_sigma2(
    mu_markers: np.ndarray, x_markers: np.ndarray, t0: AffineTransform
) -> float:
    """Residual variance of the marker fit with nu = dK - d^2 - d degrees of freedom."""
    mu_markers = np.asarray(mu_markers, dtype=np.float64)
    x_markers = np.asarray(x_markers, dtype=np.float64)
    k, d = mu_markers.shape
    nu = degrees_of_freedom(k, d)
    if nu <= 0:
        raise InsufficientMarkersError(
            f"sigma^2 needs more than {d + 1} markers in {d}-D (got {k}, nu = {nu})"
        )
    residual = x_markers - t0.apply(mu_markers)
    return float(np.sum(residual**2) / nu)


def _log_joint(
    x: Configuration,
    mu: Configuration,
    t: AffineTransform,
    q: PriorMatrix,
    sigma2: float,
    omega: Region,
) -> np.ndarray:
    """log q_ij + log p(x_j | M_ij = 1), shaped (K+n, K+m+1)."""
    if q.q.shape != (mu.n_points + 1, x.n_points):
        raise ShapeMismatchError(
            f"prior is {q.q.shape}, expected {(mu.n_points + 1, x.n_points)}"
        )
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    log_density = log_density_matrix(x.points, t.apply(mu.points), sigma2, omega)
    return log_density + q.log_q().T


def _posterior_from_log_joint(log_joint: np.ndarray) -> np.ndarray:
    """Row-normalise in log space; a row with no finite entry goes to the unmatched row."""
    log_marginal = logsumexp(log_joint, axis=1, keepdims=True)
    empty = ~np.isfinite(log_marginal[:, 0])
    with np.errstate(invalid="ignore"):
        p = np.exp(log_joint - log_marginal)
    if np.any(empty):
        rows = np.flatnonzero(empty).tolist()
        logger.warning(
            f"No candidate has positive prior mass for x points {rows}; marked unmatched"
        )
        p[empty] = 0.0
        p[empty, 0] = 1.0
    # exact renormalisation removes exp rounding drift
    p /= p.sum(axis=1, keepdims=True)
    return p


def e_step(
    x: Configuration,
    mu: Configuration,
    t: AffineTransform,
    q: PriorMatrix,
    sigma2: float,
    omega: Region,
) -> PosteriorMatrix:
    """p[j, i] = q_ij p(x_j | M_ij=1) / sum_i' q_i'j p(x_j | M_i'j=1)."""
    return PosteriorMatrix(p=_posterior_from_log_joint(_log_joint(x, mu, t, q, sigma2, omega)))


def m_step(x: Configuration, mu: Configuration, p: PosteriorMatrix) -> AffineTransform:
    """
    Minimise sum_{i>=1, j} p_ji ||x_j - A mu_i - b||^2.

    With W = sum p_ji, x_bar = sum p_ji x_j / W and mu_bar = sum p_ji mu_i / W:
    A = [sum p_ji (x_j - x_bar)(mu_i - mu_bar)'] [sum p_ji (mu_i - mu_bar)(mu_i - mu_bar)']^-1
    and b = x_bar - A mu_bar.
    """
    if p.shape != (x.n_points, mu.n_points + 1):
        raise ShapeMismatchError(
            f"posterior is {p.shape}, expected {(x.n_points, mu.n_points + 1)}"
        )
    weights = p.p[:, 1:]
    total = float(weights.sum())
    if total <= 0:
        raise DegenerateGeometryError("every x point is unmatched; nothing to fit")

    x_weight = weights.sum(axis=1)
    mu_weight = weights.sum(axis=0)
    x_bar = x_weight @ x.points / total
    mu_bar = mu_weight @ mu.points / total
    x_centred = x.points - x_bar
    mu_centred = mu.points - mu_bar

    cross = x_centred.T @ weights @ mu_centred
    scatter = (mu_centred * mu_weight[:, None]).T @ mu_centred
    if np.linalg.cond(scatter) > 1.0 / RANK_RTOL:
        raise DegenerateGeometryError("weighted mu scatter is singular; A is not identifiable")

    a = np.linalg.solve(scatter.T, cross.T).T
    b = x_bar - a @ mu_bar
    return AffineTransform(A=a, b=b)


def converged(p_prev: PosteriorMatrix, p_next: PosteriorMatrix, l: float) -> bool:
    """Mean squared change over all (K+m+1)(K+n) cells is at most 10^-l."""
    if p_prev.shape != p_next.shape:
        raise ShapeMismatchError(f"posterior shapes differ: {p_prev.shape} vs {p_next.shape}")
    return mean_square_change(p_prev, p_next) <= 10.0 ** (-l)


def mean_square_change(p_prev: PosteriorMatrix, p_next: PosteriorMatrix) -> float:
    if p_prev.p.size == 0:
        return 0.0
    return float(np.mean((p_next.p - p_prev.p) ** 2))


def observed_loglik(
    x: Configuration,
    mu: Configuration,
    t: AffineTransform,
    q: PriorMatrix,
    sigma2: float,
    omega: Region,
) -> float:
    """sum_j log sum_i q_ij p(x_j | M_ij = 1); -inf when some x_j has no support."""
    log_marginal = logsumexp(_log_joint(x, mu, t, q, sigma2, omega), axis=1)
    return float(np.sum(log_marginal))


def run_em(
    x: Configuration,
    mu: Configuration,
    q: PriorMatrix,
    params: ModelParams,
    t0: AffineTransform,
    sigma2: float,
    omega: Region,
    callback: Optional[IterationCallback] = None,
) -> EMState:
    """
    Alternate E- and M-steps from t0 until the posteriors settle or the iteration cap.

    Non-convergence is reported through EMState.converged, not raised.
    """
    t = t0
    posterior = e_step(x, mu, t, q, sigma2, omega)
    trace: List[IterationRecord] = []
    is_converged = False
    iteration = 0

    while iteration < params.max_iterations:
        t = m_step(x, mu, posterior)
        iteration += 1
        next_posterior = e_step(x, mu, t, q, sigma2, omega)
        delta = mean_square_change(posterior, next_posterior)
        loglik = observed_loglik(x, mu, t, q, sigma2, omega)

        record = IterationRecord(
            iteration=iteration, loglik=loglik, delta=delta, A=t.A.tolist(), b=t.b.tolist()
        )
        trace.append(record)
        if trace_logger.isEnabledFor(logging.DEBUG):
            trace_logger.debug(record.model_dump_json())
        if callback is not None:
            callback(record)

        posterior = next_posterior
        if delta <= 10.0 ** (-params.convergence_exponent):
            is_converged = True
            break

    if not is_converged:
        logger.warning(
            f"EM stopped at the iteration cap ({params.max_iterations}) without converging"
        )

    final_loglik = trace[-1].loglik if trace else observed_loglik(x, mu, t, q, sigma2, omega)
    if not math.isfinite(final_loglik):
        logger.warning("Observed log-likelihood is not finite; check the prior for empty columns")

    logger.info(
        f"EM finished after {iteration} iterations (converged={is_converged}, "
        f"loglik={final_loglik:.4f})"
    )
    return EMState(
        transform=t,
        posteriors=posterior,
        iteration=iteration,
        observed_loglik=final_loglik,
        converged=is_converged,
        trace=tuple(trace),
    )
