"""
Affine group action, conditional error densities and distance summaries.
"""
import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from ..exceptions import EmptyInputError, InvalidRegionError
from ..models.configuration import Configuration, Region
from ..models.transform import AffineTransform

logger = logging.getLogger(__name__)

Point = Sequence[float]


def apply_transform(t: AffineTransform, c: Configuration) -> Configuration:
    """Map every point of c by p -> A p + b; marker slots are kept."""
    t.require_nonsingular()
    return c.with_points(t.apply(c.points))


def match_density(
    x_j: Point,
    i: int,
    transformed_mu: Optional[Point],
    sigma2: float,
    omega: Region,
) -> float:
    """
    p(x_j | M_ij = 1).

    Args:
        x_j: observed point
        i: row index; 0 is the background row
        transformed_mu: A mu_i + b for i >= 1 (ignored for i = 0)
        sigma2: isotropic error variance
        omega: background region

    Returns:
        Gaussian density for i >= 1, 1/|Omega| for i = 0
    """
    if i == 0:
        return 1.0 / omega.area
    if transformed_mu is None:
        raise ValueError("a matched row needs its transformed mu point")
    return math.exp(log_gaussian_density(np.asarray(x_j), np.asarray(transformed_mu), sigma2))


def log_gaussian_density(x: np.ndarray, centre: np.ndarray, sigma2: float) -> float:
    d = x.shape[-1]
    residual2 = float(np.sum((x - centre) ** 2))
    return -0.5 * d * math.log(2 * math.pi * sigma2) - residual2 / (2 * sigma2)


def log_density_matrix(
    x: np.ndarray, transformed_mu: np.ndarray, sigma2: float, omega: Region
) -> np.ndarray:
    """
    log p(x_j | M_ij = 1) for all j, i as an (N_x, N_mu + 1) array.

    Column 0 is the background row, column i is transformed mu point i-1.
    """
    d = x.shape[1]
    diff = x[:, None, :] - transformed_mu[None, :, :]
    residual2 = np.einsum("jik,jik->ji", diff, diff)
    log_gauss = -0.5 * d * math.log(2 * math.pi * sigma2) - residual2 / (2 * sigma2)
    log_background = np.full((x.shape[0], 1), -math.log(omega.area))
    return np.hstack([log_background, log_gauss])


def rmsd(pairs: Sequence[Tuple[Point, Point]]) -> float:
    """Root mean squared Euclidean distance over point pairs."""
    if len(pairs) == 0:
        raise EmptyInputError("rmsd needs at least one pair")
    first = np.array([p for p, _ in pairs], dtype=np.float64)
    second = np.array([q for _, q in pairs], dtype=np.float64)
    return float(np.sqrt(np.mean(np.sum((first - second) ** 2, axis=1))))


def rmsd_arrays(first: np.ndarray, second: np.ndarray) -> float:
    """rmsd over row-aligned arrays."""
    return rmsd(list(zip(first, second)))


def bounding_region(points: np.ndarray, margin: float) -> Region:
    """Axis-aligned bounding box of the points grown by `margin` on every side."""
    if points.shape[0] == 0:
        raise InvalidRegionError("cannot bound an empty configuration")
    lower = points.min(axis=0) - margin
    upper = points.max(axis=0) + margin
    if not np.all(upper > lower):
        raise InvalidRegionError("background region has zero extent; use a positive margin")
    region = Region(lower=lower, upper=upper)
    logger.debug(f"Background region area {region.area:.1f} (margin {margin:.3f})")
    return region
