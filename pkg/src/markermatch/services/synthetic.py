"""
Synthetic spot file pairs with known transform and correspondences.
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..models.report import MissingCase
from ..models.run_config import RunConfig
from ..models.spots import SpotFile, SpotRecord, SyntheticPair, SyntheticTruth
from ..models.transform import AffineTransform

logger = logging.getLogger(__name__)

DEFAULT_MARKERS = 12
DEFAULT_EXTENT = (280.0, 220.0)
MAX_DRAWS = 1000


def _check_rate(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


def _scatter(
    rng: np.random.Generator, n: int, extent: Tuple[float, float], min_separation: float
) -> np.ndarray:
    """Uniform points on [0, w] x [0, h], redrawn while closer than min_separation to another."""
    size = np.asarray(extent, dtype=np.float64)
    points = np.empty((n, 2))
    for k in range(n):
        candidate = rng.uniform(0.0, 1.0, 2) * size
        for _ in range(MAX_DRAWS):
            if k == 0 or min_separation <= 0:
                break
            if np.min(np.sum((points[:k] - candidate) ** 2, axis=1)) >= min_separation**2:
                break
            candidate = rng.uniform(0.0, 1.0, 2) * size
        else:
            logger.warning(f"Could not keep {min_separation} px separation for point {k}")
        points[k] = candidate
    return points


def generate_synthetic(
    config: RunConfig,
    n_points: int,
    warp: AffineTransform,
    noise_sd: float = 0.0,
    spurious_rate: float = 0.0,
    missing_rate: float = 0.0,
    corrupt_markers: int = 0,
    corruption_distance: Optional[float] = None,
    dropout_rate: float = 0.0,
    extent: Tuple[float, float] = DEFAULT_EXTENT,
    min_separation: float = 0.0,
) -> SyntheticPair:
    """
    Draw mu spots, map them through `warp` with Gaussian noise to get x.

    Markers come first in both files (ids m0000..., x0000...). x nonmarkers are shuffled.
    Reproducible from config.seed.

    Args:
        config: seed and marker count (n_markers, default 12)
        n_points: spots in mu, markers included
        warp: true transform mu -> x
        noise_sd: per-coordinate noise (px)
        spurious_rate: extra unmatched x spots, as a fraction of n_points
        missing_rate: chance that a marker label is lost; the loss is split evenly between
            mu only, x only and both
        corrupt_markers: markers whose x position is displaced by corruption_distance
        corruption_distance: displacement (px); default 20 noise sd (20 px without noise)
        dropout_rate: chance that a mu nonmarker has no spot in x
        min_separation: minimum distance between mu spots (px)

    Returns:
        SyntheticPair with the generator ledger as ground truth
    """
    for name, rate in (
        ("spurious_rate", spurious_rate),
        ("missing_rate", missing_rate),
        ("dropout_rate", dropout_rate),
    ):
        _check_rate(name, rate)
    k_total = config.n_markers or DEFAULT_MARKERS
    if n_points < k_total:
        raise ValueError(f"n_points ({n_points}) must include the {k_total} markers")
    if warp.is_singular():
        raise ValueError("warp must be nonsingular")

    rng = np.random.default_rng(config.seed)
    mu_points = _scatter(rng, n_points, extent, min_separation)
    x_points = warp.apply(mu_points) + rng.normal(0.0, noise_sd, mu_points.shape)
    mu_ids = [f"m{i:04d}" for i in range(n_points)]

    # marker label k sits on mu point k-1
    cases: Dict[int, MissingCase] = {}
    lost = (MissingCase.MU_ONLY, MissingCase.X_ONLY, MissingCase.NEITHER)
    for label in range(1, k_total + 1):
        if rng.uniform() < missing_rate:
            cases[label] = lost[int(rng.integers(0, 3))]
        else:
            cases[label] = MissingCase.BOTH

    corrupted: List[int] = []
    if corrupt_markers:
        candidates = [label for label, case in cases.items() if case is MissingCase.BOTH]
        if corrupt_markers > len(candidates):
            raise ValueError(
                f"cannot corrupt {corrupt_markers} markers; only {len(candidates)} are located"
            )
        corrupted = sorted(int(c) for c in rng.choice(candidates, corrupt_markers, replace=False))
        distance = corruption_distance or 20.0 * (noise_sd if noise_sd > 0 else 1.0)
        for label in corrupted:
            angle = rng.uniform(0.0, 2 * np.pi)
            x_points[label - 1] += distance * np.array([np.cos(angle), np.sin(angle)])

    # x spots: markers in label order, then the surviving nonmarkers and spurious spots shuffled
    nonmarkers = [i for i in range(k_total, n_points) if rng.uniform() >= dropout_rate]
    n_spurious = int(round(spurious_rate * n_points))
    lower = x_points.min(axis=0)
    upper = x_points.max(axis=0)
    spurious_points = rng.uniform(lower, upper, (n_spurious, 2))

    tail: List[Tuple[Optional[int], np.ndarray]] = [(i, x_points[i]) for i in nonmarkers]
    tail += [(None, p) for p in spurious_points]
    order = rng.permutation(len(tail))
    x_entries: List[Tuple[Optional[int], np.ndarray]] = [(k, x_points[k]) for k in range(k_total)]
    x_entries += [tail[o] for o in order]

    x_records: List[SpotRecord] = []
    correspondence: Dict[str, Optional[str]] = {}
    spurious_ids: List[str] = []
    for j, (source, p) in enumerate(x_entries):
        spot_id = f"x{j:04d}"
        marker = None
        if source is not None and source < k_total:
            label = source + 1
            if cases[label] in (MissingCase.BOTH, MissingCase.X_ONLY):
                marker = label
        if source is None:
            spurious_ids.append(spot_id)
            correspondence[spot_id] = None
        elif source < k_total and source + 1 in corrupted:
            correspondence[spot_id] = None
        else:
            correspondence[spot_id] = mu_ids[source]
        x_records.append(SpotRecord(spot_id=spot_id, x=float(p[0]), y=float(p[1]), marker=marker))

    mu_records = []
    for i, p in enumerate(mu_points):
        marker = None
        if i < k_total and cases[i + 1] in (MissingCase.BOTH, MissingCase.MU_ONLY):
            marker = i + 1
        mu_records.append(
            SpotRecord(spot_id=mu_ids[i], x=float(p[0]), y=float(p[1]), marker=marker)
        )

    truth = SyntheticTruth(
        A=warp.A.tolist(),
        b=warp.b.tolist(),
        correspondence=correspondence,
        marker_cases={label: case.value for label, case in cases.items()},
        corrupted_markers=corrupted,
        spurious_ids=spurious_ids,
    )
    logger.debug(
        f"Generated {n_points} mu spots and {len(x_records)} x spots "
        f"({n_spurious} spurious, {len(corrupted)} corrupted markers)"
    )
    return SyntheticPair(mu=SpotFile(spots=mu_records), x=SpotFile(spots=x_records), truth=truth)
