"""
Test configuration
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path for imports
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from markermatch.config import Settings  # noqa: E402
from markermatch.models import AffineTransform, RunConfig  # noqa: E402
from markermatch.services.synthetic import generate_synthetic  # noqa: E402


@pytest.fixture
def warp():
    """A mild shear, scale and shift like two gels run on different days."""
    return AffineTransform(A=np.array([[1.02, -0.05], [0.03, 0.98]]), b=np.array([5.0, -3.0]))


@pytest.fixture
def make_pair(warp):
    """Factory for seeded synthetic pairs; keyword arguments go to generate_synthetic."""

    def _make(seed=0, n_points=40, n_markers=12, min_separation=15.0, **kwargs):
        kwargs.setdefault("warp", warp)
        config = RunConfig(seed=seed, n_markers=n_markers)
        return generate_synthetic(
            config, n_points=n_points, min_separation=min_separation, **kwargs
        )

    return _make


@pytest.fixture
def run_config():
    """Defaults without reading config/default.yaml."""
    return RunConfig()


@pytest.fixture
def settings():
    """Process settings without .env or environment overrides."""
    return Settings(_env_file=None)
