"""
Tests for settings and run configuration loading
"""
from pathlib import Path

import pytest
import yaml
from pydantic import ValidationError

from markermatch.config import Settings, load_run_config, load_yaml_config
from markermatch.exceptions import ConfigError
from markermatch.models import MatchingMode, PriorVariant, QCScale, RunConfig


def _yaml(tmp_path, data, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def test_defaults_without_file(tmp_path):
    """Test a missing file gives the built-in defaults"""
    assert load_yaml_config(tmp_path / "absent.yaml") == {}
    assert load_run_config(tmp_path / "absent.yaml") == RunConfig()


def test_run_section(tmp_path):
    """Test values under the run key are applied"""
    path = _yaml(tmp_path, {"run": {"prior": "cluster_adaptive", "cluster_radius": 8.0}})
    config = load_run_config(path)
    assert config.prior is PriorVariant.CLUSTER_ADAPTIVE
    assert config.cluster_radius == 8.0


def test_flat_file_without_section(tmp_path):
    """Test a file holding run parameters at top level"""
    config = load_run_config(_yaml(tmp_path, {"matching": "soft"}))
    assert config.matching is MatchingMode.SOFT


def test_overrides_win_and_none_is_ignored(tmp_path):
    """Test explicit overrides take precedence over the file"""
    path = _yaml(tmp_path, {"run": {"p_m": 0.95, "max_iterations": 100}})
    config = load_run_config(path, {"p_m": 0.9, "max_iterations": None})
    assert config.p_m == 0.9
    assert config.max_iterations == 100


@pytest.mark.parametrize(
    "values",
    [
        {"p_m": 1.0},
        {"sigma2": 0.0},
        {"convergence_exponent": 0.5},
        {"prior": "nearest"},
        {"matching": "greedy"},
        {"qc_scale": "mad"},
    ],
)
def test_invalid_values_rejected(tmp_path, values):
    """Test out-of-range parameters fail validation"""
    with pytest.raises(ValidationError):
        load_run_config(_yaml(tmp_path, {"run": values}))


def test_malformed_file_is_config_error(tmp_path):
    """Test unparseable YAML and non-mapping files fail as configuration errors"""
    broken = tmp_path / "broken.yaml"
    broken.write_text("run: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(broken)
    with pytest.raises(ConfigError) as exc_info:
        load_run_config(_yaml(tmp_path, ["p_m", 0.9]))
    assert exc_info.value.exit_code == 2


def test_qc_scale_defaults_to_reweighted(tmp_path):
    """Test screening uses the reweighted scale unless told otherwise"""
    assert RunConfig().qc_scale is QCScale.REWEIGHTED
    config = load_run_config(_yaml(tmp_path, {"run": {"qc_scale": "all_markers"}}))
    assert config.qc_scale is QCScale.ALL_MARKERS


def test_shipped_defaults_match_model():
    """Test config/default.yaml agrees with the RunConfig defaults"""
    path = Path(__file__).parent.parent / "config" / "default.yaml"
    assert load_run_config(path) == RunConfig()


def test_settings_from_environment(monkeypatch):
    """Test process settings read their environment aliases"""
    monkeypatch.setenv("MIN_SIGMA2", "0.01")
    monkeypatch.setenv("TIE_BREAK_MAX_CELLS", "16")
    monkeypatch.setenv("LOG_LEVEL", "DEBUG")
    settings = Settings(_env_file=None)
    assert settings.min_sigma2 == 0.01
    assert settings.tie_break_max_cells == 16
    assert settings.log_level == "DEBUG"
