"""
markermatch configuration.
Loads process settings from environment variables and run parameters from YAML files.
"""
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigError
from .models.run_config import RunConfig


class Settings(BaseSettings):
    """Process-level settings loaded from environment and .env."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application identity
    app_name: str = Field(default="markermatch", alias="APP_NAME")
    app_version: str = Field(default="1.0.0", alias="APP_VERSION")

    # API configuration
    api_host: str = Field(default="127.0.0.1", alias="API_HOST")
    api_port: int = Field(default=8000, alias="API_PORT")

    # Logging and monitoring
    log_level: str = Field(default="INFO", alias="LOG_LEVEL")
    telemetry_enabled: bool = Field(default=False, alias="FEATURE_TELEMETRY")

    # Run configuration
    default_config_file: Path = Field(
        default=Path("config/default.yaml"), alias="MARKERMATCH_CONFIG"
    )
    report_schema_version: str = Field(default="1.0", alias="REPORT_SCHEMA_VERSION")

    # Numerics
    min_sigma2: float = Field(default=1e-6, gt=0, alias="MIN_SIGMA2")
    tie_break_max_cells: int = Field(default=256, ge=0, alias="TIE_BREAK_MAX_CELLS")


def load_yaml_config(file_path: Path) -> Dict[str, Any]:
    """Load configuration from YAML file."""
    if not file_path.exists():
        return {}

    with open(file_path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


@lru_cache()
def get_settings() -> Settings:
    """Get cached application settings."""
    return Settings()


def load_run_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Build a RunConfig from a YAML file with explicit overrides on top.

    Args:
        path: YAML file; defaults to the MARKERMATCH_CONFIG setting
        overrides: values that win over the file (None values are ignored)

    Returns:
        Validated RunConfig
    """
    if path is None:
        path = get_settings().default_config_file

    try:
        data = load_yaml_config(Path(path))
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}", stage="config")
    run_section = data.get("run", data) if isinstance(data, dict) else None
    if not isinstance(run_section, dict):
        raise ConfigError(f"{path} does not hold a mapping of run parameters", stage="config")
    merged: Dict[str, Any] = dict(run_section)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    return RunConfig(**merged)
