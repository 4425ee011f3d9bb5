"""
Pydantic models for batch manifests and their results.
"""
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class BatchPair(BaseModel):
    """One alignment in a manifest; relative paths resolve against the manifest directory."""
    name: str
    mu: Path
    x: Path
    report: Optional[Path] = Field(default=None, description="Default: <name>.json")
    overlay: Optional[Path] = None
    config: Dict[str, Any] = Field(default_factory=dict, description="RunConfig overrides")


class BatchManifest(BaseModel):
    """Pairs to align, with shared RunConfig overrides."""
    defaults: Dict[str, Any] = Field(default_factory=dict)
    columns: Dict[str, str] = Field(default_factory=dict, description="Spot file column mapping")
    output_dir: Path = Path(".")
    max_workers: int = Field(default=4, ge=1)
    pairs: List[BatchPair] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_names(self) -> "BatchManifest":
        names = [p.name for p in self.pairs]
        if len(names) != len(set(names)):
            raise ValueError("pair names must be unique")
        return self


class BatchItemResult(BaseModel):
    name: str
    status: str = Field(description="ok or error")
    exit_code: int = 0
    stage: Optional[str] = None
    message: Optional[str] = None
    report: Optional[str] = None
    n_matched: Optional[int] = None


class BatchSummary(BaseModel):
    """Outcome of every pair, in manifest order."""
    results: List[BatchItemResult] = Field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.results if r.status != "ok")

    @property
    def exit_code(self) -> int:
        """Worst exit code across pairs; 0 when all succeeded."""
        return max((r.exit_code for r in self.results), default=0)
