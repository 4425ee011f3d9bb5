"""
Spot file reading and writing, plus atomic report output.

Spot files are tab-separated with a header line; required columns are spot_id, x and y,
an optional marker column holds 1-based marker numbers (empty for nonmarkers). Any other
column is carried through as per-spot metadata.
"""
import io
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Union

import pandas as pd
from pydantic import BaseModel, ValidationError

from ..exceptions import SpotFileParseError
from ..models.configuration import Configuration
from ..models.matching import IterationRecord
from ..models.spots import SpotFile, SpotRecord

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("spot_id", "x", "y")
MARKER_COLUMN = "marker"
CANONICAL_COLUMNS = REQUIRED_COLUMNS + (MARKER_COLUMN,)

PathLike = Union[str, Path]


def parse_column_mapping(text: Optional[str]) -> Dict[str, str]:
    """
    Parse "spot_id=ID,x=X,y=Y,marker=Marker" into {canonical: source header}.
    """
    if not text:
        return {}
    mapping: Dict[str, str] = {}
    for item in text.split(","):
        if "=" not in item:
            raise SpotFileParseError(f"column mapping entry '{item}' is not name=header")
        name, header = (part.strip() for part in item.split("=", 1))
        if name not in CANONICAL_COLUMNS:
            raise SpotFileParseError(
                f"unknown column '{name}' in mapping; expected one of {list(CANONICAL_COLUMNS)}"
            )
        mapping[name] = header
    return mapping


def _read_frame(path: Path) -> pd.DataFrame:
    if not path.exists():
        raise SpotFileParseError(f"spot file not found: {path}")
    try:
        frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise SpotFileParseError("spot file is empty; a header line is required", line=1)
    except pd.errors.ParserError as e:
        raise SpotFileParseError(f"malformed spot file: {e}")
    # short rows leave NaN even with keep_default_na=False
    return frame.fillna("")


def _parse_coordinate(value: str, column: str, line: int) -> float:
    try:
        number = float(value)
    except ValueError:
        raise SpotFileParseError(f"{column} = '{value}' is not a number", line=line)
    if not math.isfinite(number):
        raise SpotFileParseError(f"{column} = '{value}' is not finite", line=line)
    return number


def _parse_marker(value: str, line: int) -> Optional[int]:
    value = value.strip()
    if not value:
        return None
    try:
        marker = int(value)
    except ValueError:
        raise SpotFileParseError(f"marker = '{value}' is not an integer", line=line)
    if marker < 1:
        raise SpotFileParseError(f"marker = {marker} must be at least 1", line=line)
    return marker


def read_spot_file(path: PathLike, columns: Optional[Mapping[str, str]] = None) -> SpotFile:
    """
    Read a spot file, keeping metadata columns.

    Args:
        path: tab-separated file with a header line
        columns: canonical name -> header in the file, for exports with other headers

    Raises:
        SpotFileParseError: with the 1-based file line of the first offending row
    """
    path = Path(path)
    frame = _read_frame(path)
    rename = {source: name for name, source in (columns or {}).items()}
    frame = frame.rename(columns=rename)

    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise SpotFileParseError(f"header lacks required columns {missing}", line=1)
    extra_columns = [c for c in frame.columns if c not in CANONICAL_COLUMNS]
    has_marker = MARKER_COLUMN in frame.columns

    spots: List[SpotRecord] = []
    seen_ids: Dict[str, int] = {}
    seen_markers: Dict[int, int] = {}
    for row_number, row in enumerate(frame.itertuples(index=False, name=None)):
        values = dict(zip(frame.columns, row))
        line = row_number + 2
        spot_id = values["spot_id"].strip()
        if not spot_id:
            raise SpotFileParseError("spot_id is empty", line=line)
        if spot_id in seen_ids:
            raise SpotFileParseError(
                f"duplicate spot_id '{spot_id}' (first on line {seen_ids[spot_id]})", line=line
            )
        seen_ids[spot_id] = line

        marker = _parse_marker(values[MARKER_COLUMN], line) if has_marker else None
        if marker is not None:
            if marker in seen_markers:
                raise SpotFileParseError(
                    f"duplicate marker {marker} (first on line {seen_markers[marker]})", line=line
                )
            seen_markers[marker] = line

        spots.append(
            SpotRecord(
                spot_id=spot_id,
                x=_parse_coordinate(values["x"], "x", line),
                y=_parse_coordinate(values["y"], "y", line),
                marker=marker,
                metadata={c: values[c] for c in extra_columns},
            )
        )

    try:
        spot_file = SpotFile(spots=spots, extra_columns=extra_columns)
    except ValidationError as e:
        raise SpotFileParseError(str(e))

    logger.debug(
        f"Read {len(spots)} spots ({len(seen_markers)} markers) from {path.name}"
    )
    return spot_file


def parse_spot_file(
    path: PathLike,
    columns: Optional[Mapping[str, str]] = None,
    n_markers: Optional[int] = None,
) -> Configuration:
    """Configuration with marker k in slot k-1 and unlisted markers absent."""
    return read_spot_file(path, columns).to_configuration(n_markers)


def spot_file_from_configuration(config: Configuration) -> SpotFile:
    """Spot file for a configuration; nonmarker ids default to point indices."""
    marker_of = {
        slot: label
        for slot, label in zip(config.marker_slots, config.labels())
        if slot is not None
    }
    ids = config.ids()
    return SpotFile(
        spots=[
            SpotRecord(spot_id=ids[j], x=float(p[0]), y=float(p[1]), marker=marker_of.get(j))
            for j, p in enumerate(config.points)
        ]
    )


def format_spot_file(spot_file: SpotFile) -> str:
    """Tab-separated text; coordinates use the shortest repr that reads back exactly."""
    header = list(CANONICAL_COLUMNS) + list(spot_file.extra_columns)
    rows = [
        [
            s.spot_id,
            repr(s.x),
            repr(s.y),
            "" if s.marker is None else str(s.marker),
            *(s.metadata.get(c, "") for c in spot_file.extra_columns),
        ]
        for s in spot_file.spots
    ]
    buffer = io.StringIO()
    pd.DataFrame(rows, columns=header).to_csv(buffer, sep="\t", index=False, lineterminator="\n")
    return buffer.getvalue()


def write_spot_file(spot_file: SpotFile, path: PathLike) -> None:
    atomic_write_text(path, format_spot_file(spot_file))


def atomic_write_text(path: PathLike, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise


def write_report(report: BaseModel, path: PathLike) -> None:
    """Pretty-printed JSON, written atomically."""
    atomic_write_text(path, report.model_dump_json(indent=2) + "\n")
    logger.info(f"Wrote {Path(path)}")


def write_trace(trace: Iterable[IterationRecord], path: PathLike) -> None:
    """One JSON object per EM iteration."""
    lines = [record.model_dump_json() for record in trace]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
