"""
Columnar text and JSON persistence.

Responsibilities:
- Comma-separated tables with a one-line header, floats at 17 significant digits
- Parse tables back with round-trip float precision and report the offending
  file, line and column on malformed content
- Stream and truth files of a data directory
- JSON documents through pydantic models

Layout of a data directory:
    stream_<name>.csv   location, observation, sigma2_eps
    truth_<name>.csv    location, truth
    truth.json          generating parameters
    model.json          fixed covariate summaries
    design.csv          design matrix of the linear-Gaussian model

Version: 1.0.0
"""

import logging
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from gpcal.core.errors import DataFileError, InputError
from gpcal.core.streams import ObservationStream

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
STREAM_COLUMNS = ("location", "observation", "sigma2_eps")

DocumentT = TypeVar("DocumentT", bound=BaseModel)


def write_table(frame: pd.DataFrame, path: str | Path) -> Path:
    """Write a table as CSV with 17 significant digits and LF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_table(
    path: str | Path,
    required: Sequence[str] = (),
    numeric: Sequence[str] | None = None,
) -> pd.DataFrame:
    """
    Read a CSV table written by write_table.

    Args:
        path: Table file
        required: Columns that must be present
        numeric: Columns that must parse as finite numbers (default: required)

    Raises:
        DataFileError: With path, line and field of the first problem
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError as e:
        raise DataFileError("File not found", path=str(path)) from e
    except pd.errors.EmptyDataError as e:
        raise DataFileError("File is empty", path=str(path), line=1) from e
    except pd.errors.ParserError as e:
        raise DataFileError(f"Malformed table: {e}", path=str(path)) from e
    except (OSError, UnicodeDecodeError) as e:
        raise DataFileError(f"Cannot read table: {e}", path=str(path)) from e

    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise DataFileError("Missing column", path=str(path), line=1, field=missing[0])

    _coerce_numeric(frame, required if numeric is None else numeric, path)
    return frame


def _coerce_numeric(frame: pd.DataFrame, columns: Sequence[str], path: Path) -> None:
    for column in columns:
        values = pd.to_numeric(frame[column], errors="coerce")
        bad = np.flatnonzero(~np.isfinite(values.to_numpy(dtype=float)))
        if bad.size:
            # header is line 1
            raise DataFileError(
                "Non-numeric or non-finite value",
                path=str(path),
                line=int(bad[0]) + 2,
                field=column,
            )
        frame[column] = values.astype(float)


def stream_path(data_dir: str | Path, name: str) -> Path:
    return Path(data_dir) / f"stream_{name}.csv"


def truth_path(data_dir: str | Path, name: str) -> Path:
    return Path(data_dir) / f"truth_{name}.csv"


def stream_frame(stream: ObservationStream) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "location": stream.locations,
            "observation": stream.observations,
            "sigma2_eps": stream.sigma2_eps,
        }
    )


def write_stream(stream: ObservationStream, data_dir: str | Path) -> Path:
    return write_table(stream_frame(stream), stream_path(data_dir, stream.name))


def read_stream(path: str | Path, name: str) -> ObservationStream:
    """
    Parse one stream file.

    Raises:
        DataFileError: On malformed content or invalid values
    """
    frame = read_table(path, STREAM_COLUMNS)
    try:
        return ObservationStream.create(
            name,
            frame["location"].to_numpy(),
            frame["observation"].to_numpy(),
            frame["sigma2_eps"].to_numpy(),
        )
    except InputError as e:
        raise DataFileError(e.message, path=str(path), **e.details) from e


def discover_streams(
    data_dir: str | Path, overrides: Mapping[str, str] | None = None
) -> list[ObservationStream]:
    """
    Load every stream_<name>.csv of a data directory.

    Args:
        data_dir: Directory holding stream files
        overrides: Stream name to file path; relative paths resolve against data_dir

    Returns:
        Streams sorted by name

    Raises:
        DataFileError: If the directory holds no streams or a file is malformed
    """
    data_dir = Path(data_dir)
    paths = {p.name[len("stream_") : -len(".csv")]: p for p in data_dir.glob("stream_*.csv")}
    for name, file in (overrides or {}).items():
        file_path = Path(file)
        paths[name] = file_path if file_path.is_absolute() else data_dir / file_path
    if not paths:
        raise DataFileError("No stream files found", path=str(data_dir))
    streams = [read_stream(paths[name], name) for name in sorted(paths)]
    logger.info(f"Loaded {len(streams)} streams from {data_dir}: " + ", ".join(f"{s.name}(n={s.n})" for s in streams))
    return streams


def write_truth(name: str, locations, truth, data_dir: str | Path) -> Path:
    frame = pd.DataFrame({"location": np.asarray(locations, float), "truth": np.asarray(truth, float)})
    return write_table(frame, truth_path(data_dir, name))


def write_matrix(matrix, path: str | Path, prefix: str = "col") -> Path:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    frame = pd.DataFrame(matrix, columns=[f"{prefix}{j}" for j in range(matrix.shape[1])])
    return write_table(frame, path)


def read_matrix(path: str | Path) -> np.ndarray:
    frame = read_table(path)
    _coerce_numeric(frame, list(frame.columns), Path(path))
    return frame.to_numpy(dtype=float)


def write_document(document: BaseModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.debug(f"Wrote {type(document).__name__} to {path}")
    return path


def read_document(model: type[DocumentT], path: str | Path) -> DocumentT:
    """
    Parse a JSON document into a pydantic model.

    Raises:
        DataFileError: If the file is missing, unreadable or fails validation
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataFileError("Cannot read document", path=str(path)) from e
    try:
        return model.model_validate_json(text)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first.get("loc", ())) or None
        raise DataFileError(f"Invalid document: {first.get('msg')}", path=str(path), field=field) from e
