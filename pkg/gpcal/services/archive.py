"""
Posterior archive: thinned post-burn-in samples with provenance.

One row per retained sample with columns
    chain, population, cycle, <parameters...>, psi_<stream>..., sigma2_<stream>..., logp
(ψ and σ² columns only for the GP scenario), stored as archive.csv next to an
archive.json metadata document.

Version: 1.0.0
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from gpcal.core.errors import DataFileError
from gpcal.core.persistence import read_document, read_table, write_document, write_table
from gpcal.schemas.results import ArchiveMetadata

logger = logging.getLogger(__name__)

ARCHIVE_FILE = "archive.csv"
METADATA_FILE = "archive.json"
ID_COLUMNS = ("chain", "population", "cycle")


def psi_column(stream: str) -> str:
    return f"psi_{stream}"


def sigma2_column(stream: str) -> str:
    return f"sigma2_{stream}"


def archive_columns(metadata: ArchiveMetadata) -> list[str]:
    columns = [*ID_COLUMNS, *metadata.parameter_names]
    if metadata.scenario == "gp":
        columns += [psi_column(s) for s in metadata.stream_names]
        columns += [sigma2_column(s) for s in metadata.stream_names]
    return [*columns, "logp"]


def _normalize(frame: pd.DataFrame, columns: Sequence[str]) -> pd.DataFrame:
    frame = frame.loc[:, list(columns)].copy()
    for column in columns:
        frame[column] = frame[column].astype("int64" if column in ID_COLUMNS else "float64")
    return frame.reset_index(drop=True)


@dataclass(frozen=True)
class PosteriorArchive:
    """
    Retained samples of an inversion or a Laplace approximation.

    Attributes:
        samples: One row per retained sample, ordered by cycle then chain
        metadata: Scenario, names, seed, config fingerprint and run settings
    """

    samples: pd.DataFrame
    metadata: ArchiveMetadata

    @classmethod
    def from_frame(cls, samples: pd.DataFrame, metadata: ArchiveMetadata) -> "PosteriorArchive":
        """Build an archive, normalizing column order and dtypes."""
        columns = archive_columns(metadata)
        missing = [c for c in columns if c not in samples.columns]
        if missing:
            raise DataFileError("Archive is missing columns", field=missing[0])
        return cls(_normalize(samples, columns), metadata)

    @property
    def scenario(self) -> str:
        return self.metadata.scenario

    @property
    def parameter_names(self) -> list[str]:
        return list(self.metadata.parameter_names)

    @property
    def stream_names(self) -> list[str]:
        return list(self.metadata.stream_names)

    @property
    def is_empty(self) -> bool:
        return len(self.samples) == 0

    def __len__(self) -> int:
        return len(self.samples)

    def theta(self) -> np.ndarray:
        return self.samples[self.parameter_names].to_numpy(dtype=float)

    def psi(self, stream: str) -> np.ndarray:
        return self.samples[psi_column(stream)].to_numpy(dtype=float)

    def sigma2(self, stream: str) -> np.ndarray:
        return self.samples[sigma2_column(stream)].to_numpy(dtype=float)

    def scalar_columns(self) -> list[str]:
        """Sampled scalar quantities: parameters, then ψ and σ² per stream."""
        return [c for c in archive_columns(self.metadata) if c not in ID_COLUMNS and c != "logp"]

    def chain_ids(self) -> list[int]:
        return sorted(int(c) for c in self.samples["chain"].unique())

    def chain_matrix(self, column: str, chains: Sequence[int] | None = None) -> np.ndarray:
        """
        Samples of one column arranged as (chains, samples per chain), in cycle order.

        Raises:
            DataFileError: If the chains hold different sample counts
        """
        chains = self.chain_ids() if chains is None else list(chains)
        rows = []
        for chain in chains:
            part = self.samples[self.samples["chain"] == chain].sort_values("cycle", kind="stable")
            rows.append(part[column].to_numpy(dtype=float))
        if len({r.size for r in rows}) > 1:
            raise DataFileError("Chains hold different numbers of samples", column=column)
        return np.vstack(rows) if rows else np.zeros((0, 0))

    def population_chains(self) -> dict[int, list[int]]:
        pairs = self.samples[["population", "chain"]].drop_duplicates()
        result: dict[int, list[int]] = {}
        for population, chain in sorted(pairs.itertuples(index=False, name=None)):
            result.setdefault(int(population), []).append(int(chain))
        return result

    def save(self, out_dir: str | Path) -> Path:
        """Write archive.csv and archive.json; returns the table path."""
        out_dir = Path(out_dir)
        path = write_table(self.samples, out_dir / ARCHIVE_FILE)
        write_document(self.metadata, out_dir / METADATA_FILE)
        logger.info(f"Saved archive with {len(self)} samples to {path}")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "PosteriorArchive":
        """
        Read an archive from its table path or its directory.

        Raises:
            DataFileError: On missing files, malformed rows or inconsistent chains
        """
        path = Path(path)
        table = path / ARCHIVE_FILE if path.is_dir() else path
        metadata = read_document(ArchiveMetadata, table.with_name(METADATA_FILE))
        columns = archive_columns(metadata)
        numeric = [c for c in columns if c != "logp"]
        frame = read_table(table, columns, numeric)
        # logp may legitimately be -inf for a chain that never left its start
        frame["logp"] = pd.to_numeric(frame["logp"], errors="coerce")
        if frame["logp"].isna().any():
            line = int(np.flatnonzero(frame["logp"].isna().to_numpy())[0]) + 2
            raise DataFileError("Non-numeric value", path=str(table), line=line, field="logp")
        archive = cls.from_frame(frame, metadata)
        counts = archive.samples.groupby("chain").size()
        if counts.nunique() > 1:
            raise DataFileError("Chains hold different numbers of samples", path=str(table))
        return archive
