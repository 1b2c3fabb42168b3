"""Pytest configuration file"""
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from gpcal.schemas.results import ArchiveMetadata  # noqa: E402
from gpcal.services.archive import PosteriorArchive, archive_columns  # noqa: E402

FINGERPRINT = "0" * 64


@pytest.fixture
def make_archive():
    """
    Build a PosteriorArchive from per-chain column arrays.

    Usage:
        archive = make_archive({"a": draws}, scenario="ignore")

    Each value is an (m chains, n samples) array; chains are assigned to
    populations in contiguous blocks.
    """

    def _make(columns, *, scenario="ignore", streams=("s",), populations=1, logp=None, **metadata):
        parameter_names = [
            c for c in columns if not c.startswith("psi_") and not c.startswith("sigma2_")
        ]
        first = np.asarray(next(iter(columns.values())), dtype=float)
        m, n = first.shape
        per_population = max(m // populations, 1)
        frame = pd.DataFrame(
            {
                "chain": np.tile(np.arange(m), n),
                "population": np.tile(np.arange(m) // per_population, n),
                "cycle": np.repeat(np.arange(n), m),
            }
        )
        for name, values in columns.items():
            frame[name] = np.asarray(values, dtype=float).T.reshape(-1)
        frame["logp"] = 0.0 if logp is None else np.asarray(logp, dtype=float).T.reshape(-1)
        meta = ArchiveMetadata(
            scenario=scenario,
            parameter_names=parameter_names,
            stream_names=list(streams),
            seed=0,
            config_fingerprint=FINGERPRINT,
            chains=m,
            populations=populations,
            cycles=n,
            burn_in=0,
            thin=1,
            samples_per_chain=n,
            **metadata,
        )
        return PosteriorArchive.from_frame(frame[archive_columns(meta)], meta)

    return _make
