"""
Convergence diagnostics.

Potential scale reduction factor over chains, for every sampled scalar of an
archive, over all chains and within each independent population.

Version: 1.0.0
"""

import logging
import math

import numpy as np
import pandas as pd

from gpcal.core.errors import DiagnosticError
from gpcal.services.archive import PosteriorArchive

logger = logging.getLogger(__name__)

MIN_CHAINS = 2
MIN_SAMPLES = 10


def potential_scale_reduction(chains: np.ndarray) -> float:
    """
    R̂ for one scalar from an (m chains, n samples) array.

    R̂ = sqrt(((n−1)/n·W + B/n) / W), clipped below at 1; W = 0 gives 1 when the
    chains agree and +inf otherwise.

    Raises:
        DiagnosticError: With fewer than 2 chains or 10 samples per chain
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < MIN_CHAINS or chains.shape[1] < MIN_SAMPLES:
        raise DiagnosticError(
            "Gelman-Rubin needs at least 2 chains with 10 samples each",
            shape=chains.shape,
        )
    m, n = chains.shape
    means = chains.mean(axis=1)
    B = n * means.var(ddof=1)
    W = float(chains.var(axis=1, ddof=1).mean())
    if W == 0.0:
        return 1.0 if B == 0.0 else math.inf
    var_plus = (n - 1) / n * W + B / n
    return max(1.0, math.sqrt(var_plus / W))


def gelman_rubin(archive: PosteriorArchive, chains: list[int] | None = None) -> dict[str, float]:
    """
    Per-parameter R̂ over the given chains (default: all).

    Raises:
        DiagnosticError: If the archive has too few chains or samples
    """
    return {
        column: potential_scale_reduction(archive.chain_matrix(column, chains))
        for column in archive.scalar_columns()
    }


def gelman_rubin_table(archive: PosteriorArchive) -> pd.DataFrame:
    """
    R̂ over all chains and within each population.

    Returns:
        Columns: scope ("all" or "population_<id>"), parameter, rhat
    """
    rows = [("all", k, v) for k, v in gelman_rubin(archive).items()]
    populations = archive.population_chains()
    if len(populations) > 1:
        for population, chains in populations.items():
            if len(chains) < MIN_CHAINS:
                continue
            for k, v in gelman_rubin(archive, chains).items():
                rows.append((f"population_{population}", k, v))
    worst = max(v for _, _, v in rows) if rows else math.nan
    logger.info(f"Gelman-Rubin computed for {len(archive.scalar_columns())} quantities, max R̂={worst:.4f}")
    return pd.DataFrame(rows, columns=["scope", "parameter", "rhat"])
