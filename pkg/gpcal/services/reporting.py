"""
Posterior summaries and predictive posteriors.

Responsibilities:
- Parameter summaries (mean, sd, quantiles) of an archive
- Pointwise predictive bands of the model prediction g(θ) and, for GP
  archives, of the process prediction g(θ) + δ with a few realizations
- Normalized discrepancy variances per stream, their logarithms, quantiles
  and cross-stream ratios

Quantiles use linear interpolation of order statistics (numpy "linear",
Hyndman-Fan type 7).

Version: 1.0.0
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from itertools import permutations

import numpy as np
import pandas as pd

from gpcal.core.errors import ConfigurationError, DiagnosticError, SingularityError
from gpcal.core.gp import gp_conditional_draw, select_supporting_points
from gpcal.core.models import ForwardModel
from gpcal.core.streams import ObservationStream
from gpcal.services.archive import PosteriorArchive
from gpcal.services.densities import GpHyperState, evaluate_model, stream_gp_term
from gpcal.services.optimizer import equidistant_supports

logger = logging.getLogger(__name__)

QUANTILE_METHOD = "linear"


def quantile_label(q: float) -> str:
    return f"q{q * 100:g}".replace(".", "_")


def parameter_summary(archive: PosteriorArchive, quantiles: Sequence[float]) -> pd.DataFrame:
    """
    Mean, standard deviation and quantiles of every sampled scalar.

    Raises:
        DiagnosticError: If the archive is empty
    """
    if archive.is_empty:
        raise DiagnosticError("Cannot summarize an empty archive")
    rows = []
    for column in archive.scalar_columns():
        values = archive.samples[column].to_numpy(dtype=float)
        qs = np.quantile(values, quantiles, method=QUANTILE_METHOD)
        row = {"parameter": column, "mean": float(values.mean()), "sd": float(values.std(ddof=1)) if values.size > 1 else 0.0}
        row.update({quantile_label(q): float(v) for q, v in zip(quantiles, qs, strict=True)})
        rows.append(row)
    return pd.DataFrame(rows)


@dataclass(frozen=True)
class PredictiveBand:
    """
    Pointwise predictive quantiles of one stream.

    Attributes:
        stream: Stream name
        table: location, observation, model_lower/median/upper and, for GP
            archives, process_lower/median/upper
        realizations: Process-prediction draws, shape (k, n); empty for ignore archives
    """

    stream: str
    table: pd.DataFrame
    realizations: np.ndarray

    @property
    def has_process(self) -> bool:
        return "process_median" in self.table.columns

    def realization_table(self) -> pd.DataFrame:
        frame = pd.DataFrame({"location": self.table["location"].to_numpy()})
        for i, row in enumerate(self.realizations):
            frame[f"realization_{i}"] = row
        return frame

    def outside(self, kind: str = "model") -> np.ndarray:
        """Mask of observations outside the band."""
        obs = self.table["observation"].to_numpy()
        return (obs < self.table[f"{kind}_lower"].to_numpy()) | (obs > self.table[f"{kind}_upper"].to_numpy())


def thinned_rows(n_rows: int, max_draws: int) -> np.ndarray:
    """At most max_draws evenly spaced row indices."""
    if n_rows <= max_draws:
        return np.arange(n_rows)
    return np.unique(np.round(np.linspace(0, n_rows - 1, max_draws)).astype(int))


def _band(draws: np.ndarray, quantiles: Sequence[float], prefix: str) -> dict[str, np.ndarray]:
    lower, median, upper = np.quantile(draws, quantiles, axis=0, method=QUANTILE_METHOD)
    return {f"{prefix}_lower": lower, f"{prefix}_median": median, f"{prefix}_upper": upper}


def predictive_posterior(
    archive: PosteriorArchive,
    model: ForwardModel,
    streams: Sequence[ObservationStream],
    rng: np.random.Generator,
    quantiles: Sequence[float] = (0.025, 0.5, 0.975),
    *,
    max_draws: int = 500,
    realizations: int = 0,
) -> dict[str, PredictiveBand]:
    """
    Predictive bands per stream from archive samples.

    Each retained sample gives g(θ); GP archives additionally recompute δ̂ from
    the residuals at supports (re-selected with rng, or equidistant for Laplace
    archives) and add one conditional discrepancy draw.

    Raises:
        DiagnosticError: If the archive is empty or no GP draw succeeds
    """
    if archive.is_empty:
        raise DiagnosticError("Predictive posterior needs a non-empty archive")
    model.check_streams(streams)
    by_name = {s.name: s for s in streams}
    names = [n for n in archive.stream_names if n in by_name]
    gp = archive.scenario == "gp"
    equidistant = archive.metadata.support_rule == "equidistant"

    rows = thinned_rows(len(archive), max_draws)
    thetas = archive.theta()[rows]
    model_draws: dict[str, list[np.ndarray]] = {n: [] for n in names}
    process_draws: dict[str, list[np.ndarray]] = {n: [] for n in names}

    for row, theta in zip(rows, thetas, strict=True):
        predictions = evaluate_model(model, theta)
        for name in names:
            stream = by_name[name]
            g = predictions[name]
            model_draws[name].append(g)
            if not gp:
                continue
            hyper = GpHyperState(
                float(archive.psi(name)[row]), float(archive.sigma2(name)[row]), stream.sigma2_eps_mean
            )
            if equidistant:
                support = equidistant_supports(stream.locations, archive.metadata.n_supports)
            else:
                support = select_supporting_points(stream.locations, hyper.psi, rng)
            try:
                _, est = stream_gp_term(stream, g, hyper, support)
                delta = gp_conditional_draw(est, stream.locations, support, hyper.kernel(), stream.sigma2_eps, rng)
            except SingularityError as e:
                logger.warning(f"Skipped discrepancy draw for stream {name} at row {row}: {e}")
                continue
            process_draws[name].append(g + delta)

    bands = {}
    for name in names:
        stream = by_name[name]
        columns = {"location": stream.locations, "observation": stream.observations}
        columns.update(_band(np.vstack(model_draws[name]), quantiles, "model"))
        draws = np.zeros((0, stream.n))
        if gp:
            if not process_draws[name]:
                raise DiagnosticError("No discrepancy draw succeeded", stream=name)
            draws = np.vstack(process_draws[name])
            columns.update(_band(draws, quantiles, "process"))
        bands[name] = PredictiveBand(name, pd.DataFrame(columns), draws[:realizations])
        logger.info(f"Predictive band for {name}: {len(model_draws[name])} draws, process={gp}")
    return bands


@dataclass(frozen=True)
class DiscrepancySummary:
    """
    Normalized discrepancy variances of a GP archive.

    Attributes:
        samples: Long table with stream, sigma2, log_sigma2 per archive row
        summary: Per stream: median, mean of ln σ², and quantiles of σ² and ln σ²
    """

    samples: pd.DataFrame
    summary: pd.DataFrame

    def values(self, stream: str) -> np.ndarray:
        return self.samples.loc[self.samples["stream"] == stream, "sigma2"].to_numpy(dtype=float)


def _require_gp(archive: PosteriorArchive) -> None:
    if archive.scenario != "gp":
        raise ConfigurationError("Discrepancy summaries need a GP-scenario archive", scenario=archive.scenario)
    if archive.is_empty:
        raise DiagnosticError("Cannot summarize an empty archive")


def discrepancy_summary(archive: PosteriorArchive, quantiles: Sequence[float] = (0.025, 0.5, 0.975)) -> DiscrepancySummary:
    """
    Samples of σ²_k = σ²_d,k/σ²_ε,k and ln σ²_k with quantiles per stream.

    Raises:
        ConfigurationError: For an ignore-scenario archive
        DiagnosticError: For an empty archive
    """
    _require_gp(archive)
    frames, rows = [], []
    for name in archive.stream_names:
        sigma2 = archive.sigma2(name)
        log_sigma2 = np.log(sigma2)
        frames.append(pd.DataFrame({"stream": name, "sigma2": sigma2, "log_sigma2": log_sigma2}))
        row = {"stream": name, "median": float(np.median(sigma2)), "mean_log": float(log_sigma2.mean())}
        for q, v in zip(quantiles, np.quantile(sigma2, quantiles, method=QUANTILE_METHOD), strict=True):
            row[f"sigma2_{quantile_label(q)}"] = float(v)
        for q, v in zip(quantiles, np.quantile(log_sigma2, quantiles, method=QUANTILE_METHOD), strict=True):
            row[f"log_sigma2_{quantile_label(q)}"] = float(v)
        rows.append(row)
    return DiscrepancySummary(pd.concat(frames, ignore_index=True), pd.DataFrame(rows))


def discrepancy_ratios(archive: PosteriorArchive, quantiles: Sequence[float] = (0.025, 0.5, 0.975)) -> pd.DataFrame:
    """
    Quantiles of σ²_k1/σ²_k2 over archive rows for every ordered stream pair.

    Returns:
        Columns: numerator, denominator, ratio quantiles, log-ratio median
    """
    _require_gp(archive)
    rows = []
    for k1, k2 in permutations(archive.stream_names, 2):
        ratio = archive.sigma2(k1) / archive.sigma2(k2)
        row = {"numerator": k1, "denominator": k2}
        for q, v in zip(quantiles, np.quantile(ratio, quantiles, method=QUANTILE_METHOD), strict=True):
            row[quantile_label(q)] = float(v)
        row["log_ratio_median"] = float(np.median(np.log(ratio)))
        rows.append(row)
    return pd.DataFrame(rows, columns=["numerator", "denominator", *map(quantile_label, quantiles), "log_ratio_median"])
