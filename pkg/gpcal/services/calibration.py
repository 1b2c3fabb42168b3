"""
Calibration workflow orchestration.

Responsibilities:
- Generate synthetic data sets
- Load streams and rebuild the configured forward model from a data directory
- Run the sampler and persist the archive
- Run the optimizer and persist the optimum (plus a Laplace archive)
- Write posterior summaries, diagnostics and predictive bands

Integration: Combines persistence, models, sampler, optimizer and reporting
Version: 1.0.0
"""

import logging
from pathlib import Path

import numpy as np

from gpcal.core import persistence
from gpcal.core.config import Settings, get_settings
from gpcal.core.errors import ConfigurationError, DiagnosticError
from gpcal.core.models import (
    BasicExampleModel,
    ForwardModel,
    OscillatingLineModel,
    exact_mean,
    linear_gaussian_test_model,
    load_external_model,
)
from gpcal.core.streams import ObservationStream
from gpcal.schemas.config import ModelSettings, RunConfig
from gpcal.schemas.results import ModelRecord
from gpcal.services.archive import PosteriorArchive
from gpcal.services.diagnostics import gelman_rubin_table
from gpcal.services.optimizer import OptimumReport, laplace_archive, run_optimization
from gpcal.services.reporting import (
    PredictiveBand,
    discrepancy_ratios,
    discrepancy_summary,
    parameter_summary,
    predictive_posterior,
)
from gpcal.services.sampler import run_sampler
from gpcal.services.synthetic import DESIGN_FILE, SyntheticData, generate_synthetic_data

logger = logging.getLogger(__name__)

MODEL_FILE = "model.json"
OPTIMUM_FILE = "optimum.json"

BASIC_EXAMPLE_BOUNDS = ((0.0, 0.0), (5.0, 5.0))
DEFAULT_BOUND = 10.0


def _by_name(streams: list[ObservationStream], *names: str) -> list[ObservationStream]:
    available = {s.name: s for s in streams}
    missing = [n for n in names if n not in available]
    if missing:
        raise ConfigurationError("Data directory lacks a stream the model needs", stream=missing[0])
    return [available[n] for n in names]


def create_model(
    settings: ModelSettings,
    streams: list[ObservationStream],
    data_dir: str | Path | None = None,
) -> ForwardModel:
    """
    Build the configured forward model for the loaded streams.

    Args:
        settings: Model section of the run configuration
        streams: Loaded observation streams
        data_dir: Directory with model.json / design.csv

    Raises:
        ConfigurationError: If required streams or files are missing
    """
    record = None
    if data_dir is not None and (Path(data_dir) / MODEL_FILE).exists():
        record = persistence.read_document(ModelRecord, Path(data_dir) / MODEL_FILE)
        if record.kind != settings.kind:
            logger.warning(f"Data were generated for {record.kind}, config selects {settings.kind}")

    if settings.kind == "basic-example":
        rich, sparse = _by_name(streams, "rich", "sparse")
        x1 = record.x1_sparse if record and record.x1_sparse is not None else float(sparse.locations[0])
        xbar = record.xbar_rich if record and record.xbar_rich is not None else exact_mean(rich.locations)
        lower, upper = BASIC_EXAMPLE_BOUNDS
        return BasicExampleModel(sparse.locations, rich.locations, settings.bias, x1, xbar, lower, upper)

    if settings.kind == "linear-gaussian":
        (stream,) = _by_name(streams, "linear")
        if data_dir is None:
            raise ConfigurationError("Linear-Gaussian model needs a data directory with a design file")
        design_file = record.design_file if record and record.design_file else DESIGN_FILE
        design = persistence.read_matrix(Path(data_dir) / design_file)
        d = design.shape[1]
        return linear_gaussian_test_model(
            d, design, stream.locations, lower=[-DEFAULT_BOUND] * d, upper=[DEFAULT_BOUND] * d
        )

    if settings.kind == "oscillating-line":
        (stream,) = _by_name(streams, "signal")
        return OscillatingLineModel(stream.locations, lower=[-DEFAULT_BOUND] * 2, upper=[DEFAULT_BOUND] * 2)

    return load_external_model(settings.entry_point, streams, settings.options)


def _archive_config(archive: PosteriorArchive) -> RunConfig:
    return RunConfig.model_validate(archive.metadata.config) if archive.metadata.config else RunConfig()


class CalibrationService:
    """
    High-level service behind the CLI subcommands.

    Usage:
        service = create_calibration_service(config)
        archive = service.invert(data_dir, out_dir)
    """

    def __init__(self, config: RunConfig, settings: Settings | None = None):
        """
        Initialize with a validated run configuration.

        Args:
            config: Run configuration
            settings: Process settings (default: get_settings())
        """
        self.config = config
        self.settings = settings or get_settings()
        logger.info(f"CalibrationService initialized: model={config.model.kind}, scenario={config.scenario}")

    def generate(self, out_dir: str | Path) -> SyntheticData:
        data = generate_synthetic_data(self.config)
        data.save(out_dir)
        return data

    def load(self, data_dir: str | Path) -> tuple[list[ObservationStream], ForwardModel]:
        """Streams of a data directory and the model rebuilt for them."""
        streams = persistence.discover_streams(data_dir, self.config.streams)
        model = create_model(self.config.model, streams, data_dir)
        return streams, model

    def invert(
        self,
        data_dir: str | Path,
        out_dir: str | Path,
        scenario: str | None = None,
        seed: int | None = None,
    ) -> PosteriorArchive:
        streams, model = self.load(data_dir)
        archive = run_sampler(self.config, model, streams, scenario, seed, workers=self.settings.workers)
        archive.save(out_dir)
        return archive

    def optimize(self, data_dir: str | Path, out_dir: str | Path, scenario: str | None = None) -> OptimumReport:
        """Optimize, write optimum.json and, when the Hessian allows, a Laplace archive."""
        streams, model = self.load(data_dir)
        scenario = scenario or self.config.optimize.scenario
        config = self.config.model_copy(update={"optimize": self.config.optimize.model_copy(update={"scenario": scenario})})
        report, fixed = run_optimization(config, model, streams, scenario)

        out_dir = Path(out_dir)
        document = report.to_document(scenario, model.parameter_names, config.fingerprint(), fixed)
        persistence.write_document(document, out_dir / OPTIMUM_FILE)

        if report.laplace_cov is not None and config.optimize.laplace_draws > 0:
            archive = laplace_archive(report, model, streams, config, scenario=scenario, fixed=fixed)
            archive.save(out_dir)
        else:
            logger.warning("No Laplace archive written (Hessian not positive definite or draws disabled)")
        return report

    @staticmethod
    def report(archive_path: str | Path, out_dir: str | Path) -> dict[str, Path]:
        """Write parameter, convergence and discrepancy summaries of an archive."""
        archive = PosteriorArchive.load(archive_path)
        config = _archive_config(archive)
        out_dir = Path(out_dir)
        written = {}

        written["parameter_summary"] = persistence.write_table(
            parameter_summary(archive, config.report.summary_quantiles), out_dir / "parameter_summary.csv"
        )
        try:
            written["gelman_rubin"] = persistence.write_table(gelman_rubin_table(archive), out_dir / "gelman_rubin.csv")
        except DiagnosticError as e:
            logger.warning(f"Gelman-Rubin skipped: {e}")

        if archive.scenario == "gp":
            quantiles = config.report.summary_quantiles
            summary = discrepancy_summary(archive, quantiles)
            written["discrepancy_summary"] = persistence.write_table(summary.summary, out_dir / "discrepancy_summary.csv")
            written["discrepancy_samples"] = persistence.write_table(summary.samples, out_dir / "discrepancy_samples.csv")
            written["discrepancy_ratios"] = persistence.write_table(
                discrepancy_ratios(archive, quantiles), out_dir / "discrepancy_ratios.csv"
            )
        logger.info(f"Report written to {out_dir}: {sorted(written)}")
        return written

    @staticmethod
    def predict(archive_path: str | Path, data_dir: str | Path, out_dir: str | Path) -> dict[str, PredictiveBand]:
        """Write band_<stream>.csv (and realizations_<stream>.csv for GP archives)."""
        archive = PosteriorArchive.load(archive_path)
        config = _archive_config(archive)
        streams = persistence.discover_streams(data_dir, config.streams)
        model = create_model(config.model, streams, data_dir)
        rng = np.random.default_rng(config.report.seed)
        bands = predictive_posterior(
            archive,
            model,
            streams,
            rng,
            config.report.band_quantiles,
            max_draws=config.report.max_draws,
            realizations=config.report.realizations,
        )
        out_dir = Path(out_dir)
        for name, band in bands.items():
            persistence.write_table(band.table, out_dir / f"band_{name}.csv")
            if band.has_process and band.realizations.size:
                persistence.write_table(band.realization_table(), out_dir / f"realizations_{name}.csv")
        return bands


def create_calibration_service(config: RunConfig, settings: Settings | None = None) -> CalibrationService:
    """Factory function to create a CalibrationService."""
    return CalibrationService(config, settings)
