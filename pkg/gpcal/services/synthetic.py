"""
Synthetic data generation for the built-in examples.

Each generator returns the observation streams, the noise-free truth per
stream, the generating parameters and the model record needed to rebuild the
forward model from files. Generation is bit-reproducible for a fixed seed.

Version: 1.0.0
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gpcal.core import persistence
from gpcal.core.errors import ConfigurationError
from gpcal.core.models import basic_example_predict, exact_mean, oscillating_truth
from gpcal.core.streams import ObservationStream
from gpcal.schemas.config import (
    BasicExampleConfig,
    LinearGaussianConfig,
    OscillatingLineConfig,
    RunConfig,
)
from gpcal.schemas.results import ModelRecord, TruthRecord

logger = logging.getLogger(__name__)

DESIGN_FILE = "design.csv"


@dataclass(frozen=True)
class GeneratedStream:
    """Arrays of one generated stream, sorted by location"""

    name: str
    locations: np.ndarray
    observations: np.ndarray
    truth: np.ndarray
    noise_sd: float

    def to_stream(self) -> ObservationStream:
        return ObservationStream.create(self.name, self.locations, self.observations, self.noise_sd**2)


@dataclass
class SyntheticData:
    """Generated streams plus everything written next to them"""

    streams: list[GeneratedStream]
    truth: TruthRecord
    model: ModelRecord
    design: np.ndarray | None = None

    def observation_streams(self) -> list[ObservationStream]:
        return [s.to_stream() for s in self.streams]

    def by_name(self, name: str) -> GeneratedStream:
        return next(s for s in self.streams if s.name == name)

    def save(self, out_dir: str | Path) -> list[Path]:
        """Write stream, truth, truth.json, model.json and design files."""
        out_dir = Path(out_dir)
        written = []
        for generated, stream in zip(self.streams, self.observation_streams(), strict=True):
            written.append(persistence.write_stream(stream, out_dir))
            written.append(persistence.write_truth(generated.name, generated.locations, generated.truth, out_dir))
        written.append(persistence.write_document(self.truth, out_dir / "truth.json"))
        written.append(persistence.write_document(self.model, out_dir / "model.json"))
        if self.design is not None:
            written.append(persistence.write_matrix(self.design, out_dir / DESIGN_FILE, prefix="x"))
        logger.info(f"Wrote synthetic {self.truth.kind} data to {out_dir} ({len(written)} files)")
        return written


def _sorted_stream(name: str, x: np.ndarray, truth: np.ndarray, noise: np.ndarray, sd: float) -> GeneratedStream:
    order = np.argsort(x, kind="stable")
    observations = truth + noise
    return GeneratedStream(name, x[order], observations[order], truth[order], float(sd))


def _noise(rng: np.random.Generator, sd: float, n: int) -> np.ndarray:
    return rng.normal(0.0, sd, n)


def generate_basic_example(config: BasicExampleConfig, rng: np.random.Generator | None = None) -> SyntheticData:
    """
    Two streams from the basic example with the biased constant c*.

    Covariates are uniform draws; x̄_rich is their sample mean and x_1,sparse the
    first sparse draw. Noise sd is a fraction of each stream's mean truth.
    """
    rng = rng or np.random.default_rng(config.seed)
    x_sparse = rng.uniform(*config.sparse_range, config.n_sparse)
    x_rich = rng.uniform(*config.rich_range, config.n_rich)
    x1 = float(x_sparse[0])
    xbar = exact_mean(x_rich)
    truth_sparse, truth_rich = basic_example_predict(
        (config.a_true, config.b_true), x_sparse, x_rich, config.c_true, x1_sparse=x1, xbar_rich=xbar
    )
    sd_sparse = config.sparse_noise_fraction * exact_mean(truth_sparse)
    sd_rich = config.rich_noise_fraction * exact_mean(truth_rich)
    noise_sparse = _noise(rng, sd_sparse, config.n_sparse)
    noise_rich = _noise(rng, sd_rich, config.n_rich)

    return SyntheticData(
        streams=[
            _sorted_stream("rich", x_rich, truth_rich, noise_rich, sd_rich),
            _sorted_stream("sparse", x_sparse, truth_sparse, noise_sparse, sd_sparse),
        ],
        truth=TruthRecord(
            kind="basic-example",
            parameters={"a": config.a_true, "b": config.b_true},
            noise_sd={"sparse": sd_sparse, "rich": sd_rich},
            seed=config.seed,
            extra={"c_true": config.c_true},
        ),
        model=ModelRecord(kind="basic-example", x1_sparse=x1, xbar_rich=xbar),
    )


def generate_linear_gaussian(config: LinearGaussianConfig, rng: np.random.Generator | None = None) -> SyntheticData:
    """Single stream g = Xθ* + noise with a random standard-normal design."""
    rng = rng or np.random.default_rng(config.seed)
    d = len(config.theta_true)
    design = rng.standard_normal((config.n, d))
    truth = design @ np.asarray(config.theta_true, dtype=float)
    locations = np.arange(config.n, dtype=float)
    noise = _noise(rng, config.noise_sd, config.n)
    return SyntheticData(
        streams=[GeneratedStream("linear", locations, truth + noise, truth, config.noise_sd)],
        truth=TruthRecord(
            kind="linear-gaussian",
            parameters={f"theta{i}": v for i, v in enumerate(config.theta_true)},
            noise_sd={"linear": config.noise_sd},
            seed=config.seed,
        ),
        model=ModelRecord(kind="linear-gaussian", design_file=DESIGN_FILE),
        design=design,
    )


def generate_oscillating_line(config: OscillatingLineConfig, rng: np.random.Generator | None = None) -> SyntheticData:
    """Single stream of a line plus a sine the line model cannot represent."""
    rng = rng or np.random.default_rng(config.seed)
    x = np.sort(rng.uniform(*config.x_range, config.n))
    truth = oscillating_truth(x, config.intercept, config.slope, config.amplitude, config.period)
    noise = _noise(rng, config.noise_sd, config.n)
    return SyntheticData(
        streams=[GeneratedStream("signal", x, truth + noise, truth, config.noise_sd)],
        truth=TruthRecord(
            kind="oscillating-line",
            parameters={"intercept": config.intercept, "slope": config.slope},
            noise_sd={"signal": config.noise_sd},
            seed=config.seed,
            extra={"amplitude": config.amplitude, "period": config.period},
        ),
        model=ModelRecord(kind="oscillating-line"),
    )


def generate_synthetic_data(config: RunConfig, rng: np.random.Generator | None = None) -> SyntheticData:
    """
    Generate data for the configured model kind.

    Raises:
        ConfigurationError: For external models (no built-in generator)
    """
    kind = config.model.kind
    if kind == "basic-example":
        return generate_basic_example(config.data.basic_example, rng)
    if kind == "linear-gaussian":
        return generate_linear_gaussian(config.data.linear_gaussian, rng)
    if kind == "oscillating-line":
        return generate_oscillating_line(config.data.oscillating_line, rng)
    raise ConfigurationError("No synthetic data generator for model kind", kind=kind)
