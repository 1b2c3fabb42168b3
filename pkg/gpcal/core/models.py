"""
Deterministic forward models.

Responsibilities:
- ForwardModel interface: parameter names, box bounds, stream layout, evaluate(θ)
- Two-stream basic example with a biased rich-stream process description
- Linear-Gaussian test model with a closed-form posterior
- Single-stream line model for data generated by a line plus an oscillation
- Loading user models from an import entry point

Models are immutable after construction; evaluate() is safe to call from
several threads at once.

Version: 1.0.0
"""

import importlib
import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Mapping, Sequence

import numpy as np

from gpcal.core.errors import ConfigurationError, InputError
from gpcal.core.factorization import guarded_cholesky, solve
from gpcal.core.streams import ObservationStream

logger = logging.getLogger(__name__)


class ForwardModel(ABC):
    """
    Deterministic model g(θ) predicting every record of every stream.

    Subclasses set parameter_names, stream_names and stream_locations and
    implement _predict. Identical θ must give bitwise identical predictions.
    """

    parameter_names: tuple[str, ...]
    stream_names: tuple[str, ...]

    def __init__(
        self,
        parameter_names: Sequence[str],
        stream_locations: Mapping[str, np.ndarray],
        lower: Sequence[float] | None = None,
        upper: Sequence[float] | None = None,
    ):
        self.parameter_names = tuple(parameter_names)
        self.stream_names = tuple(stream_locations)
        self.stream_locations = {k: np.asarray(v, dtype=float) for k, v in stream_locations.items()}
        d = len(self.parameter_names)
        self.lower = np.full(d, -np.inf) if lower is None else np.asarray(lower, dtype=float)
        self.upper = np.full(d, np.inf) if upper is None else np.asarray(upper, dtype=float)
        if self.lower.shape != (d,) or self.upper.shape != (d,) or np.any(self.lower >= self.upper):
            raise ConfigurationError("Invalid parameter bounds", parameters=self.parameter_names)

    @property
    def dimension(self) -> int:
        return len(self.parameter_names)

    def evaluate(self, theta) -> dict[str, np.ndarray]:
        """
        Predictions for every stream at parameter vector θ.

        Raises:
            InputError: If θ has the wrong length
        """
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dimension,):
            raise InputError(
                "Parameter vector has wrong length", expected=self.dimension, got=theta.size
            )
        return self._predict(theta)

    @abstractmethod
    def _predict(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        """Model-specific evaluation"""

    def check_streams(self, streams: Sequence[ObservationStream]) -> None:
        """
        Verify the streams match the layout the model predicts.

        Raises:
            ConfigurationError: On missing streams or length mismatch
        """
        by_name = {s.name: s for s in streams}
        for name in self.stream_names:
            if name not in by_name:
                raise ConfigurationError("Model stream missing from data", stream=name)
            if by_name[name].n != self.stream_locations[name].size:
                raise ConfigurationError(
                    "Stream length differs from model layout",
                    stream=name,
                    data=by_name[name].n,
                    model=self.stream_locations[name].size,
                )


def exact_mean(values) -> float:
    """Correctly rounded mean, independent of element order."""
    values = np.asarray(values, dtype=float)
    return math.fsum(values.tolist()) / values.size


def basic_example_predict(
    theta,
    x_sparse,
    x_rich,
    c: float,
    *,
    x1_sparse: float | None = None,
    xbar_rich: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Predictions of the two-stream basic example.

    sparse = a·x_sparse + b·x̄_rich/10 and rich = a·x_1,sparse + b·(x_rich − c).

    Args:
        theta: (a, b)
        x_sparse: Covariates of the sparse stream
        x_rich: Covariates of the rich stream
        c: Bias constant of the rich-stream process description
        x1_sparse: First sparse covariate in draw order (default x_sparse[0])
        xbar_rich: Mean rich covariate (default: mean of x_rich)

    Returns:
        (sparse predictions, rich predictions)
    """
    a, b = (float(v) for v in theta)
    x_sparse = np.asarray(x_sparse, dtype=float)
    x_rich = np.asarray(x_rich, dtype=float)
    x1 = float(x_sparse[0]) if x1_sparse is None else float(x1_sparse)
    xbar = exact_mean(x_rich) if xbar_rich is None else float(xbar_rich)
    return a * x_sparse + b * xbar / 10.0, a * x1 + b * (x_rich - c)


class BasicExampleModel(ForwardModel):
    """Two-stream example: 10 sparse records vs. 1000 rich records sharing (a, b)."""

    def __init__(
        self,
        x_sparse,
        x_rich,
        c: float,
        x1_sparse: float,
        xbar_rich: float,
        lower: Sequence[float] | None = None,
        upper: Sequence[float] | None = None,
    ):
        self.x_sparse = np.asarray(x_sparse, dtype=float)
        self.x_rich = np.asarray(x_rich, dtype=float)
        self.c = float(c)
        self.x1_sparse = float(x1_sparse)
        self.xbar_rich = float(xbar_rich)
        super().__init__(("a", "b"), {"sparse": self.x_sparse, "rich": self.x_rich}, lower, upper)

    def _predict(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        sparse, rich = basic_example_predict(
            theta, self.x_sparse, self.x_rich, self.c, x1_sparse=self.x1_sparse, xbar_rich=self.xbar_rich
        )
        return {"sparse": sparse, "rich": rich}


class LinearGaussianModel(ForwardModel):
    """g(θ) = X θ for a single stream; the conjugate target used to validate samplers."""

    def __init__(
        self,
        design,
        locations=None,
        stream_name: str = "linear",
        lower: Sequence[float] | None = None,
        upper: Sequence[float] | None = None,
    ):
        self.design = np.asarray(design, dtype=float)
        n, d = self.design.shape
        locs = np.arange(n, dtype=float) if locations is None else np.asarray(locations, dtype=float)
        super().__init__([f"theta{i}" for i in range(d)], {stream_name: locs}, lower, upper)
        self.stream_name = stream_name

    def _predict(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        return {self.stream_name: self.design @ theta}

    def posterior_moments(self, observations, sigma2_eps) -> tuple[np.ndarray, np.ndarray]:
        """
        Closed-form posterior under a flat prior: generalized least squares.

        Returns:
            (mean, covariance) with covariance (XᵀWX)⁻¹, W = diag(1/σ²_ε)
        """
        o = np.asarray(observations, dtype=float)
        w = 1.0 / np.broadcast_to(np.asarray(sigma2_eps, dtype=float), o.shape)
        precision = self.design.T @ (w[:, None] * self.design)
        factor = guarded_cholesky(precision, float(np.max(np.diag(precision))))
        mean = solve(factor, self.design.T @ (w * o))
        cov = solve(factor, np.eye(self.dimension))
        return mean, 0.5 * (cov + cov.T)


def linear_gaussian_test_model(dimension: int, design, locations=None, **kwargs) -> LinearGaussianModel:
    """
    Linear test model of the given dimension.

    Raises:
        ConfigurationError: If the design is not (n, dimension) with full column rank
    """
    design = np.asarray(design, dtype=float)
    if design.ndim != 2 or design.shape[1] != dimension:
        raise ConfigurationError("Design must have one column per parameter", shape=design.shape)
    if design.shape[0] < dimension or np.linalg.matrix_rank(design) < dimension:
        raise ConfigurationError("Design is rank deficient", shape=design.shape)
    return LinearGaussianModel(design, locations, **kwargs)


def oscillating_line_predict(theta, x) -> np.ndarray:
    """Straight line intercept + slope·x."""
    intercept, slope = (float(v) for v in theta)
    return intercept + slope * np.asarray(x, dtype=float)


def oscillating_truth(x, intercept: float, slope: float, amplitude: float, period: float) -> np.ndarray:
    """Line plus a smooth oscillation the line model cannot represent."""
    x = np.asarray(x, dtype=float)
    return oscillating_line_predict((intercept, slope), x) + amplitude * np.sin(2.0 * np.pi * x / period)


class OscillatingLineModel(ForwardModel):
    """Line model for a single stream whose process also oscillates."""

    def __init__(self, x, stream_name: str = "signal", lower=None, upper=None):
        self.x = np.asarray(x, dtype=float)
        self.stream_name = stream_name
        super().__init__(("intercept", "slope"), {stream_name: self.x}, lower, upper)

    def _predict(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        return {self.stream_name: oscillating_line_predict(theta, self.x)}


def load_external_model(
    entry_point: str, streams: Sequence[ObservationStream], options: Mapping | None = None
) -> ForwardModel:
    """
    Resolve "package.module:factory" and build a model from the loaded streams.

    Raises:
        ConfigurationError: If the entry point cannot be imported or returns no ForwardModel
    """
    module_name, sep, attr = entry_point.partition(":")
    if not sep or not module_name or not attr:
        raise ConfigurationError("Entry point must look like 'package.module:factory'", entry_point=entry_point)
    try:
        factory = getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError) as e:
        raise ConfigurationError("Cannot load model entry point", entry_point=entry_point) from e
    if not callable(factory):
        raise ConfigurationError("Model entry point is not callable", entry_point=entry_point)

    model = factory(list(streams), **dict(options or {}))
    if not isinstance(model, ForwardModel):
        raise ConfigurationError("Model factory did not return a ForwardModel", entry_point=entry_point)
    logger.info(f"Loaded external model {entry_point}: parameters={model.parameter_names}")
    return model
