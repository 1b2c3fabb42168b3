"""
Scenario log-densities and the hyperparameter conditionals.

Responsibilities:
- Priors: flat θ prior with box bounds, truncated Gamma on each ψ_k,
  inverse Gamma on each normalized σ²_k
- Ignore scenario: Gaussian residuals with zero discrepancy
- GP scenario: residuals after subtracting the conditional expected
  discrepancy, plus the supports-only penalty
- Full conditional of ψ_k (support re-selection, truncation, Gamma prior)
- Gibbs draw of σ²_k from its inverse-Gamma conditional

Both scenario densities share one accumulation path so that a GP with zero
signal variance reproduces the ignore density exactly.

Version: 1.0.0
"""

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gamma as gamma_dist
from scipy.stats import invgamma

from gpcal.core.errors import ConfigurationError, GpcalError, ModelEvaluationError, SingularityError
from gpcal.core.factorization import guarded_cholesky, solve
from gpcal.core.gp import (
    DiscrepancyEstimate,
    KernelParams,
    SupportSelection,
    kernel_matrix,
    log_discrepancy_penalty,
    projected_discrepancy,
    psi_truncation_bounds,
    psi_within_bounds,
    select_supporting_points,
)
from gpcal.core.models import ForwardModel
from gpcal.core.streams import ObservationStream
from gpcal.schemas.config import PriorSettings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GammaPrior:
    """Gamma density in shape/rate form"""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ConfigurationError("Gamma prior needs positive shape and rate", shape=self.shape, rate=self.rate)

    def logpdf(self, x: float) -> float:
        return float(gamma_dist.logpdf(x, a=self.shape, scale=1.0 / self.rate))

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate**2

    @classmethod
    def from_moments(cls, mean: float, variance: float) -> "GammaPrior":
        """Gamma with the given mean and variance."""
        if not (mean > 0 and variance > 0):
            raise ConfigurationError("Gamma moments must be positive", mean=mean, variance=variance)
        return cls(mean**2 / variance, mean / variance)


@dataclass(frozen=True)
class Priors:
    """
    Priors of one inversion.

    Attributes:
        psi: Gamma prior of the correlation length per stream
        alpha_sigma2: Inverse-Gamma shape of the normalized signal variance
        beta_sigma2: Inverse-Gamma scale of the normalized signal variance
        theta_lower: Lower box bound of θ (may be -inf)
        theta_upper: Upper box bound of θ (may be +inf)
    """

    psi: Mapping[str, GammaPrior]
    alpha_sigma2: float
    beta_sigma2: float
    theta_lower: np.ndarray
    theta_upper: np.ndarray

    def log_prior_theta(self, theta: np.ndarray) -> float:
        """Flat prior: 0 inside the box, -inf outside."""
        inside = np.all(theta >= self.theta_lower) and np.all(theta <= self.theta_upper)
        return 0.0 if inside else -math.inf

    @property
    def sigma2_prior_mode(self) -> float:
        return self.beta_sigma2 / (self.alpha_sigma2 + 1.0)

    @property
    def sigma2_prior_mean(self) -> float:
        return self.beta_sigma2 / (self.alpha_sigma2 - 1.0) if self.alpha_sigma2 > 1 else math.inf


def resolve_priors(
    settings: PriorSettings,
    model: ForwardModel,
    streams: Sequence[ObservationStream],
    *,
    with_psi: bool = True,
) -> Priors:
    """
    Concrete priors for a model and its streams.

    The ψ prior of a stream is, in order of precedence: an explicit per-stream
    entry, the fixed (a_ψ, b_ψ) pair, or the Gamma matching mean r/3 and
    variance r²/3.2 for the stream's location range r. with_psi=False resolves
    the θ box only.

    Raises:
        ConfigurationError: On bound length mismatch or a zero location range
    """
    d = model.dimension
    if settings.theta_lower is not None:
        lower = np.asarray(settings.theta_lower, dtype=float)
        upper = np.asarray(settings.theta_upper, dtype=float)
        if lower.shape != (d,):
            raise ConfigurationError("Prior bounds length differs from model dimension", dimension=d)
    else:
        lower, upper = model.lower.copy(), model.upper.copy()

    psi_priors: dict[str, GammaPrior] = {}
    for stream in streams if with_psi else ():
        if stream.name in settings.stream_psi:
            entry = settings.stream_psi[stream.name]
            psi_priors[stream.name] = GammaPrior(entry.shape, entry.rate)
        elif settings.psi_prior == "fixed":
            rate = settings.b_psi if settings.b_psi_kind == "rate" else 1.0 / settings.b_psi
            psi_priors[stream.name] = GammaPrior(settings.a_psi, rate)
        else:
            r = stream.location_range
            if not r > 0:
                raise ConfigurationError("Stream needs a positive location range for a ψ prior", stream=stream.name)
            psi_priors[stream.name] = GammaPrior.from_moments(
                r * settings.psi_mean_fraction, r**2 / settings.psi_variance_divisor
            )

    return Priors(psi_priors, settings.alpha_sigma2, settings.beta_sigma2, lower, upper)


def flat_priors(model: ForwardModel) -> Priors:
    """Box prior of the model with no hyperpriors (ignore scenario, optimizer)."""
    return Priors({}, 1.005, 0.1, model.lower.copy(), model.upper.copy())


@dataclass(frozen=True)
class GpHyperState:
    """Correlation length and normalized signal variance of one stream"""

    psi: float
    sigma2_norm: float
    sigma2_eps_mean: float

    @property
    def sigma2_d(self) -> float:
        return self.sigma2_norm * self.sigma2_eps_mean

    def kernel(self) -> KernelParams:
        return KernelParams(self.psi, self.sigma2_d)


@dataclass
class GpEvaluation:
    """
    GP-scenario density with the per-stream pieces that produced it.

    Attributes:
        logp: Total log-density (-inf when rejected)
        stream_terms: Data term plus penalty per stream
        estimates: Conditional discrepancy per stream
        predictions: g(θ) per stream
    """

    logp: float
    stream_terms: dict[str, float] = field(default_factory=dict)
    estimates: dict[str, DiscrepancyEstimate] = field(default_factory=dict)
    predictions: dict[str, np.ndarray] = field(default_factory=dict)


def evaluate_model(model: ForwardModel, theta: np.ndarray) -> dict[str, np.ndarray]:
    """
    Evaluate g(θ) and check prediction shapes.

    Raises:
        ModelEvaluationError: If the model raises or returns malformed predictions
    """
    try:
        predictions = model.evaluate(theta)
    except GpcalError:
        raise
    except Exception as e:
        raise ModelEvaluationError(f"Forward model failed: {type(e).__name__}: {e}", theta=list(theta)) from e
    for name in model.stream_names:
        expected = model.stream_locations[name].shape
        if name not in predictions or np.shape(predictions[name]) != expected:
            raise ModelEvaluationError("Prediction shape differs from stream layout", stream=name)
    return predictions


def gaussian_data_term(residuals: np.ndarray, sigma2_eps: np.ndarray) -> float:
    """−½ Σ dᵢ²/σ²_ε,ᵢ"""
    return -0.5 * float(np.sum(residuals * residuals / sigma2_eps))


def log_density_ignore(
    theta, streams: Sequence[ObservationStream], model: ForwardModel, priors: Priors | None = None
) -> float:
    """
    Log-density of the ignore scenario, constants omitted.

    Returns:
        −½ Σ_k Σ_i (o_i − g_i(θ))²/σ²_ε,i + log p(θ); -inf outside the prior box

    Raises:
        ModelEvaluationError: If the forward model fails
    """
    theta = np.asarray(theta, dtype=float)
    priors = priors or flat_priors(model)
    log_prior = priors.log_prior_theta(theta)
    if log_prior == -math.inf:
        return -math.inf

    predictions = evaluate_model(model, theta)
    total = 0.0
    for stream in streams:
        total += gaussian_data_term(stream.observations - predictions[stream.name], stream.sigma2_eps)
    return total + log_prior


def stream_gp_term(
    stream: ObservationStream,
    prediction: np.ndarray,
    hyper: GpHyperState,
    support: SupportSelection,
) -> tuple[float, DiscrepancyEstimate]:
    """
    Data term plus penalty of one stream under the GP scenario.

    δ̂ is conditioned on the residuals of every record, projected onto the
    supporting locations.

    Raises:
        SingularityError: If K_z cannot be factorized
    """
    z = stream.observations - prediction
    est = projected_discrepancy(z, stream.locations, support, hyper.kernel(), stream.sigma2_eps)
    d = stream.observations - (prediction + est.full(support))
    term = gaussian_data_term(d, stream.sigma2_eps)
    term += log_discrepancy_penalty(est)
    return term, est


def evaluate_gp(
    theta,
    hyper: Mapping[str, GpHyperState],
    supports: Mapping[str, SupportSelection],
    streams: Sequence[ObservationStream],
    model: ForwardModel,
    priors: Priors | None = None,
) -> GpEvaluation:
    """
    GP-scenario density with latent discrepancies recomputed from the residuals.

    A singular covariance rejects the state (logp = -inf) instead of raising.

    Raises:
        ModelEvaluationError: If the forward model fails
    """
    theta = np.asarray(theta, dtype=float)
    priors = priors or flat_priors(model)
    log_prior = priors.log_prior_theta(theta)
    if log_prior == -math.inf:
        return GpEvaluation(-math.inf)

    predictions = evaluate_model(model, theta)
    result = GpEvaluation(0.0, predictions=predictions)
    total = 0.0
    for stream in streams:
        try:
            term, est = stream_gp_term(stream, predictions[stream.name], hyper[stream.name], supports[stream.name])
        except SingularityError as e:
            logger.warning(f"GP density rejected for stream {stream.name}: {e}")
            return GpEvaluation(-math.inf)
        result.stream_terms[stream.name] = term
        result.estimates[stream.name] = est
        total += term
    result.logp = total + log_prior
    return result


def log_density_gp(
    theta,
    hyper: Mapping[str, GpHyperState],
    supports: Mapping[str, SupportSelection],
    streams: Sequence[ObservationStream],
    model: ForwardModel,
    priors: Priors | None = None,
) -> float:
    """
    Log-density of the GP scenario.

    Σ_k [−½ Σ_i d_i²/σ²_ε,i − ½ δ̂ₛᵀK_ss⁻¹δ̂ₛ] + log p(θ) with d = o − (g(θ) + δ̂).
    """
    return evaluate_gp(theta, hyper, supports, streams, model, priors).logp


@dataclass(frozen=True)
class PsiEvaluation:
    """
    Full conditional of ψ at one value.

    Attributes:
        logp: Data term + penalty + log Gamma prior (-inf if truncated or singular)
        support: Supports selected for this ψ
        bounds: Truncation bounds of that selection
        stream_term: Data term plus penalty alone
        estimate: Conditional discrepancy (None when rejected)
    """

    logp: float
    support: SupportSelection
    bounds: tuple[float, float]
    stream_term: float = -math.inf
    estimate: DiscrepancyEstimate | None = None


def log_conditional_psi(
    psi: float,
    stream: ObservationStream,
    prediction: np.ndarray,
    sigma2_d: float,
    prior: GammaPrior,
    rng: np.random.Generator,
    support: SupportSelection | None = None,
) -> PsiEvaluation:
    """
    Full conditional log-density of a stream's correlation length.

    Supports are re-selected for ψ (fresh grid offset from rng) unless given.
    Values outside the truncation bounds of that selection give -inf.

    Args:
        psi: Correlation length to evaluate
        stream: The stream ψ belongs to
        prediction: g(θ) for this stream at the current θ
        sigma2_d: Current signal variance of the stream
        prior: Gamma prior of ψ
        rng: Generator for the grid offset
        support: Keep this selection instead of re-selecting
    """
    if not (np.isfinite(psi) and psi > 0):
        return PsiEvaluation(-math.inf, support or SupportSelection.from_indices([], stream.n), (math.nan, math.nan))
    if support is None:
        support = select_supporting_points(stream.locations, psi, rng)
    bounds = psi_truncation_bounds(stream.locations, support)
    if not psi_within_bounds(psi, bounds):
        return PsiEvaluation(-math.inf, support, bounds)

    hyper = GpHyperState(psi, sigma2_d / stream.sigma2_eps_mean, stream.sigma2_eps_mean)
    try:
        term, est = stream_gp_term(stream, prediction, hyper, support)
    except SingularityError as e:
        logger.warning(f"ψ proposal rejected for stream {stream.name}: {e}")
        return PsiEvaluation(-math.inf, support, bounds)
    return PsiEvaluation(term + prior.logpdf(psi), support, bounds, term, est)


def gibbs_sigma2(
    delta_s,
    Lambda_ss,
    sigma2_eps_mean: float,
    priors: Priors,
    rng: np.random.Generator,
) -> float:
    """
    Draw the normalized signal variance from its inverse-Gamma conditional.

    σ² ~ IG(α + n_s/2, β + δ̂ₛᵀΛ_ss⁻¹δ̂ₛ / (2σ²_ε)), with Λ_ss the correlation
    matrix of the supports and σ²_ε the stream's mean observation variance.

    Raises:
        SingularityError: If Λ_ss cannot be factorized
    """
    delta_s = np.asarray(delta_s, dtype=float)
    n_s = delta_s.size
    if n_s == 0:
        return float(invgamma.rvs(priors.alpha_sigma2, scale=priors.beta_sigma2, random_state=rng))

    factor = guarded_cholesky(np.asarray(Lambda_ss, dtype=float), 1.0, n_support=n_s)
    quad = max(float(delta_s @ solve(factor, delta_s)), 0.0)
    shape = priors.alpha_sigma2 + 0.5 * n_s
    scale = priors.beta_sigma2 + quad / (2.0 * sigma2_eps_mean)
    return float(invgamma.rvs(shape, scale=scale, random_state=rng))


def correlation_matrix(locations, support: SupportSelection, psi: float) -> np.ndarray:
    """Λ_ss: unit-variance kernel among the supporting locations."""
    t_s = np.asarray(locations, dtype=float)[support.support_indices]
    return kernel_matrix(t_s, t_s, KernelParams(psi, 1.0))
