"""
Gradient-based maximization of the scenario densities.

Responsibilities:
- Negative log-density objectives: ignore scenario, and GP scenario with
  hyperparameters and supports frozen before the optimization
- Quasi-Newton minimization (BFGS) with finite-difference gradients
- Hessian at the optimum and the Laplace covariance derived from it
- Gaussian draws around the optimum packaged as a PosteriorArchive

Version: 1.0.0
"""

import logging
import math
import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import partial

import numpy as np
import pandas as pd
from numpy.linalg import LinAlgError
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import line_search

from gpcal.core.errors import InputError, SingularityError
from gpcal.core.gp import SupportSelection, as_locations, nearest_indices
from gpcal.core.models import ForwardModel
from gpcal.core.streams import ObservationStream
from gpcal.schemas.config import OptimizeSettings, RunConfig
from gpcal.schemas.results import ArchiveMetadata, OptimumDocument
from gpcal.services.archive import ID_COLUMNS, PosteriorArchive, psi_column, sigma2_column
from gpcal.services.densities import (
    GpHyperState,
    Priors,
    log_density_gp,
    log_density_ignore,
    resolve_priors,
)

logger = logging.getLogger(__name__)

WOLFE_C1 = 1e-4
WOLFE_C2 = 0.9
MAX_BACKTRACKS = 60

Objective = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class FixedStreamGp:
    """Frozen GP setup of one stream"""

    support: SupportSelection
    psi: float
    sigma2_d: float
    sigma2_eps_mean: float

    @property
    def hyper(self) -> GpHyperState:
        return GpHyperState(self.psi, self.sigma2_d / self.sigma2_eps_mean, self.sigma2_eps_mean)


@dataclass(frozen=True)
class FixedGpConfig:
    """
    GP hyperparameters and supports specified before optimization.

    Attributes:
        streams: Frozen setup per stream name
        n_supports: Requested support count per stream
    """

    streams: dict[str, FixedStreamGp]
    n_supports: int

    def hyper(self) -> dict[str, GpHyperState]:
        return {name: s.hyper for name, s in self.streams.items()}

    def supports(self) -> dict[str, SupportSelection]:
        return {name: s.support for name, s in self.streams.items()}

    def describe(self) -> dict[str, dict]:
        return {
            name: {
                "psi": s.psi,
                "sigma2_d": s.sigma2_d,
                "sigma2_norm": s.hyper.sigma2_norm,
                "support_indices": s.support.support_indices.tolist(),
            }
            for name, s in self.streams.items()
        }


def equidistant_supports(locations, count: int) -> SupportSelection:
    """
    Observations nearest to `count` equidistant nodes spanning the location range.

    Streams with at most `count` locations use every location.
    """
    t = as_locations(locations)
    n = t.size
    if n <= count:
        return SupportSelection.from_indices(np.arange(n), n)
    nodes = np.linspace(t[0], t[-1], count)
    chosen = nearest_indices(t, nodes, 1)
    if len(chosen) < count:
        chosen = np.unique(np.round(np.linspace(0, n - 1, count)).astype(int)).tolist()
    spacing = float(nodes[1] - nodes[0]) if count > 1 else math.nan
    return SupportSelection.from_indices(chosen, n, 0.0, spacing)


def fixed_gp_config(
    streams: Sequence[ObservationStream],
    n_supports: int = 4,
    multiplier: float = 1.5,
    reading: str = "sd",
) -> FixedGpConfig:
    """
    Frozen GP setup: equidistant supports, ψ = range/3, σ²_d from the observation uncertainty.

    Args:
        streams: Observation streams
        n_supports: Supports per stream (all locations if fewer)
        multiplier: Factor on the observation uncertainty
        reading: "sd" gives σ²_d = multiplier²·mean(σ²_ε), "variance" gives multiplier·mean(σ²_ε)

    Raises:
        InputError: If a stream has zero location range
    """
    factor = multiplier**2 if reading == "sd" else multiplier
    result = {}
    for stream in streams:
        r = stream.location_range
        if not r > 0:
            raise InputError("Fixed GP setup needs a positive location range", stream=stream.name)
        result[stream.name] = FixedStreamGp(
            equidistant_supports(stream.locations, n_supports),
            r / 3.0,
            factor * stream.sigma2_eps_mean,
            stream.sigma2_eps_mean,
        )
    return FixedGpConfig(result, n_supports)


def objective_ignore(
    theta, model: ForwardModel, streams: Sequence[ObservationStream], priors: Priors | None = None
) -> float:
    """Negative ignore-scenario log-density (+inf outside the prior box)."""
    return -log_density_ignore(theta, streams, model, priors)


def objective_gp_fixed(
    theta,
    fixed: FixedGpConfig,
    model: ForwardModel,
    streams: Sequence[ObservationStream],
    priors: Priors | None = None,
) -> float:
    """Negative GP-scenario log-density with frozen hyperparameters and supports."""
    return -log_density_gp(theta, fixed.hyper(), fixed.supports(), streams, model, priors)


def _steps(x: np.ndarray, step: float) -> np.ndarray:
    return step * np.maximum(np.abs(x), 1.0)


def central_gradient(objective: Objective, x, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient with steps relative to max(|x_i|, 1)."""
    x = np.asarray(x, dtype=float)
    h = _steps(x, step)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        grad[i] = (objective(x + e) - objective(x - e)) / (2.0 * h[i])
    return grad


def finite_difference_hessian(gradient: Callable[[np.ndarray], np.ndarray], x, step: float = 1e-4) -> np.ndarray:
    """Symmetrized central differences of the gradient."""
    x = np.asarray(x, dtype=float)
    h = _steps(x, step)
    H = np.empty((x.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        H[:, i] = (gradient(x + e) - gradient(x - e)) / (2.0 * h[i])
    return 0.5 * (H + H.T)


def laplace_covariance(hessian: np.ndarray) -> np.ndarray | None:
    """Inverse Hessian if positive definite, else None."""
    if not np.all(np.isfinite(hessian)):
        return None
    try:
        factor = cho_factor(hessian, lower=True)
    except LinAlgError:
        return None
    cov = cho_solve(factor, np.eye(hessian.shape[0]))
    return 0.5 * (cov + cov.T)


@dataclass
class OptimumReport:
    """
    Result of a minimization.

    Attributes:
        theta_hat: Best parameters found
        neg_logp: Objective value there
        hessian: Finite-difference Hessian at theta_hat
        laplace_cov: Inverse Hessian (None if the Hessian is not positive definite)
        converged: Whether a stopping test was met and the Hessian is positive definite
        iterations: Quasi-Newton iterations performed
        message: Reason for stopping
    """

    theta_hat: np.ndarray
    neg_logp: float
    hessian: np.ndarray
    laplace_cov: np.ndarray | None
    converged: bool
    iterations: int
    message: str

    def to_document(
        self,
        scenario: str,
        parameter_names: Sequence[str],
        config_fingerprint: str,
        fixed: FixedGpConfig | None = None,
    ) -> OptimumDocument:
        return OptimumDocument(
            scenario=scenario,
            parameter_names=list(parameter_names),
            theta_hat=self.theta_hat.tolist(),
            neg_logp=self.neg_logp,
            hessian=self.hessian.tolist(),
            laplace_cov=None if self.laplace_cov is None else self.laplace_cov.tolist(),
            converged=self.converged,
            iterations=self.iterations,
            message=self.message,
            fixed_gp=fixed.describe() if fixed is not None else {},
            config_fingerprint=config_fingerprint,
        )


def _backtracking(
    objective: Objective, x: np.ndarray, f: float, slope: float, p: np.ndarray
) -> tuple[float, np.ndarray, float, bool]:
    """
    Backtracking with quadratic interpolation until the sufficient-decrease test holds.

    Returns:
        (alpha, x_new, f_new, ok); on failure the best point tried
    """
    alpha = 1.0
    best = (0.0, x, f)
    for _ in range(MAX_BACKTRACKS):
        x_t = x + alpha * p
        f_t = objective(x_t)
        if math.isfinite(f_t) and f_t < best[2]:
            best = (alpha, x_t, f_t)
        if math.isfinite(f_t) and f_t <= f + WOLFE_C1 * alpha * slope:
            return alpha, x_t, f_t, True
        if math.isfinite(f_t):
            denom = 2.0 * (f_t - f - alpha * slope)
            trial = -slope * alpha**2 / denom if denom > 0 else 0.5 * alpha
            alpha = float(np.clip(trial, 0.1 * alpha, 0.5 * alpha))
        else:
            alpha *= 0.5
    return best[0], best[1], best[2], False


def _wolfe_step(
    objective: Objective,
    grad: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    f: float,
    g: np.ndarray,
    p: np.ndarray,
    f_previous: float,
) -> tuple[np.ndarray, float] | None:
    """
    Strong-Wolfe step along p, refined once by the secant minimizer of the slope.

    The refinement is exact for quadratic objectives and is kept only if it
    satisfies the strong Wolfe conditions with a lower objective.

    Returns:
        (x_new, f_new), or None if no step satisfies the conditions
    """
    slope = float(g @ p)
    with warnings.catch_warnings(), np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        alpha, _, _, f_new, _, slope_new = line_search(
            objective, grad, x, p, gfk=g, old_fval=f, old_old_fval=f_previous, c1=WOLFE_C1, c2=WOLFE_C2
        )
    if alpha is None or f_new is None or not math.isfinite(f_new):
        return None
    x_new = x + alpha * p
    # scipy returns the gradient vector at x_new here (despite documenting a slope)
    if slope_new is not None and np.ndim(slope_new) > 0:
        slope_new = float(np.asarray(slope_new) @ p)

    if slope_new is not None and slope_new > slope:
        alpha_q = alpha * slope / (slope - slope_new)
        if alpha_q > 0 and not math.isclose(alpha_q, alpha):
            x_q = x + alpha_q * p
            f_q = objective(x_q)
            if math.isfinite(f_q) and f_q < f_new and f_q <= f + WOLFE_C1 * alpha_q * slope:
                if abs(float(grad(x_q) @ p)) <= WOLFE_C2 * abs(slope):
                    return x_q, f_q
    return x_new, float(f_new)


def _last_value_cache(gradient: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """Reuse the gradient of the most recent point (the line search ends where BFGS continues)."""
    last: dict[bytes, np.ndarray] = {}

    def cached(x: np.ndarray) -> np.ndarray:
        key = np.asarray(x, dtype=float).tobytes()
        if key not in last:
            last.clear()
            last[key] = np.asarray(gradient(x), dtype=float)
        return last[key]

    return cached


def bfgs_minimize(
    objective: Objective,
    theta0,
    *,
    gtol: float = 1e-8,
    ftol: float = 1e-10,
    max_iter: int = 500,
    fd_step: float = 1e-6,
    hessian_step: float = 1e-4,
    gradient: Callable[[np.ndarray], np.ndarray] | None = None,
) -> OptimumReport:
    """
    Minimize with BFGS inverse-Hessian updates and a strong-Wolfe line search.

    The Wolfe curvature condition keeps sᵀy > 0, so every accepted step updates
    H. If the Wolfe search fails, a backtracking step is taken instead and an
    update it cannot make resets H to a scaled identity.

    Stops when the gradient max-norm drops below gtol or the relative objective
    change |Δf| ≤ ftol·max(|f_old|, |f_new|). Line-search failure or the
    iteration cap return the best point with converged = False.

    Args:
        objective: Function to minimize
        theta0: Start vector; the objective must be finite there
        gtol: Gradient max-norm tolerance
        ftol: Relative objective change tolerance
        max_iter: Iteration cap
        fd_step: Relative step of finite-difference gradients
        hessian_step: Relative step of the Hessian differences
        gradient: Analytic gradient (default: central differences)

    Raises:
        InputError: If the objective is not finite at theta0
    """
    grad = gradient or partial(central_gradient, objective, step=fd_step)
    step_grad = _last_value_cache(grad)
    x = np.asarray(theta0, dtype=float).copy()
    f = objective(x)
    if not math.isfinite(f):
        raise InputError("Objective is not finite at the start point", theta0=x.tolist())

    g = step_grad(x)
    n = x.size
    H = np.eye(n)
    scaled = False
    # first trial step of unit length along -g
    f_previous = f + 0.5 * float(np.linalg.norm(g))
    converged = False
    message = "iteration limit reached"
    iterations = 0

    for iterations in range(1, max_iter + 1):
        if np.max(np.abs(g)) < gtol:
            converged, message = True, "gradient below gtol"
            iterations -= 1
            break
        p = -H @ g
        slope = float(g @ p)
        if slope >= 0:
            H = np.eye(n)
            p = -g
            slope = float(g @ p)

        step = _wolfe_step(objective, step_grad, x, f, g, p, f_previous)
        if step is None:
            _, x_new, f_new, ok = _backtracking(objective, x, f, slope, p)
            if not ok:
                if abs(f - f_new) <= ftol * max(abs(f), abs(f_new)):
                    converged, message = True, "relative objective change below ftol"
                else:
                    message = "line search failed"
                x, f = x_new, f_new
                break
        else:
            x_new, f_new = step

        g_new = step_grad(x_new)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 0:
            if not scaled:
                H = (sy / float(y @ y)) * np.eye(n)
                scaled = True
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        else:
            logger.debug(f"BFGS update skipped at iteration {iterations}: sᵀy={sy:.3e}, H reset")
            H = np.eye(n)
            scaled = False

        small_change = abs(f - f_new) <= ftol * max(abs(f), abs(f_new))
        f_previous = f
        x, f, g = x_new, f_new, g_new
        if small_change:
            converged, message = True, "relative objective change below ftol"
            break
        if np.max(np.abs(g)) < gtol:
            converged, message = True, "gradient below gtol"
            break

    hessian = finite_difference_hessian(grad, x, hessian_step)
    cov = laplace_covariance(hessian)
    if cov is None and converged:
        converged = False
        message += "; Hessian not positive definite"
    level = logging.INFO if converged else logging.WARNING
    logger.log(level, f"BFGS finished after {iterations} iterations: f={f:.10g}, converged={converged} ({message})")
    return OptimumReport(x, float(f), hessian, cov, converged, iterations, message)


def _start_point(settings: OptimizeSettings, priors: Priors) -> np.ndarray:
    if settings.theta0 is not None:
        return np.asarray(settings.theta0, dtype=float)
    lower, upper = priors.theta_lower, priors.theta_upper
    return np.where(
        np.isfinite(lower) & np.isfinite(upper),
        0.5 * (lower + upper),
        np.where(np.isfinite(lower), lower + 1.0, np.where(np.isfinite(upper), upper - 1.0, 0.0)),
    )


def run_optimization(
    config: RunConfig,
    model: ForwardModel,
    streams: Sequence[ObservationStream],
    scenario: str | None = None,
) -> tuple[OptimumReport, FixedGpConfig | None]:
    """
    Optimize the ignore or fixed-GP objective for a validated configuration.

    Returns:
        (report, frozen GP setup or None for the ignore objective)
    """
    settings = config.optimize
    scenario = scenario or settings.scenario
    model.check_streams(streams)
    by_name = {s.name: s for s in streams}
    streams = [by_name[name] for name in model.stream_names]
    priors = resolve_priors(config.priors, model, streams, with_psi=False)

    fixed = None
    if scenario == "gp-fixed":
        fixed = fixed_gp_config(streams, settings.n_supports, settings.signal_multiplier, settings.signal_reading)
        objective = partial(objective_gp_fixed, fixed=fixed, model=model, streams=streams, priors=priors)
    else:
        objective = partial(objective_ignore, model=model, streams=streams, priors=priors)

    theta0 = _start_point(settings, priors)
    logger.info(f"Optimizing {scenario} objective from theta0={theta0.tolist()}")
    report = bfgs_minimize(
        objective,
        theta0,
        gtol=settings.gtol,
        ftol=settings.ftol,
        max_iter=settings.max_iter,
        fd_step=settings.fd_step,
        hessian_step=settings.hessian_step,
    )
    return report, fixed


def laplace_archive(
    report: OptimumReport,
    model: ForwardModel,
    streams: Sequence[ObservationStream],
    config: RunConfig,
    *,
    scenario: str = "ignore",
    fixed: FixedGpConfig | None = None,
    draws: int | None = None,
    seed: int | None = None,
) -> PosteriorArchive:
    """
    Draws from N(θ̂, laplace_cov) as a single-chain archive for the reporting path.

    GP archives carry the frozen ψ and σ² on every row and use equidistant supports.
    logp includes the θ prior of the run, so draws outside the prior box get -inf.

    Raises:
        SingularityError: If the report has no Laplace covariance
    """
    if report.laplace_cov is None:
        raise SingularityError("Laplace covariance unavailable: Hessian not positive definite")
    draws = config.optimize.laplace_draws if draws is None else draws
    seed = config.optimize.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    gp = scenario == "gp-fixed"
    if gp and fixed is None:
        raise InputError("Fixed GP setup required for a gp-fixed Laplace archive")

    priors = resolve_priors(config.priors, model, streams, with_psi=False)
    L = np.linalg.cholesky(report.laplace_cov)
    thetas = report.theta_hat + rng.standard_normal((draws, model.dimension)) @ L.T
    if gp:
        logps = [-objective_gp_fixed(t, fixed, model, streams, priors) for t in thetas]
    else:
        logps = [-objective_ignore(t, model, streams, priors) for t in thetas]

    frame = pd.DataFrame(thetas, columns=list(model.parameter_names))
    frame.insert(0, ID_COLUMNS[2], np.arange(draws))
    frame.insert(0, ID_COLUMNS[1], 0)
    frame.insert(0, ID_COLUMNS[0], 0)
    if gp:
        for name, s in fixed.streams.items():
            frame[psi_column(name)] = s.psi
        for name, s in fixed.streams.items():
            frame[sigma2_column(name)] = s.hyper.sigma2_norm
    frame["logp"] = logps

    metadata = ArchiveMetadata(
        scenario="gp" if gp else "ignore",
        source="laplace",
        parameter_names=list(model.parameter_names),
        stream_names=list(model.stream_names),
        seed=seed,
        config_fingerprint=config.fingerprint(),
        config=config.model_dump(mode="json"),
        chains=1,
        populations=1,
        cycles=draws,
        burn_in=0,
        thin=1,
        samples_per_chain=draws,
        support_rule="equidistant" if gp else "grid",
        n_supports=fixed.n_supports if gp else None,
    )
    return PosteriorArchive.from_frame(frame, metadata)
