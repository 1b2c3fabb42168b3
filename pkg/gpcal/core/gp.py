"""
Gaussian-process machinery for per-stream model discrepancy.

Responsibilities:
- Squared-exponential kernel matrices (noise-free; the observation nugget
  only enters K_z = K_ss + σ²_ε I)
- Supporting-point selection on a randomized grid of spacing 3ψ/2
- Truncation bounds for the correlation length ψ
- Conditional expected discrepancy at supporting and remaining locations,
  from support residuals alone or from all residuals projected onto the supports
- Penalty term and conditional discrepancy draws

All functions are pure given an explicit numpy Generator.

Version: 1.0.0
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from gpcal.core.errors import InputError
from gpcal.core.factorization import guarded_cholesky, lower_triangle, solve

logger = logging.getLogger(__name__)

MIN_SUPPORTS = 5
GRID_FACTOR = 1.5
SHRINK_FACTOR = 0.8
MAX_SHRINK_STEPS = 200
BOUND_RTOL = 1e-9


def as_locations(values) -> np.ndarray:
    """
    Validate a location vector.

    Raises:
        InputError: If empty or containing non-finite values
    """
    locs = np.atleast_1d(np.asarray(values, dtype=float))
    if locs.ndim != 1:
        raise InputError("Locations must be one-dimensional", shape=locs.shape)
    if locs.size == 0:
        raise InputError("Locations must not be empty")
    if not np.all(np.isfinite(locs)):
        raise InputError("Locations must be finite", n_bad=int(np.sum(~np.isfinite(locs))))
    return locs


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential kernel hyperparameters (ψ in covariate units, σ²_d in units²)."""

    psi: float
    sigma2_d: float

    def __post_init__(self):
        if not (np.isfinite(self.psi) and self.psi > 0):
            raise InputError("Correlation length must be positive", psi=self.psi)
        if not (np.isfinite(self.sigma2_d) and self.sigma2_d >= 0):
            raise InputError("Signal variance must be non-negative", sigma2_d=self.sigma2_d)


@dataclass(frozen=True)
class SupportSelection:
    """
    Partition of a stream's locations into supporting and remaining indices.

    Attributes:
        support_indices: Ascending indices of supporting locations (s)
        remaining_indices: Ascending complement (r)
        grid_offset: Grid shift drawn for this selection
        spacing: Grid spacing actually used (after any shrinking)
    """

    support_indices: np.ndarray
    remaining_indices: np.ndarray
    grid_offset: float = 0.0
    spacing: float = float("nan")

    @classmethod
    def from_indices(
        cls, support_indices, n: int, grid_offset: float = 0.0, spacing: float = float("nan")
    ) -> "SupportSelection":
        support = np.unique(np.asarray(support_indices, dtype=int))
        if support.size and (support[0] < 0 or support[-1] >= n):
            raise InputError("Support index out of range", n=n)
        remaining = np.setdiff1d(np.arange(n), support)
        return cls(support, remaining, float(grid_offset), float(spacing))

    @property
    def n_support(self) -> int:
        return int(self.support_indices.size)

    @property
    def n(self) -> int:
        return int(self.support_indices.size + self.remaining_indices.size)


@dataclass(frozen=True)
class DiscrepancyEstimate:
    """
    Conditional expected discrepancy given residuals at supporting locations.

    Attributes:
        delta_s: Expected discrepancy at supporting locations
        delta_r: Expected discrepancy at remaining locations
        penalty_quadform: δ̂ₛᵀ K_ss⁻¹ δ̂ₛ
        K_ss: Kernel among supporting locations
        K_z: K_ss plus the noise covariance of the support residuals
        weights: K_z⁻¹ z_s (z̃ₛ for projected residuals)
    """

    delta_s: np.ndarray
    delta_r: np.ndarray
    penalty_quadform: float
    K_ss: np.ndarray
    K_z: np.ndarray
    weights: np.ndarray

    def full(self, support: SupportSelection) -> np.ndarray:
        """Expected discrepancy at every location, in location order."""
        delta = np.zeros(support.n)
        delta[support.support_indices] = self.delta_s
        delta[support.remaining_indices] = self.delta_r
        return delta


def kernel_matrix(locs_a, locs_b, params: KernelParams) -> np.ndarray:
    """
    Squared-exponential covariance σ²_d·exp(−(x_p − x_q)²/ψ²) between two location sets.

    The observation nugget is not included.
    """
    a = as_locations(locs_a)
    b = as_locations(locs_b)
    sqdist = cdist(a[:, None], b[:, None], metric="sqeuclidean")
    return params.sigma2_d * np.exp(-sqdist / params.psi**2)


def psi_truncation_bounds(locs, support: SupportSelection) -> tuple[float, float]:
    """
    Admissible correlation-length interval for a support selection.

    Returns:
        (lower, upper): 2/3 of the mean spacing between supporting locations,
        and the range max(t) − min(t)

    Raises:
        InputError: With fewer than two locations or supports
    """
    t = as_locations(locs)
    if t.size < 2:
        raise InputError("Truncation bounds need at least two locations", n=int(t.size))
    if support.n_support < 2:
        raise InputError("Truncation bounds need at least two supports", n_support=support.n_support)
    upper = float(t.max() - t.min())
    lower = float(2.0 / 3.0 * np.mean(np.diff(t[support.support_indices])))
    return lower, upper


def psi_within_bounds(psi: float, bounds: tuple[float, float]) -> bool:
    lower, upper = bounds
    return lower * (1.0 - BOUND_RTOL) <= psi <= upper * (1.0 + BOUND_RTOL)


def minimum_index_gap(n: int) -> int:
    """Largest index gap in {3, 2, 1} that still leaves room for min(5, n) supports."""
    required = min(MIN_SUPPORTS, n)
    for gap in (3, 2):
        if (required - 1) * gap + 1 <= n:
            return gap
    return 1


def _grid_nodes(lo: float, hi: float, spacing: float, offset: float) -> np.ndarray:
    count = int(np.floor((hi - lo + offset) / spacing + 1e-9)) + 1
    nodes = lo - offset + spacing * np.arange(count + 1)
    nodes = nodes[: np.searchsorted(nodes, hi, side="left") + 1]
    return np.clip(nodes, lo, hi)


def nearest_indices(t: np.ndarray, nodes: np.ndarray, gap: int) -> list[int]:
    """Index of the observation nearest to each node, advancing past collisions by at least gap."""
    n = t.size
    chosen: list[int] = []
    right = np.clip(np.searchsorted(t, nodes), 1, n - 1) if n > 1 else np.zeros(nodes.size, int)
    for node, r in zip(nodes, right, strict=True):
        idx = int(r) if n == 1 or abs(t[r] - node) < abs(node - t[r - 1]) else int(r - 1)
        if chosen and idx < chosen[-1] + gap:
            idx = chosen[-1] + gap
        if idx >= n:
            break
        chosen.append(idx)
    return chosen


def select_supporting_points(
    locs, psi: float, rng: np.random.Generator, *, offset: float | None = None
) -> SupportSelection:
    """
    Choose supporting locations nearest to a grid of spacing 3ψ/2.

    The grid starts at min(t) − u with u ~ U[0, 3ψ/2) drawn from rng (or the given
    offset), is clipped to the location range, and each node takes its nearest
    observation. Consecutive supports keep a minimum index gap, and the spacing
    shrinks until at least min(5, n) supports result.

    Args:
        locs: Sorted locations of one stream
        psi: Correlation length
        rng: Random generator for the grid offset
        offset: Fixed offset instead of a random draw

    Returns:
        SupportSelection over the stream's indices
    """
    t = as_locations(locs)
    if not (np.isfinite(psi) and psi > 0):
        raise InputError("Correlation length must be positive", psi=psi)

    n = t.size
    required = min(MIN_SUPPORTS, n)
    spacing = GRID_FACTOR * psi
    fraction = rng.uniform() if offset is None else float(offset) / spacing
    if n <= required:
        return SupportSelection.from_indices(np.arange(n), n, fraction * spacing, spacing)

    lo, hi = float(t[0]), float(t[-1])
    gap = minimum_index_gap(n)
    chosen: list[int] = []
    for _ in range(MAX_SHRINK_STEPS):
        nodes = _grid_nodes(lo, hi, spacing, fraction * spacing)
        chosen = nearest_indices(t, nodes, gap)
        if len(chosen) >= required:
            break
        spacing *= SHRINK_FACTOR
    else:
        logger.debug(f"Grid shrinking exhausted for psi={psi:.4g}, using even spacing")
        chosen = np.unique(np.round(np.linspace(0, n - 1, required)).astype(int)).tolist()

    return SupportSelection.from_indices(chosen, n, fraction * spacing, spacing)


def _noise_at(sigma2_eps, indices: np.ndarray, n: int) -> np.ndarray:
    s2 = np.asarray(sigma2_eps, dtype=float)
    if s2.ndim == 0:
        s2 = np.full(n, float(s2))
    if np.any(~np.isfinite(s2)) or np.any(s2 <= 0):
        raise InputError("Observation variance must be positive and finite")
    return s2[indices]


def _conditioned_estimate(
    t: np.ndarray,
    support: SupportSelection,
    params: KernelParams,
    z_s: np.ndarray,
    noise_cov: np.ndarray,
    noise_scale: float,
) -> DiscrepancyEstimate:
    t_s = t[support.support_indices]
    K_ss = kernel_matrix(t_s, t_s, params)
    K_z = K_ss + noise_cov
    factor = guarded_cholesky(K_z, params.sigma2_d + noise_scale, psi=params.psi, spacing=support.spacing)
    weights = solve(factor, z_s)

    delta_s = K_ss @ weights
    if support.remaining_indices.size:
        delta_r = kernel_matrix(t[support.remaining_indices], t_s, params) @ weights
    else:
        delta_r = np.zeros(0)
    # wᵀ K_ss w equals δ̂ₛᵀ K_ss⁻¹ δ̂ₛ and stays defined when σ²_d = 0
    penalty = max(float(weights @ delta_s), 0.0)

    return DiscrepancyEstimate(delta_s, delta_r, penalty, K_ss, K_z, weights)


def conditional_discrepancy(
    residuals_s,
    locs,
    support: SupportSelection,
    params: KernelParams,
    sigma2_eps,
) -> DiscrepancyEstimate:
    """
    Expected discrepancy conditioned on residuals at the supporting locations.

    δ̂ₛ = K_ss K_z⁻¹ z_s and δ̂ᵣ = K_rs K_z⁻¹ z_s with K_z = K_ss + σ²_ε I.

    Args:
        residuals_s: Model-data residuals z_s at the supporting locations
        locs: All locations of the stream
        support: Support partition of locs
        params: Kernel hyperparameters
        sigma2_eps: Observation variance, scalar or one value per location

    Raises:
        InputError: On length mismatch or non-positive observation variance
        SingularityError: If K_z cannot be factorized
    """
    t = as_locations(locs)
    z_s = np.asarray(residuals_s, dtype=float)
    if z_s.shape != (support.n_support,):
        raise InputError(
            "Residual length must equal the number of supports",
            n_residuals=z_s.size,
            n_support=support.n_support,
        )
    noise = _noise_at(sigma2_eps, support.support_indices, t.size)
    return _conditioned_estimate(t, support, params, z_s, np.diag(noise), float(noise.mean()))


def projected_residuals(
    residuals, locs, support: SupportSelection, psi: float, sigma2_eps
) -> tuple[np.ndarray, np.ndarray]:
    """
    Residuals of every record collapsed onto the supporting locations.

    Under δᵣ = K_rs K_ss⁻¹ δₛ each record observes a kernel-weighted mix of δₛ.
    With B the unit-variance kernel between all locations and the supports,
    Σ = diag(σ²_ε) and G = BᵀΣ⁻¹B, the generalized least-squares statistic is
    z̃ₛ = Λ_ss G⁻¹ BᵀΣ⁻¹ z with noise covariance N = Λ_ss G⁻¹ Λ_ss. Neither
    depends on σ²_d. When every record is a support, z̃ₛ = z and N = Σ.

    Returns:
        (z̃ₛ, N)

    Raises:
        InputError: On length mismatch or non-positive observation variance
        SingularityError: If G cannot be factorized
    """
    t = as_locations(locs)
    z = np.asarray(residuals, dtype=float)
    if z.shape != t.shape:
        raise InputError("Residual length must equal the number of locations", n_residuals=z.size, n=t.size)
    noise = _noise_at(sigma2_eps, np.arange(t.size), t.size)
    if support.remaining_indices.size == 0:
        return z[support.support_indices], np.diag(noise[support.support_indices])

    unit = KernelParams(psi, 1.0)
    t_s = t[support.support_indices]
    B = kernel_matrix(t, t_s, unit)
    Lambda_ss = kernel_matrix(t_s, t_s, unit)
    weighted = B / noise[:, None]
    G = B.T @ weighted
    factor = guarded_cholesky(G, float(np.trace(G)) / support.n_support, psi=psi, spacing=support.spacing)
    z_tilde = Lambda_ss @ solve(factor, weighted.T @ z)
    N = Lambda_ss @ solve(factor, Lambda_ss)
    return z_tilde, 0.5 * (N + N.T)


def projected_discrepancy(
    residuals,
    locs,
    support: SupportSelection,
    params: KernelParams,
    sigma2_eps,
) -> DiscrepancyEstimate:
    """
    Expected discrepancy conditioned on the residuals of all records.

    Every record informs δₛ through the kernel interpolation. The supports take
    z̃ₛ from projected_residuals and K_z = K_ss + N; δ̂ₛ, δ̂ᵣ and the penalty
    follow as in conditional_discrepancy, which this reduces to when every
    record is a support.

    Raises:
        InputError: On length mismatch or non-positive observation variance
        SingularityError: If G or K_z cannot be factorized
    """
    t = as_locations(locs)
    z_tilde, N = projected_residuals(residuals, t, support, params.psi, sigma2_eps)
    return _conditioned_estimate(t, support, params, z_tilde, N, float(np.trace(N)) / support.n_support)


def log_discrepancy_penalty(est: DiscrepancyEstimate) -> float:
    """Log-scale penalty −½ δ̂ₛᵀ K_ss⁻¹ δ̂ₛ."""
    return -0.5 * est.penalty_quadform


def conditional_covariance(
    locs, support: SupportSelection, params: KernelParams, est: DiscrepancyEstimate
) -> np.ndarray:
    """GP covariance of the discrepancy at all locations given z_s: K_tt − K_ts K_z⁻¹ K_st."""
    t = as_locations(locs)
    t_s = t[support.support_indices]
    K_tt = kernel_matrix(t, t, params)
    K_ts = kernel_matrix(t, t_s, params)
    factor = guarded_cholesky(est.K_z, float(np.max(np.diag(est.K_z))), psi=params.psi)
    cov = K_tt - K_ts @ solve(factor, K_ts.T)
    return 0.5 * (cov + cov.T)


def gp_conditional_draw(
    est: DiscrepancyEstimate,
    locs,
    support: SupportSelection,
    params: KernelParams,
    sigma2_eps,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    One discrepancy realization at all locations given the residuals at supports.

    Mean is δ̂ (supports and remaining locations), covariance the GP conditional
    covariance. A zero signal variance returns zeros.

    Raises:
        SingularityError: If the conditional covariance cannot be factorized
    """
    t = as_locations(locs)
    _noise_at(sigma2_eps, support.support_indices, t.size)
    if params.sigma2_d == 0.0:
        return np.zeros(t.size)

    mean = est.full(support)
    cov = conditional_covariance(t, support, params, est)
    factor = guarded_cholesky(cov, params.sigma2_d, psi=params.psi, spacing=support.spacing)
    return mean + lower_triangle(factor) @ rng.standard_normal(t.size)
