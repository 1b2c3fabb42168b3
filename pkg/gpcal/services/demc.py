"""
Differential-evolution proposals and the Metropolis decision.

The proposal for chain i is x_i + γ·(x_a − x_b) + e with a ≠ b ≠ i drawn
uniformly from the chain's population and e ~ N(0, jitter²). It is symmetric,
so acceptance uses the plain density ratio.

Version: 1.0.0
"""

import math

import numpy as np

from gpcal.core.errors import ConfigurationError

JUMP_GAMMA = 1.0
JUMP_PROBABILITY = 0.1
MIN_POPULATION = 3


def default_gamma(dimension: int) -> float:
    """Scale factor 2.38/√(2d)"""
    if dimension < 1:
        raise ConfigurationError("Dimension must be positive", dimension=dimension)
    return 2.38 / math.sqrt(2.0 * dimension)


def draw_gamma(
    dimension: int,
    rng: np.random.Generator,
    *,
    gamma: float | None = None,
    jump_probability: float = JUMP_PROBABILITY,
) -> float:
    """γ for one proposal: 1.0 with the jump probability, else the base factor."""
    if rng.uniform() < jump_probability:
        return JUMP_GAMMA
    return default_gamma(dimension) if gamma is None else gamma


def demc_propose(
    current: np.ndarray,
    population: np.ndarray,
    target_index: int,
    gamma: float,
    jitter,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    DEMC proposal for one chain.

    Args:
        current: Current state of the target chain
        population: Snapshot of every chain in the population, shape (m, d)
        target_index: Row of the target chain in the snapshot
        gamma: Difference scale factor
        jitter: Proposal noise sd, scalar or per dimension
        rng: Generator of the target chain

    Raises:
        ConfigurationError: With fewer than three chains in the population
    """
    population = np.atleast_2d(np.asarray(population, dtype=float))
    m = population.shape[0]
    if m < MIN_POPULATION:
        raise ConfigurationError("DEMC needs at least 3 chains per population", chains=m)
    others = np.delete(np.arange(m), target_index)
    a, b = rng.choice(others, size=2, replace=False)
    noise = np.asarray(jitter, dtype=float) * rng.standard_normal(population.shape[1])
    return np.asarray(current, dtype=float) + gamma * (population[a] - population[b]) + noise


def metropolis_accept(logp_current: float, logp_proposed: float, rng: np.random.Generator) -> bool:
    """
    Accept iff u < exp(logp_proposed − logp_current), u ~ U(0, 1).

    u is always drawn so the generator advances identically whatever the outcome.
    """
    u = rng.uniform()
    if math.isnan(logp_proposed) or logp_proposed == -math.inf:
        return False
    if logp_current == -math.inf:
        return True
    return u < math.exp(min(0.0, logp_proposed - logp_current))
