"""
Tests for DEMC proposals and the Metropolis decision.

Version: 1.0.0
"""
import math

import numpy as np
import pytest

from gpcal.core.errors import ConfigurationError
from gpcal.services.demc import (
    JUMP_GAMMA,
    default_gamma,
    demc_propose,
    draw_gamma,
    metropolis_accept,
)


class TestDemcPropose:
    """Test differential-evolution proposals"""

    def test_identical_partners_leave_only_noise(self):
        """Test that identical partner chains leave only the jitter term"""
        population = np.array([[0.5, -0.5], [1.0, 2.0], [1.0, 2.0]])
        exact = demc_propose(population[0], population, 0, 1.19, 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(exact, population[0])

        noisy = demc_propose(population[0], population, 0, 1.19, 1e-3, np.random.default_rng(0))
        assert noisy.shape == (2,)
        assert np.all(np.abs(noisy - population[0]) < 1e-2)
        assert not np.array_equal(noisy, population[0])

    def test_zero_gamma_and_jitter_is_identity(self):
        """Test that zero gamma and zero jitter return the current point"""
        population = np.random.default_rng(1).normal(size=(4, 3))
        proposal = demc_propose(population[2], population, 2, 0.0, 0.0, np.random.default_rng(2))
        np.testing.assert_array_equal(proposal, population[2])

    def test_partners_exclude_target(self):
        """With unit γ the proposal is the target plus a difference of two other chains"""
        population = np.array([[100.0], [1.0], [2.0]])
        rng = np.random.default_rng(5)
        for _ in range(50):
            proposal = demc_propose(population[0], population, 0, 1.0, 0.0, rng)
            assert proposal[0] in (99.0, 101.0)

    def test_population_too_small(self):
        """Test that a population of two chains is rejected"""
        population = np.zeros((2, 2))
        with pytest.raises(ConfigurationError):
            demc_propose(population[0], population, 0, 1.0, 0.0, np.random.default_rng(0))


class TestGamma:
    """Test the difference scale factor"""

    def test_default_for_two_parameters(self):
        """Test the default jump scale for two parameters"""
        assert default_gamma(2) == pytest.approx(1.19)

    def test_invalid_dimension(self):
        """Test that a non-positive dimension is rejected"""
        with pytest.raises(ConfigurationError):
            default_gamma(0)

    def test_jump_share(self):
        """Test that about one draw in ten uses the jump scale"""
        rng = np.random.default_rng(7)
        draws = np.array([draw_gamma(2, rng) for _ in range(20_000)])
        share = np.mean(draws == JUMP_GAMMA)
        assert share == pytest.approx(0.1, abs=0.01)
        assert set(np.unique(draws)) == {JUMP_GAMMA, default_gamma(2)}

    def test_configured_gamma(self):
        """Test that a configured gamma is used as given"""
        rng = np.random.default_rng(0)
        assert draw_gamma(2, rng, gamma=0.5, jump_probability=0.0) == 0.5


class TestMetropolisAccept:
    """Test the accept/reject decision"""

    def test_uphill_always_accepted(self):
        """Test that uphill moves are always accepted"""
        rng = np.random.default_rng(0)
        assert all(metropolis_accept(-3.0, -1.0, rng) for _ in range(1000))

    def test_equal_density_accepted(self):
        """Test that moves of equal density are accepted"""
        rng = np.random.default_rng(0)
        assert all(metropolis_accept(-1.0, -1.0, rng) for _ in range(1000))

    def test_minus_infinity_rejected(self):
        """Test that a proposal with zero density is rejected"""
        rng = np.random.default_rng(0)
        assert not metropolis_accept(-1.0, -math.inf, rng)
        assert not metropolis_accept(-1.0, math.nan, rng)

    def test_escape_from_minus_infinity(self):
        """Test that a chain at zero density accepts any finite proposal"""
        assert metropolis_accept(-math.inf, -1e6, np.random.default_rng(0))

    def test_generator_advances_identically(self):
        """Test that every decision consumes one uniform draw"""
        a, b = np.random.default_rng(3), np.random.default_rng(3)
        metropolis_accept(-1.0, -math.inf, a)
        metropolis_accept(-1.0, 0.0, b)
        assert a.uniform() == b.uniform()

    def test_half_acceptance_rate(self):
        """Test that a density ratio of one half is accepted half the time"""
        rng = np.random.default_rng(11)
        accepted = sum(metropolis_accept(0.0, math.log(0.5), rng) for _ in range(100_000))
        assert accepted / 100_000 == pytest.approx(0.5, abs=0.01)
