"""
Tests for the block-at-a-time DEMC sampler.

Version: 1.0.0
"""
import math

import numpy as np
import pandas as pd
import pytest
from scipy.stats import norm

from gpcal.core.errors import ConfigurationError, InitializationError
from gpcal.core.gp import psi_truncation_bounds, psi_within_bounds
from gpcal.core.models import BasicExampleModel, linear_gaussian_test_model
from gpcal.core.streams import ObservationStream
from gpcal.schemas.config import BasicExampleConfig, LinearGaussianConfig, RunConfig
from gpcal.services.densities import evaluate_gp, resolve_priors
from gpcal.services.reporting import predictive_posterior
from gpcal.services.sampler import BlockSampler, run_sampler
from gpcal.services.synthetic import generate_basic_example, generate_linear_gaussian


def _config(scenario, **sampler):
    return RunConfig.model_validate({"scenario": scenario, "sampler": sampler})


@pytest.fixture
def linear_problem():
    data = generate_linear_gaussian(LinearGaussianConfig())
    model = linear_gaussian_test_model(2, data.design, lower=[-10, -10], upper=[10, 10])
    return model, data.observation_streams()


@pytest.fixture
def basic_problem():
    data = generate_basic_example(BasicExampleConfig(n_rich=100))
    rich, sparse = data.by_name("rich"), data.by_name("sparse")
    model = BasicExampleModel(
        sparse.locations, rich.locations, 0.1, data.model.x1_sparse, data.model.xbar_rich, (0, 0), (5, 5)
    )
    return model, data.observation_streams()


class TestSamplerSetup:
    """Test sampler validation and initialization"""

    def test_too_few_chains(self, linear_problem):
        """Test that fewer than three chains per population are rejected"""
        model, streams = linear_problem
        config = _config("ignore", chains=3, populations=1)
        with pytest.raises(ConfigurationError):
            run_sampler(config, model, streams)

    def test_unknown_scenario(self, linear_problem):
        """Test that an unknown scenario is rejected"""
        model, streams = linear_problem
        config = _config("ignore", cycles=0)
        priors = resolve_priors(config.priors, model, streams)
        with pytest.raises(ConfigurationError):
            BlockSampler(model, streams, config.sampler, priors, "maybe")

    def test_missing_stream(self, linear_problem):
        """Test that a model stream without observations is rejected"""
        model, _ = linear_problem
        with pytest.raises(ConfigurationError):
            run_sampler(_config("ignore", cycles=0), model, [])

    def test_no_finite_start(self, linear_problem):
        """Test that an initialization box without finite density is rejected"""
        model, streams = linear_problem
        config = _config("ignore", cycles=1, init_lower=[20.0, 20.0], init_upper=[21.0, 21.0])
        with pytest.raises(InitializationError) as exc:
            run_sampler(config, model, streams)
        assert exc.value.exit_code == 3


class TestSamplerArchive:
    """Test archive layout and reproducibility"""

    def test_zero_cycles_gives_empty_archive(self, linear_problem):
        """Test that zero cycles give an empty archive"""
        model, streams = linear_problem
        archive = run_sampler(_config("ignore", cycles=0), model, streams)
        assert archive.is_empty
        assert archive.metadata.samples_per_chain == 0
        assert archive.metadata.scenario == "ignore"
        assert list(archive.samples.columns) == ["chain", "population", "cycle", "theta0", "theta1", "logp"]

    def test_thinning_and_burn_in(self, linear_problem):
        """Test that burn-in and thinning set the archive length"""
        model, streams = linear_problem
        archive = run_sampler(_config("ignore", cycles=20, burn_in=5, thin=4), model, streams)
        assert sorted(archive.samples["cycle"].unique()) == [5, 9, 13, 17]
        assert len(archive) == 8 * 4
        assert archive.metadata.samples_per_chain == 4
        assert set(archive.samples["population"]) == {0, 1}

    def test_same_seed_same_archive(self, linear_problem):
        """Test that the same seed gives the same archive"""
        model, streams = linear_problem
        config = _config("ignore", cycles=30, burn_in=0, thin=1)
        first = run_sampler(config, model, streams, rng_seed=17)
        second = run_sampler(config, model, streams, rng_seed=17)
        pd.testing.assert_frame_equal(first.samples, second.samples)
        assert first.metadata == second.metadata

    def test_different_seed_different_archive(self, linear_problem):
        """Test that a different seed gives a different archive"""
        model, streams = linear_problem
        config = _config("ignore", cycles=10, burn_in=0, thin=1)
        first = run_sampler(config, model, streams, rng_seed=1)
        second = run_sampler(config, model, streams, rng_seed=2)
        assert not first.samples.equals(second.samples)

    def test_worker_count_does_not_change_results(self, basic_problem):
        """Test that the worker count does not change the archive"""
        model, streams = basic_problem
        config = _config("gp", cycles=6, burn_in=0, thin=1)
        serial = run_sampler(config, model, streams, workers=1)
        threaded = run_sampler(config, model, streams, workers=3)
        pd.testing.assert_frame_equal(serial.samples, threaded.samples)

    def test_gp_archive_columns(self, basic_problem):
        """Test the columns of a gp archive"""
        model, streams = basic_problem
        archive = run_sampler(_config("gp", cycles=10, burn_in=0, thin=2), model, streams)
        assert archive.stream_names == ["sparse", "rich"]
        for name in archive.stream_names:
            assert np.all(archive.psi(name) > 0)
            assert np.all(archive.sigma2(name) > 0)
        assert set(archive.metadata.acceptance) == {"psi_rich", "psi_sparse", "theta"}
        assert archive.metadata.config_fingerprint == _config("gp", cycles=10, burn_in=0, thin=2).fingerprint()


class TestCachedDensity:
    """The cached log-density always equals a fresh evaluation"""

    def test_gp_cache_matches_recomputation(self, basic_problem):
        """Test that cached densities match a fresh evaluation"""
        model, streams = basic_problem
        config = _config("gp", cycles=8)
        priors = resolve_priors(config.priors, model, streams)
        sampler = BlockSampler(model, streams, config.sampler, priors, "gp")
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(4).spawn(config.sampler.chains)]
        chains = sampler.initialize(rngs)

        for cycle in range(8):
            snapshot = sampler._snapshot(chains)
            for chain, rng in zip(chains, rngs, strict=True):
                sampler._cycle(chain, snapshot, rng, cycle)
            for chain in chains:
                fresh = evaluate_gp(chain.theta, chain.hyper, chain.support, sampler.streams, model, priors)
                assert chain.cached_logp == pytest.approx(fresh.logp, rel=1e-12)

    def test_psi_stays_within_truncation(self, basic_problem):
        """Test that sampled length scales stay within the truncation bounds"""
        model, streams = basic_problem
        config = _config("gp", cycles=10)
        priors = resolve_priors(config.priors, model, streams)
        sampler = BlockSampler(model, streams, config.sampler, priors, "gp")
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(6).spawn(config.sampler.chains)]
        chains = sampler.initialize(rngs)
        for cycle in range(10):
            snapshot = sampler._snapshot(chains)
            for chain, rng in zip(chains, rngs, strict=True):
                sampler._cycle(chain, snapshot, rng, cycle)
        for chain in chains:
            if not math.isfinite(chain.cached_logp):
                continue
            for stream in sampler.streams:
                bounds = psi_truncation_bounds(stream.locations, chain.support[stream.name])
                assert psi_within_bounds(chain.hyper[stream.name].psi, bounds)


def batch_standard_error(archive, column, batches_per_chain=10):
    """Standard error of a column mean from batch means within each chain."""
    matrix = archive.chain_matrix(column)
    size = matrix.shape[1] // batches_per_chain
    means = matrix[:, : size * batches_per_chain].reshape(matrix.shape[0], batches_per_chain, size).mean(axis=2)
    return float(means.std(ddof=1) / math.sqrt(means.size))


@pytest.mark.slow
@pytest.mark.integration
class TestConjugatePosterior:
    """Ignore scenario against the closed-form linear-Gaussian posterior"""

    def test_posterior_moments(self, linear_problem):
        """Test that long runs match the conjugate posterior mean and covariance"""
        model, streams = linear_problem
        config = _config(
            "ignore",
            chains=8,
            cycles=5000,
            burn_in=1000,
            thin=1,
            init_lower=[0.0, -1.5],
            init_upper=[2.0, 0.5],
            seed=3,
        )
        archive = run_sampler(config, model, streams)
        mean, cov = model.posterior_moments(streams[0].observations, streams[0].sigma2_eps)
        sd = np.sqrt(np.diag(cov))

        draws = archive.theta()
        for j, name in enumerate(model.parameter_names):
            assert abs(draws[:, j].mean() - mean[j]) < 3 * batch_standard_error(archive, name)
        # off-diagonal entries are measured against the product of the standard deviations
        np.testing.assert_array_less(np.abs(np.cov(draws.T) - cov), 0.1 * np.outer(sd, sd))


@pytest.mark.slow
@pytest.mark.integration
class TestStandardNormalTarget:
    """DEMC and Metropolis blocks leave a 2-d standard normal invariant"""

    def test_stationary_moments(self):
        """Test that chains from a wide box settle on the standard normal moments"""
        model = linear_gaussian_test_model(2, np.eye(2), lower=[-10, -10], upper=[10, 10])
        stream = ObservationStream.create("linear", [0.0, 1.0], [0.0, 0.0], 1.0)
        config = _config("ignore", cycles=4000, burn_in=1000, thin=1, init_lower=[-3.0, -3.0], init_upper=[3.0, 3.0])
        archive = run_sampler(config, model, [stream], rng_seed=11)

        draws = archive.theta()
        for j, name in enumerate(model.parameter_names):
            assert abs(draws[:, j].mean()) < 3 * batch_standard_error(archive, name)
            assert np.mean(draws[:, j] < 1.0) == pytest.approx(norm.cdf(1.0), abs=0.03)
        np.testing.assert_array_less(np.abs(np.cov(draws.T) - np.eye(2)), 0.1)


ALLOCATION_SEEDS = (1, 2, 3, 4, 5)


@pytest.fixture(scope="class")
def allocation_runs():
    """Ignore and GP inversions of the default basic example for five data and sampler seeds"""
    runs = []
    for seed in ALLOCATION_SEEDS:
        data = generate_basic_example(BasicExampleConfig(seed=seed))
        rich, sparse = data.by_name("rich"), data.by_name("sparse")
        model = BasicExampleModel(
            sparse.locations, rich.locations, 0.1, data.model.x1_sparse, data.model.xbar_rich, (0, 0), (5, 5)
        )
        streams = data.observation_streams()
        run = {}
        for scenario in ("ignore", "gp"):
            config = _config(scenario, cycles=2000, burn_in=1000, thin=4, seed=seed)
            archive = run_sampler(config, model, streams)
            bands = predictive_posterior(archive, model, streams, np.random.default_rng(seed), max_draws=200)
            run[scenario] = (archive, bands["sparse"])
        runs.append(run)
    return runs


@pytest.mark.slow
@pytest.mark.integration
class TestBasicExampleAllocation:
    """Where the basic example puts its model discrepancy"""

    def test_sparse_observations_inside_process_band(self, allocation_runs):
        """Test that the GP process band covers sparse points the ignore band misses"""
        hits = 0
        for run in allocation_runs:
            ignore_outside = int(run["ignore"][1].outside("model").sum())
            gp_outside = int(run["gp"][1].outside("process").sum())
            hits += ignore_outside >= 5 and gp_outside <= 1
        assert hits >= 4

    def test_gp_widens_parameter_interval(self, allocation_runs):
        """Test that the 95% interval of b is wider with the GP on every seed"""
        for run in allocation_runs:
            widths = {}
            for scenario, (archive, _) in run.items():
                lo, hi = np.quantile(archive.samples["b"].to_numpy(), [0.025, 0.975])
                widths[scenario] = hi - lo
            assert widths["gp"] > widths["ignore"]

    def test_discrepancy_identified_in_rich_stream(self, allocation_runs):
        """Test that the rich stream carries the larger discrepancy near unit scale"""
        hits = 0
        for run in allocation_runs:
            archive = run["gp"][0]
            rich, sparse = np.median(archive.sigma2("rich")), np.median(archive.sigma2("sparse"))
            hits += rich > sparse and -1.5 <= np.median(np.log(archive.sigma2("rich"))) <= 1.5
        assert hits >= 4
