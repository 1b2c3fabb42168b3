"""
Tests for forward models and synthetic data generation.

Version: 1.0.0
"""
import numpy as np
import pytest

from gpcal.core.errors import ConfigurationError, InputError
from gpcal.core.models import (
    BasicExampleModel,
    ForwardModel,
    basic_example_predict,
    exact_mean,
    linear_gaussian_test_model,
    load_external_model,
    oscillating_truth,
)
from gpcal.core.streams import ObservationStream
from gpcal.schemas.config import BasicExampleConfig, LinearGaussianConfig, RunConfig
from gpcal.services.synthetic import generate_basic_example, generate_linear_gaussian, generate_synthetic_data


def constant_model(streams, value=0.0):
    """Factory used by the entry-point tests"""

    class Constant(ForwardModel):
        def __init__(self):
            super().__init__(["level"], {s.name: s.locations for s in streams})

        def _predict(self, theta):
            return {s.name: np.full(s.n, theta[0] + value) for s in streams}

    return Constant()


class TestBasicExample:
    """Test the two-stream example"""

    def test_sparse_prediction(self):
        """Test a sparse stream prediction against a hand computed value"""
        sparse, _ = basic_example_predict((1.0, 2.0), [1.0], [0.7, 1.0], 0.3, xbar_rich=0.85)
        assert sparse[0] == pytest.approx(1.17)

    def test_zero_parameters(self):
        """Test that zero parameters predict zero"""
        sparse, rich = basic_example_predict((0.0, 0.0), [0.6, 1.2], [0.8, 0.9], 0.3)
        np.testing.assert_array_equal(sparse, 0.0)
        np.testing.assert_array_equal(rich, 0.0)

    def test_rich_prediction_at_bias(self):
        """Test that the rich stream prediction vanishes at the bias"""
        _, rich = basic_example_predict((1.0, 2.0), [0.0, 1.0], [0.3], 0.3)
        assert rich[0] == 0.0

    def test_model_streams(self):
        """Test that the model predicts every stream at its locations"""
        model = BasicExampleModel([0.6, 1.2], [0.8, 0.9, 0.95], 0.1, 0.6, 0.85)
        predictions = model.evaluate([1.0, 2.0])
        assert model.parameter_names == ("a", "b")
        assert predictions["sparse"].shape == (2,)
        assert predictions["rich"].shape == (3,)

    def test_wrong_parameter_length(self):
        """Test that a parameter vector of the wrong length is rejected"""
        model = BasicExampleModel([0.6], [0.8], 0.1, 0.6, 0.8)
        with pytest.raises(InputError):
            model.evaluate([1.0])

    def test_invalid_bounds(self):
        """Test that inverted parameter bounds are rejected"""
        with pytest.raises(ConfigurationError):
            BasicExampleModel([0.6], [0.8], 0.1, 0.6, 0.8, lower=(1, 1), upper=(0, 2))

    def test_exact_mean_is_order_independent(self):
        """Test that the exact mean does not depend on the order"""
        values = np.random.default_rng(0).uniform(0.7, 1.0, 1000)
        assert exact_mean(values) == exact_mean(values[::-1])


class TestLinearGaussian:
    """Test the conjugate test model"""

    def test_rank_deficient_design(self):
        """Test that a rank deficient design is rejected"""
        with pytest.raises(ConfigurationError):
            linear_gaussian_test_model(2, [[1.0, 2.0], [2.0, 4.0]])

    def test_posterior_moments(self):
        """Test the closed form posterior moments"""
        design = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        model = linear_gaussian_test_model(2, design)
        mean, cov = model.posterior_moments([1.0, 2.0, 3.0], 1.0)
        np.testing.assert_allclose(mean, [1.0, 2.0])
        np.testing.assert_allclose(cov, np.linalg.inv(design.T @ design))


class TestStreams:
    """Test observation streams"""

    def test_sorted_on_create(self):
        """Test that records are sorted by location on creation"""
        stream = ObservationStream.create("s", [2.0, 0.0, 1.0], [20.0, 0.0, 10.0], [2.0, 0.5, 1.0])
        np.testing.assert_array_equal(stream.locations, [0.0, 1.0, 2.0])
        np.testing.assert_array_equal(stream.sigma2_eps, [0.5, 1.0, 2.0])
        assert stream.sigma2_eps_mean == pytest.approx(7.0 / 6.0)
        assert stream.location_range == 2.0

    def test_invalid_name(self):
        """Test that a stream name with spaces is rejected"""
        with pytest.raises(InputError):
            ObservationStream.create("a b", [0.0], [0.0], 1.0)

    def test_length_mismatch(self):
        """Test that columns of different lengths are rejected"""
        with pytest.raises(InputError):
            ObservationStream.create("s", [0.0, 1.0], [0.0], 1.0)


class TestExternalModel:
    """Test entry-point loading"""

    def test_load(self):
        """Test that an external factory is loaded with its options"""
        stream = ObservationStream.create("s", [0.0, 1.0], [1.0, 1.0], 1.0)
        model = load_external_model("tests.test_models:constant_model", [stream], {"value": 2.0})
        np.testing.assert_array_equal(model.evaluate([1.0])["s"], [3.0, 3.0])

    def test_malformed_entry_point(self):
        """Test that an entry point without a colon is rejected"""
        with pytest.raises(ConfigurationError):
            load_external_model("no_colon", [])

    def test_missing_module(self):
        """Test that a missing module is a configuration error"""
        with pytest.raises(ConfigurationError):
            load_external_model("does_not_exist.anywhere:factory", [])

    def test_factory_returns_wrong_type(self):
        """Test that a factory returning a non-model is rejected"""
        with pytest.raises(ConfigurationError):
            load_external_model("builtins:list", [])

    def test_not_callable(self):
        """Test that a non-callable entry point is rejected"""
        with pytest.raises(ConfigurationError):
            load_external_model("math:pi", [])


class TestSyntheticData:
    """Test generated data sets"""

    def test_basic_example_layout(self):
        """Test the stream sizes and location ranges of the basic example"""
        data = generate_basic_example(BasicExampleConfig())
        rich, sparse = data.by_name("rich"), data.by_name("sparse")
        assert rich.locations.size == 1000
        assert sparse.locations.size == 10
        assert np.all(np.diff(rich.locations) >= 0)
        assert np.all((rich.locations >= 0.7) & (rich.locations <= 1.0))
        assert np.all((sparse.locations >= 0.5) & (sparse.locations <= 1.5))
        assert data.truth.parameters == {"a": 1.0, "b": 2.0}
        assert data.model.xbar_rich == pytest.approx(0.85, abs=0.02)

    def test_noise_level_follows_fractions(self):
        """Test that the noise variance follows the configured fractions"""
        data = generate_basic_example(BasicExampleConfig())
        rich = data.by_name("rich")
        assert rich.noise_sd == pytest.approx(0.03 * exact_mean(rich.truth))
        residual_sd = np.std(rich.observations - rich.truth)
        assert residual_sd == pytest.approx(rich.noise_sd, rel=0.1)

    def test_truth_uses_biased_constant(self):
        """Test that the rich truth uses the biased constant"""
        data = generate_basic_example(BasicExampleConfig())
        rich = data.by_name("rich")
        expected = data.model.x1_sparse + 2.0 * (rich.locations - 0.3)
        np.testing.assert_allclose(rich.truth, expected)

    def test_same_seed_same_data(self):
        """Test that the same seed generates the same data"""
        a = generate_basic_example(BasicExampleConfig(seed=5))
        b = generate_basic_example(BasicExampleConfig(seed=5))
        np.testing.assert_array_equal(a.by_name("rich").observations, b.by_name("rich").observations)

    def test_linear_gaussian(self):
        """Test the linear-Gaussian generator output shapes"""
        data = generate_linear_gaussian(LinearGaussianConfig(n=30, theta_true=[1.0, 2.0, 3.0]))
        assert data.design.shape == (30, 3)
        assert data.streams[0].name == "linear"

    def test_oscillating_truth(self):
        """Test the oscillating line truth at a few points"""
        x = np.array([0.0, 1.0, 2.0])
        np.testing.assert_allclose(oscillating_truth(x, 1.0, 0.5, 1.0, 4.0), [1.0, 2.5, 2.0], atol=1e-12)

    def test_external_has_no_generator(self):
        """Test that external models have no synthetic generator"""
        config = RunConfig.model_validate({"model": {"kind": "external", "entry_point": "x:y"}})
        with pytest.raises(ConfigurationError):
            generate_synthetic_data(config)

    def test_save_writes_files(self, tmp_path):
        """Test that saving writes the expected data directory files"""
        generate_synthetic_data(RunConfig()).save(tmp_path)
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == [
            "model.json",
            "stream_rich.csv",
            "stream_sparse.csv",
            "truth.json",
            "truth_rich.csv",
            "truth_sparse.csv",
        ]
