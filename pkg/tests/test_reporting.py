"""
Tests for posterior summaries, predictive bands and discrepancy reporting.

Version: 1.0.0
"""
import numpy as np
import pandas as pd
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from gpcal.core import persistence
from gpcal.core.errors import ConfigurationError, DiagnosticError
from gpcal.core.models import OscillatingLineModel
from gpcal.schemas.config import OscillatingLineConfig
from gpcal.services.reporting import (
    discrepancy_ratios,
    discrepancy_summary,
    parameter_summary,
    predictive_posterior,
    quantile_label,
    thinned_rows,
)
from gpcal.services.synthetic import generate_oscillating_line

QUANTILES = (0.025, 0.5, 0.975)


@pytest.fixture
def oscillating():
    data = generate_oscillating_line(OscillatingLineConfig(n=40))
    streams = data.observation_streams()
    model = OscillatingLineModel(streams[0].locations, lower=[-10, -10], upper=[10, 10])
    return model, streams


def line_archive(make_archive, scenario="ignore", n=60):
    rng = np.random.default_rng(0)
    columns = {
        "intercept": 1.0 + 0.05 * rng.normal(size=(2, n)),
        "slope": 0.5 + 0.01 * rng.normal(size=(2, n)),
    }
    if scenario == "gp":
        columns["psi_signal"] = np.full((2, n), 1.0)
        columns["sigma2_signal"] = np.full((2, n), 10.0)
    return make_archive(columns, scenario=scenario, streams=("signal",))


def two_stream_archive(make_archive):
    rng = np.random.default_rng(4)
    shape = (3, 400)
    return make_archive(
        {
            "a": rng.normal(size=shape),
            "psi_rich": np.full(shape, 0.1),
            "psi_sparse": np.full(shape, 0.3),
            "sigma2_rich": np.exp(rng.normal(2.0, 0.1, size=shape)),
            "sigma2_sparse": np.exp(rng.normal(-1.0, 0.1, size=shape)),
        },
        scenario="gp",
        streams=("rich", "sparse"),
    )


class TestParameterSummary:
    """Test scalar summaries"""

    def test_labels(self):
        """Test the quantile column labels"""
        assert quantile_label(0.025) == "q2_5"
        assert quantile_label(0.5) == "q50"
        assert quantile_label(0.975) == "q97_5"

    def test_summary_values(self, make_archive):
        """Test the summary statistics of a known sample"""
        values = np.arange(100.0).reshape(4, 25)
        archive = make_archive({"a": values})
        summary = parameter_summary(archive, [0.5]).set_index("parameter")
        assert summary.loc["a", "mean"] == pytest.approx(49.5)
        assert summary.loc["a", "q50"] == pytest.approx(49.5)
        assert summary.loc["a", "sd"] == pytest.approx(np.std(np.arange(100.0), ddof=1))

    def test_linear_interpolation(self, make_archive):
        """Test that quantiles interpolate linearly"""
        archive = make_archive({"a": np.array([[1.0, 2.0], [3.0, 4.0]])})
        summary = parameter_summary(archive, [0.25]).set_index("parameter")
        assert summary.loc["a", "q25"] == pytest.approx(1.75)

    @given(
        values=st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=40).filter(lambda v: len(v) % 2 == 0),
        quantiles=st.lists(st.floats(0, 1), min_size=1, max_size=5),
    )
    @settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    def test_quantiles_are_ordered(self, make_archive, values, quantiles):
        """Test that summary quantiles are non-decreasing"""
        archive = make_archive({"a": np.array(values).reshape(2, -1)})
        quantiles = sorted(set(quantiles))
        row = parameter_summary(archive, quantiles).iloc[0]
        labels = [quantile_label(q) for q in quantiles]
        tol = 1e-9 * (1.0 + max(abs(v) for v in values))
        assert all(row[lo] <= row[hi] + tol for lo, hi in zip(labels, labels[1:]))
        assert min(values) - tol <= row[labels[0]] and row[labels[-1]] <= max(values) + tol

    def test_empty_archive(self, make_archive):
        """Test that an empty archive is rejected"""
        with pytest.raises(DiagnosticError):
            parameter_summary(make_archive({"a": np.zeros((2, 0))}), [0.5])


class TestThinnedRows:
    """Test draw subsampling"""

    def test_all_rows_when_few(self):
        """Test that short archives keep every row"""
        np.testing.assert_array_equal(thinned_rows(5, 10), np.arange(5))

    def test_evenly_spaced(self):
        """Test that thinned rows are evenly spaced"""
        rows = thinned_rows(1000, 5)
        np.testing.assert_array_equal(rows, [0, 250, 500, 749, 999])


class TestPredictivePosterior:
    """Test predictive bands"""

    def test_ignore_band(self, make_archive, oscillating):
        """Test the ignore band around the fitted line"""
        model, streams = oscillating
        bands = predictive_posterior(line_archive(make_archive), model, streams, np.random.default_rng(1), QUANTILES)
        band = bands["signal"]
        assert not band.has_process
        assert list(band.table.columns) == [
            "location", "observation", "model_lower", "model_median", "model_upper"
        ]
        assert np.all(band.table["model_lower"] <= band.table["model_median"])
        assert np.all(band.table["model_median"] <= band.table["model_upper"])
        assert band.realizations.shape == (0, streams[0].n)

    def test_gp_band_covers_oscillation(self, make_archive, oscillating):
        """Test that the gp band covers the oscillating truth"""
        model, streams = oscillating
        archive = line_archive(make_archive, "gp")
        bands = predictive_posterior(archive, model, streams, np.random.default_rng(2), QUANTILES, realizations=3)
        band = bands["signal"]

        assert band.has_process
        assert band.realizations.shape == (3, streams[0].n)
        assert band.realization_table().shape == (streams[0].n, 4)
        # the line alone misses the sine; line plus discrepancy follows it
        assert band.outside("process").sum() < band.outside("model").sum()

    def test_max_draws(self, make_archive, oscillating):
        """Test that the number of draws is capped"""
        model, streams = oscillating
        archive = line_archive(make_archive, "gp", n=60)
        bands = predictive_posterior(archive, model, streams, np.random.default_rng(3), QUANTILES, max_draws=7, realizations=50)
        assert bands["signal"].realizations.shape[0] == 7

    def test_empty_archive(self, make_archive, oscillating):
        """Test that an empty archive is rejected"""
        model, streams = oscillating
        archive = make_archive({"intercept": np.zeros((2, 0)), "slope": np.zeros((2, 0))}, streams=("signal",))
        with pytest.raises(DiagnosticError):
            predictive_posterior(archive, model, streams, np.random.default_rng(0), QUANTILES)


class TestDiscrepancyReporting:
    """Test normalized discrepancy variance summaries"""

    def test_summary(self, make_archive):
        """Test the per-stream discrepancy summary"""
        summary = discrepancy_summary(two_stream_archive(make_archive), QUANTILES)
        table = summary.summary.set_index("stream")
        assert table.loc["rich", "mean_log"] == pytest.approx(2.0, abs=0.02)
        assert table.loc["sparse", "mean_log"] == pytest.approx(-1.0, abs=0.02)
        assert {"sigma2_q2_5", "sigma2_q50", "log_sigma2_q97_5"} <= set(table.columns)
        assert summary.values("rich").size == 1200
        np.testing.assert_allclose(summary.samples["log_sigma2"], np.log(summary.samples["sigma2"]))

    def test_ratios(self, make_archive):
        """Test the discrepancy to noise ratios"""
        ratios = discrepancy_ratios(two_stream_archive(make_archive), QUANTILES)
        assert len(ratios) == 2
        rich_over_sparse = ratios[(ratios["numerator"] == "rich") & (ratios["denominator"] == "sparse")].iloc[0]
        assert rich_over_sparse["log_ratio_median"] == pytest.approx(3.0, abs=0.05)
        assert rich_over_sparse["q2_5"] < rich_over_sparse["q50"] < rich_over_sparse["q97_5"]

    def test_ignore_archive_rejected(self, make_archive):
        """Test that an archive without discrepancy columns is rejected"""
        with pytest.raises(ConfigurationError):
            discrepancy_summary(make_archive({"a": np.zeros((2, 10))}))


class TestReportTables:
    """Report tables survive a write and read through the table files"""

    def _round_trip(self, frame, path):
        persistence.write_table(frame, path)
        pd.testing.assert_frame_equal(persistence.read_table(path), frame, check_exact=True)

    def test_band_tables(self, make_archive, oscillating, tmp_path):
        """Test that band quantiles and realizations read back bit for bit"""
        model, streams = oscillating
        archive = line_archive(make_archive, "gp")
        band = predictive_posterior(archive, model, streams, np.random.default_rng(5), QUANTILES, realizations=2)["signal"]
        self._round_trip(band.table, tmp_path / "band_signal.csv")
        self._round_trip(band.realization_table(), tmp_path / "realizations_signal.csv")

    def test_discrepancy_tables(self, make_archive, tmp_path):
        """Test that the discrepancy tables read back bit for bit"""
        archive = two_stream_archive(make_archive)
        summary = discrepancy_summary(archive, QUANTILES)
        self._round_trip(summary.summary, tmp_path / "discrepancy_summary.csv")
        self._round_trip(summary.samples, tmp_path / "discrepancy_samples.csv")
        self._round_trip(discrepancy_ratios(archive, QUANTILES), tmp_path / "discrepancy_ratios.csv")
