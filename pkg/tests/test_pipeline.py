import warnings

import numpy as np
import pytest
from scipy.stats import chisquare

from enspost.pipeline import (ExperimentConfig, FeatureStandardizer,
                              SyntheticSpec, build_features, generate_synthetic,
                              ingest, random_stations, rolling_experiment,
                              score_table, seasonal_pair, spatial_cholesky,
                              write_dataset)
from enspost.pipeline.io import DataError
from enspost.scores import rank_histogram
from tests.conftest import make_case, station


def synth(n_cases, bias=0.0, dispersion=1.0, n_stations=10, corr_km=100.0,
          seed=0, zero_censor=False, n_members=8):
    stations = random_stations(n_stations, seed=1)
    return generate_synthetic(SyntheticSpec(
        stations=stations, corr_length_km=corr_km, n_cases=n_cases,
        n_members=n_members, bias=bias, dispersion=dispersion,
        zero_censor=zero_censor, seed=seed))


class TestSyntheticGenerator:
    def test_calibrated_rank_histogram_uniform(self):
        cases = synth(2000)
        h = rank_histogram(cases, "average", seed=0)
        assert chisquare(h.bins).pvalue > 0.01

    def test_underdispersion_u_shape(self):
        cases = synth(1500, dispersion=0.3)
        bins = rank_histogram(cases, "average", seed=0).bins
        interior = bins[1:-1].mean()
        assert bins[0] > 2 * interior
        assert bins[-1] > 2 * interior

    def test_zero_correlation_length_independence(self):
        cases = synth(5000, n_stations=3, corr_km=0.0)
        obs = np.array([c.observation_vector for c in cases])
        for i in range(3):
            for j in range(i + 1, 3):
                r = np.corrcoef(obs[:, i], obs[:, j])[0, 1]
                assert abs(r) < 0.05

    def test_duplicate_coordinates_rejected(self):
        s = station("A", 47.0, 10.0)
        twin = station("B", 47.0, 10.0)
        with pytest.raises(ValueError):
            spatial_cholesky((s, twin), 100.0)

    def test_zero_censoring(self):
        cases = synth(50, zero_censor=True, seed=3)
        for c in cases:
            assert np.all(c.forecast_matrix >= 0)
            assert np.all(c.observation_vector >= 0)

    def test_invalid_dispersion_rejected(self):
        with pytest.raises(ValueError):
            SyntheticSpec(stations=random_stations(3), corr_length_km=50.0,
                          n_cases=5, dispersion=0.0)


class TestIo:
    def test_round_trip(self, tmp_path):
        stations = random_stations(4, seed=2)
        cases = synth(6, n_stations=4, seed=5)
        paths = write_dataset(stations, cases, tmp_path)
        stations2, cases2 = ingest(paths["forecasts"], paths["observations"],
                                   paths["stations"])
        assert tuple(s.id for s in stations2) == tuple(sorted(s.id for s in stations))
        assert len(cases2) == len(cases)
        by_key = {(c.init_time, c.lead_time): c for c in cases}
        for c2 in cases2:
            c1 = by_key[(c2.init_time, c2.lead_time)]
            assert np.array_equal(c1.forecast_matrix, c2.forecast_matrix)
            assert np.array_equal(c1.observation_vector, c2.observation_vector)

    def test_missing_observation_drops_case(self, tmp_path):
        stations = random_stations(3, seed=2)
        cases = synth(5, n_stations=3, seed=5)
        paths = write_dataset(stations, cases, tmp_path)
        lines = paths["observations"].read_text().splitlines()
        del lines[4]  # one station/date record
        paths["observations"].write_text("\n".join(lines) + "\n")
        _, cases2 = ingest(paths["forecasts"], paths["observations"], paths["stations"])
        assert len(cases2) == len(cases) - 1

    def test_unknown_station_rejected_with_line(self, tmp_path):
        stations = random_stations(2, seed=2)
        cases = synth(2, n_stations=2, seed=5)
        paths = write_dataset(stations, cases, tmp_path)
        text = paths["forecasts"].read_text().replace("S000", "XXX", 1)
        paths["forecasts"].write_text(text)
        with pytest.raises(DataError, match=":2:"):
            ingest(paths["forecasts"], paths["observations"], paths["stations"])

    def test_bad_timestamp_rejected(self, tmp_path):
        stations = random_stations(2, seed=2)
        cases = synth(2, n_stations=2, seed=5)
        paths = write_dataset(stations, cases, tmp_path)
        lines = paths["observations"].read_text().splitlines()
        parts = lines[1].split(",")
        parts[1] = "not-a-time"
        lines[1] = ",".join(parts)
        paths["observations"].write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="timestamp"):
            ingest(paths["forecasts"], paths["observations"], paths["stations"])


class TestFeatures:
    def test_seasonal_phase_origin(self):
        assert seasonal_pair(0) == pytest.approx((0.0, 1.0))

    def test_all_zero_ensemble(self):
        st = {"S000": station("S000", 47.0, 10.0)}
        case = make_case(np.zeros((1, 8)), [0.0], ids=("S000",))
        feats = build_features(case, st, "solar")
        mean, p0, var = feats[0, 0], feats[0, 1], feats[0, 2]
        assert (mean, p0, var) == (0.0, 1.0, 0.0)

    def test_band_fractions(self, rng):
        st = {"S000": station("S000", 47.0, 10.0)}
        for _ in range(20):
            members = rng.uniform(0, 80000, (1, 9))
            case = make_case(members, [1000.0], ids=("S000",))
            feats = build_features(case, st, "visibility")
            fracs = feats[0, 3:6]
            assert np.all((fracs >= 0) & (fracs <= 1))
            assert fracs.sum() <= 1.0 + 1e-12

    def test_standardizer_training_window_only(self, rng):
        train = [rng.normal(5, 2, (4, 3)) for _ in range(10)]
        std = FeatureStandardizer.fit(train)
        pooled = np.vstack(train)
        z = std.apply(pooled)
        assert np.allclose(z.mean(axis=0), 0.0, atol=1e-12)
        new = rng.normal(50, 1, (4, 3))
        assert not np.allclose(std.apply(new).mean(axis=0), 0.0, atol=0.5)

    def test_constant_feature_left_unscaled(self):
        mats = [np.column_stack([np.arange(3.0), np.full(3, 7.0)])] * 4
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            std = FeatureStandardizer.fit(mats)
        assert std.sd[1] == 1.0


@pytest.fixture(scope="module")
def emos_run():
    stations = random_stations(5, seed=2)
    cases = generate_synthetic(SyntheticSpec(
        stations=stations, corr_length_km=80.0, n_cases=16, n_members=8,
        bias=1.0, dispersion=0.7, zero_censor=True, seed=5))
    config = ExperimentConfig(models=("raw", "emos", "emos-ecc", "emos-ssh"),
                              emos_window_days=10, graph_threshold_km=100.0,
                              seeds=(1,), n_clusters=1, refit_every=3)
    scores, samples = rolling_experiment(config, stations, cases,
                                         collect_samples=True)
    return config, cases, scores, samples


class TestRollingExperiment:

    def test_window_precondition_skips_days(self, emos_run):
        config, cases, scores, _ = emos_run
        days_scored = scores["init_time"].nunique()
        assert days_scored == len(cases) - config.emos_window_days

    def test_sample_shape_contract(self, emos_run):
        _, cases, _, samples = emos_run
        for model_cases in samples.values():
            for c in model_cases:
                assert c.forecast_matrix.shape == (5, 8)

    def test_complete_series_per_model(self, emos_run):
        config, _, scores, _ = emos_run
        lengths = scores.groupby("model").size()
        assert set(lengths.index) == set(config.models)
        assert lengths.nunique() == 1

    def test_reordering_preserves_marginals(self, emos_run):
        _, _, _, samples = emos_run
        for variant in ("emos-ecc", "emos-ssh"):
            for base, shuffled in zip(samples["emos"], samples[variant]):
                assert np.array_equal(np.sort(base.forecast_matrix, axis=1),
                                      np.sort(shuffled.forecast_matrix, axis=1))

    def test_score_table_shape(self, emos_run):
        config, _, scores, _ = emos_run
        table = score_table(scores)
        assert set(table.columns) == {"model", "lead_time", "crps", "es", "vs"}
        assert len(table) == len(config.models)

    def test_unknown_model_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(models=("raw", "nonsense"))
