import numpy as np
import pytest
from scipy.stats import norm

from enspost.core import VISIBILITY_CATEGORIES, EnsembleStats, ensemble_stats
from enspost.marginal import (N_CATEGORIES, CensoredNormal, EmosParams,
                              PolrModel, climatology_features,
                              cluster_stations, emos_link, fit_emos, fit_polr,
                              load_params, polr_cdf, polr_pmf, sample_quantiles,
                              save_params)
from enspost.scores import crps_censored_normal


class TestCensoredNormal:
    def test_cdf_censoring_region(self):
        assert CensoredNormal(0.0, 1.0).cdf(-1.0) == 0.0

    def test_cdf_at_zero(self):
        assert CensoredNormal(0.0, 1.0).cdf(0.0) == pytest.approx(0.5)

    def test_cdf_upper_limit(self):
        assert CensoredNormal(0.0, 1.0).cdf(100.0) == pytest.approx(1.0)

    def test_mean_standard(self):
        assert CensoredNormal(0.0, 1.0).mean() == pytest.approx(0.3989423, abs=1e-7)

    def test_mean_uncensored_limit(self):
        assert CensoredNormal(10.0, 0.01).mean() == pytest.approx(10.0, abs=1e-9)

    def test_mean_fully_censored(self):
        assert CensoredNormal(-10.0, 0.01).mean() == pytest.approx(0.0, abs=1e-9)

    def test_mean_nonnegative(self, rng):
        for _ in range(50):
            dist = CensoredNormal(rng.normal(scale=5), rng.uniform(0.1, 4))
            assert dist.mean() >= 0.0

    def test_quantile_clamped(self):
        assert CensoredNormal(-2.0, 1.0).quantile(0.1) == 0.0

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(ValueError):
            CensoredNormal(0.0, 0.0)


class TestEmosLink:
    def test_identity_location(self):
        dist = emos_link(EmosParams(0, 1, 0, 0, 1),
                         EnsembleStats(mean=5.0, variance=1.0, zero_fraction=0.0))
        assert dist.mu == 5.0
        assert dist.sigma == pytest.approx(1.0)

    def test_scale_link(self):
        dist = emos_link(EmosParams(0, 1, 0, 0, 1),
                         EnsembleStats(mean=0.0, variance=4.0, zero_fraction=0.0))
        assert dist.sigma == pytest.approx(2.0)

    def test_zero_fraction_term(self):
        dist = emos_link(EmosParams(0, 0, 3, 0, 1),
                         EnsembleStats(mean=9.0, variance=1.0, zero_fraction=0.5))
        assert dist.mu == pytest.approx(1.5)

    def test_zero_spread_floored(self):
        dist = emos_link(EmosParams(),
                         EnsembleStats(mean=1.0, variance=0.0, zero_fraction=0.0))
        assert dist.sigma > 0.0


def simulate_emos_training(params, n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        members = rng.normal(rng.uniform(2, 15), rng.uniform(0.5, 3), 8)
        stats = ensemble_stats(members)
        dist = emos_link(params, stats)
        y = max(rng.normal(dist.mu, dist.sigma), 0.0)
        out.append((stats, y))
    return out


class TestFitEmos:
    def test_too_few_cases_rejected(self):
        with pytest.raises(ValueError):
            fit_emos([(EnsembleStats(1.0, 1.0, 0.0), 1.0)] * 10)

    def test_never_worse_than_init(self):
        true = EmosParams(0.5, 0.9, 0.0, 0.1, 0.8)
        training = simulate_emos_training(true, 200, seed=3)

        def mean_crps(p):
            scores = []
            for stats, y in training:
                dist = emos_link(p, stats)
                scores.append(crps_censored_normal(dist.mu, dist.sigma, y))
            return float(np.mean(scores))

        fitted = fit_emos(training, seed=0)
        assert mean_crps(fitted) <= mean_crps(EmosParams()) + 1e-12


class TestClusterStations:
    def test_single_cluster(self):
        feats = {f"S{i}": np.array([float(i)]) for i in range(5)}
        c = cluster_stations(feats, 1)
        assert c.n_clusters == 1
        assert set(c.assignment.values()) == {0}

    def test_planted_partition(self, rng):
        feats = {}
        for i in range(8):
            feats[f"A{i}"] = np.array([0.0, 0.0]) + rng.normal(0, 0.05, 2)
        for i in range(8):
            feats[f"B{i}"] = np.array([10.0, 10.0]) + rng.normal(0, 0.05, 2)
        c = cluster_stations(feats, 2, seed=1)
        groups = {c.assignment[f"A{i}"] for i in range(8)}
        assert len(groups) == 1
        assert c.assignment["B0"] != c.assignment["A0"]

    def test_eighteen_stations_three_clusters(self, rng):
        feats = {f"S{i:02d}": rng.normal(size=4) for i in range(18)}
        c = cluster_stations(feats, 3, seed=0)
        for k in range(c.n_clusters):
            assert len(c.members(k)) >= 2
        assert set(c.assignment) == set(feats)

    def test_too_many_clusters_rejected(self):
        feats = {f"S{i}": np.array([float(i)]) for i in range(5)}
        with pytest.raises(ValueError):
            cluster_stations(feats, 3)

    def test_climatology_feature_shape(self, rng):
        obs = {"A": rng.uniform(0, 10, 100)}
        err = {"A": rng.normal(size=100)}
        feats = climatology_features(obs, err)
        assert feats["A"].shape == (11,)


def random_polr_model(rng, m=2):
    alpha = np.sort(rng.normal(0, 3, N_CATEGORIES))
    alpha += np.arange(N_CATEGORIES) * 1e-3  # enforce strict ascent
    return PolrModel(alpha=alpha, beta=rng.normal(size=m))


class TestPolr:
    def test_cdf_symmetric_point(self):
        alpha = np.arange(N_CATEGORIES, dtype=float) - 10.0
        model = PolrModel(alpha=alpha, beta=np.zeros(2))
        assert polr_cdf(model, [1.0, -1.0], 11) == pytest.approx(0.5)

    def test_cdf_monotone_in_category(self, rng):
        model = random_polr_model(rng)
        x = rng.normal(size=2)
        cdfs = [polr_cdf(model, x, i) for i in range(1, N_CATEGORIES + 1)]
        assert all(b >= a for a, b in zip(cdfs, cdfs[1:]))

    def test_cdf_saturation(self):
        alpha = np.linspace(-5, 20, N_CATEGORIES)
        model = PolrModel(alpha=alpha, beta=np.array([1.0]))
        assert polr_cdf(model, [2.0], N_CATEGORIES) == pytest.approx(1.0, abs=1e-6)

    def test_pmf_sums_to_one(self, rng):
        for _ in range(20):
            model = random_polr_model(rng)
            pmf = polr_pmf(model, rng.normal(size=2))
            assert np.all(pmf >= 0)
            assert abs(pmf.sum() - 1.0) < 1e-12

    def test_nonmonotone_cutpoints_rejected(self):
        alpha = np.zeros(N_CATEGORIES)
        with pytest.raises(ValueError):
            PolrModel(alpha=alpha, beta=np.zeros(1))

    def test_null_model_recovery(self, rng):
        # beta = 0 ground truth: fitted coefficients stay near zero
        alpha = np.sort(rng.normal(0, 2, N_CATEGORIES)) + np.arange(N_CATEGORIES) * 0.01
        truth = PolrModel(alpha=alpha, beta=np.zeros(2))
        x = rng.normal(size=(20000, 2))
        cats = np.arange(1, N_CATEGORIES + 1)
        training = []
        for xi in x:
            pmf = polr_pmf(truth, xi)
            training.append((xi, int(rng.choice(cats, p=pmf))))
        with pytest.warns(UserWarning):
            fitted = fit_polr(training, n_features=2)
        assert np.all(np.abs(fitted.beta) < 0.05)


class TestSampleQuantiles:
    def test_single_member_is_median(self):
        dist = CensoredNormal(3.0, 1.0)
        assert sample_quantiles(dist, 1)[0] == pytest.approx(3.0)

    def test_fully_censored_all_zero(self):
        dist = CensoredNormal(-5.0, 1.0)
        assert np.array_equal(sample_quantiles(dist, 8), np.zeros(8))

    def test_nondecreasing(self, rng):
        for _ in range(20):
            dist = CensoredNormal(rng.normal(scale=3), rng.uniform(0.2, 3))
            q = sample_quantiles(dist, 8)
            assert np.all(np.diff(q) >= 0)

    def test_levels_convention(self):
        dist = CensoredNormal(0.0, 1.0)
        q = sample_quantiles(dist, 3)
        expected = [max(0.0, norm.ppf(k / 4.0)) for k in (1, 2, 3)]
        assert q == pytest.approx(expected)

    def test_polr_sample_of_51(self, rng):
        model = random_polr_model(rng)
        q = sample_quantiles(model, 51, x=rng.normal(size=2))
        assert q.shape == (51,)
        assert np.all(np.diff(q) >= 0)
        assert set(q.tolist()) <= set(map(float, VISIBILITY_CATEGORIES.values))

    def test_polr_without_features_rejected(self, rng):
        with pytest.raises(ValueError):
            sample_quantiles(random_polr_model(rng), 51)


class TestParamsIo:
    def test_round_trip(self, tmp_path, rng):
        path = tmp_path / "params.json"
        beta = rng.normal(size=3)
        save_params(path, "polr", beta=beta, alpha=np.arange(4.0))
        doc = load_params(path)
        assert doc["kind"] == "polr"
        assert np.allclose(doc["params"]["beta"], beta)
        assert np.allclose(doc["params"]["alpha"], np.arange(4.0))
