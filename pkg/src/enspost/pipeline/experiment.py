"""Rolling-window experiment orchestration and the model-comparison matrix."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..copula import derive_seed, ecc, hybrid_from_gnn, schaake_shuffle
from ..core import MultivariateCase, build_graph, ensemble_stats
from ..marginal import (EmosParams, climatology_features, cluster_stations,
                        emos_link, fit_emos, sample_quantiles)
from ..nnet import (CompositeLossConfig, ParamStore, TrainConfig, gnn_spec,
                    mlp_baseline, predict, train)
from ..scores import VsWeights, crps_sample, energy_score, variogram_score
from .features import FeatureStandardizer, build_features

log = logging.getLogger(__name__)

KNOWN_MODELS = ("raw", "emos", "emos-ecc", "emos-ssh", "mlp", "mlp-ecc",
                "mlp-ssh", "gnn-crps", "gnn-es", "dualgnn", "mlp-gnn")

GNN_LOSS = {"gnn-crps": "crps", "gnn-es": "es", "dualgnn": "composite"}


@dataclass(frozen=True)
class ExperimentConfig:
    variable: str = "solar"
    models: tuple = ("raw", "emos", "emos-ecc", "emos-ssh")
    emos_window_days: int = 80
    mlp_window_days: int = 25
    gnn_window_days: int = 30
    seeds: tuple = tuple(range(1, 11))
    n_clusters: int = 1
    graph_threshold_km: float = 50.0
    loss_w1: float = 0.9
    nonneg_penalty: float = 1.0
    refit_every: int = 1
    global_seed: int = 0
    jobs: int = 1
    gnn_hidden: int = 64
    gnn_layers: int = 1
    gnn_dropout: float = 0.2
    gnn_train: TrainConfig = field(default_factory=lambda: TrainConfig(
        learning_rate=0.03, batch_size=64, max_epochs=500, patience=15,
        validation_fraction=0.3))
    mlp_train: TrainConfig = field(default_factory=lambda: TrainConfig(
        learning_rate=0.01, batch_size=1200, max_epochs=500, patience=5,
        validation_fraction=0.3))
    ssh_pool: str = "window"  # "window" restricts dates to the training period

    def __post_init__(self):
        unknown = [m for m in self.models if m not in KNOWN_MODELS]
        if unknown:
            raise ValueError(f"unknown models: {unknown}")
        if not self.models:
            raise ValueError("model list must be non-empty")

    def window_days(self, model: str) -> int:
        if model == "raw":
            return 0
        if model.startswith("emos"):
            return self.emos_window_days
        if model == "mlp-gnn":
            return max(self.mlp_window_days, self.gnn_window_days)
        if model.startswith("mlp"):
            return self.mlp_window_days
        return self.gnn_window_days


def case_scores(sample: np.ndarray, case: MultivariateCase) -> dict:
    scored = MultivariateCase(init_time=case.init_time, lead_time=case.lead_time,
                              station_ids=case.station_ids,
                              forecast_matrix=np.asarray(sample, dtype=float),
                              observation_vector=case.observation_vector)
    crps = float(np.mean([crps_sample(sample[d], case.observation_vector[d])
                          for d in range(case.n_stations)]))
    return {"crps": crps,
            "es": energy_score(scored),
            "vs": variogram_score(scored, VsWeights.ones(case.n_stations))}


class _EmosRunner:
    """Semi-local EMOS fitted on a pooled training window."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.params: dict[int, EmosParams] = {}
        self.clustering = None

    def fit(self, window_cases: list[MultivariateCase]):
        ids = window_cases[0].station_ids
        obs_by_station = {sid: [] for sid in ids}
        err_by_station = {sid: [] for sid in ids}
        for case in window_cases:
            for d, sid in enumerate(ids):
                obs_by_station[sid].append(case.observation_vector[d])
                err_by_station[sid].append(case.forecast_matrix[d].mean()
                                           - case.observation_vector[d])
        feats = climatology_features(obs_by_station, err_by_station)
        self.clustering = cluster_stations(feats, self.config.n_clusters,
                                           seed=self.config.global_seed)
        self.params = {}
        for cluster in range(self.clustering.n_clusters):
            members = set(self.clustering.members(cluster))
            training = []
            for case in window_cases:
                for d, sid in enumerate(ids):
                    if sid in members:
                        training.append((ensemble_stats(case.forecast_matrix[d]),
                                         max(case.observation_vector[d], 0.0)))
            self.params[cluster] = fit_emos(training, seed=self.config.global_seed)

    def sample(self, case: MultivariateCase) -> np.ndarray:
        out = np.empty_like(case.forecast_matrix)
        for d, sid in enumerate(case.station_ids):
            cluster = self.clustering.assignment[sid]
            dist = emos_link(self.params[cluster], ensemble_stats(case.forecast_matrix[d]))
            out[d] = sample_quantiles(dist, case.n_members)
        return out


def _train_seed_job(args):
    """Train one seeded network; returns a pure-numpy snapshot (picklable)."""
    spec, instances, cfg, loss_kind, composite, graph = args
    store, _ = train(spec, instances, cfg, loss_kind=loss_kind,
                     composite=composite, graph=graph)
    return cfg.seed, store.snapshot()


class _NetRunner:
    """MLP or GNN trained on a feature window; predictions per seed."""

    def __init__(self, config: ExperimentConfig, stations_by_id, graph, kind: str):
        self.config = config
        self.stations_by_id = stations_by_id
        self.graph = graph  # None for the MLP
        self.kind = kind  # "mlp", "crps", "es" or "composite"
        self.stores = {}
        self.standardizer = None

    def _features(self, case: MultivariateCase) -> np.ndarray:
        return build_features(case, self.stations_by_id, self.config.variable)

    def fit(self, window_cases: list[MultivariateCase], seeds):
        raw_feats = [self._features(c) for c in window_cases]
        self.standardizer = FeatureStandardizer.fit(raw_feats)
        instances = [(self.standardizer.apply(f), c.observation_vector)
                     for f, c in zip(raw_feats, window_cases)]
        k = window_cases[0].n_members
        self.stores = {}
        if self.kind == "mlp":
            cfg = self.config.mlp_train
            store, _ = mlp_baseline(instances, k, config=cfg)
            self.stores[cfg.seed] = store
            return
        composite = None
        if self.kind == "composite":
            raw_es = np.mean([case_scores(c.forecast_matrix, c)["es"] for c in window_cases])
            raw_vs = np.mean([case_scores(c.forecast_matrix, c)["vs"] for c in window_cases])
            composite = CompositeLossConfig(
                w1=self.config.loss_w1,
                vs_normalizer=float(raw_es / raw_vs) if raw_vs > 0 else 1.0,
                nonneg_penalty=self.config.nonneg_penalty)
        n_features = raw_feats[0].shape[1]
        spec = gnn_spec(n_features, self.config.gnn_hidden, self.config.gnn_layers,
                        k, dropout=self.config.gnn_dropout)
        base = self.config.gnn_train
        jobs = [(spec, instances,
                 TrainConfig(learning_rate=base.learning_rate,
                             batch_size=base.batch_size,
                             max_epochs=base.max_epochs,
                             patience=base.patience,
                             validation_fraction=base.validation_fraction,
                             seed=seed),
                 self.kind, composite, self.graph) for seed in seeds]
        if self.config.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=self.config.jobs) as pool:
                results = list(pool.map(_train_seed_job, jobs))
        else:
            results = [_train_seed_job(j) for j in jobs]
        for seed, snap in results:
            store = ParamStore(spec, seed=seed)
            store.restore(snap)
            self.stores[seed] = store

    def predict(self, case: MultivariateCase) -> dict:
        feats = self.standardizer.apply(self._features(case))
        return {seed: predict(store, feats, graph=self.graph)
                for seed, store in self.stores.items()}


def rolling_experiment(config: ExperimentConfig, stations, cases,
                       collect_samples: bool = False):
    """Fit each requested model on its rolling window and score every test case.

    Returns one row per (model, init_time, lead_time) with CRPS, ES and VS;
    GNN rows are score averages over the configured seeds. With
    ``collect_samples`` also returns {model: [MultivariateCase]} holding the
    emitted sample matrices (first seed for seed-repeated models).
    """
    collected: dict[str, list] = {}
    stations_by_id = {s.id: s for s in stations}
    graph = build_graph(stations, config.graph_threshold_km)
    by_day: dict = {}
    for case in cases:
        by_day.setdefault(case.init_time.date(), []).append(case)
    days = sorted(by_day)

    needs_emos = any(m.startswith("emos") for m in config.models)
    needs_mlp = any(m.startswith("mlp") for m in config.models)
    gnn_kinds = sorted({GNN_LOSS[m] for m in config.models if m in GNN_LOSS}
                       | ({"composite"} if "mlp-gnn" in config.models else set()))

    emos_runner = _EmosRunner(config) if needs_emos else None
    mlp_runner = _NetRunner(config, stations_by_id, None, "mlp") if needs_mlp else None
    gnn_runners = {kind: _NetRunner(config, stations_by_id, graph, kind)
                   for kind in gnn_kinds}

    max_window = max(config.window_days(m) for m in config.models)
    rows = []
    since_refit = {"emos": None, "mlp": None, "gnn": None}

    for i, day in enumerate(days):
        if i < max_window:
            log.info("skipping %s: only %d days of history (< %d)", day, i, max_window)
            continue

        def window(model_family_days: int) -> list:
            out = []
            for d in days[i - model_family_days:i]:
                out.extend(by_day[d])
            return out

        def due(kind: str) -> bool:
            last = since_refit[kind]
            return last is None or (i - last) >= config.refit_every

        if emos_runner and due("emos"):
            emos_runner.fit(window(config.emos_window_days))
            since_refit["emos"] = i
        if mlp_runner and due("mlp"):
            mlp_runner.fit(window(config.mlp_window_days), seeds=None)
            since_refit["mlp"] = i
        if gnn_runners and due("gnn"):
            for runner in gnn_runners.values():
                runner.fit(window(config.gnn_window_days), seeds=config.seeds)
            since_refit["gnn"] = i

        for case in by_day[day]:
            seed = derive_seed(config.global_seed, case.init_time, case.lead_time)
            key = {"init_time": case.init_time.isoformat(),
                   "lead_time": case.lead_time}
            samples: dict[str, np.ndarray] = {}
            seeded_samples: dict[str, dict] = {}

            if "raw" in config.models:
                samples["raw"] = case.forecast_matrix
            if emos_runner:
                emos_sample = emos_runner.sample(case)
                samples["emos"] = emos_sample
                if "emos-ecc" in config.models:
                    samples["emos-ecc"] = ecc(case, emos_sample, seed)
                if "emos-ssh" in config.models:
                    pool = _ssh_pool(by_day, days, i, config.emos_window_days, case.lead_time)
                    samples["emos-ssh"] = schaake_shuffle(pool, case.n_members,
                                                          emos_sample, seed)
            if mlp_runner:
                mlp_out = next(iter(mlp_runner.predict(case).values()))
                samples["mlp"] = mlp_out
                mlp_sorted = np.sort(mlp_out, axis=1)
                if "mlp-ecc" in config.models:
                    samples["mlp-ecc"] = ecc(case, mlp_sorted, seed)
                if "mlp-ssh" in config.models:
                    pool = _ssh_pool(by_day, days, i, config.mlp_window_days, case.lead_time)
                    samples["mlp-ssh"] = schaake_shuffle(pool, case.n_members,
                                                         mlp_sorted, seed)
            for model, kind in GNN_LOSS.items():
                if model in config.models:
                    seeded_samples[model] = gnn_runners[kind].predict(case)
            if "mlp-gnn" in config.models:
                dual = gnn_runners["composite"].predict(case)
                mlp_sorted = np.sort(next(iter(mlp_runner.predict(case).values())), axis=1)
                seeded_samples["mlp-gnn"] = {
                    s: hybrid_from_gnn(out, mlp_sorted, seed) for s, out in dual.items()}

            for model in config.models:
                if model in samples:
                    sample = samples[model]
                    rows.append({"model": model, **key,
                                 **case_scores(sample, case)})
                elif model in seeded_samples:
                    per_seed = [case_scores(s, case) for s in seeded_samples[model].values()]
                    mean_scores = {k: float(np.mean([p[k] for p in per_seed]))
                                   for k in ("crps", "es", "vs")}
                    rows.append({"model": model, **key, **mean_scores})
                    first_seed = min(seeded_samples[model])
                    sample = seeded_samples[model][first_seed]
                else:
                    continue
                if collect_samples:
                    collected.setdefault(model, []).append(MultivariateCase(
                        init_time=case.init_time, lead_time=case.lead_time,
                        station_ids=case.station_ids,
                        forecast_matrix=np.asarray(sample, dtype=float),
                        observation_vector=case.observation_vector))
    df = pd.DataFrame(rows)
    if collect_samples:
        return df, collected
    return df


def _ssh_pool(by_day, days, i, window_days: int, lead_time: float) -> list:
    """Historical observation vectors from the training window at this lead time."""
    pool = []
    for d in days[i - window_days:i]:
        for case in by_day[d]:
            if case.lead_time == lead_time:
                pool.append(case.observation_vector)
    return pool


def score_table(scores: pd.DataFrame) -> pd.DataFrame:
    """Mean CRPS/ES/VS per (model, lead_time)."""
    return (scores.groupby(["model", "lead_time"], as_index=False)
            [["crps", "es", "vs"]].mean())
