"""Command-line interface: validate, synth, train, evaluate, compare, histogram."""

from __future__ import annotations

import argparse
import configparser
import hashlib
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .nnet import (CompositeLossConfig, TrainConfig, gnn_spec, save_checkpoint,
                   train)
from .pipeline import (ExperimentConfig, KNOWN_MODELS, DataError, SyntheticSpec,
                       atomic_write, generate_synthetic, ingest,
                       random_stations, rolling_experiment, write_dataset)
from .pipeline.experiment import case_scores
from .pipeline.features import FeatureStandardizer, build_features
from .core import build_graph
from .scores import (benjamini_hochberg, dm_test, interval_summary,
                     rank_histogram, skill_score, PRE_RANK_KINDS)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_EXPERIMENT_KEYS = {
    "variable", "models", "seeds", "emos_window_days", "mlp_window_days",
    "gnn_window_days", "n_clusters", "graph_threshold_km", "loss_w1",
    "nonneg_penalty", "refit_every", "gnn_hidden", "gnn_layers", "gnn_dropout",
    "gnn_learning_rate", "gnn_batch_size", "gnn_max_epochs", "gnn_patience",
    "gnn_validation_fraction", "ssh_pool",
}
_PATH_KEYS = {"forecasts", "observations", "stations"}
_SYNTH_KEYS = {
    "n_stations", "extent_km", "corr_length_km", "n_cases", "n_members",
    "marginal_mean", "signal_sd", "noise_sd", "bias", "dispersion",
    "zero_censor", "lead_time",
}
_TRAIN_KEYS = {"loss"}
_KNOWN_SECTIONS = {"experiment": _EXPERIMENT_KEYS, "paths": _PATH_KEYS,
                   "synthetic": _SYNTH_KEYS, "train": _TRAIN_KEYS}


class ConfigError(ValueError):
    pass


def load_config(path: str | None, overrides: list[str]) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file not found: {path}")
        cfg.read(path)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if not cfg.has_section(section):
            cfg.add_section(section)
        cfg.set(section, key, value)
    for section in cfg.sections():
        if section not in _KNOWN_SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        unknown = set(cfg[section]) - _KNOWN_SECTIONS[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return cfg


def config_hash(cfg: configparser.ConfigParser, seed: int) -> str:
    blob = f"seed={seed};" + ";".join(
        f"{s}.{k}={cfg[s][k]}" for s in sorted(cfg.sections()) for k in sorted(cfg[s]))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def experiment_config(cfg: configparser.ConfigParser, seed: int, jobs: int) -> ExperimentConfig:
    sec = cfg["experiment"] if cfg.has_section("experiment") else {}

    def get(key, default, cast):
        return cast(sec[key]) if key in sec else default

    models = tuple(m.strip() for m in get("models", "raw,emos", str).split(","))
    seeds = tuple(int(s) for s in get("seeds", "1,2,3,4,5,6,7,8,9,10", str).split(","))
    try:
        return ExperimentConfig(
            variable=get("variable", "solar", str),
            models=models,
            emos_window_days=get("emos_window_days", 80, int),
            mlp_window_days=get("mlp_window_days", 25, int),
            gnn_window_days=get("gnn_window_days", 30, int),
            seeds=seeds,
            n_clusters=get("n_clusters", 1, int),
            graph_threshold_km=get("graph_threshold_km", 50.0, float),
            loss_w1=get("loss_w1", 0.9, float),
            nonneg_penalty=get("nonneg_penalty", 1.0, float),
            refit_every=get("refit_every", 1, int),
            global_seed=seed,
            jobs=jobs,
            gnn_hidden=get("gnn_hidden", 64, int),
            gnn_layers=get("gnn_layers", 1, int),
            gnn_dropout=get("gnn_dropout", 0.2, float),
            gnn_train=TrainConfig(
                learning_rate=get("gnn_learning_rate", 0.03, float),
                batch_size=get("gnn_batch_size", 64, int),
                max_epochs=get("gnn_max_epochs", 500, int),
                patience=get("gnn_patience", 15, int),
                validation_fraction=get("gnn_validation_fraction", 0.3, float),
                seed=seed),
            ssh_pool=get("ssh_pool", "window", str),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def synthetic_spec(cfg: configparser.ConfigParser, seed: int) -> SyntheticSpec:
    sec = cfg["synthetic"] if cfg.has_section("synthetic") else {}

    def get(key, default, cast):
        return cast(sec[key]) if key in sec else default

    n_stations = get("n_stations", 10, int)
    stations = random_stations(n_stations, seed=seed,
                               extent_km=get("extent_km", 300.0, float))
    try:
        return SyntheticSpec(
            stations=stations,
            corr_length_km=get("corr_length_km", 100.0, float),
            n_cases=get("n_cases", 200, int),
            n_members=get("n_members", 8, int),
            marginal_mean=get("marginal_mean", 10.0, float),
            signal_sd=get("signal_sd", 3.0, float),
            noise_sd=get("noise_sd", 2.0, float),
            bias=get("bias", 0.0, float),
            dispersion=get("dispersion", 1.0, float),
            zero_censor=get("zero_censor", "true", str).lower() in ("1", "true", "yes"),
            lead_time=get("lead_time", 24.0, float),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_cases(cfg: configparser.ConfigParser, seed: int):
    """Ingest real CSVs when [paths] is configured, else generate synthetic data."""
    if cfg.has_section("paths"):
        sec = cfg["paths"]
        missing = _PATH_KEYS - set(sec)
        if missing:
            raise ConfigError(f"[paths] missing keys: {sorted(missing)}")
        return ingest(sec["forecasts"], sec["observations"], sec["stations"])
    spec = synthetic_spec(cfg, seed)
    return spec.stations, generate_synthetic(spec)


def _emit(path: Path, df: pd.DataFrame, header: str) -> None:
    body = df.to_csv(index=False, float_format="%.12g")
    atomic_write(path, f"# {header}\n{body}")


def cmd_validate(args, cfg) -> int:
    stations, cases = load_cases(cfg, args.seed)
    leads = sorted({c.lead_time for c in cases})
    k = cases[0].n_members if cases else 0
    print(f"stations: {len(stations)}")
    print(f"cases: {len(cases)}")
    print(f"members: {k}")
    print(f"lead_times: {leads}")
    return EXIT_OK


def cmd_synth(args, cfg) -> int:
    spec = synthetic_spec(cfg, args.seed)
    cases = generate_synthetic(spec)
    header = f"config_hash={config_hash(cfg, args.seed)} seed={args.seed}"
    paths = write_dataset(spec.stations, cases, args.out, header_comment=header)
    for p in paths.values():
        print(p)
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    stations, cases = load_cases(cfg, args.seed)
    exp = experiment_config(cfg, args.seed, args.jobs)
    loss_kind = cfg["train"]["loss"] if cfg.has_section("train") and "loss" in cfg["train"] else "composite"
    if loss_kind not in ("crps", "es", "composite"):
        raise ConfigError(f"unknown training loss {loss_kind!r}")
    graph = build_graph(stations, exp.graph_threshold_km)
    stations_by_id = {s.id: s for s in stations}
    raw_feats = [build_features(c, stations_by_id, exp.variable) for c in cases]
    standardizer = FeatureStandardizer.fit(raw_feats)
    instances = [(standardizer.apply(f), c.observation_vector)
                 for f, c in zip(raw_feats, cases)]
    composite = None
    if loss_kind == "composite":
        raw_es = np.mean([case_scores(c.forecast_matrix, c)["es"] for c in cases])
        raw_vs = np.mean([case_scores(c.forecast_matrix, c)["vs"] for c in cases])
        composite = CompositeLossConfig(w1=exp.loss_w1,
                                        vs_normalizer=float(raw_es / raw_vs),
                                        nonneg_penalty=exp.nonneg_penalty)
    spec = gnn_spec(raw_feats[0].shape[1], exp.gnn_hidden, exp.gnn_layers,
                    cases[0].n_members, dropout=exp.gnn_dropout)
    store, log = train(spec, instances, exp.gnn_train, loss_kind=loss_kind,
                       composite=composite, graph=graph)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.json", store)
    header = f"config_hash={config_hash(cfg, args.seed)} seed={args.seed}"
    atomic_write(out / "training_log.csv", f"# {header}\n{log.to_csv()}")
    print(out / "checkpoint.json")
    print(out / "training_log.csv")
    return EXIT_OK


def _run_experiment(args, cfg, collect=False):
    stations, cases = load_cases(cfg, args.seed)
    exp = experiment_config(cfg, args.seed, args.jobs)
    return exp, rolling_experiment(exp, stations, cases, collect_samples=collect)


def cmd_evaluate(args, cfg) -> int:
    _, (scores, samples) = _run_experiment(args, cfg, collect=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = f"config_hash={config_hash(cfg, args.seed)} seed={args.seed}"
    _emit(out / "scores.csv", scores.sort_values(["model", "init_time", "lead_time"]), header)

    rows = []
    for model in sorted(samples):
        model_cases = samples[model]
        k = model_cases[0].n_members
        nominal = (k - 1.0) / (k + 1.0)
        cov = interval_summary(model_cases, nominal)
        sub = scores[scores.model == model]
        for lead, grp in sub.groupby("lead_time"):
            rows.append({"model": model, "lead_time": lead,
                         "mean_crps": grp.crps.mean(), "mean_es": grp.es.mean(),
                         "mean_vs": grp.vs.mean(), "nominal_coverage": nominal,
                         "coverage": cov.coverage, "avg_width": cov.average_width})
    summary = pd.DataFrame(rows).sort_values(["model", "lead_time"])
    _emit(out / "summary.csv", summary, header)

    if args.ref is not None:
        if args.ref not in set(scores.model):
            raise ConfigError(f"--ref model {args.ref!r} not in the evaluated set")
        ref = summary[summary.model == args.ref].set_index("lead_time")
        skill_rows = []
        for _, row in summary.iterrows():
            if row["model"] == args.ref:
                continue
            r = ref.loc[row["lead_time"]]
            skill_rows.append({
                "model": row["model"], "lead_time": row["lead_time"],
                "crpss": skill_score(row["mean_crps"], r["mean_crps"]),
                "ess": skill_score(row["mean_es"], r["mean_es"]),
                "vss": skill_score(row["mean_vs"], r["mean_vs"])})
        _emit(out / "skill.csv", pd.DataFrame(skill_rows), header)
    print(out / "scores.csv")
    print(out / "summary.csv")
    return EXIT_OK


def cmd_compare(args, cfg) -> int:
    if args.ref is None:
        raise ConfigError("compare requires --ref MODEL")
    _, scores = _run_experiment(args, cfg)
    if args.ref not in set(scores.model):
        raise ConfigError(f"--ref model {args.ref!r} not in the evaluated set")
    ref = scores[scores.model == args.ref].set_index(["init_time", "lead_time"])
    rows = []
    for model in sorted(set(scores.model) - {args.ref}):
        sub = scores[scores.model == model].set_index(["init_time", "lead_time"])
        for lead in sorted({lt for _, lt in sub.index}):
            for metric in ("crps", "es", "vs"):
                a = sub.xs(lead, level="lead_time")[metric].sort_index()
                b = ref.xs(lead, level="lead_time")[metric].sort_index()
                res = dm_test(a.values, b.values)
                rows.append({"model": model, "lead_time": lead, "score": metric,
                             "t": res.t_statistic, "p": res.p_value, "n": res.n,
                             "mean_diff": res.mean_diff})
    df = pd.DataFrame(rows)
    for metric in ("crps", "es", "vs"):
        mask = df.score == metric
        df.loc[mask, "reject"] = benjamini_hochberg(df.loc[mask, "p"].tolist(), 0.05)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = f"config_hash={config_hash(cfg, args.seed)} seed={args.seed} ref={args.ref} alpha=0.05"
    _emit(out / "compare.csv", df, header)
    print(out / "compare.csv")
    return EXIT_OK


def cmd_histogram(args, cfg) -> int:
    _, (_, samples) = _run_experiment(args, cfg, collect=True)
    rows = []
    for model in sorted(samples):
        for kind in PRE_RANK_KINDS:
            hist = rank_histogram(samples[model], kind, seed=args.seed)
            for b, count in enumerate(hist.bins):
                rows.append({"model": model, "kind": kind, "bin": b,
                             "count": int(count), "ri": hist.reliability_index})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = f"config_hash={config_hash(cfg, args.seed)} seed={args.seed}"
    _emit(out / "histograms.csv", pd.DataFrame(rows), header)
    print(out / "histograms.csv")
    return EXIT_OK


_COMMANDS = {
    "validate": cmd_validate,
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "histogram": cmd_histogram,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="enspost",
                                     description="Multivariate ensemble post-processing toolkit")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--ref", default=None, help="reference model for skill/DM")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker pool size")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="config override")
    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config, args.overrides)
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
