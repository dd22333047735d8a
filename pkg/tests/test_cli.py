import warnings

import pandas as pd
import pytest

from enspost.cli import (EXIT_CONFIG, EXIT_DATA, EXIT_OK, config_hash,
                         load_config, run)

SMALL_SYNTH = [
    "--set", "synthetic.n_stations=5",
    "--set", "synthetic.n_cases=14",
    "--set", "synthetic.corr_length_km=80",
    "--set", "synthetic.bias=1.0",
    "--set", "synthetic.dispersion=0.7",
]
SMALL_EXP = [
    "--set", "experiment.models=raw,emos,emos-ecc",
    "--set", "experiment.emos_window_days=10",
    "--set", "experiment.graph_threshold_km=100",
    "--set", "experiment.refit_every=10",
    "--set", "experiment.seeds=1",
]


@pytest.fixture(autouse=True)
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def read_output_csv(path):
    header = path.read_text().splitlines()[0]
    return header, pd.read_csv(path, comment="#")


class TestConfig:
    def test_unknown_section_rejected(self):
        with pytest.raises(Exception):
            load_config(None, ["bogus.key=1"])

    def test_unknown_key_rejected(self):
        assert run(["validate", "--set", "experiment.nonsense=1"]) == EXIT_CONFIG

    def test_malformed_override_rejected(self):
        assert run(["validate", "--set", "no-dot=1"]) == EXIT_CONFIG

    def test_missing_config_file_rejected(self):
        assert run(["validate", "--config", "/nonexistent.ini"]) == EXIT_CONFIG

    def test_hash_depends_on_seed_and_values(self):
        cfg = load_config(None, ["synthetic.n_cases=5"])
        assert config_hash(cfg, 0) != config_hash(cfg, 1)
        cfg2 = load_config(None, ["synthetic.n_cases=6"])
        assert config_hash(cfg, 0) != config_hash(cfg2, 0)


class TestCommands:
    def test_validate_synthetic(self, capsys):
        code = run(["validate", *SMALL_SYNTH])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "stations: 5" in out
        assert "cases: 14" in out

    def test_synth_then_validate_paths(self, tmp_path):
        out = tmp_path / "data"
        assert run(["synth", *SMALL_SYNTH, "--out", str(out)]) == EXIT_OK
        code = run(["validate",
                    "--set", f"paths.forecasts={out / 'forecasts.csv'}",
                    "--set", f"paths.observations={out / 'observations.csv'}",
                    "--set", f"paths.stations={out / 'stations.csv'}"])
        assert code == EXIT_OK

    def test_missing_data_file_exit_code(self, tmp_path):
        code = run(["validate",
                    "--set", f"paths.forecasts={tmp_path / 'none.csv'}",
                    "--set", f"paths.observations={tmp_path / 'none.csv'}",
                    "--set", f"paths.stations={tmp_path / 'none.csv'}"])
        assert code == EXIT_DATA

    def test_evaluate_outputs(self, tmp_path):
        out = tmp_path / "eval"
        code = run(["evaluate", *SMALL_SYNTH, *SMALL_EXP, "--jobs", "1",
                    "--seed", "7", "--out", str(out), "--ref", "raw"])
        assert code == EXIT_OK
        header, summary = read_output_csv(out / "summary.csv")
        assert "seed=7" in header
        assert "config_hash=" in header
        # one summary row per (model, lead_time)
        assert len(summary) == 3
        assert set(summary.model) == {"raw", "emos", "emos-ecc"}
        assert {"mean_crps", "mean_es", "mean_vs", "coverage"} <= set(summary.columns)
        _, skill = read_output_csv(out / "skill.csv")
        assert set(skill.model) == {"emos", "emos-ecc"}
        _, scores = read_output_csv(out / "scores.csv")
        assert len(scores) == 3 * 4  # 3 models x 4 scored days

    def test_evaluate_unknown_ref_rejected(self, tmp_path):
        code = run(["evaluate", *SMALL_SYNTH, *SMALL_EXP, "--jobs", "1",
                    "--out", str(tmp_path / "x"), "--ref", "dualgnn"])
        assert code == EXIT_CONFIG

    def test_compare_outputs(self, tmp_path):
        out = tmp_path / "cmp"
        code = run(["compare", *SMALL_SYNTH, *SMALL_EXP, "--jobs", "1",
                    "--out", str(out), "--ref", "raw"])
        assert code == EXIT_OK
        _, df = read_output_csv(out / "compare.csv")
        # t statistic per (model, lead, metric) with BH decisions
        assert len(df) == 2 * 1 * 3
        assert set(df.columns) >= {"model", "lead_time", "score", "t", "p", "reject"}
        assert df.reject.dtype == bool

    def test_compare_requires_ref(self, tmp_path):
        code = run(["compare", *SMALL_SYNTH, *SMALL_EXP, "--jobs", "1",
                    "--out", str(tmp_path / "x")])
        assert code == EXIT_CONFIG

    def test_histogram_outputs(self, tmp_path):
        out = tmp_path / "hist"
        code = run(["histogram", *SMALL_SYNTH, *SMALL_EXP, "--jobs", "1",
                    "--out", str(out)])
        assert code == EXIT_OK
        _, df = read_output_csv(out / "histograms.csv")
        assert set(df.kind) == {"average", "band_depth", "energy_score", "dependence"}
        # K = 8 members gives 9 bins per (model, kind)
        assert len(df) == 3 * 4 * 9
        assert df.groupby(["model", "kind"])["count"].sum().eq(4).all()

    def test_train_outputs(self, tmp_path):
        out = tmp_path / "train"
        code = run(["train", *SMALL_SYNTH, "--jobs", "1", "--out", str(out),
                    "--set", "experiment.gnn_hidden=8",
                    "--set", "experiment.gnn_max_epochs=10",
                    "--set", "experiment.gnn_patience=3",
                    "--set", "experiment.graph_threshold_km=100",
                    "--set", "train.loss=crps"])
        assert code == EXIT_OK
        assert (out / "checkpoint.json").exists()
        log = (out / "training_log.csv").read_text()
        assert log.splitlines()[1] == "epoch,train_loss,val_loss"

    def test_unknown_train_loss_rejected(self, tmp_path):
        code = run(["train", *SMALL_SYNTH, "--jobs", "1",
                    "--out", str(tmp_path / "x"), "--set", "train.loss=mse"])
        assert code == EXIT_CONFIG
