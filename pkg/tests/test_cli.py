import csv
import json

import numpy as np
import pytest
import yaml

from qfedfraud import cli, validation
from qfedfraud import quantum as qc
from qfedfraud.config import ConfigError, from_dict, load_config

TINY = {
    "data": {"synthetic": {"n_samples": 120, "n_features": 6, "n_informative": 4}},
    "circuit": {"n_qubits": 2, "n_layers": 2},
    "federated": {"n_clients": 2, "rounds": 5},
    "seeds": {"master": 7, "trials": 1},
}


def write_config(tmp_path, overrides=None, name="cfg.yaml"):
    cfg = json.loads(json.dumps(TINY))
    for section, values in (overrides or {}).items():
        if isinstance(values, dict):
            cfg.setdefault(section, {}).update(values)
        else:
            cfg[section] = values
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert (cfg.circuit.n_qubits, cfg.circuit.n_layers) == (4, 4)
        assert cfg.adam.learning_rate == 0.1
        assert (cfg.federated.n_clients, cfg.federated.rounds, cfg.seeds.trials) == (15, 100, 10)
        assert cfg.data.train_fraction == 0.8

    def test_empty_file(self, tmp_path):
        (tmp_path / "e.yaml").write_text("", encoding="utf-8")
        assert load_config(tmp_path / "e.yaml") == load_config(None)

    @pytest.mark.parametrize(
        "raw,field",
        [
            ({"federated": {"n_clients": 0}}, "federated.n_clients"),
            ({"federated": {"rounds": "ten"}}, "federated.rounds"),
            ({"adam": {"learning_rate": -1}}, "adam.learning_rate"),
            ({"noise": {"kind": "gamma"}}, "noise.kind"),
            ({"noise": {"sweep_grid": [0, 2]}}, "noise.sweep_grid[1]"),
            ({"circuit": {"n_qbits": 3}}, "circuit.n_qbits"),
            ({"data": {"source": "csv"}}, "data.transactions"),
            ({"data": {"synthetic": {"fraud_rate": 1.0}}}, "data.synthetic.fraud_rate"),
        ],
    )
    def test_errors_name_field(self, raw, field):
        with pytest.raises(ConfigError, match=field.replace("[", r"\[").replace("]", r"\]")):
            from_dict(raw)

    def test_invalid_yaml(self, tmp_path):
        (tmp_path / "bad.yaml").write_text("a: [1,\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(tmp_path / "bad.yaml")


class TestTrain:
    def test_row_counts(self, tmp_path):
        assert cli.main(["train", "--config", str(write_config(tmp_path)), "--out", str(tmp_path / "out")]) == 0
        rows = read_rows(tmp_path / "out" / "history_trial00.csv")
        assert sum(r["scope"] == "global" for r in rows) == 5
        assert sum(r["scope"].startswith("client") for r in rows) == 2 * 5
        assert len(json.loads((tmp_path / "out" / "params_trial00.json").read_text())) == 8

    def test_summary_over_ten_trials(self, tmp_path):
        cfg = write_config(tmp_path, {"federated": {"rounds": 1}, "seeds": {"trials": 10}})
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        finals = summary["per_trial_final"]
        assert summary["trials"] == 10 and len(finals) == 10 and len(set(summary["trial_seeds"])) == 10
        assert summary["final_global"]["accuracy"]["mean"] == pytest.approx(np.mean([f["accuracy"] for f in finals]))
        mean_rows = [r for r in read_rows(tmp_path / "o" / "history_mean.csv") if r["scope"] == "global"]
        assert float(mean_rows[-1]["mse_loss"]) == pytest.approx(summary["final_global"]["mse_loss"]["mean"])

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path, {"seeds": {"trials": 2}})
        for out in ("a", "b"):
            assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / out)]) == 0
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
        for name in names:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_override_changes_results(self, tmp_path):
        cfg = str(write_config(tmp_path))
        cli.main(["train", "--config", cfg, "--out", str(tmp_path / "a")])
        cli.main(["train", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "99"])
        assert (tmp_path / "a" / "params_trial00.json").read_bytes() != (tmp_path / "b" / "params_trial00.json").read_bytes()

    def test_parallel_matches_sequential(self, tmp_path):
        cfg = str(write_config(tmp_path, {"seeds": {"trials": 2}, "federated": {"rounds": 2}}))
        cli.main(["train", "--config", cfg, "--out", str(tmp_path / "a")])
        cli.main(["train", "--config", cfg, "--out", str(tmp_path / "b"), "--parallel", "2"])
        assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"federated": {"n_clients": -3}})
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "federated.n_clients" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_missing_config_file(self, tmp_path, capsys):
        assert cli.main(["train", "--config", str(tmp_path / "nope.yaml")]) != 0
        assert "nope.yaml" in capsys.readouterr().err

    def test_csv_source(self, tmp_path):
        cfg = write_config(tmp_path)
        assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
        csv_cfg = write_config(
            tmp_path, {"data": {"source": "csv", "transactions": str(tmp_path / "d" / "transactions.csv")}},
            name="csv.yaml",
        )
        assert cli.main(["train", "--config", str(csv_cfg), "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "summary.json").exists()

    def test_malformed_csv_exit_code(self, tmp_path, capsys):
        (tmp_path / "t.csv").write_text("TransactionID,isFraud\n1,0\n2\n", encoding="utf-8")
        cfg = write_config(tmp_path, {"data": {"source": "csv", "transactions": str(tmp_path / "t.csv")}})
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "line 3" in capsys.readouterr().err


class TestNoiseSweep:
    def test_grid_zero_equals_noiseless(self, tmp_path):
        cfg = write_config(tmp_path, {"noise": {"sweep_grid": [0.0]}})
        assert cli.main(["noise-sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "t")]) == 0
        rows = read_rows(tmp_path / "s" / "noise_sweep.csv")
        final = read_rows(tmp_path / "t" / "history_trial00.csv")[-1]
        assert len(rows) == 6
        for r in rows:
            assert abs(float(r["accuracy"]) - float(final["accuracy"])) < 1e-10

    def test_full_table_and_prediction_dump(self, tmp_path):
        cfg = write_config(tmp_path, {"federated": {"rounds": 2}})
        out = tmp_path / "s"
        assert cli.main(["noise-sweep", "--config", str(cfg), "--out", str(out), "--dump-predictions"]) == 0
        assert len(read_rows(out / "noise_sweep.csv")) == 66
        wide = read_rows(out / "noise_sweep_table.csv")
        assert len(wide) == 6 and all(len(r) == 12 for r in wide)
        dumped = [r for r in read_rows(out / "noise_sweep_predictions.csv")
                  if r["kind"] == "depolarizing" and float(r["p"]) == 1.0]
        assert dumped and all(abs(float(r["y_hat"]) - 0.5) < 1e-10 for r in dumped)

    def test_train_noisy_runs_per_cell(self, tmp_path):
        cfg = write_config(tmp_path, {"federated": {"rounds": 1},
                                      "noise": {"sweep_kinds": ["bit_flip"], "sweep_grid": [0.0, 1.0],
                                                "train_noisy": True}})
        assert cli.main(["noise-sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
        assert len(read_rows(tmp_path / "s" / "noise_sweep.csv")) == 2


class TestValidate:
    def test_fresh_build_passes(self, capsys):
        assert cli.main(["validate", "--quick"]) == 0
        out = capsys.readouterr().out
        assert "all checks passed" in out and "gradient vs finite differences" in out

    def test_gradient_deviation_reported(self):
        result = validation.check_gradient(n_instances=3)
        assert result.passed and result.worst < 1e-5

    def test_corrupted_kraus_set_fails_naming_channel(self, monkeypatch, capsys):
        pristine = validation.default_factories

        def corrupted():
            factories = pristine()
            factories["amplitude_damping"] = lambda p: [k * 1.01 for k in qc.kraus_operators("amplitude_damping", p)]
            return factories

        monkeypatch.setattr(validation, "default_factories", corrupted)
        assert cli.main(["validate", "--quick"]) == 1
        out = capsys.readouterr().out
        assert "FAIL channel CPTP" in out and "amplitude_damping" in out


def test_synth_round_trip(tmp_path):
    cfg = write_config(tmp_path, {"data": {"synthetic": {"n_samples": 50, "fraud_rate": 0.2}}})
    assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
    rows = read_rows(tmp_path / "d" / "transactions.csv")
    assert len(rows) == 50 and sum(r["isFraud"] == "1" for r in rows) == 10


def test_no_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 2
