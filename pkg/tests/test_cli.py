import csv
import json

import numpy as np
import pytest

from amdcast.cli import DEFAULT_CONFIG, load_config, main, stage_seed
from amdcast.errors import ConfigError
from amdcast.ingest import load_csv, write_csv

FAST = {
    "interpolation": {"n_trees": 5, "n_stages": 10},
    "anomaly": {"trees": 20},
    "model": {"variant": "fnn", "window": 7, "epochs": 3, "fnn_hidden": [8]},
}


def _config(tmp_path, extra=None):
    cfg = json.loads(json.dumps(FAST))
    for k, v in (extra or {}).items():
        if isinstance(v, dict):
            cfg.setdefault(k, {}).update(v)
        else:
            cfg[k] = v
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def _run(*argv):
    return main([str(a) for a in argv])


def test_defaults_mirror_protocol():
    cfg = load_config(None)
    assert cfg["anomaly"]["contamination"] == 0.2
    assert cfg["model"]["batch_size"] == 4
    assert cfg["split"] == 0.7
    assert cfg["forecast"]["horizon"] == 60
    assert cfg == load_config(None, {}) and cfg is not DEFAULT_CONFIG


def test_unknown_key_named(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"model": {"windw": 7}}))
    with pytest.raises(ConfigError, match="model.windw"):
        load_config(str(path))


@pytest.mark.parametrize("override,key", [
    ({"anomaly": {"contamination": 0}}, "anomaly.contamination"),
    ({"anomaly": {"contamination": 0.7}}, "anomaly.contamination"),
    ({"split": 1.0}, "split"),
    ({"model": {"variant": "gru"}}, "model.variant"),
    ({"model": {"variant": "lstm", "window": 0}}, "model.window"),
    ({"forecast": {"horizon": -1}}, "forecast.horizon"),
    ({"interpolation": {"presets": ["xgboost"]}}, "interpolation.presets"),
    ({"seed": True}, "seed"),
])
def test_range_checks_name_key(override, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        load_config(None, override)


def test_config_error_exit_code(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"anomaly": {"contamination": 0}}))
    assert _run("clean", "--config", path, "--out", tmp_path) == 1
    assert "anomaly.contamination" in capsys.readouterr().err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1


def test_missing_input_exit_code(tmp_path):
    assert _run("inspect", "--out", tmp_path / "nowhere") == 2


def test_train_without_clean_names_prerequisite(tmp_path, capsys):
    assert _run("train", "--out", tmp_path) == 2
    assert "amdcast clean" in capsys.readouterr().err


def test_stage_seeds_distinct():
    seeds = {stage_seed(1, s) for s in ("anomaly", "interpolation", "init", "train")}
    assert len(seeds) == 4
    assert stage_seed(1, "synth") == 1


def test_inspect_constant_column(tmp_path, capsys):
    out = tmp_path / "o"
    assert _run("synth", "--seed", 1, "--out", out) == 0
    frame = load_csv(out / "weekly.csv")
    values = np.array(frame.values)
    values[:, 4] = 12.5
    write_csv(frame.with_values(values), out / "weekly.csv")
    assert _run("inspect", "--out", out) == 0
    rows = list(csv.DictReader(open(out / "adf.csv")))
    assert len(rows) == 7
    assert rows[4]["verdict"] == "degenerate (constant)"
    assert all(r["verdict"] in ("stationary", "non-stationary") for i, r in enumerate(rows) if i != 4)


def test_full_chain(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("NO_COLOR", "1")
    out = tmp_path / "o"
    cfg = _config(tmp_path)
    for cmd in ("synth", "inspect", "clean", "train"):
        assert _run(cmd, "--config", cfg, "--seed", 1, "--out", out) == 0, cmd
    assert "\033[" not in capsys.readouterr().out
    anomalies = list(csv.reader(open(out / "anomalies.csv")))
    assert len(anomalies) - 1 == 17
    truth = list(csv.reader(open(out / "truth_anomalies.csv")))
    assert len(truth) - 1 == 8
    metrics = list(csv.reader(open(out / "metrics.csv")))
    assert {r[0] for r in metrics[1:]} == {"train", "validation"}
    history = list(csv.reader(open(out / "history.csv")))
    assert history[0] == ["epoch", "train_loss", "val_loss"] and len(history) == 4
    assert _run("forecast", "--config", cfg, "--out", out, "--measured", out / "measured.csv") == 0
    rows = list(csv.reader(open(out / "forecast" / "forecast.csv")))
    assert len(rows) == 61
    assert len(list((out / "forecast").glob("*.svg"))) == 7

    assert _run("forecast", "--config", cfg, "--out", out, "--horizon", 0) == 0
    assert (out / "forecast" / "forecast.csv").read_text().count("\n") == 1


def test_nonstandard_window_warns(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = _config(tmp_path, {"model": {"window": 5}})
    for cmd in ("synth", "clean"):
        assert _run(cmd, "--config", cfg, "--out", out) == 0
    capsys.readouterr()
    assert _run("train", "--config", cfg, "--out", out) == 0
    assert "non-standard" in capsys.readouterr().err
