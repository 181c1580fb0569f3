"""Command-line front end: ``amdcast {synth,inspect,clean,train,forecast}``.

Every command reads an optional JSON config (``--config``), lets ``--seed``
and ``--out`` override the corresponding keys, and writes its artifacts
under the output directory. The commands compose: ``synth`` writes
``weekly.csv``, ``clean`` turns it into ``daily.csv``, ``train`` fits a model
on ``daily.csv`` and ``forecast`` rolls the checkpoint forward.

Exit codes: 0 success, 1 usage or configuration error, 2 data or file
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from amdcast import __version__
from amdcast.anomaly import anomaly_scores, build_forest, detect
from amdcast.errors import AmdcastError, ConfigError, ConstantSeries, DataError
from amdcast.forecast import TrainedModel, emit_report, evaluate_sparse, rollout
from amdcast.ingest import (
    PARAMETERS,
    ScalerParams,
    SplitSpec,
    TimeSeriesFrame,
    apply_scaler,
    chrono_split,
    fit_scaler,
    format_value,
    load_csv,
    make_windows,
    write_csv,
)
from amdcast.metrics import diagnose_history, metric_report, write_metric_reports
from amdcast.nn import (
    EPOCH_PRESETS,
    REFERENCE_WINDOWS,
    ModelInputs,
    ModelSpec,
    TrainConfig,
    Variant,
    init_params,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)
from amdcast.stattests import adf_test
from amdcast.synth import generate
from amdcast.treereg import PRESETS, InterpolationSettings, interpolate

logger = logging.getLogger("amdcast")

# ---------------------------------------------------------------------------
# Configuration

DEFAULT_CONFIG: dict = {
    "input": None,
    "out": "out",
    "seed": 0,
    "split": 0.7,
    "anomaly": {"contamination": 0.2, "trees": 100, "subsample": 64},
    "interpolation": {
        "split": 0.8,
        "presets": list(PRESETS),
        "top_k": 3,
        "n_trees": 200,
        "n_stages": 200,
        "learning_rate": 0.1,
    },
    "model": {
        "variant": "encdec",
        "window": 7,
        "epochs": None,
        "batch_size": 4,
        "hidden": 32,
        "fnn_hidden": [64, 32],
        "head": [16],
        "patience": 50,
        "learning_rate": 0.001,
        "loss": "mae",
        "diagnosis_ratio": 1.5,
    },
    "forecast": {"horizon": 60, "measured": None},
    "synth": {"rows": 83, "anomalies": 8},
}

# Stage indices mixed with the root seed; see ``stage_seed``.
# The synthetic generator takes the root seed itself, so ``synth --seed 1``
# reproduces ``generate(seed=1)``.
STAGES = {"anomaly": 1, "interpolation": 2, "init": 3, "train": 4}


def stage_seed(root: int, stage: str) -> int:
    """Seed for one pipeline stage, derived as ``SeedSequence([root, index])``."""
    if stage == "synth":
        return root
    return int(np.random.SeedSequence([root, STAGES[stage]]).generate_state(1)[0])


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (_is_int(v) or isinstance(v, float)) and math.isfinite(v)


def _check(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"config key '{key}': {msg}")


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        path = f"{prefix}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key '{path}'")
        if isinstance(base[k], dict):
            _check(isinstance(v, dict), path, "expected an object")
            out[k] = _merge(base[k], v, path + ".")
        else:
            out[k] = v
    return out


def validate_config(cfg: dict) -> None:
    """Range-check every field; raises ``ConfigError`` naming the key."""
    _check(cfg["input"] is None or isinstance(cfg["input"], str), "input", "expected a path or null")
    _check(isinstance(cfg["out"], str) and cfg["out"] != "", "out", "expected a non-empty path")
    _check(_is_int(cfg["seed"]) and cfg["seed"] >= 0, "seed", "expected a non-negative integer")
    _check(_is_num(cfg["split"]) and 0 < cfg["split"] < 1, "split", "must lie in (0, 1)")

    a = cfg["anomaly"]
    _check(_is_num(a["contamination"]) and 0 < a["contamination"] <= 0.5,
           "anomaly.contamination", "must lie in (0, 0.5]")
    _check(_is_int(a["trees"]) and a["trees"] >= 1, "anomaly.trees", "must be an integer >= 1")
    _check(a["subsample"] is None or (_is_int(a["subsample"]) and a["subsample"] >= 2),
           "anomaly.subsample", "must be an integer >= 2 or null")

    i = cfg["interpolation"]
    _check(_is_num(i["split"]) and 0 < i["split"] < 1, "interpolation.split", "must lie in (0, 1)")
    _check(isinstance(i["presets"], list) and len(i["presets"]) >= 1
           and all(p in PRESETS for p in i["presets"]) and len(set(i["presets"])) == len(i["presets"]),
           "interpolation.presets", f"must be a non-empty list of distinct names from {list(PRESETS)}")
    _check(_is_int(i["top_k"]) and 1 <= i["top_k"] <= len(i["presets"]),
           "interpolation.top_k", "must be an integer between 1 and the number of presets")
    _check(_is_int(i["n_trees"]) and i["n_trees"] >= 1, "interpolation.n_trees", "must be an integer >= 1")
    _check(_is_int(i["n_stages"]) and i["n_stages"] >= 1, "interpolation.n_stages", "must be an integer >= 1")
    _check(_is_num(i["learning_rate"]) and 0 < i["learning_rate"] <= 1,
           "interpolation.learning_rate", "must lie in (0, 1]")

    m = cfg["model"]
    _check(m["variant"] in [v.value for v in Variant], "model.variant", "must be one of fnn, lstm, encdec")
    _check(_is_int(m["window"]) and m["window"] >= 0, "model.window", "must be a non-negative integer")
    _check(m["variant"] == "fnn" or m["window"] >= 1, "model.window", "recurrent variants need a window >= 1")
    _check(m["epochs"] is None or (_is_int(m["epochs"]) and m["epochs"] >= 0),
           "model.epochs", "must be a non-negative integer or null")
    _check(_is_int(m["batch_size"]) and m["batch_size"] >= 1, "model.batch_size", "must be an integer >= 1")
    _check(_is_int(m["hidden"]) and m["hidden"] >= 1, "model.hidden", "must be an integer >= 1")
    for key in ("fnn_hidden", "head"):
        _check(isinstance(m[key], list) and all(_is_int(w) and w >= 1 for w in m[key]),
               f"model.{key}", "must be a list of positive integers")
    _check(_is_int(m["patience"]) and m["patience"] >= 0, "model.patience", "must be a non-negative integer")
    _check(_is_num(m["learning_rate"]) and m["learning_rate"] > 0, "model.learning_rate", "must be > 0")
    _check(m["loss"] in ("mae", "mse"), "model.loss", "must be 'mae' or 'mse'")
    _check(_is_num(m["diagnosis_ratio"]) and m["diagnosis_ratio"] >= 1,
           "model.diagnosis_ratio", "must be a number >= 1")

    f = cfg["forecast"]
    _check(_is_int(f["horizon"]) and f["horizon"] >= 0, "forecast.horizon", "must be a non-negative integer")
    _check(f["measured"] is None or isinstance(f["measured"], str), "forecast.measured", "expected a path or null")

    s = cfg["synth"]
    _check(_is_int(s["rows"]) and s["rows"] >= 2, "synth.rows", "must be an integer >= 2")
    _check(_is_int(s["anomalies"]) and 0 <= s["anomalies"] < s["rows"],
           "synth.anomalies", "must be a non-negative integer below synth.rows")


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    """Defaults, then the JSON file at ``path``, then ``overrides``."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = _merge(cfg, doc)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate_config(cfg)
    return cfg


# ---------------------------------------------------------------------------
# Console output


class Console:
    """stdout/stderr writer; ANSI styling unless ``NO_COLOR`` is set or not a tty."""

    def __init__(self, out=None, err=None):
        self.out = out or sys.stdout
        self.err = err or sys.stderr
        self.color = "NO_COLOR" not in os.environ and hasattr(self.out, "isatty") and self.out.isatty()

    def _style(self, text: str, code: str) -> str:
        return f"\033[{code}m{text}\033[0m" if self.color else text

    def info(self, text: str) -> None:
        print(text, file=self.out)

    def ok(self, text: str) -> None:
        print(self._style(text, "32"), file=self.out)

    def warn(self, text: str) -> None:
        print(self._style(f"warning: {text}", "33"), file=self.err)

    def error(self, text: str) -> None:
        print(self._style(f"error: {text}", "31"), file=self.err)


# ---------------------------------------------------------------------------
# Commands


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _input_path(cfg: dict) -> Path:
    return Path(cfg["input"]) if cfg["input"] else Path(cfg["out"]) / "weekly.csv"


def _require(path: Path, producer: str) -> None:
    if not path.exists():
        raise DataError(f"{path} not found; run `amdcast {producer}` first")


def cmd_synth(cfg: dict, console: Console) -> int:
    out = _out_dir(cfg)
    ds = generate(seed=stage_seed(cfg["seed"], "synth"), rows=cfg["synth"]["rows"],
                  n_anomalies=cfg["synth"]["anomalies"])
    write_csv(ds.weekly, out / "weekly.csv")
    write_csv(ds.truth_daily, out / "truth_daily.csv")
    write_csv(ds.measured, out / "measured.csv")
    with (out / "truth_anomalies.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "date"])
        for k in ds.anomaly_indices:
            w.writerow([k, ds.weekly.dates[k].isoformat()])
    console.ok(f"synth: {len(ds.weekly)} weekly rows, {len(ds.anomaly_indices)} planted anomalies -> {out}")
    return 0


def cmd_inspect(cfg: dict, console: Console) -> int:
    frame = load_csv(_input_path(cfg))
    out = _out_dir(cfg)
    rows = []
    for name in frame.columns:
        series = frame.column(name)
        series = series[~np.isnan(series)]
        try:
            r = adf_test(series)
        except ConstantSeries:
            rows.append([name, "", "", "", str(series.size), "degenerate (constant)"])
            continue
        verdict = "stationary" if r.stationary_at_5pct else "non-stationary"
        rows.append([name, format_value(r.statistic), format_value(r.p_value), str(r.lags_used), str(r.nobs), verdict])
    with (out / "adf.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "statistic", "p_value", "lags", "nobs", "verdict"])
        w.writerows(rows)
    console.info(f"{'parameter':<14}{'ADF stat':>12}{'p-value':>10}  verdict")
    for name, stat, p, _, _, verdict in rows:
        stat_s = f"{float(stat):12.4f}" if stat else f"{'-':>12}"
        p_s = f"{float(p):10.4f}" if p else f"{'-':>10}"
        console.info(f"{name:<14}{stat_s}{p_s}  {verdict}")
    return 0


def cmd_clean(cfg: dict, console: Console) -> int:
    frame = load_csv(_input_path(cfg))
    out = _out_dir(cfg)
    a = cfg["anomaly"]
    scaler = fit_scaler(frame)
    x = scaler.transform(frame.values)
    # Detection needs complete rows; gaps are filled with the column mean.
    col_mean = np.nanmean(x, axis=0)
    x = np.where(np.isnan(x), col_mean, x)
    model = build_forest(x, a["trees"], a["subsample"], seed=stage_seed(cfg["seed"], "anomaly"),
                         contamination=a["contamination"])
    flagged = detect(model, x)
    scores = anomaly_scores(model, x)
    with (out / "anomalies.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "date", "score"])
        for k in flagged:
            w.writerow([k, frame.dates[k].isoformat(), format_value(float(scores[k]))])

    values = np.array(frame.values, dtype=np.float64)
    values[flagged] = np.nan
    i = cfg["interpolation"]
    settings = InterpolationSettings(
        split=i["split"], n_trees=i["n_trees"], n_stages=i["n_stages"],
        learning_rate=i["learning_rate"], top_k=i["top_k"], presets=tuple(i["presets"]),
    )
    daily, plan, scores_ = interpolate(frame.with_values(values), settings, seed=stage_seed(cfg["seed"], "interpolation"))
    write_csv(daily, out / "daily.csv")
    with (out / "interp_models.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "model", "mse", "mae", "rank", "chosen", "unit_space"])
        for s in scores_:
            w.writerow([s.parameter, s.model, format_value(s.mse), format_value(s.mae), s.rank,
                        int(s.chosen), plan.unit_space])
    console.info(f"flagged {len(flagged)} of {len(frame)} rows: {flagged}")
    for note in plan.notes:
        console.info(f"note: {note}")
    console.ok(f"clean: {len(daily)} daily rows -> {out / 'daily.csv'}")
    return 0


def _model_spec(cfg: dict) -> ModelSpec:
    m = cfg["model"]
    return ModelSpec(m["variant"], m["window"], hidden=m["hidden"], fnn_hidden=tuple(m["fnn_hidden"]),
                     head=tuple(m["head"]))


def resolve_epochs(cfg: dict, console: Console | None = None) -> int:
    m = cfg["model"]
    if m["epochs"] is not None:
        return m["epochs"]
    preset = EPOCH_PRESETS.get((m["variant"], m["window"]))
    if preset is None:
        if console:
            console.warn("no epoch preset for this variant/window; using 200")
        return 200
    return preset


def cmd_train(cfg: dict, console: Console) -> int:
    out = _out_dir(cfg)
    daily_path = out / "daily.csv"
    _require(daily_path, "clean")
    m = cfg["model"]
    standard = m["window"] in REFERENCE_WINDOWS or (m["variant"] == "fnn" and m["window"] == 0)
    if not standard:
        console.warn(f"window {m['window']} is non-standard (reference windows: {list(REFERENCE_WINDOWS)})")
    daily = load_csv(daily_path)
    scaler = fit_scaler(daily)
    dataset = make_windows(apply_scaler(scaler, daily), m["window"])
    spec = _model_spec(cfg)
    tc = TrainConfig(epochs=resolve_epochs(cfg, console), batch_size=m["batch_size"], loss=m["loss"],
                     split=cfg["split"], patience=m["patience"], learning_rate=m["learning_rate"],
                     seed=stage_seed(cfg["seed"], "train"))
    params = init_params(spec, stage_seed(cfg["seed"], "init"))
    params, history = train(spec, dataset, tc, params)

    train_ds, val_ds = chrono_split(dataset, SplitSpec(cfg["split"]))
    reports = [
        metric_report(part, ds.targets, predict(spec, params, ModelInputs.from_dataset(ds)), scaler.columns)
        for part, ds in (("train", train_ds), ("validation", val_ds))
    ]
    write_metric_reports(reports, out / "metrics.csv")
    with (out / "history.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for e, (tr, va) in enumerate(zip(history.train_loss, history.val_loss)):
            w.writerow([e, repr(tr), repr(va)])
    diagnosis = diagnose_history(history, m["diagnosis_ratio"]).value if history.train_loss else "n/a"
    save_checkpoint(out / "model.json", spec, params, cfg["seed"], scaler.to_dict(),
                    {"best_epoch": history.best_epoch, "epochs_run": history.epochs_run,
                     "diagnosis": diagnosis, "train_config": tc.__dict__})
    for rep in reports:
        o = rep.overall
        console.info(f"{rep.partition:<11} mse={o.mse:.6g} mae={o.mae:.6g} nse={o.nse:.4f} ({rep.unit_space})")
    console.ok(f"fit diagnosis: {diagnosis} (best epoch {history.best_epoch + 1} of {history.epochs_run})")
    return 0


def cmd_forecast(cfg: dict, console: Console) -> int:
    out = _out_dir(cfg)
    model_path = out / "model.json"
    _require(model_path, "train")
    daily_path = out / "daily.csv"
    _require(daily_path, "clean")
    spec, params, meta = load_checkpoint(model_path)
    if meta["scaler"] is None:
        raise DataError(f"{model_path} carries no scaler")
    model = TrainedModel(spec, params, ScalerParams.from_dict(meta["scaler"]))
    daily = load_csv(daily_path)
    history = daily.tail(spec.window) if spec.window else TimeSeriesFrame((), np.zeros((0, len(daily.columns))))
    result = rollout(model, history, cfg["forecast"]["horizon"], last_date=daily.dates[-1])

    measured = None
    evaluation = None
    if cfg["forecast"]["measured"]:
        measured = load_csv(cfg["forecast"]["measured"])
        evaluation = evaluate_sparse(result, measured)
    emit_report(result, daily, evaluation, out / "forecast", measured)
    console.ok(f"forecast: {result.horizon} daily rows -> {out / 'forecast'}")
    if evaluation is not None:
        console.info(f"sparse evaluation over {len(evaluation.matched_dates)} measured dates ({evaluation.unit_space} units)")
        for row in evaluation.rows:
            console.info(f"  {row.parameter:<14} mse={row.mse:.6g} mae={row.mae:.6g}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "inspect": cmd_inspect,
    "clean": cmd_clean,
    "train": cmd_train,
    "forecast": cmd_forecast,
}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with code 1 instead of argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="amdcast", description="Acid mine drainage forecasting pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "synth": "generate a synthetic weekly dataset with ground truth",
        "inspect": "ADF stationarity report per parameter",
        "clean": "flag anomalies and interpolate to a daily grid",
        "train": "train a neural model on the daily data",
        "forecast": "roll a trained model forward and evaluate",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="root seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
        if name in ("inspect", "clean"):
            p.add_argument("--input", help="weekly CSV (default: <out>/weekly.csv)")
        if name == "forecast":
            p.add_argument("--measured", help="CSV of measured values inside the horizon")
            p.add_argument("--horizon", type=int, help="forecast days (overrides config)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    console = Console()
    overrides: dict = {}
    for key in ("seed", "out", "input"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    fc = {k: getattr(args, k) for k in ("measured", "horizon") if getattr(args, k, None) is not None}
    if fc:
        overrides["forecast"] = fc
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, console)
    except AmdcastError as exc:
        console.error(str(exc))
        return exc.exit_code
    except OSError as exc:
        console.error(str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
