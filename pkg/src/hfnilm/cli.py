"""Command-line entry point.

Exit codes: 0 success, 2 invalid input or configuration, 1 runtime failure.
``HFNILM_ROOT`` overrides the directory relative paths are resolved against.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import classify, dataset, evaluation, series, training, waveform
from .model import Disaggregator
from .nn import ARCHITECTURES, OptimizerConfig, optimizer_grid

log = logging.getLogger("hfnilm")

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    """Bad configuration or missing prerequisite; maps to exit code 2."""


def root_dir() -> Path:
    return Path(os.environ.get("HFNILM_ROOT", "."))


def resolve(path, base: Path | None = None) -> Path:
    p = Path(path)
    if p.is_absolute():
        return p
    return (base or root_dir()) / p


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))


# -- ingest -------------------------------------------------------------------


def cmd_ingest(args) -> int:
    src = _require(resolve(args.input), "input")
    out = resolve(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.hf:
        rec = waveform.read_waveform(src)
        mv, flags = waveform.hf_channel_series(rec, args.period)
        series.write_multivariate_csv(mv, out)
        log.info("wrote %d rows (%d low-current slots flagged) to %s", len(mv), int(flags.sum()), out)
        return EXIT_OK
    parts = series.read_power_csv(src, target_period=args.period)
    if len(parts) == 1:
        series.write_power_csv(parts[0], out)
    else:
        for k, s in enumerate(parts):
            series.write_power_csv(s, out.with_name(f"{out.stem}_part{k}{out.suffix}"))
    log.info("wrote %d contiguous series from %s", len(parts), src)
    return EXIT_OK


# -- dataset ------------------------------------------------------------------


def _load_config(path) -> tuple[dict, Path]:
    path = _require(resolve(path), "config")
    try:
        return json.loads(path.read_text()), path.parent
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _load_aggregate(path: Path) -> series.MultivariateSeries:
    with open(path) as fh:
        header = tuple(h.strip() for h in fh.readline().strip().split(","))
    if header == series.HF_HEADER:
        parts = series.read_multivariate_csv(path)
    else:
        parts = [series.MultivariateSeries.from_power(s) for s in series.read_power_csv(path)]
    if len(parts) > 1:
        log.warning("%s has %d gap-separated segments; using the longest", path, len(parts))
    return max(parts, key=len)


def _load_power(path: Path) -> series.PowerSeries:
    parts = series.read_power_csv(path)
    return max(parts, key=len)


def appliance_settings(config: dict, appliance: str) -> tuple[dataset.ActivationParams, int]:
    table = config.get("appliances", {})
    entry = dict(table.get(appliance, {}))
    minutes = entry.pop("window_minutes", None)
    if entry:
        params = dataset.ActivationParams(**entry)
    elif appliance in dataset.DEFAULT_ACTIVATION_PARAMS:
        params = dataset.DEFAULT_ACTIVATION_PARAMS[appliance]
    else:
        raise UsageError(f"no activation parameters for {appliance!r}")
    if minutes is not None:
        window = int(round(minutes * 60 / series.CANONICAL_PERIOD))
    else:
        window = series.window_length_for(appliance)
    return params, window


def distractor_table(config: dict) -> dict[str, dataset.ActivationParams]:
    out = {}
    for name, entry in config.get("appliances", {}).items():
        entry = {k: v for k, v in entry.items() if k != "window_minutes"}
        if entry:
            out[name] = dataset.ActivationParams(**entry)
    return out


def cmd_dataset_build(args) -> int:
    config, base = _load_config(args.config)
    houses = []
    for h in config.get("houses", []):
        agg = _load_aggregate(_require(resolve(h["aggregate"], base), "aggregate"))
        subs = {name: _load_power(_require(resolve(p, base), "submeter")) for name, p in h.get("submeters", {}).items()}
        houses.append(dataset.House(h["name"], agg, subs))
    params, window = appliance_settings(config, args.appliance)
    channels = series.HF_CHANNELS if args.variant == "hf" else (series.POWER_CHANNEL,)
    synth = config.get("synthesis", {})
    ratio = float(synth.get("ratio", 1.0)) if args.variant == "syn" else 0.0
    seed = training.derive_seed(int(config.get("root_seed", 0)), "dataset", args.appliance, args.variant)
    splits = dataset.build_splits(
        houses,
        args.appliance,
        params,
        window,
        channels=channels,
        test_house=config.get("test_house"),
        test_ii_days=float(config.get("test_ii_days", dataset.TEST_II_DAYS)),
        synthetic_ratio=ratio,
        p=float(synth.get("p", dataset.DISTRACTOR_PROBABILITY)),
        distractor_params=distractor_table(config),
        seed=seed,
    )
    out = resolve(args.out)
    dataset.save_splits(
        splits,
        out,
        {"houses": [h.name for h in houses], "variant": args.variant, "seed": seed, "root_seed": config.get("root_seed", 0)},
    )
    for name, s in splits.sets().items():
        log.info("%s: %d windows (%d with activation)", name, len(s), int(s.labels.sum()))
    return EXIT_OK


# -- train / select -------------------------------------------------------------


def _load_dataset(path) -> tuple[dict, dict[str, dataset.SampleSet]]:
    d = _require(resolve(path), "dataset directory")
    _require(d / "manifest.json", "dataset manifest")
    return dataset.load_dataset(d)


def cmd_train(args) -> int:
    manifest, sets = _load_dataset(args.dataset)
    appliance = args.appliance or manifest["appliance"]
    if appliance != manifest["appliance"]:
        raise UsageError(f"dataset was built for {manifest['appliance']!r}, not {appliance!r}")
    kind = training.architecture_of(args.model)
    needs = 3 if kind.startswith("hf_") else 1
    if len(manifest["channels"]) != needs:
        raise UsageError(f"{args.model} needs a {needs}-channel dataset; this one has {manifest['channels']}")
    if args.optimizer:
        lrs = [args.lr] if args.lr else [0.002, 0.001, 0.0005]
        grid = [OptimizerConfig(args.optimizer, lr) for lr in lrs]
    else:
        grid = optimizer_grid()
    runs_dir = resolve(args.runs_dir)
    ledger = runs_dir / "runs.jsonl"
    result = training.grid_search(
        appliance,
        args.model,
        sets["train"],
        sets["val"],
        grid=grid,
        iterations=args.iterations,
        seed=args.seed,
        jobs=args.jobs,
        runs_dir=runs_dir / "weights",
        ledger=ledger,
        retries=args.retries,
    )
    curves = runs_dir / "curves"
    curves.mkdir(exist_ok=True)
    for r in result.runs:
        with open(curves / f"{appliance}__{args.model}__{r.config.optimizer.label}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "train_loss", "val_loss"])
            for k, (a, b) in enumerate(zip(r.train_curve, r.val_curve)):
                w.writerow([k, repr(a), repr(b)])
    _write_json(
        runs_dir / "manifest.json",
        {"dataset": str(resolve(args.dataset)), "ledger": ledger.name, "last_run": {"appliance": appliance, "model": args.model, "seed": args.seed}},
    )
    print(json.dumps({"appliance": appliance, "model": args.model, "best": result.best.record(), "degenerate": result.degenerate}, indent=2))
    return EXIT_OK


def cmd_select(args) -> int:
    ledger = _require(resolve(args.ledger), "run ledger")
    records = training.read_ledger(ledger)
    if not records:
        raise UsageError("run ledger is empty")
    table, best_runs = training.selection_from_ledger(records)
    summary = {}
    for app, model in table.best_models().items():
        summary[app] = {
            "selected": model,
            "auc": {m: v[0] for m, v in table.entries[app].items()},
            "weights_path": best_runs[(app, model)].get("weights_path"),
        }
    text = json.dumps(summary, indent=2, sort_keys=True)
    if args.out:
        resolve(args.out).write_text(text)
    print(text)
    return EXIT_OK


# -- predict / evaluate -----------------------------------------------------------


def _load_model(path) -> Disaggregator:
    return Disaggregator.load(_require(resolve(path), "weights"))


def _load_input_series(path, model: Disaggregator):
    agg = _load_aggregate(_require(resolve(path), "input series"))
    missing = set(model.channels) - set(agg.names)
    if missing:
        raise UsageError(f"input lacks channels {sorted(missing)} needed by the model")
    return agg


def _mean_activation_length(args) -> int:
    if args.mean_activation_length is not None:
        return args.mean_activation_length
    if getattr(args, "dataset", None):
        manifest, _ = _load_dataset(args.dataset)
        return int(manifest["mean_activation_length"])
    return 0


def cmd_predict(args) -> int:
    model = _load_model(args.weights)
    agg = _load_input_series(args.input, model)
    cfg = evaluation.RollingConfig(model.window, _mean_activation_length(args))
    pred = evaluation.rolling_window_predict(model, agg, cfg)
    series.write_power_csv(pred, resolve(args.output))
    return EXIT_OK


def _activation_params_from(manifest: dict) -> dataset.ActivationParams:
    return dataset.ActivationParams(**manifest["params"])


def cmd_evaluate(args) -> int:
    model = _load_model(args.weights)
    if args.procedure == "activations":
        if not args.dataset:
            raise UsageError("--dataset is required for the activations procedure")
        manifest, sets = _load_dataset(args.dataset)
        if args.split not in sets:
            raise UsageError(f"unknown split {args.split!r}; have {sorted(sets)}")
        threshold = args.threshold
        if threshold is None and len(np.unique(sets["val"].labels)) == 2:
            threshold = evaluation.choose_threshold_max_f1(model.scores(sets["val"].inputs), sets["val"].labels)
        rep = evaluation.evaluate_activations(model, sets[args.split], threshold)
        rep.split = args.split
        appliance = manifest["appliance"]
    else:
        if not args.input or not args.truth:
            raise UsageError("--input and --truth are required for the rolling procedure")
        manifest = {}
        if args.dataset:
            manifest, sets = _load_dataset(args.dataset)
        threshold = args.threshold
        if threshold is None:
            if not manifest:
                raise UsageError("give --threshold or a --dataset to fit it on the validation set")
            threshold = evaluation.choose_threshold_max_f1(model.scores(sets["val"].inputs), sets["val"].labels)
        if manifest:
            params = _activation_params_from(manifest)
        elif args.appliance in dataset.DEFAULT_ACTIVATION_PARAMS:
            params = dataset.DEFAULT_ACTIVATION_PARAMS[args.appliance]
        else:
            raise UsageError("need --dataset or a known --appliance for the activation rule")
        agg = _load_input_series(args.input, model)
        truth = _load_power(_require(resolve(args.truth), "truth series"))
        a = _mean_activation_length(args)
        pred = evaluation.rolling_window_predict(model, agg, evaluation.RollingConfig(model.window, a))
        start = max(pred.start_time, truth.start_time)
        i0 = int(round((start - pred.start_time) / pred.period))
        j0 = int(round((start - truth.start_time) / truth.period))
        n = min(len(pred) - i0, len(truth) - j0)
        rep = evaluation.evaluate_rolling(pred.segment(i0, i0 + n), truth.segment(j0, j0 + n), model.window, threshold, params)
        rep.split = args.split or ""
        appliance = manifest.get("appliance", args.appliance or "")
    rep.appliance = appliance
    rep.model = model.meta.get("model", model.network.spec.kind)
    out = resolve(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rep.write_json(out)
    if args.roc:
        resolve(args.roc).parent.mkdir(parents=True, exist_ok=True)
        rep.write_roc_csv(resolve(args.roc))
    print(json.dumps({k: v for k, v in rep.to_dict().items() if k != "roc"}, indent=2, sort_keys=True))
    return EXIT_OK


# -- features -----------------------------------------------------------------------


FEATURE_SUBSETS = ("transient", "steady", "steady+transient", "steady+vi", "all")


def _subset_columns(names_t, names_s, subset: str):
    vi = [n for n in names_s if n.startswith("vi_")]
    s_scalar = [f"steady:{n}" for n in names_s if not n.startswith("vi_")]
    t_scalar = [f"transient:{n}" for n in names_t if not n.startswith("vi_")]
    return {
        "transient": t_scalar,
        "steady": s_scalar,
        "steady+transient": s_scalar + t_scalar,
        "steady+vi": s_scalar + [f"steady:{n}" for n in vi],
        "all": s_scalar + t_scalar + [f"steady:{n}" for n in vi],
    }[subset]


def cmd_features(args) -> int:
    src = _require(resolve(args.input), "waveform directory")
    out = resolve(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows_t, rows_s, labels = [], [], []
    for sidecar in sorted(src.glob("*.json")):
        rec = waveform.read_waveform(sidecar)
        if rec.label is None:
            raise UsageError(f"{sidecar}: waveform has no label")
        try:
            fv = waveform.record_features(rec)
        except waveform.DegenerateSignalError as exc:
            log.warning("skipping %s: %s", sidecar.name, exc)
            continue
        rows_t.append(fv["transient"].values)
        rows_s.append(fv["steady"].values)
        labels.append(rec.label)
    if len(set(labels)) < 2:
        raise UsageError("need labelled waveforms from at least two appliance classes")
    names_t, names_s = waveform.feature_names("transient"), waveform.feature_names("steady")
    Xt, Xs, y = np.array(rows_t), np.array(rows_s), np.array(labels)
    classify.write_feature_matrix(out / "transient_features.csv", names_t, Xt, y)
    classify.write_feature_matrix(out / "steady_features.csv", names_s, Xs, y)
    seed = args.seed
    reports = {
        "transient": classify.importance_report(Xt, y, names_t, "transient", seed),
        "steady": classify.importance_report(Xs, y, names_s, "steady", seed),
    }
    columns = {f"transient:{n}": Xt[:, k] for k, n in enumerate(names_t)}
    columns.update({f"steady:{n}": Xs[:, k] for k, n in enumerate(names_s)})
    bench = {}
    for subset in FEATURE_SUBSETS:
        cols = _subset_columns(names_t, names_s, subset)
        X = np.stack([columns[c] for c in cols], axis=1)
        res = classify.benchmark_classifiers(X, y, seeds=(seed, seed + 1, seed + 2), split_seed=seed)
        bench[subset] = {"knn": res.knn_accuracy, "rf_mean": res.rf_accuracy_mean, "rf_std": res.rf_accuracy_std}
    _write_json(
        out / "importance.json",
        {
            "reports": {m: r.to_dict() for m, r in reports.items()},
            "selected": classify.select_features(reports, top=10),
        },
    )
    _write_json(out / "benchmark.json", bench)
    print(json.dumps(bench, indent=2, sort_keys=True))
    return EXIT_OK


# -- report ---------------------------------------------------------------------------

REPORT_COLUMNS = ("appliance", "model", "procedure", "split", "auc", "accuracy", "precision", "recall", "f1", "mae", "reite", "threshold", "n")


def cmd_report(args) -> int:
    src = resolve(args.reports)
    if not src.is_dir():
        raise UsageError(f"report directory not found: {src}")
    latest: dict[tuple, tuple] = {}
    for path in sorted(src.glob("*.json")):
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError:
            continue
        if not isinstance(d, dict) or "procedure" not in d or "auc" not in d:
            continue
        rep = evaluation.EvalReport.from_dict(d)
        key = (rep.appliance, rep.procedure, rep.split)
        stamp = (rep.created_unix_s, path.name)
        if key in latest:
            log.warning("duplicate report for %s; keeping the latest", "/".join(key))
            if stamp < latest[key][0]:
                continue
        latest[key] = (stamp, rep)
    if not latest:
        raise UsageError(f"no evaluation reports in {src}")
    rows = [{c: getattr(rep, c) for c in REPORT_COLUMNS} for _, rep in (latest[k] for k in sorted(latest))]
    out = resolve(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    _write_json(out / "summary.json", rows)
    print(f"{len(rows)} report row(s) written to {out}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hfnilm", description="Neural NILM with high-frequency waveform channels.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="convert a low-frequency CSV or a raw waveform into canonical 6 s series")
    s.add_argument("--input", required=True, help="CSV (timestamp_unix_s,active_power_w) or waveform JSON sidecar with --hf")
    s.add_argument("--output", required=True, help="output CSV path")
    s.add_argument("--hf", action="store_true", help="input is a waveform; emit power, form factor and phase shift")
    s.add_argument("--period", type=float, default=series.CANONICAL_PERIOD, help="output period in seconds (default 6)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("dataset", help="dataset operations")
    dsub = s.add_subparsers(dest="dataset_command", required=True)
    b = dsub.add_parser("build", help="build train/val/test windows for one appliance")
    b.add_argument("--config", required=True, help="JSON config listing houses, appliance table and seeds")
    b.add_argument("--appliance", required=True)
    b.add_argument("--variant", choices=("lf", "syn", "hf"), default="lf", help="power only, power + synthetic windows, or three channels")
    b.add_argument("--out", required=True, help="output dataset directory")
    b.set_defaults(func=cmd_dataset_build)

    s = sub.add_parser("train", help="train one model over the optimizer grid")
    s.add_argument("--dataset", required=True, help="dataset directory from 'dataset build'")
    s.add_argument("--appliance", help="defaults to the dataset's appliance")
    s.add_argument("--model", required=True, choices=sorted(training.MODEL_VARIANTS) + list(ARCHITECTURES))
    s.add_argument("--optimizer", choices=("adam", "adamax"), help="restrict the grid to one optimizer")
    s.add_argument("--lr", type=float, help="restrict the grid to one learning rate (needs --optimizer)")
    s.add_argument("--iterations", type=int, default=training.ITERATIONS, help="epochs per run (default 200)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1, help="grid points trained in parallel")
    s.add_argument("--retries", type=int, default=0, help="retrain a diverged grid point up to N times with fresh seeds")
    s.add_argument("--runs-dir", default="runs", help="where weights, curves and runs.jsonl go")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("select", help="pick the best model per appliance from a run ledger")
    s.add_argument("--ledger", required=True, help="runs.jsonl written by 'train'")
    s.add_argument("--out", help="also write the selection JSON here")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("predict", help="disaggregate a whole series with the rolling window")
    s.add_argument("--weights", required=True)
    s.add_argument("--input", required=True, help="aggregate CSV (low-frequency or multivariate)")
    s.add_argument("--output", required=True, help="predicted appliance power CSV")
    s.add_argument("--mean-activation-length", type=int, help="a, in samples, for the w/(w-2a) correction")
    s.add_argument("--dataset", help="read a from this dataset's manifest")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="evaluate a model and write an EvalReport JSON")
    s.add_argument("--procedure", choices=("activations", "rolling"), required=True)
    s.add_argument("--weights", required=True)
    s.add_argument("--dataset", help="dataset directory (windows, threshold fit, activation rule)")
    s.add_argument("--split", default="test_I", help="split for the activations procedure")
    s.add_argument("--input", help="aggregate CSV for the rolling procedure")
    s.add_argument("--truth", help="submeter CSV for the rolling procedure")
    s.add_argument("--appliance", help="appliance name when no dataset is given")
    s.add_argument("--threshold", type=float, help="detection threshold in watts (default: max-F1 on validation)")
    s.add_argument("--mean-activation-length", type=int, help="a, in samples (default: from the dataset)")
    s.add_argument("--out", required=True, help="EvalReport JSON path")
    s.add_argument("--roc", help="also write ROC points as CSV")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("features", help="waveform feature study: matrices, importances, classifier benchmark")
    s.add_argument("--input", required=True, help="directory of labelled waveform sidecars")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("report", help="merge EvalReports into summary tables")
    s.add_argument("--reports", required=True, help="directory of EvalReport JSON files")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, KeyError) as exc:
        print(f"hfnilm: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"hfnilm: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
