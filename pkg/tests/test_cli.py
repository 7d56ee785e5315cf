import json
import math

import numpy as np
import pytest

from hfnilm.cli import main
from hfnilm.dataset import ActivationParams
from hfnilm.evaluation import EvalReport, RollingConfig, evaluate_rolling, rolling_window_predict
from hfnilm.model import Disaggregator
from hfnilm.series import (
    HF_CHANNELS,
    MultivariateSeries,
    PowerSeries,
    read_multivariate_csv,
    read_power_csv,
    write_multivariate_csv,
    write_power_csv,
)
from hfnilm.synthetic import synthetic_corpus
from hfnilm.training import append_ledger, read_ledger
from hfnilm.waveform import WaveformRecord, write_waveform

KETTLE = {"on_power_threshold": 1500.0, "min_on": 60.0, "max_on": 300.0, "border": 3, "window_minutes": 13}


def _write_corpus(root, hf=False, days=3):
    houses = []
    for h in synthetic_corpus(days=days, seed=2):
        agg = h.aggregate.channels["power_w"]
        if hf:
            # stand-in waveform channels that track the kettle
            kettle = h.submeters["kettle"].values
            mv = MultivariateSeries(
                h.aggregate.start_time,
                h.aggregate.period,
                {"power_w": agg, "form_factor": 1.11 + 0.05 * (kettle > 0), "phase_shift_rad": -0.2 * (kettle == 0)},
            )
            write_multivariate_csv(mv, root / f"{h.name}_agg.csv")
        else:
            write_power_csv(PowerSeries(h.aggregate.start_time, h.aggregate.period, agg), root / f"{h.name}_agg.csv")
        subs = {}
        for name, s in h.submeters.items():
            write_power_csv(s, root / f"{h.name}_{name}.csv")
            subs[name] = f"{h.name}_{name}.csv"
        houses.append({"name": h.name, "aggregate": f"{h.name}_agg.csv", "submeters": subs})
    config = {"root_seed": 4, "houses": houses, "appliances": {"kettle": KETTLE}, "test_ii_days": 1}
    (root / "config.json").write_text(json.dumps(config))
    return root / "config.json"


@pytest.fixture
def root(tmp_path, monkeypatch):
    monkeypatch.setenv("HFNILM_ROOT", str(tmp_path))
    return tmp_path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A kettle dataset plus one quickly-trained low-frequency autoencoder."""
    d = tmp_path_factory.mktemp("trained")
    cfg = _write_corpus(d)
    assert main(["dataset", "build", "--config", str(cfg), "--appliance", "kettle", "--out", str(d / "ds")]) == 0
    argv = ["train", "--dataset", str(d / "ds"), "--model", "autoencoder_lf", "--optimizer", "adam", "--lr", "0.002",
            "--iterations", "2", "--runs-dir", str(d / "runs")]
    assert main(argv) == 0
    weights = read_ledger(d / "runs" / "runs.jsonl")[0]["weights_path"]
    return d, weights


def test_help_and_unknown_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    with pytest.raises(SystemExit) as exc:
        main(["report", "--reports", "x", "--out", "y", "--bogus"])
    assert exc.value.code == 2


@pytest.mark.parametrize("cmd", ["ingest", "train", "select", "predict", "evaluate", "features", "report"])
def test_every_flag_documented(cmd, capsys):
    with pytest.raises(SystemExit):
        main([cmd, "--help"])
    text = capsys.readouterr().out
    assert "--" in text and "usage" in text


def test_ingest_round_trip(root):
    s = PowerSeries(1.6e9, 6.0, np.arange(50, dtype=float) * 10)
    write_power_csv(s, root / "in.csv")
    assert main(["ingest", "--input", "in.csv", "--output", "out/a.csv"]) == 0
    assert (root / "out/a.csv").read_bytes() == (root / "in.csv").read_bytes()


def test_ingest_hf_resistive_sine(root):
    fs, f0 = 10000.0, 50.0
    t = np.arange(int(12 * fs)) / fs
    v = 230 * math.sqrt(2) * np.sin(2 * np.pi * f0 * t)
    write_waveform(WaveformRecord(fs, f0, v, v / 23.0, None, 1.6e9), root / "w.json")
    assert main(["ingest", "--hf", "--input", "w.json", "--output", "hf.csv"]) == 0
    (mv,) = read_multivariate_csv(root / "hf.csv")
    rows = mv.stack(HF_CHANNELS)
    assert len(rows) == 2
    np.testing.assert_allclose(rows[:, 0], 2300.0, rtol=1e-4)
    np.testing.assert_allclose(rows[:, 1], 1.1107, atol=1e-3)
    np.testing.assert_allclose(rows[:, 2], 0.0, atol=1e-4)


def test_corrupt_sidecar_exit_2(root, capsys):
    (root / "bad.json").write_text("{not json")
    assert main(["ingest", "--hf", "--input", "bad.json", "--output", "o.csv"]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_input_exit_2(root):
    assert main(["ingest", "--input", "nope.csv", "--output", "o.csv"]) == 2


def test_train_hf_autoencoder_writes_ledger_line(root):
    cfg = _write_corpus(root, hf=True)
    assert main(["dataset", "build", "--config", str(cfg), "--appliance", "kettle", "--variant", "hf", "--out", "ds_hf"]) == 0
    manifest = json.loads((root / "ds_hf" / "manifest.json").read_text())
    assert manifest["channels"] == list(HF_CHANNELS)
    argv = ["train", "--dataset", "ds_hf", "--appliance", "kettle", "--model", "hf_autoencoder",
            "--optimizer", "adamax", "--lr", "0.001", "--iterations", "1", "--runs-dir", "r"]
    assert main(argv) == 0
    recs = read_ledger(root / "r" / "runs.jsonl")
    assert len(recs) == 1
    assert recs[0]["model"] == "hf_autoencoder" and recs[0]["optimizer"] == "adamax"
    assert json.loads((root / "r" / "manifest.json").read_text())["ledger"] == "runs.jsonl"
    # a single-channel model on this dataset is a configuration error
    assert main(["train", "--dataset", "ds_hf", "--model", "autoencoder_lf", "--iterations", "1", "--runs-dir", "r"]) == 2


def test_select_microwave_ledger(root, capsys):
    aucs = {
        "rectangles_lf": 0.933, "rectangles_syn": 0.937, "rectangles_hf": 0.927, "autoencoder_lf": 0.936,
        "autoencoder_syn": 0.944, "autoencoder_hf": 0.949, "autoencoder_big": 0.932,
    }
    append_ledger(root / "runs.jsonl", [
        {"appliance": "microwave", "model": m, "val_auc": a, "best_val_loss": 0.1, "failed": False, "weights_path": f"{m}.hfnw"}
        for m, a in aucs.items()
    ])
    assert main(["select", "--ledger", "runs.jsonl", "--out", "sel.json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["microwave"]["selected"] == "autoencoder_hf"
    assert out["microwave"]["weights_path"] == "autoencoder_hf.hfnw"
    assert json.loads((root / "sel.json").read_text()) == out


def test_evaluate_rolling_matches_library(trained, tmp_path):
    d, weights = trained
    agg, truth = d / "house_b_agg.csv", d / "house_b_kettle.csv"
    out = tmp_path / "rep" / "rolling.json"
    argv = ["evaluate", "--procedure", "rolling", "--weights", weights, "--input", str(agg), "--truth", str(truth),
            "--dataset", str(d / "ds"), "--threshold", "400", "--mean-activation-length", "15", "--out", str(out)]
    assert main(argv) == 0
    cli = EvalReport.from_dict(json.loads(out.read_text()))

    model = Disaggregator.load(weights)
    (pred_in,) = read_power_csv(agg)
    (true_s,) = read_power_csv(truth)
    pred = rolling_window_predict(model, pred_in, RollingConfig(model.window, 15))
    params = ActivationParams(**{k: v for k, v in KETTLE.items() if k != "window_minutes"})
    lib = evaluate_rolling(pred, true_s, model.window, 400.0, params)
    a, b = cli.to_dict(), lib.to_dict()
    for key in ("created_unix_s", "appliance", "model", "split"):
        a.pop(key), b.pop(key)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_evaluate_activations_and_predict(trained, tmp_path):
    d, weights = trained
    out = tmp_path / "act.json"
    argv = ["evaluate", "--procedure", "activations", "--weights", weights, "--dataset", str(d / "ds"), "--out", str(out),
            "--roc", str(tmp_path / "roc.csv")]
    assert main(argv) == 0
    rep = json.loads(out.read_text())
    assert rep["split"] == "test_I" and 0.0 <= rep["auc"] <= 1.0
    assert main(["predict", "--weights", weights, "--input", str(d / "house_b_agg.csv"), "--output", str(tmp_path / "p.csv"),
                 "--dataset", str(d / "ds")]) == 0
    (pred,) = read_power_csv(tmp_path / "p.csv")
    (agg,) = read_power_csv(d / "house_b_agg.csv")
    assert len(pred) == len(agg)


def test_train_is_idempotent(trained, tmp_path):
    d, _ = trained
    outs = []
    for k in range(2):
        runs = tmp_path / f"runs{k}"
        argv = ["train", "--dataset", str(d / "ds"), "--model", "autoencoder_lf", "--optimizer", "adam", "--lr", "0.001",
                "--iterations", "1", "--runs-dir", str(runs)]
        assert main(argv) == 0
        outs.append(sorted(p.read_bytes() for p in (runs / "weights").glob("*.hfnw")))
    assert outs[0] == outs[1]


def _report(path, created, auc, appliance="kettle"):
    EvalReport(auc=auc, appliance=appliance, procedure="rolling", split="test_I", created_unix_s=created).write_json(path)


def test_report_one_row(root):
    (root / "reps").mkdir()
    _report(root / "reps" / "a.json", 1.0, 0.8)
    assert main(["report", "--reports", "reps", "--out", "sum"]) == 0
    rows = json.loads((root / "sum" / "summary.json").read_text())
    assert len(rows) == 1 and rows[0]["auc"] == 0.8
    assert (root / "sum" / "summary.csv").read_text().splitlines()[0].startswith("appliance,model,procedure")


def test_report_duplicate_latest_wins(root, caplog):
    (root / "reps").mkdir()
    _report(root / "reps" / "new.json", 20.0, 0.9)
    _report(root / "reps" / "old.json", 10.0, 0.7)
    assert main(["report", "--reports", "reps", "--out", "sum"]) == 0
    rows = json.loads((root / "sum" / "summary.json").read_text())
    assert [r["auc"] for r in rows] == [0.9]
    assert any("duplicate" in r.message for r in caplog.records)


def test_report_empty_dir_exit_2(root):
    (root / "empty").mkdir()
    assert main(["report", "--reports", "empty", "--out", "sum"]) == 2
