"""Write a synthetic two-house corpus (CSV + config.json) and labelled
switch-on waveforms, ready for the ``hfnilm`` command line.

    python3 scripts/make_synthetic_corpus.py --out demo --days 8
    hfnilm dataset build --config demo/config.json --appliance kettle --variant syn --out demo/ds
"""

import argparse
import json
from pathlib import Path

import numpy as np

from hfnilm.series import MultivariateSeries, PowerSeries, write_multivariate_csv, write_power_csv
from hfnilm.synthetic import CORPUS_PARAMS, WAVEFORM_CLASSES, switch_on_waveform, synthetic_corpus
from hfnilm.waveform import write_waveform


def write_corpus(out: Path, days: float, seed: int, hf: bool) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    houses = []
    for h in synthetic_corpus(days=days, seed=seed):
        agg = h.aggregate.channels["power_w"]
        if hf:
            # crude stand-ins for the waveform channels: the kettle is resistive
            on = h.submeters["kettle"].values > 0
            channels = {"power_w": agg, "form_factor": np.where(on, 1.111, 1.16), "phase_shift_rad": np.where(on, 0.0, -0.35)}
            write_multivariate_csv(MultivariateSeries(h.aggregate.start_time, h.aggregate.period, channels), out / f"{h.name}_agg.csv")
        else:
            write_power_csv(PowerSeries(h.aggregate.start_time, h.aggregate.period, agg), out / f"{h.name}_agg.csv")
        subs = {}
        for name, s in h.submeters.items():
            write_power_csv(s, out / f"{h.name}_{name}.csv")
            subs[name] = f"{h.name}_{name}.csv"
        houses.append({"name": h.name, "aggregate": f"{h.name}_agg.csv", "submeters": subs})
    appliances = {}
    for name, p in CORPUS_PARAMS.items():
        appliances[name] = {
            "on_power_threshold": p.on_power_threshold,
            "min_on": p.min_on,
            "max_on": p.max_on,
            "border": p.border,
            "min_off": p.min_off,
        }
    appliances["kettle"]["window_minutes"] = 13
    config = {
        "root_seed": seed,
        "houses": houses,
        "appliances": appliances,
        "test_ii_days": 2,
        "synthesis": {"p": 0.4, "ratio": 1.0},
    }
    path = out / "config.json"
    path.write_text(json.dumps(config, indent=1))
    return path


def write_waveforms(out: Path, per_class: int, seed: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    k = 0
    for label in WAVEFORM_CLASSES:
        for _ in range(per_class):
            write_waveform(switch_on_waveform(label, rng), out / f"rec{k:03d}.json")
            k += 1


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="demo")
    ap.add_argument("--days", type=float, default=8.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--hf", action="store_true", help="write three-channel aggregates")
    ap.add_argument("--waveforms-per-class", type=int, default=12)
    args = ap.parse_args()
    out = Path(args.out)
    cfg = write_corpus(out, args.days, args.seed, args.hf)
    write_waveforms(out / "waveforms", args.waveforms_per_class, args.seed)
    print(f"config: {cfg}")
    print(f"waveforms: {out / 'waveforms'}")


if __name__ == "__main__":
    main()
