"""Supervised window datasets from aggregate + submeter recordings.

Windows are built around appliance activations (label 1) and an equal number of
activation-free windows (label 0). Each sample carries both target encodings:
the appliance power window (autoencoders) and the (start, end, mean power)
rectangle (rectangles networks).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .series import CANONICAL_PERIOD, POWER_CHANNEL, MultivariateSeries, PowerSeries, window_length_for

log = logging.getLogger(__name__)

DISTRACTOR_PROBABILITY = 0.4
MIN_OFF_SECONDS = 30.0
TEST_II_DAYS = 14


@dataclass(frozen=True)
class ActivationParams:
    on_power_threshold: float
    min_on: float
    max_on: float
    border: int = 0
    min_off: float = MIN_OFF_SECONDS

    def __post_init__(self):
        if not self.on_power_threshold > 0:
            raise ValueError("on_power_threshold must be positive")
        if not 0 < self.min_on <= self.max_on:
            raise ValueError("need 0 < min_on <= max_on")
        if self.border < 0 or self.min_off < 0:
            raise ValueError("border and min_off must be non-negative")


# Configurable defaults (watts, seconds); tune per dataset.
DEFAULT_ACTIVATION_PARAMS = {
    "kettle": ActivationParams(2000.0, 12.0, 300.0),
    "fridge": ActivationParams(50.0, 60.0, 3600.0),
    "washing": ActivationParams(20.0, 1800.0, 10800.0),
    "microwave": ActivationParams(200.0, 12.0, 300.0),
    "dishwasher": ActivationParams(10.0, 1800.0, 9000.0),
}


@dataclass(frozen=True)
class Activation:
    start: int
    end: int
    power: np.ndarray
    source: str = ""

    def __len__(self) -> int:
        return self.end - self.start

    def duration(self, period: float = CANONICAL_PERIOD) -> float:
        return (self.end - self.start) * period


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    padded = np.concatenate([[0], mask.astype(np.int8), [0]])
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def extract_activations(series: PowerSeries, params: ActivationParams, source: str = "") -> list[Activation]:
    """Above-threshold runs, merged across short gaps, filtered by duration.

    Runs separated by at most ``params.min_off`` seconds below threshold are
    joined first; a merged run survives when ``min_on <= duration <= max_on``.
    """
    values = series.values
    runs = _runs(values > params.on_power_threshold)
    merged: list[list[int]] = []
    for start, end in runs:
        if merged and (start - merged[-1][1]) * series.period <= params.min_off:
            merged[-1][1] = end
        else:
            merged.append([start, end])
    out = []
    for start, end in merged:
        dur = (end - start) * series.period
        if params.min_on <= dur <= params.max_on:
            out.append(Activation(start, end, values[start:end].copy(), source))
    return out


def mean_activation_length(activations: Sequence[Activation]) -> int:
    """Average activation length in samples, rounded to the nearest sample."""
    if not activations:
        return 0
    return int(np.floor(np.mean([len(a) for a in activations]) + 0.5))


def _feasible_gaps(n: int, activations: Sequence[Activation], window: int) -> list[tuple[int, int]]:
    """(first, last) feasible offsets of windows lying between activations."""
    bounds = [0]
    for a in sorted(activations, key=lambda a: a.start):
        bounds += [a.start, a.end]
    bounds.append(n)
    gaps = []
    for lo, hi in zip(bounds[::2], bounds[1::2]):
        if hi - lo >= window:
            gaps.append((lo, hi - window))
    return gaps


def sample_non_activation(series, activations: Sequence[Activation], window: int, rng: np.random.Generator) -> int:
    """Uniformly random offset of a window that overlaps no activation.

    The series edges act as boundaries, so an activation-free series admits
    every offset.
    """
    n = series if isinstance(series, (int, np.integer)) else len(series)
    gaps = _feasible_gaps(n, activations, window)
    counts = [hi - lo + 1 for lo, hi in gaps]
    total = sum(counts)
    if total == 0:
        raise ValueError(f"no activation-free gap of {window} samples")
    k = int(rng.integers(total))
    for (lo, _), c in zip(gaps, counts):
        if k < c:
            return lo + k
        k -= c
    raise AssertionError("unreachable")


@dataclass
class SynthesisConfig:
    p: float = DISTRACTOR_PROBABILITY
    pools: dict[str, list[np.ndarray]] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")


@dataclass
class SyntheticWindow:
    aggregate: np.ndarray
    target: np.ndarray
    start: int
    end: int
    distractors: list[str]


def synthesize_aggregate(target, cfg: SynthesisConfig, window: int, rng: np.random.Generator, border: int = 0) -> SyntheticWindow:
    """Superpose a target activation (optional) and random distractor activations.

    The target goes at a uniform position keeping ``border`` samples clear on
    both sides; each distractor pool contributes one activation with probability
    ``cfg.p`` at a uniform position, clipped to the window.
    """
    agg = np.zeros(window)
    tgt = np.zeros(window)
    start = end = 0
    if target is not None:
        power = np.asarray(target.power if isinstance(target, Activation) else target, dtype=np.float64)
        L = len(power)
        if L + 2 * border > window:
            raise ValueError(f"target of {L} samples (+{border} border each side) does not fit in {window}")
        start = int(rng.integers(border, window - border - L + 1))
        end = start + L
        tgt[start:end] = power
        agg += tgt
    used = []
    for name in sorted(cfg.pools):
        pool = cfg.pools[name]
        if not pool or rng.random() >= cfg.p:
            continue
        d = np.asarray(pool[int(rng.integers(len(pool)))], dtype=np.float64)
        off = int(rng.integers(-(len(d) - 1), window))
        lo, hi = max(off, 0), min(off + len(d), window)
        agg[lo:hi] += d[lo - off : hi - off]
        used.append(name)
    return SyntheticWindow(agg, tgt, start, end, used)


@dataclass
class SampleSet:
    """Stacked samples. ``inputs`` are raw (watts / feature units)."""

    inputs: np.ndarray  # (n, W, C)
    targets: np.ndarray  # (n, W) appliance watts
    rectangles: np.ndarray  # (n, 3): start fraction, end fraction, mean watts
    labels: np.ndarray  # (n,)
    channels: tuple[str, ...] = (POWER_CHANNEL,)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def window(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "SampleSet":
        return SampleSet(self.inputs[idx], self.targets[idx], self.rectangles[idx], self.labels[idx], self.channels)

    @classmethod
    def empty(cls, window: int, channels: tuple[str, ...]) -> "SampleSet":
        return cls(np.zeros((0, window, len(channels))), np.zeros((0, window)), np.zeros((0, 3)), np.zeros(0, dtype=np.int8), channels)

    @classmethod
    def concat(cls, parts: Sequence["SampleSet"]) -> "SampleSet":
        parts = [p for p in parts if len(p)] or list(parts[:1])
        return cls(
            np.concatenate([p.inputs for p in parts]),
            np.concatenate([p.targets for p in parts]),
            np.concatenate([p.rectangles for p in parts]),
            np.concatenate([p.labels for p in parts]).astype(np.int8),
            parts[0].channels,
        )


def window_samples(
    inputs: np.ndarray,
    submeter: np.ndarray,
    activations: Sequence[Activation],
    window: int,
    border: int,
    rng: np.random.Generator,
    channels: tuple[str, ...],
) -> SampleSet:
    """Balanced activation / non-activation windows from one aligned segment."""
    n = len(submeter)
    X, Y, R, lab = [], [], [], []
    for a in activations:
        L = len(a)
        lo = max(border, a.start + window - n)
        hi = min(window - border - L, a.start)
        if L + 2 * border > window or lo > hi:
            continue
        u = int(rng.integers(lo, hi + 1))
        off = a.start - u
        X.append(inputs[off : off + window])
        Y.append(submeter[off : off + window])
        R.append((u / window, (u + L) / window, float(np.mean(a.power))))
        lab.append(1)
    n_pos = len(lab)
    for _ in range(n_pos):
        try:
            off = sample_non_activation(n, activations, window, rng)
        except ValueError:
            log.warning("ran out of activation-free gaps after %d non-activations", len(lab) - n_pos)
            break
        X.append(inputs[off : off + window])
        Y.append(submeter[off : off + window])
        R.append((0.0, 0.0, 0.0))
        lab.append(0)
    if not lab:
        return SampleSet.empty(window, channels)
    return SampleSet(
        np.asarray(X, dtype=np.float64).reshape(len(lab), window, len(channels)),
        np.asarray(Y, dtype=np.float64),
        np.asarray(R, dtype=np.float64),
        np.asarray(lab, dtype=np.int8),
        channels,
    )


def synthetic_samples(
    target_pool: Sequence[Activation],
    cfg: SynthesisConfig,
    count: int,
    window: int,
    border: int,
    rng: np.random.Generator,
) -> SampleSet:
    """``count`` synthetic windows, half of them holding a target activation."""
    fitting = [a for a in target_pool if len(a) + 2 * border <= window]
    X, Y, R, lab = [], [], [], []
    for k in range(count):
        with_target = bool(fitting) and k % 2 == 0
        tgt = fitting[int(rng.integers(len(fitting)))] if with_target else None
        sw = synthesize_aggregate(tgt, cfg, window, rng, border)
        X.append(sw.aggregate)
        Y.append(sw.target)
        if with_target:
            R.append((sw.start / window, sw.end / window, float(np.mean(tgt.power))))
        else:
            R.append((0.0, 0.0, 0.0))
        lab.append(int(with_target))
    return SampleSet(
        np.asarray(X).reshape(count, window, 1),
        np.asarray(Y).reshape(count, window),
        np.asarray(R).reshape(count, 3),
        np.asarray(lab, dtype=np.int8),
        (POWER_CHANNEL,),
    )


@dataclass
class House:
    name: str
    aggregate: MultivariateSeries
    submeters: dict[str, PowerSeries]

    def aligned(self, appliance: str) -> tuple[MultivariateSeries, PowerSeries]:
        """Aggregate and submeter trimmed to their common time span."""
        sub = self.submeters[appliance]
        agg = self.aggregate
        if not np.isclose(sub.period, agg.period):
            raise ValueError(f"{self.name}: submeter and aggregate periods differ")
        shift = int(round((sub.start_time - agg.start_time) / agg.period))
        a0, s0 = max(shift, 0), max(-shift, 0)
        n = min(len(agg) - a0, len(sub) - s0)
        if n <= 0:
            raise ValueError(f"{self.name}: {appliance} submeter does not overlap the aggregate")
        return agg.segment(a0, a0 + n), sub.segment(s0, s0 + n)


@dataclass
class Splits:
    appliance: str
    window: int
    params: ActivationParams
    train: SampleSet
    val: SampleSet
    test_i: SampleSet
    test_ii: SampleSet
    train_activations: list[Activation]
    test_i_series: list[tuple[MultivariateSeries, PowerSeries]] = field(default_factory=list)
    test_ii_series: list[tuple[MultivariateSeries, PowerSeries]] = field(default_factory=list)

    @property
    def mean_activation_length(self) -> int:
        return mean_activation_length(self.train_activations)

    def sets(self) -> dict[str, SampleSet]:
        return {"train": self.train, "val": self.val, "test_I": self.test_i, "test_II": self.test_ii}


def split_train_val(n: int, val_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(n)
    n_val = int(round(val_fraction * n))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def build_splits(
    houses: Sequence[House],
    appliance: str,
    params: ActivationParams | None = None,
    window: int | None = None,
    channels: tuple[str, ...] = (POWER_CHANNEL,),
    test_house: str | None = None,
    test_ii_days: float = TEST_II_DAYS,
    synthetic_ratio: float = 0.0,
    p: float = DISTRACTOR_PROBABILITY,
    distractor_params: dict[str, ActivationParams] | None = None,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> Splits:
    """Train/validation windows plus the unseen-house and last-weeks test sets.

    ``test_house`` (default: the last house) goes entirely to test I; the last
    ``test_ii_days`` of every other house go to test II; the rest is windowed,
    shuffled and split 80/20. ``synthetic_ratio > 0`` appends that many synthetic
    windows per real training window (power channel only).
    """
    if len(houses) < 2:
        raise ValueError("need at least two houses to build the test splits")
    params = params or DEFAULT_ACTIVATION_PARAMS[appliance]
    window = window or window_length_for(appliance)
    test_house = test_house or houses[-1].name
    if test_house not in {h.name for h in houses}:
        raise ValueError(f"unknown test house {test_house!r}")
    if synthetic_ratio > 0 and tuple(channels) != (POWER_CHANNEL,):
        raise ValueError("synthetic windows can only be built for the power channel")
    distractor_params = {**DEFAULT_ACTIVATION_PARAMS, **(distractor_params or {})}
    ss = np.random.SeedSequence(seed)
    rng_win, rng_split, rng_test, rng_syn = (np.random.default_rng(s) for s in ss.spawn(4))

    pool_parts, test_i_parts, test_ii_parts = [], [], []
    train_acts: list[Activation] = []
    test_i_series, test_ii_series = [], []
    distractors: dict[str, list[np.ndarray]] = {}
    for house in houses:
        agg, sub = house.aligned(appliance)
        X = agg.stack(channels)
        if house.name == test_house:
            acts = extract_activations(sub, params, house.name)
            test_i_parts.append(window_samples(X, sub.values, acts, window, params.border, rng_test, channels))
            test_i_series.append((agg, sub))
            continue
        cut = len(sub) - int(round(test_ii_days * 86400 / sub.period))
        if cut < window or len(sub) - cut < window:
            raise ValueError(f"{house.name}: not enough data for a {test_ii_days}-day test II split")
        head, tail = sub.segment(0, cut), sub.segment(cut, len(sub))
        acts = extract_activations(head, params, house.name)
        train_acts += acts
        pool_parts.append(window_samples(X[:cut], head.values, acts, window, params.border, rng_win, channels))
        tail_acts = extract_activations(tail, params, house.name)
        test_ii_parts.append(window_samples(X[cut:], tail.values, tail_acts, window, params.border, rng_test, channels))
        test_ii_series.append((agg.segment(cut, len(agg)), tail))
        if synthetic_ratio > 0:
            for other, meter in house.submeters.items():
                if other == appliance or other not in distractor_params:
                    continue
                head_other = meter.segment(0, cut)
                found = extract_activations(head_other, distractor_params[other], house.name)
                distractors.setdefault(other, []).extend(a.power for a in found if len(a) <= window)

    empty = SampleSet.empty(window, tuple(channels))
    pool = SampleSet.concat(pool_parts or [empty])
    if len(pool) == 0:
        raise ValueError("no training windows could be extracted")
    tr, va = split_train_val(len(pool), val_fraction, rng_split)
    train, val = pool.subset(tr), pool.subset(va)
    if synthetic_ratio > 0:
        cfg = SynthesisConfig(p, distractors, seed)
        train_pos = [a for a in train_acts]
        syn = synthetic_samples(train_pos, cfg, int(round(synthetic_ratio * len(train))), window, params.border, rng_syn)
        train = SampleSet.concat([train, syn])
    return Splits(
        appliance,
        window,
        params,
        train,
        val,
        SampleSet.concat(test_i_parts or [empty]),
        SampleSet.concat(test_ii_parts or [empty]),
        train_acts,
        test_i_series,
        test_ii_series,
    )


@dataclass(frozen=True)
class NormStats:
    sigma_input: tuple[float, ...]
    max_target: float

    def __post_init__(self):
        object.__setattr__(self, "sigma_input", tuple(float(s) for s in self.sigma_input))
        if any(not s > 0 for s in self.sigma_input):
            raise ValueError("sigma_input must be positive for every channel")
        if not self.max_target > 0:
            raise ValueError("max_target must be positive")

    def to_dict(self) -> dict:
        return {"sigma_input": list(self.sigma_input), "max_target": self.max_target}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(tuple(d["sigma_input"]), float(d["max_target"]))


def compute_norm_stats(train: SampleSet) -> NormStats:
    """Per-channel mean of window standard deviations and the largest target watt value."""
    if len(train) == 0:
        raise ValueError("cannot compute normalization from an empty training set")
    sigma = train.inputs.std(axis=1).mean(axis=0)
    if np.any(sigma <= 0):
        raise ValueError("training inputs have zero spread (sigma_input = 0)")
    return NormStats(tuple(sigma), float(train.targets.max()))


def preprocess_input(windows, stats: NormStats) -> np.ndarray:
    """Subtract each window's own mean, then divide by the channel's sigma_input."""
    x = np.asarray(windows, dtype=np.float64)
    squeeze = x.ndim == 2 and len(stats.sigma_input) == 1
    if squeeze:
        x = x[..., None]
    x = (x - x.mean(axis=-2, keepdims=True)) / np.asarray(stats.sigma_input)
    return x[..., 0] if squeeze else x


def scale_target(y, stats: NormStats) -> np.ndarray:
    return np.asarray(y, dtype=np.float64) / stats.max_target


def unscale_output(y, stats: NormStats) -> np.ndarray:
    return np.asarray(y, dtype=np.float64) * stats.max_target


def scale_rectangles(rects, stats: NormStats) -> np.ndarray:
    r = np.array(rects, dtype=np.float64)
    r[..., 2] /= stats.max_target
    return r


def unscale_rectangles(rects, stats: NormStats) -> np.ndarray:
    r = np.array(rects, dtype=np.float64)
    r[..., 2] *= stats.max_target
    return r


# -- on-disk layout: manifest.json + one CSV shard per split -----------------


def _columns(window: int, channels: Sequence[str]) -> list[str]:
    cols = [f"x_{t}_{c}" for t in range(window) for c in channels]
    cols += [f"y_{t}" for t in range(window)]
    return cols + ["rect_start", "rect_end", "rect_power_w", "label"]


def write_samples(samples: SampleSet, path) -> None:
    n, W = len(samples), samples.window
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_columns(W, samples.channels))
        flat = np.concatenate(
            [samples.inputs.reshape(n, -1), samples.targets, samples.rectangles, samples.labels[:, None]], axis=1
        )
        for row in flat:
            w.writerow([repr(float(x)) for x in row[:-1]] + [int(row[-1])])


def read_samples(path, window: int, channels: Sequence[str]) -> SampleSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _columns(window, channels):
            raise ValueError(f"{path}: columns do not match window={window}, channels={list(channels)}")
        rows = np.array([[float(x) for x in r] for r in reader if r], dtype=np.float64).reshape(-1, len(header))
    C = len(channels)
    n = len(rows)
    k = window * C
    return SampleSet(
        rows[:, :k].reshape(n, window, C),
        rows[:, k : k + window],
        rows[:, k + window : k + window + 3],
        rows[:, -1].astype(np.int8),
        tuple(channels),
    )


def save_splits(splits: Splits, directory, manifest_extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    shards = {}
    for name, s in splits.sets().items():
        fname = f"{name}.csv"
        write_samples(s, directory / fname)
        shards[name] = {"file": fname, "count": len(s), "positives": int(s.labels.sum())}
    manifest = {
        "appliance": splits.appliance,
        "window": splits.window,
        "channels": list(splits.train.channels),
        "params": asdict(splits.params),
        "mean_activation_length": splits.mean_activation_length,
        "shards": shards,
        **(manifest_extra or {}),
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_dataset(directory) -> tuple[dict, dict[str, SampleSet]]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    W, ch = manifest["window"], tuple(manifest["channels"])
    sets = {name: read_samples(directory / info["file"], W, ch) for name, info in manifest["shards"].items()}
    return manifest, sets
