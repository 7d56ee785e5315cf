"""Disaggregation metrics, ROC/AUC and the two evaluation procedures.

"activations": score balanced test windows one by one.
"rolling": slide the network over the full aggregate with stride 1, average the
overlapping estimates with an edge correction, then judge non-overlapping
windows of the resulting series.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import ActivationParams, SampleSet, extract_activations
from .series import CANONICAL_PERIOD, MultivariateSeries, PowerSeries


@dataclass
class EvalReport:
    mae: float = float("nan")
    reite: float = float("nan")
    accuracy: float = float("nan")
    precision: float = float("nan")
    recall: float = float("nan")
    f1: float = float("nan")
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    auc: float | None = None
    roc: list[tuple[float, float, float]] = field(default_factory=list)
    threshold: float | None = None
    n: int = 0
    energy_pred: float = 0.0
    energy_true: float = 0.0
    appliance: str = ""
    model: str = ""
    procedure: str = ""
    split: str = ""
    created_unix_s: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roc"] = [list(p) for p in self.roc]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["roc"] = [tuple(p) for p in d.get("roc", [])]
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def write_roc_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["fpr", "tpr", "threshold"])
            for fpr, tpr, thr in self.roc:
                w.writerow([repr(fpr), repr(tpr), repr(thr)])


def regression_metrics(pred, true, period: float = CANONICAL_PERIOD) -> tuple[float, float, float, float]:
    """(MAE in W, REITE, predicted energy, true energy); energies in Wh."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    true = np.asarray(true, dtype=np.float64).ravel()
    if len(pred) != len(true):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(true)} truths")
    if len(pred) == 0:
        raise ValueError("no points to evaluate")
    mae = float(np.mean(np.abs(pred - true)))
    e_hat = float(np.sum(pred) * period / 3600.0)
    e = float(np.sum(true) * period / 3600.0)
    return mae, reite(e_hat, e), e_hat, e


def reite(e_hat: float, e: float) -> float:
    """Relative error in total energy; 0 when both energies are 0."""
    denom = max(e_hat, e)
    return 0.0 if denom == 0 else abs(e_hat - e) / denom


def confusion_counts(pred_labels, true_labels) -> tuple[int, int, int, int]:
    p = np.asarray(pred_labels).astype(bool)
    t = np.asarray(true_labels).astype(bool)
    if p.shape != t.shape:
        raise ValueError("prediction and label arrays differ in shape")
    return (int(np.sum(p & t)), int(np.sum(p & ~t)), int(np.sum(~p & ~t)), int(np.sum(~p & t)))


def classification_metrics(pred_labels, true_labels) -> dict:
    """Accuracy, precision, recall and F1; a zero denominator yields 0."""
    tp, fp, tn, fn = confusion_counts(pred_labels, true_labels)
    total = tp + fp + tn + fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": (tp + tn) / total if total else 0.0,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "tp": tp,
        "fp": fp,
        "tn": tn,
        "fn": fn,
    }


def window_score(output, family: str = "autoencoder") -> np.ndarray | float:
    """Detection score of one output (or a batch): the peak of the predicted power.

    For rectangles that peak is the predicted mean power, or 0 for an empty
    rectangle (end <= start).
    """
    out = np.asarray(output, dtype=np.float64)
    if family == "rectangles":
        rect = np.atleast_2d(out)
        s = np.where(rect[:, 1] > rect[:, 0], rect[:, 2], 0.0)
        return float(s[0]) if out.ndim == 1 else s
    if family != "autoencoder":
        raise ValueError(f"unknown model family {family!r}")
    if out.ndim <= 1:
        return float(out.max())
    return out.reshape(len(out), -1).max(axis=1)


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if len(s) != len(y):
        raise ValueError("scores and labels differ in length")
    if y.all() or not y.any():
        raise ValueError("both classes must be present")
    return s, y


def roc_auc(scores, labels) -> tuple[list[tuple[float, float, float]], float]:
    """ROC points (fpr, tpr, threshold) from a sweep over unique scores, and the AUC.

    A window is positive when its score is >= the threshold. Tied scores share one
    ROC step, so the trapezoidal area equals P(s+ > s-) + P(s+ = s-) / 2.
    """
    s, y = _check_binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tps = np.cumsum(y, dtype=np.int64)[last]
    fps = (last + 1) - tps
    P, N = int(tps[-1]), int(fps[-1])
    tps = np.r_[0, tps]
    fps = np.r_[0, fps]
    # integer trapezoids, one division at the end
    area2 = int(np.sum((fps[1:] - fps[:-1]) * (tps[1:] + tps[:-1])))
    auc = area2 / (2.0 * P * N)
    thresholds = np.r_[np.inf, s[last]]
    points = [(float(f / N), float(t / P), float(th)) for f, t, th in zip(fps, tps, thresholds)]
    return points, auc


def choose_threshold_max_f1(scores, labels) -> float:
    """Threshold maximizing F1 (positive = score > threshold).

    Candidates are the midpoints between consecutive unique scores plus one value
    below the minimum (everything positive). Ties go to the lowest threshold.
    """
    s, y = _check_binary(scores, labels)
    u = np.unique(s)
    candidates = np.r_[u[0] - 1.0, (u[:-1] + u[1:]) / 2.0]
    best, best_f1 = candidates[0], -1.0
    for thr in candidates:
        f1 = classification_metrics(s > thr, y)["f1"]
        if f1 > best_f1:
            best, best_f1 = thr, f1
    return float(best)


def evaluate_activations(model, samples: SampleSet, threshold: float | None = None, period: float = CANONICAL_PERIOD) -> EvalReport:
    """Score balanced windows and compare with their contains-activation labels.

    ``model`` is a :class:`~hfnilm.model.Disaggregator` (or anything exposing
    ``scores`` and ``window_series``). Without ``threshold`` the max-F1 threshold
    of this very set is used.
    """
    if len(samples) == 0:
        raise ValueError("no windows to evaluate")
    scores = model.scores(samples.inputs)
    return evaluate_scores(scores, samples.labels, threshold, model.window_series(samples.inputs), samples.targets, period)


def evaluate_scores(scores, labels, threshold=None, pred_series=None, true_series=None, period: float = CANONICAL_PERIOD) -> EvalReport:
    labels = np.asarray(labels).astype(bool)
    rep = EvalReport(procedure="activations", n=len(labels), created_unix_s=time.time())
    if labels.any() and not labels.all():
        rep.roc, rep.auc = roc_auc(scores, labels)
        if threshold is None:
            threshold = choose_threshold_max_f1(scores, labels)
    if threshold is not None:
        rep.threshold = float(threshold)
        m = classification_metrics(np.asarray(scores) > threshold, labels)
        for k, v in m.items():
            setattr(rep, k, v)
    if pred_series is not None:
        rep.mae, rep.reite, rep.energy_pred, rep.energy_true = regression_metrics(pred_series, true_series, period)
    return rep


@dataclass(frozen=True)
class RollingConfig:
    window: int
    mean_activation_length: int = 0
    stride: int = 1

    def __post_init__(self):
        if 2 * self.mean_activation_length >= self.window:
            raise ValueError(
                f"2a = {2 * self.mean_activation_length} must be below the window w = {self.window}"
            )
        if self.stride < 1:
            raise ValueError("stride must be at least 1")

    @property
    def factor(self) -> float:
        """Edge correction w / (w - 2a) for networks that only see whole activations."""
        return self.window / (self.window - 2 * self.mean_activation_length)


def rolling_window_predict(model, aggregate, cfg: RollingConfig, chunk: int = 512) -> PowerSeries:
    """Disaggregate a whole series with overlapping windows.

    Each timestamp gets the mean of every window estimate covering it (fewer near
    the edges), scaled by ``cfg.factor``. ``model`` maps ``(k, w, C)`` raw windows
    to ``(k, w)`` watt estimates.
    """
    if isinstance(aggregate, MultivariateSeries):
        channels = getattr(model, "channels", None) or aggregate.names
        data, start, period = aggregate.stack(tuple(channels)), aggregate.start_time, aggregate.period
    elif isinstance(aggregate, PowerSeries):
        data, start, period = aggregate.values[:, None], aggregate.start_time, aggregate.period
    else:
        data = np.asarray(aggregate, dtype=np.float64)
        data = data[:, None] if data.ndim == 1 else data
        start, period = 0.0, CANONICAL_PERIOD
    w = cfg.window
    n = len(data)
    if n < w:
        raise ValueError(f"series of {n} samples is shorter than the window ({w})")
    offsets = np.arange(0, n - w + 1, cfg.stride)
    total = np.zeros(n)
    count = np.zeros(n)
    views = np.lib.stride_tricks.sliding_window_view(data, w, axis=0).transpose(0, 2, 1)
    for k in range(0, len(offsets), chunk):
        offs = offsets[k : k + chunk]
        est = np.asarray(model(views[offs]), dtype=np.float64).reshape(len(offs), w)
        for off, row in zip(offs, est):
            total[off : off + w] += row
            count[off : off + w] += 1
    mean = np.divide(total, count, out=np.zeros(n), where=count > 0)
    return PowerSeries(start, period, mean * cfg.factor)


def window_truth(truth: PowerSeries, window: int, params: ActivationParams) -> np.ndarray:
    """Per non-overlapping window: does it fully contain an activation?"""
    n = len(truth)
    acts = extract_activations(truth, params)
    starts = np.arange(0, n, window)
    labels = np.zeros(len(starts), dtype=bool)
    for a in acts:
        k = a.start // window
        if a.end <= min(starts[k] + window, n):
            labels[k] = True
    return labels


def evaluate_rolling(pred, truth, window: int, threshold: float, params: ActivationParams) -> EvalReport:
    """Compare a disaggregated series with the submeter truth.

    Regression metrics use every point; classification uses non-overlapping
    windows of length ``window`` (the trailing partial window included).
    """
    pred_s = pred if isinstance(pred, PowerSeries) else PowerSeries(0.0, CANONICAL_PERIOD, pred)
    true_s = truth if isinstance(truth, PowerSeries) else PowerSeries(0.0, CANONICAL_PERIOD, truth)
    if len(pred_s) != len(true_s) or not np.isclose(pred_s.period, true_s.period) or not np.isclose(pred_s.start_time, true_s.start_time):
        raise ValueError("prediction and truth are not on the same time grid")
    rep = EvalReport(procedure="rolling", created_unix_s=time.time())
    rep.mae, rep.reite, rep.energy_pred, rep.energy_true = regression_metrics(pred_s.values, true_s.values, pred_s.period)
    p = pred_s.values
    scores = np.array([p[k : k + window].max() for k in range(0, len(p), window)])
    labels = window_truth(true_s, window, params)
    rep.n = len(labels)
    rep.threshold = float(threshold)
    for k, v in classification_metrics(scores > threshold, labels).items():
        setattr(rep, k, v)
    if labels.any() and not labels.all():
        rep.roc, rep.auc = roc_auc(scores, labels)
    return rep
