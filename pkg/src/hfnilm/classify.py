"""Feature importance and appliance classifiers for the waveform feature study."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.ensemble import RandomForestClassifier

MI_BINS = 10


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) == 0:
        raise ValueError("empty training set")
    if len(X) != len(y):
        raise ValueError(f"X has {len(X)} rows but y has {len(y)} labels")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    return X, y


def equal_frequency_bins(x, bins: int = MI_BINS) -> np.ndarray:
    """Assign each value to one of ``bins`` quantile bins (ties share a bin)."""
    x = np.asarray(x, dtype=np.float64)
    edges = np.unique(np.quantile(x, np.linspace(0, 1, bins + 1))[1:-1])
    return np.searchsorted(edges, x, side="right")


def mutual_information(x, y, bins: int = MI_BINS) -> float:
    """Plug-in MI (nats) between a binned continuous feature and discrete labels."""
    bx = equal_frequency_bins(x, bins)
    _, by = np.unique(np.asarray(y), return_inverse=True)
    joint = np.zeros((bx.max() + 1, by.max() + 1))
    np.add.at(joint, (bx, by), 1.0)
    joint /= joint.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log(joint[nz] / (px @ py)[nz])))


def _normalize(scores: np.ndarray) -> np.ndarray:
    scores = np.clip(np.asarray(scores, dtype=np.float64), 0.0, None)
    total = scores.sum()
    if total <= 0:
        return np.full(len(scores), 1.0 / len(scores))
    return scores / total


def mutual_information_ranking(X, y, bins: int = MI_BINS) -> np.ndarray:
    """Per-feature MI with the labels, normalized to sum to one."""
    X, y = _check_xy(X, y)
    if len(np.unique(y)) < 2:
        raise ValueError("mutual information ranking needs at least two classes")
    return _normalize([mutual_information(X[:, j], y, bins) for j in range(X.shape[1])])


@dataclass
class ForestModel:
    """Bagged Gini trees; thin wrapper so callers never touch sklearn directly."""

    estimator: RandomForestClassifier
    trees: int
    seed: int


def train_forest(X, y, trees: int = 100, max_depth: int | None = None, seed: int = 0, bootstrap: bool = True) -> ForestModel:
    X, y = _check_xy(X, y)
    est = RandomForestClassifier(
        n_estimators=trees,
        max_depth=max_depth,
        max_features="sqrt",
        bootstrap=bootstrap,
        criterion="gini",
        random_state=seed,
    )
    est.fit(X, y)
    return ForestModel(est, trees, seed)


def forest_predict(model: ForestModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return model.estimator.predict(x[None, :])[0]
    return model.estimator.predict(x)


def forest_importance(model: ForestModel) -> np.ndarray:
    """Mean impurity decrease per feature, normalized to sum to one."""
    return _normalize(model.estimator.feature_importances_)


def knn_classify(X_train, y_train, x, k: int = 1):
    """Majority label among the ``k`` Euclidean nearest neighbours.

    Distance ties go to the lower training index, and so do vote ties.
    """
    X_train, y_train = _check_xy(X_train, y_train)
    if not 1 <= k <= len(X_train):
        raise ValueError(f"k={k} must lie in [1, {len(X_train)}]")
    d = np.sum((X_train - np.asarray(x, dtype=np.float64)) ** 2, axis=1)
    order = np.argsort(d, kind="stable")[:k]
    if k == 1:
        return y_train[order[0]]
    labels = [y_train[j] for j in order]
    counts = {lab: labels.count(lab) for lab in labels}
    best = max(counts.values())
    return next(lab for lab in labels if counts[lab] == best)


def knn_predict(X_train, y_train, X_query, k: int = 1) -> np.ndarray:
    return np.array([knn_classify(X_train, y_train, x, k) for x in np.asarray(X_query, dtype=np.float64)])


@dataclass
class ImportanceReport:
    mode: str
    feature_names: list[str]
    random_forest: np.ndarray
    mutual_information: np.ndarray

    def top(self, criterion: str, n: int = 10) -> list[str]:
        scores = getattr(self, criterion)
        return [self.feature_names[j] for j in np.argsort(-scores, kind="stable")[:n]]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "features": self.feature_names,
            "random_forest": [float(x) for x in self.random_forest],
            "mutual_information": [float(x) for x in self.mutual_information],
        }


def importance_report(X, y, names, mode: str, seed: int = 0, trees: int = 100) -> ImportanceReport:
    forest = train_forest(X, y, trees=trees, seed=seed)
    return ImportanceReport(mode, list(names), forest_importance(forest), mutual_information_ranking(X, y))


def select_features(reports: dict[str, ImportanceReport], top: int = 10, exclude=("transient_duration", "inrush_ratio")) -> list[str]:
    """Features in the top-``top`` of every (mode, criterion) ranking.

    Transient-only features are excluded since a selected feature has to exist
    in both states.
    """
    chosen = None
    for rep in reports.values():
        for crit in ("random_forest", "mutual_information"):
            best = set(rep.top(crit, top))
            chosen = best if chosen is None else chosen & best
    return sorted((chosen or set()) - set(exclude))


@dataclass
class BenchmarkResult:
    knn_accuracy: float
    rf_accuracy_mean: float
    rf_accuracy_std: float
    rf_accuracies: list[float] = field(default_factory=list)


def holdout_split(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_test = max(1, int(round(test_fraction * n)))
    return perm[n_test:], perm[:n_test]


def benchmark_classifiers(X, y, seeds=(0, 1, 2), test_fraction: float = 0.25, split_seed: int = 0, trees: int = 100) -> BenchmarkResult:
    """1-NN and seeded random-forest holdout accuracy (mean and std over seeds)."""
    X, y = _check_xy(X, y)
    tr, te = holdout_split(len(X), test_fraction, split_seed)
    knn = float(np.mean(knn_predict(X[tr], y[tr], X[te]) == y[te]))
    accs = []
    for s in seeds:
        model = train_forest(X[tr], y[tr], trees=trees, seed=s)
        accs.append(float(np.mean(forest_predict(model, X[te]) == y[te])))
    return BenchmarkResult(knn, float(np.mean(accs)), float(np.std(accs)), accs)


def write_feature_matrix(path, names, X, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(names) + ["label"])
        for row, lab in zip(np.asarray(X), labels):
            w.writerow([repr(float(x)) for x in row] + [lab])


def read_feature_matrix(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][-1] != "label":
        raise ValueError(f"{path}: feature matrix needs a header ending in 'label'")
    names = rows[0][:-1]
    X = np.array([[float(x) for x in r[:-1]] for r in rows[1:]], dtype=np.float64)
    y = np.array([r[-1] for r in rows[1:]])
    return names, X.reshape(len(rows) - 1, len(names)), y
