"""Optimizer grid per model, best-on-validation checkpoints, AUC-based selection."""

from __future__ import annotations

import json
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import NormStats, SampleSet, compute_norm_stats, preprocess_input, scale_rectangles, scale_target
from .evaluation import roc_auc
from .model import Disaggregator
from .nn import Network, Optimizer, OptimizerConfig, build_architecture, family, optimizer_grid

log = logging.getLogger(__name__)

ITERATIONS = 200
BATCH_SIZE = 64

# model name -> (architecture, training data variant)
MODEL_VARIANTS = {
    "rectangles_lf": ("rectangles", "lf"),
    "rectangles_syn": ("rectangles", "syn"),
    "rectangles_hf": ("hf_rectangles", "hf"),
    "autoencoder_lf": ("autoencoder", "lf"),
    "autoencoder_syn": ("autoencoder", "syn"),
    "autoencoder_hf": ("hf_autoencoder", "hf"),
    "autoencoder_big": ("big_autoencoder", "lf"),
}


def architecture_of(model: str) -> str:
    """Architecture kind for a model variant name (kinds map to themselves)."""
    if model in MODEL_VARIANTS:
        return MODEL_VARIANTS[model][0]
    family(model)  # raises for unknown names
    return model


def derive_seed(root: int, *keys) -> int:
    """Stable per-stage seed derived from one root seed."""
    spawn = tuple(zlib.crc32(str(k).encode()) for k in keys)
    return int(np.random.SeedSequence(root, spawn_key=spawn).generate_state(1)[0])


@dataclass(frozen=True)
class RunConfig:
    appliance: str
    model: str
    optimizer: OptimizerConfig = OptimizerConfig()
    iterations: int = ITERATIONS
    batch_size: int = BATCH_SIZE
    seed: int = 0

    def __post_init__(self):
        architecture_of(self.model)
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be positive")


@dataclass
class RunResult:
    config: RunConfig
    network: Network | None
    norm_stats: NormStats
    best_iter: int
    best_val_loss: float
    train_curve: list[float]
    val_curve: list[float]
    val_auc: float | None = None
    failed: bool = False
    weights_path: str | None = None

    def disaggregator(self, channels) -> Disaggregator:
        return Disaggregator(self.network, self.norm_stats, tuple(channels), {"model": self.config.model, "appliance": self.config.appliance})

    def record(self) -> dict:
        return {
            "appliance": self.config.appliance,
            "model": self.config.model,
            "optimizer": self.config.optimizer.algorithm,
            "lr": self.config.optimizer.lr,
            "seed": self.config.seed,
            "iterations": self.config.iterations,
            "best_iter": self.best_iter,
            "best_val_loss": self.best_val_loss,
            "val_auc": self.val_auc,
            "failed": self.failed,
            "weights_path": self.weights_path,
        }


def training_targets(samples: SampleSet, stats: NormStats, kind: str) -> np.ndarray:
    if family(kind) == "rectangles":
        return scale_rectangles(samples.rectangles, stats)
    return scale_target(samples.targets, stats)[:, :, None]


def _val_loss(net: Network, x: np.ndarray, y: np.ndarray, batch: int = 256) -> float:
    total = 0.0
    for k in range(0, len(x), batch):
        out = net.forward(x[k : k + batch]).astype(np.float64)
        total += float(np.sum((out - y[k : k + batch].reshape(out.shape)) ** 2))
    return total / y.size


def validation_auc(result_net: Network, stats: NormStats, val: SampleSet) -> float | None:
    labels = val.labels.astype(bool)
    if labels.all() or not labels.any():
        return None
    scores = Disaggregator(result_net, stats, val.channels).scores(val.inputs)
    return roc_auc(scores, labels)[1]


def train_run(
    cfg: RunConfig,
    train: SampleSet,
    val: SampleSet,
    norm_stats: NormStats | None = None,
    architecture_kwargs: dict | None = None,
) -> RunResult:
    """Minibatch MSE training; keeps the epoch with the lowest validation loss."""
    kind = architecture_of(cfg.model)
    stats = norm_stats or compute_norm_stats(train)
    spec = build_architecture(kind, train.window, len(train.channels), **(architecture_kwargs or {}))
    net = Network(spec, seed=cfg.seed)
    opt = Optimizer(cfg.optimizer)
    rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))

    x_tr = preprocess_input(train.inputs, stats).astype(np.float32)
    y_tr = training_targets(train, stats, kind).astype(np.float32)
    x_va = preprocess_input(val.inputs, stats).astype(np.float32)
    y_va = training_targets(val, stats, kind).astype(np.float32)

    best, best_loss, best_iter = net.copy(), math.inf, -1
    train_curve: list[float] = []
    val_curve: list[float] = []
    failed = False
    for it in range(cfg.iterations):
        order = rng.permutation(len(x_tr))
        losses = []
        try:
            for k in range(0, len(order), cfg.batch_size):
                idx = order[k : k + cfg.batch_size]
                loss, grads = net.loss_and_gradients(x_tr[idx], y_tr[idx])
                opt.step(net.params, grads)
                losses.append(loss * len(idx))
            vloss = _val_loss(net, x_va, y_va) if len(x_va) else float(np.sum(losses) / len(order))
            if not np.isfinite(vloss):
                raise FloatingPointError("non-finite validation loss")
        except FloatingPointError as exc:
            log.warning("%s %s diverged at iteration %d: %s", cfg.model, cfg.optimizer.label, it, exc)
            failed = True
            break
        train_curve.append(float(np.sum(losses) / len(order)))
        val_curve.append(vloss)
        if vloss < best_loss:
            best, best_loss, best_iter = net.copy(), vloss, it
    if best_iter < 0:
        return RunResult(cfg, None, stats, -1, math.inf, train_curve, val_curve, None, True)
    auc = validation_auc(best, stats, val)
    return RunResult(cfg, best, stats, best_iter, best_loss, train_curve, val_curve, auc, failed)


def _run_job(args):
    return train_run(*args)


def pick_best_run(runs: Sequence[RunResult]) -> RunResult:
    """Largest validation AUC; ties by lower validation loss, then grid order."""
    ok = [(k, r) for k, r in enumerate(runs) if r.network is not None and not r.failed]
    if not ok:
        raise RuntimeError("every training run failed")

    def key(item):
        k, r = item
        auc = 0.5 if r.val_auc is None else r.val_auc
        return (-auc, r.best_val_loss, k)

    return min(ok, key=key)[1]


@dataclass
class GridResult:
    appliance: str
    model: str
    runs: list[RunResult]
    best: RunResult
    degenerate: bool = False

    @property
    def auc(self) -> float:
        return 0.5 if self.best.val_auc is None else self.best.val_auc


def grid_search(
    appliance: str,
    model: str,
    train: SampleSet,
    val: SampleSet,
    grid: Sequence[OptimizerConfig] | None = None,
    iterations: int = ITERATIONS,
    seed: int = 0,
    jobs: int = 1,
    norm_stats: NormStats | None = None,
    runs_dir=None,
    ledger=None,
    architecture_kwargs: dict | None = None,
    retries: int = 0,
) -> GridResult:
    """Train every grid point and keep the checkpoint with the best validation AUC.

    With ``runs_dir`` each run's weights are saved there; with ``ledger`` (a
    path) one JSON line per run is appended. A diverged grid point is retrained
    up to ``retries`` times from fresh derived seeds; otherwise it is left out
    of the selection.
    """
    grid = list(grid or optimizer_grid())
    stats = norm_stats or compute_norm_stats(train)
    cfgs = [RunConfig(appliance, model, g, iterations, BATCH_SIZE, seed) for g in grid]
    jobs_args = [(c, train, val, stats, architecture_kwargs) for c in cfgs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_job, jobs_args))
    else:
        runs = [_run_job(a) for a in jobs_args]
    for k, r in enumerate(runs):
        attempt = 0
        while r.failed and attempt < retries:
            attempt += 1
            cfg = replace(r.config, seed=derive_seed(seed, "retry", k, attempt))
            log.info("retrying %s %s (attempt %d)", model, cfg.optimizer.label, attempt)
            r = train_run(cfg, train, val, stats, architecture_kwargs)
        runs[k] = r
    if runs_dir is not None:
        runs_dir = Path(runs_dir)
        runs_dir.mkdir(parents=True, exist_ok=True)
        for r in runs:
            if r.network is None:
                continue
            path = runs_dir / f"{appliance}__{model}__{r.config.optimizer.label}__s{seed}.hfnw"
            r.disaggregator(train.channels).save(path)
            r.weights_path = str(path)
    if ledger is not None:
        append_ledger(ledger, [r.record() for r in runs])
    best = pick_best_run(runs)
    degenerate = all((r.val_auc is None or r.val_auc <= 0.5) for r in runs if r.network is not None)
    if degenerate:
        log.warning("%s/%s: every grid point is degenerate (AUC <= 0.5)", appliance, model)
    return GridResult(appliance, model, runs, best, degenerate)


def append_ledger(path, records: Sequence[dict]) -> None:
    with open(path, "a") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_ledger(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def select_best_model(aucs: Mapping[str, float], val_losses: Mapping[str, float] | None = None) -> str:
    """Model with the largest AUC; ties by lower validation loss, then table order."""
    if not aucs:
        raise ValueError("empty selection table")
    val_losses = val_losses or {}
    names = list(aucs)
    return min(names, key=lambda m: (-aucs[m], val_losses.get(m, math.inf), names.index(m)))


@dataclass
class SelectionTable:
    """appliance -> model -> (best validation AUC, its validation loss)."""

    entries: dict[str, dict[str, tuple[float, float]]] = field(default_factory=dict)

    def best_models(self) -> dict[str, str]:
        return {
            app: select_best_model({m: v[0] for m, v in row.items()}, {m: v[1] for m, v in row.items()})
            for app, row in self.entries.items()
        }


def selection_from_ledger(records: Sequence[dict]) -> tuple[SelectionTable, dict[tuple[str, str], dict]]:
    """Best grid point per (appliance, model), then the table of their AUCs."""
    grouped: dict[tuple[str, str], list[tuple[int, dict]]] = {}
    for k, rec in enumerate(records):
        if rec.get("failed"):
            continue
        grouped.setdefault((rec["appliance"], rec["model"]), []).append((k, rec))
    best_runs = {}
    table = SelectionTable()
    for (app, model), recs in grouped.items():
        k, rec = min(
            recs,
            key=lambda kr: (-(0.5 if kr[1].get("val_auc") is None else kr[1]["val_auc"]), kr[1].get("best_val_loss", math.inf), kr[0]),
        )
        best_runs[(app, model)] = rec
        auc = 0.5 if rec.get("val_auc") is None else rec["val_auc"]
        table.entries.setdefault(app, {})[model] = (auc, rec.get("best_val_loss", math.inf))
    return table, best_runs
