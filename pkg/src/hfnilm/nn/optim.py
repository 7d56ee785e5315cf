from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

LEARNING_RATES = (0.002, 0.001, 0.0005)
ALGORITHMS = ("adam", "adamax")


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: str = "adam"
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown optimizer {self.algorithm!r}")
        if not self.lr > 0 or not self.eps > 0:
            raise ValueError("lr and eps must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")

    @property
    def label(self) -> str:
        return f"{self.algorithm}_{self.lr:g}"

    def to_dict(self) -> dict:
        return asdict(self)


def optimizer_grid() -> list[OptimizerConfig]:
    """The six (optimizer, learning rate) points tried for every model."""
    return [OptimizerConfig(a, lr) for a in ALGORITHMS for lr in LEARNING_RATES]


@dataclass
class Optimizer:
    """Adam / Adamax with bias correction; updates parameter arrays in place.

    Adamax follows the infinity-norm variant without an epsilon term, so its
    first step is exactly ``-lr * sign(g)``.
    """

    config: OptimizerConfig
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(grads):
            raise ValueError("parameter and gradient lists differ in length")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        cfg = self.config
        self.t += 1
        c1 = 1.0 - cfg.beta1**self.t
        c2 = 1.0 - cfg.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = g.astype(p.dtype, copy=False)
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            if cfg.algorithm == "adam":
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * g * g
                p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
            else:
                np.maximum(cfg.beta2 * v, np.abs(g), out=v)
                # m / (c1 * u) keeps the first step an exact +-1 in floating point
                denom = np.where(v > 0, c1 * v, 1.0)
                p -= cfg.lr * np.where(v > 0, m / denom, 0.0)
