"""A trained network bundled with its normalization, in watts in / watts out."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import NormStats, preprocess_input, unscale_output, unscale_rectangles
from .nn import Network, family
from .nn import io as nn_io
from .series import POWER_CHANNEL

BATCH = 256


def rasterize_rectangles(rects, window: int) -> np.ndarray:
    """Turn (start_frac, end_frac, power) rows into power windows."""
    rects = np.atleast_2d(np.asarray(rects, dtype=np.float64))
    out = np.zeros((len(rects), window))
    starts = np.clip(np.rint(rects[:, 0] * window), 0, window).astype(int)
    ends = np.clip(np.rint(rects[:, 1] * window), 0, window).astype(int)
    for k, (a, b, p) in enumerate(zip(starts, ends, rects[:, 2])):
        if b > a:
            out[k, a:b] = p
    return out


@dataclass
class Disaggregator:
    network: Network
    norm_stats: NormStats
    channels: tuple[str, ...] = (POWER_CHANNEL,)
    meta: dict = field(default_factory=dict)

    @property
    def family(self) -> str:
        return family(self.network.spec.kind)

    @property
    def window(self) -> int:
        return self.network.spec.window

    def raw_output(self, windows) -> np.ndarray:
        """Network output on standardized inputs, still in training scale."""
        x = preprocess_input(np.asarray(windows, dtype=np.float64).reshape(-1, self.window, len(self.channels)), self.norm_stats)
        outs = [self.network.forward(x[k : k + BATCH]) for k in range(0, len(x), BATCH)]
        if not outs:
            return np.zeros((0,) + self.network.spec.output_shape)
        return np.concatenate(outs).astype(np.float64)

    def predict(self, windows) -> np.ndarray:
        """Watts: (n, W) power windows, or (n, 3) rectangles with the power in watts."""
        out = self.raw_output(windows)
        if self.family == "rectangles":
            return unscale_rectangles(out, self.norm_stats)
        return unscale_output(out.reshape(len(out), self.window), self.norm_stats)

    def window_series(self, windows) -> np.ndarray:
        out = self.predict(windows)
        return rasterize_rectangles(out, self.window) if self.family == "rectangles" else out

    __call__ = window_series

    def scores(self, windows) -> np.ndarray:
        from .evaluation import window_score

        return window_score(self.predict(windows), self.family)

    def save(self, path) -> None:
        nn_io.save(path, self.network, norm_stats=self.norm_stats.to_dict(), meta={**self.meta, "channels": list(self.channels)})

    @classmethod
    def load(cls, path, expected_spec=None) -> "Disaggregator":
        state = nn_io.load(path, expected_spec)
        if not state.norm_stats:
            raise nn_io.WeightsFormatError(f"{path}: weights carry no normalization statistics")
        meta = dict(state.meta)
        channels = tuple(meta.pop("channels", [POWER_CHANNEL]))
        return cls(state.network, NormStats.from_dict(state.norm_stats), channels, meta)
