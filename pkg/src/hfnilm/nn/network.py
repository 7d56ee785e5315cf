from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import LayerSpec, ShapeError, glorot_uniform, layer_backward, layer_forward, output_shape, param_shapes

ARCHITECTURES = ("autoencoder", "rectangles", "hf_autoencoder", "hf_rectangles", "big_autoencoder")


def family(kind: str) -> str:
    """'autoencoder' or 'rectangles' for any architecture kind."""
    if kind not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {kind!r}")
    return "rectangles" if kind.endswith("rectangles") else "autoencoder"


@dataclass(frozen=True)
class NetworkSpec:
    kind: str
    window: int
    channels: int
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        self.shapes()  # validates the chain

    @property
    def input_shape(self) -> tuple[int, int]:
        return (self.window, self.channels)

    def shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        """(input, output) shape of every layer, batch dimension omitted."""
        out = []
        shape: tuple[int, ...] = self.input_shape
        for layer in self.layers:
            nxt = output_shape(layer, shape)
            out.append((shape, nxt))
            shape = nxt
        return out

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes()[-1][1]

    def param_shapes(self) -> list[list[tuple[int, ...]]]:
        return [param_shapes(layer, s_in) for layer, (s_in, _) in zip(self.layers, self.shapes())]

    def count_params(self) -> int:
        return int(sum(np.prod(s) for group in self.param_shapes() for s in group))

    def summary(self) -> str:
        lines = [f"{'Layer':<12}{'Output Shape':<20}{'Param #':>10}"]
        for layer, (_, s_out), group in zip(self.layers, self.shapes(), self.param_shapes()):
            n = int(sum(np.prod(s) for s in group))
            lines.append(f"{layer.kind:<12}{str((None, *s_out)):<20}{n:>10}")
        lines.append(f"Total params: {self.count_params():,}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "window": self.window,
            "channels": self.channels,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(d["kind"], int(d["window"]), int(d["channels"]), tuple(LayerSpec.from_dict(x) for x in d["layers"]))


class Network:
    """Weights for a :class:`NetworkSpec` plus the forward/backward passes.

    ``params`` is a flat list of arrays in layer order (kernel then bias).
    """

    def __init__(self, spec: NetworkSpec, params: list[np.ndarray] | None = None, seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.seed = seed
        shapes = [s for group in spec.param_shapes() for s in group]
        if params is None:
            rng = np.random.default_rng(seed)
            params = [
                glorot_uniform(rng, s, self.dtype) if len(s) > 1 else np.zeros(s, dtype=self.dtype) for s in shapes
            ]
        else:
            params = [np.asarray(p, dtype=self.dtype) for p in params]
            got = [p.shape for p in params]
            if got != shapes:
                raise ShapeError(f"weight shapes {got} do not match spec {shapes}")
        self.params = params
        self._slices = []
        k = 0
        for group in spec.param_shapes():
            self._slices.append(slice(k, k + len(group)))
            k += len(group)

    def copy(self) -> "Network":
        return Network(self.spec, [p.copy() for p in self.params], self.seed, self.dtype)

    def astype(self, dtype) -> "Network":
        return Network(self.spec, [p.astype(dtype) for p in self.params], self.seed, dtype)

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2 and self.spec.channels == 1:
            x = x[:, :, None]
        if x.shape[1:] != self.spec.input_shape:
            raise ShapeError(f"expected input (batch, {self.spec.window}, {self.spec.channels}), got {x.shape}")
        return x

    def forward(self, x, return_caches: bool = False):
        x = self._check_input(x)
        caches = []
        for layer, sl in zip(self.spec.layers, self._slices):
            x, cache = layer_forward(layer, x, self.params[sl])
            caches.append(cache)
        return (x, caches) if return_caches else x

    def __call__(self, x):
        return self.forward(x)

    def backward(self, dout: np.ndarray, caches) -> list[np.ndarray]:
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        for layer, sl, cache in zip(reversed(self.spec.layers), reversed(self._slices), reversed(caches)):
            dout, g = layer_backward(layer, dout, self.params[sl], cache)
            grads[sl] = g
        return grads

    def loss_and_gradients(self, x, y) -> tuple[float, list[np.ndarray]]:
        """Mean squared error and its gradient w.r.t. every weight array."""
        out, caches = self.forward(x, return_caches=True)
        y = np.asarray(y, dtype=self.dtype).reshape(out.shape)
        diff = out - y
        loss = float(np.mean(np.square(diff, dtype=np.float64)))
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite loss")
        grads = self.backward((2.0 / diff.size) * diff, caches)
        return loss, grads


def mse(output, target) -> float:
    output = np.asarray(output, dtype=np.float64)
    return float(np.mean((output - np.asarray(target, dtype=np.float64).reshape(output.shape)) ** 2))
