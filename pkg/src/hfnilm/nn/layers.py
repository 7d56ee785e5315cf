"""Layer specs, shape inference and the numpy forward/backward kernels.

Activations are laid out channels-last, ``(batch, length, channels)``, and
flattening is row-major over ``(length, channels)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

LAYER_KINDS = ("conv1d", "dense", "flatten", "reshape", "zeropad1d")
ACTIVATIONS = ("linear", "relu")


class ShapeError(ValueError):
    """Tensor or weight shapes do not chain through the network."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int = 0
    kernel_size: int = 0
    padding: str = "valid"
    units: int = 0
    activation: str = "linear"
    shape: tuple[int, ...] = ()
    pad: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.padding not in ("valid", "same"):
            raise ValueError(f"unknown padding {self.padding!r}")
        object.__setattr__(self, "shape", tuple(self.shape))
        object.__setattr__(self, "pad", tuple(self.pad))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape"], d["pad"] = list(self.shape), list(self.pad)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**{**d, "shape": tuple(d.get("shape", ())), "pad": tuple(d.get("pad", (0, 0)))})


def same_padding(kernel_size: int) -> tuple[int, int]:
    """Left/right zero padding for a stride-1 'same' conv (extra sample goes right)."""
    total = kernel_size - 1
    return total // 2, total - total // 2


def output_shape(layer: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    if layer.kind == "conv1d":
        if len(in_shape) != 2:
            raise ShapeError(f"conv1d expects (length, channels), got {in_shape}")
        length = in_shape[0]
        if layer.padding == "valid":
            length = length - layer.kernel_size + 1
        if length < 1:
            raise ShapeError(f"conv1d kernel {layer.kernel_size} longer than input length {in_shape[0]}")
        return (length, layer.filters)
    if layer.kind == "dense":
        if len(in_shape) != 1:
            raise ShapeError(f"dense expects a flat input, got {in_shape}")
        return (layer.units,)
    if layer.kind == "flatten":
        return (int(np.prod(in_shape)),)
    if layer.kind == "reshape":
        if int(np.prod(in_shape)) != int(np.prod(layer.shape)):
            raise ShapeError(f"cannot reshape {in_shape} to {layer.shape}")
        return layer.shape
    # zeropad1d
    if len(in_shape) != 2:
        raise ShapeError(f"zeropad1d expects (length, channels), got {in_shape}")
    return (in_shape[0] + sum(layer.pad), in_shape[1])


def param_shapes(layer: LayerSpec, in_shape: tuple[int, ...]) -> list[tuple[int, ...]]:
    if layer.kind == "conv1d":
        return [(layer.kernel_size, in_shape[1], layer.filters), (layer.filters,)]
    if layer.kind == "dense":
        return [(in_shape[0], layer.units), (layer.units,)]
    return []


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], dtype) -> np.ndarray:
    if len(shape) == 3:
        k, cin, cout = shape
        fan_in, fan_out = k * cin, k * cout
    else:
        fan_in, fan_out = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _sum0(a: np.ndarray, axes) -> np.ndarray:
    return a.sum(axis=axes, dtype=np.float64).astype(a.dtype)


def layer_forward(layer: LayerSpec, x: np.ndarray, params: list[np.ndarray]):
    """Return ``(output, cache)`` for one layer."""
    kind = layer.kind
    if kind == "conv1d":
        w, b = params
        k = layer.kernel_size
        pad = same_padding(k) if layer.padding == "same" else (0, 0)
        if pad != (0, 0):
            x = np.pad(x, ((0, 0), pad, (0, 0)))
        B, L, C = x.shape
        lout = L - k + 1
        cols = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)
        cols = cols.transpose(0, 1, 3, 2).reshape(B * lout, k * C)
        z = (cols @ w.reshape(k * C, -1) + b).reshape(B, lout, -1)
        out = np.maximum(z, 0) if layer.activation == "relu" else z
        return out, (cols, x.shape, pad, out)
    if kind == "dense":
        w, b = params
        z = x @ w + b
        out = np.maximum(z, 0) if layer.activation == "relu" else z
        return out, (x, out)
    if kind == "flatten":
        return x.reshape(len(x), -1), x.shape
    if kind == "reshape":
        return x.reshape((len(x),) + layer.shape), x.shape
    return np.pad(x, ((0, 0), layer.pad, (0, 0))), None


def layer_backward(layer: LayerSpec, dout: np.ndarray, params: list[np.ndarray], cache):
    """Return ``(d_input, [d_param, ...])``."""
    kind = layer.kind
    if kind == "conv1d":
        w, _ = params
        cols, xshape, pad, out = cache
        dz = dout * (out > 0) if layer.activation == "relu" else dout
        B, L, C = xshape
        k = layer.kernel_size
        lout = L - k + 1
        dz2 = dz.reshape(B * lout, -1)
        dw = (cols.T @ dz2).reshape(w.shape)
        db = _sum0(dz2, 0)
        dcols = (dz2 @ w.reshape(k * C, -1).T).reshape(B, lout, k, C)
        dx = np.zeros(xshape, dtype=dout.dtype)
        for j in range(k):
            dx[:, j : j + lout] += dcols[:, :, j]
        if pad != (0, 0):
            dx = dx[:, pad[0] : L - pad[1]]
        return dx, [dw, db]
    if kind == "dense":
        w, _ = params
        x, out = cache
        dz = dout * (out > 0) if layer.activation == "relu" else dout
        return dz @ w.T, [x.T @ dz, _sum0(dz, 0)]
    if kind in ("flatten", "reshape"):
        return dout.reshape(cache), []
    left, right = layer.pad
    return dout[:, left : dout.shape[1] - right], []
