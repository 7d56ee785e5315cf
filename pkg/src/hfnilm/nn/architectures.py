"""The five disaggregation networks.

Shapes follow the Keras summaries of the original models; for a 130-sample
kettle window the parameter totals are 1,294,585 (autoencoder), 28,061,795
(rectangles), 1,294,649 / 28,061,923 (three-channel variants) and 1,533,494
(big autoencoder).
"""

from __future__ import annotations

import math

from .layers import LayerSpec
from .network import ARCHITECTURES, NetworkSpec

RECTANGLE_UNITS = (4096, 3072, 2048, 512)
CODE_UNITS = 128
KERNEL = 4


def conv(filters: int, padding: str = "valid", activation: str = "relu") -> LayerSpec:
    return LayerSpec("conv1d", filters=filters, kernel_size=KERNEL, padding=padding, activation=activation)


def dense(units: int, activation: str = "relu") -> LayerSpec:
    return LayerSpec("dense", units=units, activation=activation)


def _decoder(window: int, filters: int = 8) -> list[LayerSpec]:
    length = window - (KERNEL - 1)
    return [
        LayerSpec("reshape", shape=(length, filters)),
        LayerSpec("zeropad1d", pad=(1, window - length - 1)),
        conv(1, padding="same", activation="linear"),
    ]


def big_code_units(window: int) -> int:
    return max(1, int(math.floor(window / 10 + 0.5)))


def build_architecture(
    kind: str,
    window: int,
    channels: int | None = None,
    rectangle_units: tuple[int, ...] = RECTANGLE_UNITS,
    code_units: int = CODE_UNITS,
) -> NetworkSpec:
    """Layer stack for ``kind`` at window length ``window``.

    ``rectangle_units`` and ``code_units`` exist so tests can build narrow
    versions; the defaults are the published sizes.
    """
    if kind not in ARCHITECTURES:
        raise ValueError(f"unsupported architecture {kind!r}; choose from {ARCHITECTURES}")
    expected = 3 if kind.startswith("hf_") else 1
    channels = expected if channels is None else channels
    if channels != expected:
        raise ValueError(f"{kind} takes {expected} input channel(s), got {channels}")
    if window < 8:
        raise ValueError("window must be at least 8 samples")

    code_len = (window - (KERNEL - 1)) * 8
    if kind in ("autoencoder", "hf_autoencoder"):
        layers = [
            conv(8),
            LayerSpec("flatten"),
            dense(code_len),
            dense(code_units),
            dense(code_len),
            *_decoder(window),
        ]
    elif kind == "big_autoencoder":
        mid = (window - (KERNEL - 1)) * 2
        layers = [
            conv(8),
            conv(8),
            LayerSpec("flatten"),
            dense(code_len),
            dense(mid),
            dense(big_code_units(window)),
            dense(mid),
            dense(code_len),
            *_decoder(window),
        ]
    else:
        layers = [conv(16), conv(16), LayerSpec("flatten")]
        layers += [dense(u) for u in rectangle_units]
        layers.append(dense(3, activation="linear"))
    return NetworkSpec(kind, window, channels, tuple(layers))


def count_params(kind: str, window: int, channels: int | None = None) -> int:
    return build_architecture(kind, window, channels).count_params()
