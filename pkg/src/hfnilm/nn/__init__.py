"""Small numpy neural-network engine: 1-D conv, dense, reshape layers, MSE, Adam/Adamax."""

from .architectures import build_architecture, count_params
from .io import WeightsFormatError, deserialize, serialize
from .layers import LayerSpec, ShapeError
from .network import ARCHITECTURES, Network, NetworkSpec, family, mse
from .optim import Optimizer, OptimizerConfig, optimizer_grid

__all__ = [
    "ARCHITECTURES",
    "LayerSpec",
    "Network",
    "NetworkSpec",
    "Optimizer",
    "OptimizerConfig",
    "ShapeError",
    "WeightsFormatError",
    "build_architecture",
    "count_params",
    "deserialize",
    "family",
    "mse",
    "optimizer_grid",
    "serialize",
]
