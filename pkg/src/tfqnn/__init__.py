"""Quantum neural networks with trainable-frequency feature maps.

Statevector simulation, parameter-shift differentiation, spectral analysis
and physics-informed training, plus a CLI that reproduces the standard
experiments from YAML configs.
"""

from .circuits import (
    AnsatzLayer,
    Circuit,
    EncodingBlock,
    QuantumModel,
    build_circuit,
    build_model,
    forward,
    forward_batch,
    make_feature_map,
)
from .errors import (
    CapacityError,
    ConfigError,
    FlowFieldError,
    InputError,
    MetricError,
    NumericalError,
    TfqnnError,
)
from .training import TrainConfig, sample_cosine_series, train_supervised

__version__ = "0.1.0"

__all__ = [
    "AnsatzLayer",
    "CapacityError",
    "Circuit",
    "ConfigError",
    "EncodingBlock",
    "FlowFieldError",
    "InputError",
    "MetricError",
    "NumericalError",
    "QuantumModel",
    "TfqnnError",
    "TrainConfig",
    "build_circuit",
    "build_model",
    "forward",
    "forward_batch",
    "make_feature_map",
    "sample_cosine_series",
    "train_supervised",
]
