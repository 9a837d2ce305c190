"""Simulation models behind a common interface."""

from .base import Model, Observation
from .flowline import (
    FlowLineConfig,
    FlowLineModel,
    enumerate_flowline,
    enumerate_flowline_array,
    flowline_count,
    flowline_exact_mean,
    flowline_replicate,
)
from .synthetic import SyntheticConfig, SyntheticModel, slippage_config, synthetic_replicate

__all__ = [
    "FlowLineConfig",
    "FlowLineModel",
    "Model",
    "Observation",
    "SyntheticConfig",
    "SyntheticModel",
    "enumerate_flowline",
    "enumerate_flowline_array",
    "flowline_count",
    "flowline_exact_mean",
    "flowline_replicate",
    "slippage_config",
    "synthetic_replicate",
]
