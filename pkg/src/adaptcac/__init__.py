"""Prioritized adaptive bandwidth-allocation call admission control.

Sub-modules:

- ``model``: traffic classes, scenario parameters, elementary relations
- ``alloc``: per-cell bandwidth allocation engine and admission decision
- ``chain``: birth-death performance model and handover fixed point
- ``sim``: discrete-event single-cell simulator
- ``metrics``: derived KPIs shared by the analytical and simulated paths
- ``cli``: configuration parsing and load-sweep orchestration
"""

from adaptcac.errors import (
    CACError,
    ConfigError,
    ConvergenceError,
    DegenerateScenarioError,
    InfeasibleStateError,
    InvalidAllocationError,
    NumericalError,
    ParameterError,
    SimulationInvariantError,
    UndefinedResidualError,
)
from adaptcac.model import (
    BandwidthLevels,
    SystemParams,
    TrafficClass,
    base_release_rate,
    degradation_factor,
    handover_probability,
    min_bandwidth_levels,
    reference_params,
)

__version__ = "0.1.0"

__all__ = [
    "BandwidthLevels",
    "CACError",
    "ConfigError",
    "ConvergenceError",
    "DegenerateScenarioError",
    "InfeasibleStateError",
    "InvalidAllocationError",
    "NumericalError",
    "ParameterError",
    "SimulationInvariantError",
    "SystemParams",
    "TrafficClass",
    "UndefinedResidualError",
    "base_release_rate",
    "degradation_factor",
    "handover_probability",
    "min_bandwidth_levels",
    "reference_params",
]
