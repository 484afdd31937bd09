"""Discrete-time simulator for energy-aware VM consolidation in a data center."""

from .engine import Migration, RunReport, StepRecord, run
from .errors import (ConfigurationError, InvalidArgument, NoBandwidthError, SimulationError,
                     TraceParseError)
from .model import (CostParams, HostSpec, HostState, PolicyConfig, PowerCurve, VmSpec, VmState,
                    make_default_datacenter, make_vms)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "CostParams", "HostSpec", "HostState", "InvalidArgument", "Migration",
    "NoBandwidthError", "PolicyConfig", "PowerCurve", "RunReport", "SimulationError", "StepRecord",
    "TraceParseError", "VmSpec", "VmState", "make_default_datacenter", "make_vms", "run",
]
