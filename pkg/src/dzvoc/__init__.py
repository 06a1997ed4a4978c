"""Dead-zone virtual-oscillator-control microgrid simulator.

Grid-forming inverters driven by a dead-zone virtual oscillator with a
voltage recovery loop, an averaged islanded-microgrid electrical model
with load/fault/PV events, a per-segment small-signal analyzer, and a
deterministic fixed-step engine with scenario metrics.
"""

from .control import HysteresisController, PvSource, VrlState
from .engine import (
    EventSchedule,
    ScenarioMetrics,
    SimConfig,
    Simulation,
    SimulationDiverged,
    TraceRecord,
    compute_metrics,
    run_scenario,
)
from .network import (
    Event,
    EventKind,
    FilterParams,
    GridModel,
    InverterUnit,
    scale_unit_for_capacity,
)
from .oscillator import FeedbackGains, OscillatorParams, OscillatorState
from .signals import AlphaBeta, SlidingRms, ThreePhase, clarke, inverse_clarke

__version__ = "0.1.0"

__all__ = [
    "AlphaBeta",
    "Event",
    "EventKind",
    "EventSchedule",
    "FeedbackGains",
    "FilterParams",
    "GridModel",
    "HysteresisController",
    "InverterUnit",
    "OscillatorParams",
    "OscillatorState",
    "PvSource",
    "ScenarioMetrics",
    "SimConfig",
    "Simulation",
    "SimulationDiverged",
    "SlidingRms",
    "ThreePhase",
    "TraceRecord",
    "VrlState",
    "clarke",
    "compute_metrics",
    "inverse_clarke",
    "run_scenario",
    "scale_unit_for_capacity",
    "__version__",
]
