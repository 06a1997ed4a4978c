"""Averaged electrical model of the islanded microgrid.

Each grid-forming unit is an EMF (its modulation reference) behind an
R-L filter into a common bus; every unit's filter shunt capacitance is
lumped onto that bus.  The load is constant-resistance, set from a power
at nominal voltage.  A three-phase fault is a per-phase R-L branch at
the bus (a pure conductance would make the bus equation stiffer than a
fixed-step integrator can follow).  The PV inverter injects current
directly.  Phases are independent and balanced; there is no mutual
coupling and no zero-sequence path in sources or loads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .control import PvSource, VrlState
from .oscillator import FeedbackGains, OscillatorParams, OscillatorState
from .signals import SlidingMean, ThreePhase

DEFAULT_FAULT_CONDUCTANCE = 50.0  # S per phase (20 mohm branch resistance)
DEFAULT_FAULT_INDUCTANCE = 50e-6  # H per phase


@dataclass(frozen=True)
class FilterParams:
    """Output filter of one inverter: series R-L, shunt C (lumped at the bus)."""

    r_f: float = 0.1  # ohm
    l_f: float = 2.5e-3  # H
    c_f: float = 60e-6  # F

    def validate(self) -> None:
        if min(self.r_f, self.l_f, self.c_f) <= 0.0:
            raise ValueError("filter parameters must be positive")


@dataclass
class InverterUnit:
    """One grid-forming source: oscillator, gains, VRL, filter, capacity scale."""

    params: OscillatorParams = field(default_factory=OscillatorParams)
    gains: FeedbackGains = field(default_factory=FeedbackGains)
    vrl: VrlState = field(default_factory=VrlState)
    filt: FilterParams = field(default_factory=FilterParams)
    capacity_scale: float = 1.0
    state: OscillatorState = field(default_factory=OscillatorState)
    i_filter: np.ndarray = field(default_factory=lambda: np.zeros(3))


def scale_unit_for_capacity(base: InverterUnit, s_k: float) -> InverterUnit:
    """Derive a unit of relative capacity ``s_k`` from a full-size one.

    Impedances scale inversely with capacity and the current-feedback
    gain scales up by the same factor, so every unit sees the same
    per-unit loading: i_gain/s_k, r_f/s_k, l_f/s_k, c_f*s_k.  The
    feedback-chain resistance r_s also scales by 1/s_k, which keeps the
    per-segment eigenvalues of the scaled unit identical to the base
    unit's.
    """
    if not 0.0 < s_k <= 1.0:
        raise ValueError("capacity scale must be in (0, 1]")
    return InverterUnit(
        params=replace(base.params, r_s=base.params.r_s / s_k),
        gains=FeedbackGains(
            i_gain=base.gains.i_gain / s_k, v_gain=base.gains.v_gain
        ),
        vrl=replace(base.vrl),
        filt=FilterParams(
            r_f=base.filt.r_f / s_k, l_f=base.filt.l_f / s_k, c_f=base.filt.c_f * s_k
        ),
        capacity_scale=s_k,
        state=OscillatorState(base.state.v_osc, base.state.i_l),
        i_filter=base.i_filter.copy(),
    )


class EventKind(Enum):
    LOAD_SET = "load_set"
    LOAD_DELTA = "load_delta"
    FAULT_ON = "fault_on"
    FAULT_OFF = "fault_off"
    PV_DISCONNECT = "pv_disconnect"
    PV_CONNECT = "pv_connect"


@dataclass(frozen=True)
class Event:
    kind: EventKind
    value: float = 0.0  # watts for load events, siemens for fault_on


@dataclass
class GridModel:
    """Network topology and electrical state of one microgrid."""

    units: list[InverterUnit]
    pv: PvSource | None = None
    v_nom_rms: float = 230.0
    load_w: float = 8000.0
    fault_inductance: float = DEFAULT_FAULT_INDUCTANCE
    sample_dt: float = 1e-5  # for the sliding power averages

    fault_active: bool = field(default=False, init=False)
    fault_resistance: float = field(default=0.0, init=False)
    v_bus: np.ndarray = field(default_factory=lambda: np.zeros(3), init=False)
    i_fault: np.ndarray = field(default_factory=lambda: np.zeros(3), init=False)
    _avg: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.units:
            raise ValueError("grid needs at least one inverter unit")
        if self.load_w <= 0.0:
            raise ValueError("load power must be positive")

    @property
    def bus_capacitance(self) -> float:
        """Per-phase bus capacitance: all unit filter shunts in parallel."""
        return sum(u.filt.c_f for u in self.units)

    @property
    def load_conductance(self) -> float:
        """Per-phase conductance of the constant-resistance load."""
        return self.load_w / (3.0 * self.v_nom_rms**2)

    @property
    def load_resistance(self) -> float:
        return 1.0 / self.load_conductance


@dataclass(frozen=True)
class GridDerivative:
    """Time derivatives of every electrical state of the grid."""

    di_filter: np.ndarray  # (n_units, 3)
    dv_bus: np.ndarray  # (3,)
    di_fault: np.ndarray  # (3,)


def grid_derivative(
    g: GridModel,
    emfs: list[ThreePhase],
    pv_injection: ThreePhase,
) -> GridDerivative:
    """Circuit laws for the current grid state.

    Per unit and phase: L_f di/dt = emf - R_f i - v_bus.
    Per phase: C_bus dv/dt = sum(i_filter) + i_pv - G_load v - i_fault,
    and for an active fault branch: L_b di/dt = v_bus - R_b i.
    """
    if len(emfs) != len(g.units):
        raise ValueError("one EMF per unit required")
    n = len(g.units)
    di_f = np.empty((n, 3))
    total = np.zeros(3)
    for k, (u, e) in enumerate(zip(g.units, emfs)):
        ek = np.array([e.a, e.b, e.c])
        di_f[k] = (ek - u.filt.r_f * u.i_filter - g.v_bus) / u.filt.l_f
        total += u.i_filter
    inj = np.array([pv_injection.a, pv_injection.b, pv_injection.c])
    if g.fault_active:
        di_fault = (g.v_bus - g.fault_resistance * g.i_fault) / g.fault_inductance
    else:
        di_fault = np.zeros(3)
    dv = (total + inj - g.load_conductance * g.v_bus - g.i_fault) / g.bus_capacitance
    return GridDerivative(di_filter=di_f, dv_bus=dv, di_fault=di_fault)


def apply_event(g: GridModel, event: Event) -> None:
    """Apply one scheduled event to the grid description.

    Load events keep the constant-resistance model (conductance recomputed
    at nominal voltage); events that would drive the load non-positive are
    rejected.  fault_off restores the pre-fault network exactly (branch
    currents cleared); the engine staggers the actual current interruption
    to per-phase zero crossings.
    """
    k = event.kind
    if k is EventKind.LOAD_SET:
        if event.value <= 0.0:
            raise ValueError(f"load_set({event.value}) would make load power <= 0")
        g.load_w = event.value
    elif k is EventKind.LOAD_DELTA:
        new = g.load_w + event.value
        if new <= 0.0:
            raise ValueError(f"load_delta({event.value}) would make load power <= 0")
        g.load_w = new
    elif k is EventKind.FAULT_ON:
        if event.value <= 0.0:
            raise ValueError("fault conductance must be positive")
        g.fault_active = True
        g.fault_resistance = 1.0 / event.value
    elif k is EventKind.FAULT_OFF:
        g.fault_active = False
        g.i_fault[:] = 0.0
    elif k is EventKind.PV_DISCONNECT:
        if g.pv is not None:
            g.pv.connected = False
    elif k is EventKind.PV_CONNECT:
        if g.pv is not None:
            g.pv.connected = True


@dataclass(frozen=True)
class PowerMeasurement:
    """Instantaneous three-phase power and its one-cycle sliding average."""

    instantaneous_w: float
    average_w: float


def measure_power(
    g: GridModel,
    source: int | str,
    pv_current: ThreePhase | None = None,
) -> PowerMeasurement:
    """Instantaneous p = sum_phase(v * i) at the bus for one source.

    ``source`` is a unit index, "pv" or "load".  Each call also feeds the
    per-source one-cycle sliding average (sampled at g.sample_dt).
    """
    v = g.v_bus
    if isinstance(source, int):
        i = g.units[source].i_filter
        p = float(v @ i)
        key = f"unit{source}"
    elif source == "pv":
        if pv_current is None:
            p = 0.0
        else:
            p = v[0] * pv_current.a + v[1] * pv_current.b + v[2] * pv_current.c
        key = "pv"
    elif source == "load":
        p = float(g.load_conductance * (v @ v))
        key = "load"
    else:
        raise ValueError(f"unknown power source {source!r}")
    avg = g._avg.get(key)
    if avg is None:
        avg = g._avg[key] = SlidingMean(window_s=0.02, sample_dt=g.sample_dt)
    return PowerMeasurement(instantaneous_w=p, average_w=avg.push(p))
