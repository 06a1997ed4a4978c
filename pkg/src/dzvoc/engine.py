"""Deterministic fixed-step simulation of the full microgrid.

Each step: (1) read measurements from the current state (Clarke
projection, sliding RMS), (2) update the controllers (VRL, PV reference,
hysteresis relays), (3) assemble all derivatives, (4) advance the
electrical states with the configured integrator while the controller
outputs are held.  Events are applied at the step boundary they round
to.  Two runs with identical inputs produce bit-identical traces.

The hot loop is compiled (see :mod:`dzvoc._kernel`); this module owns
configuration, trace assembly and scenario metrics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernel as K
from .network import Event, EventKind, GridModel
from .oscillator import STARTUP_STATE
from .signals import SQRT_3_2

PV_MODE_CODE = {"none": K.PV_NONE, "averaged": K.PV_AVERAGED, "switched": K.PV_SWITCHED}
EVENT_CODE = {
    EventKind.LOAD_SET: 0,
    EventKind.LOAD_DELTA: 1,
    EventKind.FAULT_ON: 2,
    EventKind.FAULT_OFF: 3,
    EventKind.PV_DISCONNECT: 4,
    EventKind.PV_CONNECT: 5,
}

#: Metrics ignore this much of the run after t = 0 (oscillator startup).
DEFAULT_STARTUP_EXCLUDE = 0.5

RMS_BAND = 0.02  # +/- fraction of nominal for "settled"
RMS_HOLD = 0.1  # s the band must hold
RMS_WINDOW = 0.02  # s, measurement window of the sliding RMS


class SimulationDiverged(RuntimeError):
    """A state magnitude exceeded the divergence limit."""

    def __init__(self, time: float):
        super().__init__(
            f"state magnitude exceeded {K.DIVERGENCE_LIMIT:g} at t = {time:.6f} s; "
            "check parameters and step size"
        )
        self.time = time


@dataclass(frozen=True)
class SimConfig:
    """Integration and recording configuration."""

    dt: float = 1e-5
    t_end: float = 4.0
    integrator: str = "rk4"  # or "euler"
    decimation: int = 100
    pv_mode: str = "averaged"  # "averaged" | "switched" (ignored without PV)
    startup_exclude: float = DEFAULT_STARTUP_EXCLUDE

    def validate(self, has_pv: bool = False) -> None:
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.t_end <= self.dt:
            raise ValueError("t_end must exceed dt")
        if self.integrator not in ("rk4", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.decimation < 1:
            raise ValueError("decimation must be >= 1")
        if self.pv_mode not in ("averaged", "switched"):
            raise ValueError(f"unknown pv mode {self.pv_mode!r}")
        if has_pv and self.pv_mode == "switched" and self.dt > 2e-6:
            raise ValueError("switched PV mode needs dt <= 2e-6 s")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class EventSchedule:
    """Time-ordered events, applied once each at the nearest step boundary."""

    entries: tuple[tuple[float, Event], ...] = ()

    def __post_init__(self) -> None:
        times = [t for t, _ in self.entries]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be non-decreasing")
        if any(t < 0.0 for t in times):
            raise ValueError("event times must be non-negative")

    def within(self, t_end: float) -> bool:
        return all(t <= t_end for t, _ in self.entries)

    def times_of(self, *kinds: EventKind) -> list[float]:
        return [t for t, e in self.entries if e.kind in kinds]


def unit_columns(k: int) -> list[str]:
    return [f"u{k}_v_osc", f"u{k}_i_l", f"u{k}_scale", f"u{k}_i_a", f"u{k}_p"]


def trace_columns(n_units: int) -> list[str]:
    cols = ["t"]
    for k in range(n_units):
        cols += unit_columns(k)
    cols += ["bus_v_a", "bus_v_b", "bus_v_c", "bus_rms", "pv_i_a", "pv_p", "load_p", "freq_hz"]
    return cols


@dataclass
class TraceRecord:
    """Decimated time series of every logged channel."""

    columns: list[str]
    data: np.ndarray  # (n_rows, n_columns)
    dt_record: float

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    @property
    def t(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def n_units(self) -> int:
        return sum(1 for c in self.columns if c.endswith("_v_osc"))

    def to_csv(self, path: Path | str) -> None:
        """RFC-4180 CSV with a header row; floats use shortest round-trip repr."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.data:
                w.writerow([repr(x) for x in row])

    @classmethod
    def from_csv(cls, path: Path | str) -> "TraceRecord":
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            columns = next(r)
            rows = [[float(x) for x in row] for row in r]
        data = np.array(rows)
        dt_rec = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 0.0
        return cls(columns=columns, data=data, dt_record=dt_rec)


class Simulation:
    """One grid plus its integration state; step it or run it to the end.

    All units must share the same oscillator constants, v_gain and VRL
    settings (capacity scaling varies only i_gain and the filter); this
    is what the compiled kernel assumes and it covers every scenario the
    tool defines.
    """

    def __init__(self, grid: GridModel, config: SimConfig, schedule: EventSchedule = EventSchedule()):
        config.validate(has_pv=grid.pv is not None)
        if not schedule.within(config.t_end):
            raise ValueError("event schedule extends past t_end")
        base = grid.units[0]
        for u in grid.units:
            if (u.params.r, u.params.l, u.params.c, u.params.sigma, u.params.phi,
                    u.params.omega0, u.params.orbit_peak) != (
                    base.params.r, base.params.l, base.params.c, base.params.sigma,
                    base.params.phi, base.params.omega0, base.params.orbit_peak):
                raise ValueError("all units must share the same oscillator constants")
            if u.gains.v_gain != base.gains.v_gain:
                raise ValueError("all units must share v_gain")
            if (u.vrl.kp, u.vrl.ki, u.vrl.v_ref_rms, u.vrl.scale_min, u.vrl.scale_max,
                    u.vrl.guard_enabled) != (
                    base.vrl.kp, base.vrl.ki, base.vrl.v_ref_rms, base.vrl.scale_min,
                    base.vrl.scale_max, base.vrl.guard_enabled):
                raise ValueError("all units must share VRL settings")

        self.grid = grid
        self.config = config
        self.schedule = schedule
        self.n_units = len(grid.units)
        p = base.params

        self._i_gain = np.array([u.gains.i_gain for u in grid.units])
        self._r_f = np.array([u.filt.r_f for u in grid.units])
        self._l_f = np.array([u.filt.l_f for u in grid.units])
        self._emf_gain = base.gains.v_gain * SQRT_3_2 / p.orbit_peak
        self._rho = p.sigma - 1.0 / p.r

        n_u = self.n_units
        self.y = np.zeros(5 * n_u + 9)
        for k, u in enumerate(grid.units):
            if u.state.v_osc == 0.0 and u.state.i_l == 0.0:
                self.y[5 * k], self.y[5 * k + 1] = STARTUP_STATE
            else:
                self.y[5 * k], self.y[5 * k + 1] = u.state.v_osc, u.state.i_l
            self.y[5 * k + 2 : 5 * k + 5] = u.i_filter
        ib = 5 * n_u
        self.y[ib : ib + 3] = grid.v_bus
        self.y[ib + 3 : ib + 6] = grid.i_fault

        self.scales = np.ones(n_u)
        self._integ = np.zeros(n_u)
        self._frozen = np.zeros(n_u, np.int64)
        self._low_steps = np.zeros(n_u, np.int64)
        self._ring = np.zeros(max(1, int(round(RMS_WINDOW / config.dt))))
        self._istate = np.zeros(K.N_ISTATE, np.int64)
        self._fstate = np.zeros(K.N_FSTATE)
        self._fstate[K.F_LOADP] = grid.load_w
        self._fstate[K.F_PREV_VA] = self.y[ib]
        self._fstate[K.F_LAST_CROSS] = -1.0
        self._fstate[K.F_FREQ] = np.nan
        self._fstate[K.F_LEG0 : K.F_LEG0 + 3] = 1.0
        if grid.fault_active:
            self._istate[K.I_FAULT_ON] = 1
            self._istate[K.I_FPH0 : K.I_FPH0 + 3] = 1
            self._fstate[K.F_RFAULT] = grid.fault_resistance

        if grid.pv is None:
            self._pv_mode = K.PV_NONE
            self._pv_p = 0.0
            self._pv_vdc = 600.0
            self.pv_band, self.pv_r_f, self.pv_l_f = 0.5, 0.1, 10e-3
            self._istate[K.I_PV_CONN] = 0
        else:
            self._pv_mode = PV_MODE_CODE[config.pv_mode]
            self._pv_p = grid.pv.p_generated
            self._pv_vdc = grid.pv.v_dc
            self.pv_band = grid.pv.band_a
            self.pv_r_f = grid.pv.r_f
            self.pv_l_f = grid.pv.l_f
            self._istate[K.I_PV_CONN] = 1 if grid.pv.connected else 0

        steps = [int(round(t / config.dt)) for t, _ in schedule.entries]
        self._ev_step = np.array(steps, np.int64)
        self._ev_kind = np.array([EVENT_CODE[e.kind] for _, e in schedule.entries], np.int64)
        self._ev_val = np.array([e.value for _, e in schedule.entries])

        n_rec = (config.n_steps + config.decimation - 1) // config.decimation
        self._out = np.full((n_rec, len(trace_columns(n_u))), np.nan)

    @property
    def t(self) -> float:
        return self._istate[K.I_NDONE] * self.config.dt

    @property
    def steps_done(self) -> int:
        return int(self._istate[K.I_NDONE])

    def run(self, n_steps: int) -> None:
        """Advance ``n_steps`` steps (raises SimulationDiverged on blow-up)."""
        base = self.grid.units[0]
        p = base.params
        status, t_fail = K.run_steps(
            n_steps, self.config.dt, 1 if self.config.integrator == "rk4" else 0,
            self.n_units,
            p.c, p.l, self._rho, p.sigma, p.phi, self._i_gain, self._emf_gain,
            p.omega0 * p.l,
            self._r_f, self._l_f, self.grid.bus_capacitance, self.grid.v_nom_rms,
            base.vrl.kp, base.vrl.ki, base.vrl.scale_min, base.vrl.scale_max,
            1 if base.vrl.guard_enabled else 0,
            self._pv_mode, self._pv_p, self._pv_vdc, self.pv_band, self.pv_r_f,
            self.pv_l_f,
            self.grid.fault_inductance,
            self._ev_step, self._ev_kind, self._ev_val,
            self.config.decimation, self._out,
            self.y, self.scales, self._integ, self._frozen, self._low_steps,
            self._ring, self._istate, self._fstate,
        )
        if status == K.STATUS_DIVERGED:
            raise SimulationDiverged(t_fail)

    def step(self) -> None:
        """Advance exactly one step of config.dt."""
        self.run(1)

    def run_to_end(self) -> None:
        remaining = self.config.n_steps - self.steps_done
        if remaining > 0:
            self.run(remaining)

    def trace(self) -> TraceRecord:
        rows = int(self._istate[K.I_IREC])
        return TraceRecord(
            columns=trace_columns(self.n_units),
            data=self._out[:rows].copy(),
            dt_record=self.config.dt * self.config.decimation,
        )


def run_scenario(
    grid: GridModel, config: SimConfig, schedule: EventSchedule = EventSchedule()
) -> tuple[TraceRecord, "ScenarioMetrics"]:
    """Run one scenario to t_end and compute its metrics from the trace."""
    sim = Simulation(grid, config, schedule)
    sim.run_to_end()
    trace = sim.trace()
    metrics = compute_metrics(
        trace,
        schedule,
        v_nom_rms=grid.v_nom_rms,
        f_nom=grid.units[0].params.omega0 / (2.0 * math.pi),
        startup_exclude=config.startup_exclude,
    )
    return trace, metrics


# --------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class EventSettling:
    t_event: float
    settling_s: float | None  # None: never settled within the trace


@dataclass(frozen=True)
class ShareWindow:
    t_start: float
    t_end: float
    powers_w: tuple[float, ...]
    shares: tuple[float, ...]


@dataclass(frozen=True)
class ScenarioMetrics:
    settling: tuple[EventSettling, ...]
    share_windows: tuple[ShareWindow, ...]
    fault_rms_min: float | None
    fault_rms_max: float | None
    freq_dev_max_hz: float | None

    def to_dict(self) -> dict:
        return {
            "settling": [
                {"t_event": s.t_event, "settling_s": s.settling_s} for s in self.settling
            ],
            "share_windows": [
                {
                    "t_start": w.t_start,
                    "t_end": w.t_end,
                    "powers_w": list(w.powers_w),
                    "shares": list(w.shares),
                }
                for w in self.share_windows
            ],
            "fault_rms_min": self.fault_rms_min,
            "fault_rms_max": self.fault_rms_max,
            "freq_dev_max_hz": self.freq_dev_max_hz,
        }


def settling_time(
    t: np.ndarray,
    rms: np.ndarray,
    t_event: float,
    v_nom: float,
    band: float = RMS_BAND,
    hold: float = RMS_HOLD,
) -> float | None:
    """First instant after ``t_event`` where RMS stays within the band for ``hold``.

    Returned relative to the event; None when the criterion never holds
    (including when the trace ends before a full hold window fits).
    """
    if len(t) < 2:
        return None
    dt = t[1] - t[0]
    need = max(1, int(round(hold / dt)))
    ok = np.abs(rms - v_nom) <= band * v_nom
    start = int(np.searchsorted(t, t_event))
    # cumulative run length of consecutive ok samples
    for i in range(start, len(t) - need + 1):
        if ok[i : i + need].all():
            return float(t[i] - t_event)
    return None


def compute_metrics(
    trace: TraceRecord,
    schedule: EventSchedule = EventSchedule(),
    v_nom_rms: float = 230.0,
    f_nom: float = 50.0,
    startup_exclude: float = DEFAULT_STARTUP_EXCLUDE,
) -> ScenarioMetrics:
    """Scenario metrics from a recorded trace.

    Settled power-share windows take the last 0.4 s of each inter-event
    segment, excluding 100 ms after the event and the startup interval.
    Fault RMS statistics skip two measurement windows after fault
    inception so the sliding RMS has flushed pre-fault samples.  The
    frequency metric only counts samples with a healthy bus (RMS >= half
    nominal): the crossing estimator reads ringing, not the oscillators,
    during a collapse.
    """
    if len(trace.data) == 0:
        raise ValueError("empty trace")
    t = trace.t
    rms = trace["bus_rms"]
    t_endv = float(t[-1])

    settling = tuple(
        EventSettling(te, settling_time(t, rms, te, v_nom_rms))
        for te, _ in schedule.entries
    )

    n_u = trace.n_units
    boundaries = [startup_exclude] + [te for te, _ in schedule.entries] + [t_endv]
    windows: list[ShareWindow] = []
    for a, b in zip(boundaries[:-1], boundaries[1:]):
        lo = max(a + RMS_HOLD, b - 0.4)
        if b - lo < 0.1:
            continue
        m = (t >= lo) & (t <= b)
        if not m.any():
            continue
        powers = tuple(float(trace[f"u{k}_p"][m].mean()) for k in range(n_u))
        total = sum(powers)
        shares = tuple(p / total for p in powers) if total != 0.0 else tuple(
            0.0 for _ in powers
        )
        windows.append(ShareWindow(float(lo), float(b), powers, shares))

    fault_min = fault_max = None
    on_times = schedule.times_of(EventKind.FAULT_ON)
    off_times = schedule.times_of(EventKind.FAULT_OFF)
    if on_times and off_times:
        t_on, t_off = on_times[0], off_times[0]
        m = (t >= t_on + 2.0 * RMS_WINDOW) & (t < t_off)
        if m.any():
            fault_min = float(rms[m].min())
            fault_max = float(rms[m].max())

    freq = trace["freq_hz"]
    m = (t >= startup_exclude) & (rms >= 0.5 * v_nom_rms) & ~np.isnan(freq)
    freq_dev = float(np.abs(freq[m] - f_nom).max()) if m.any() else None

    return ScenarioMetrics(
        settling=settling,
        share_windows=tuple(windows),
        fault_rms_min=fault_min,
        fault_rms_max=fault_max,
        freq_dev_max_hz=freq_dev,
    )
