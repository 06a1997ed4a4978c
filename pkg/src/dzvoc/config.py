"""Scenario configuration files.

TOML is the primary hand-edited format; JSON is accepted as an
alternative encoding of the same structure.  Unknown keys are rejected
everywhere (they are almost always typos), design-rule validation runs
at load time, and serialize -> parse is the identity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 fallback
    import tomli as tomllib

from .control import PvSource, VrlState
from .engine import EventSchedule, SimConfig
from .network import (
    DEFAULT_FAULT_INDUCTANCE,
    Event,
    EventKind,
    FilterParams,
    GridModel,
    InverterUnit,
    scale_unit_for_capacity,
)
from .oscillator import (
    DEFAULT_ORBIT_PEAK,
    FeedbackGains,
    OscillatorParams,
    calibrate_orbit_peak,
)
from .stability import validate_design


class ConfigError(ValueError):
    """Malformed or invalid scenario configuration."""


_ALLOWED = {
    "": {"name", "sim", "oscillator", "gains", "filter", "vrl", "grid", "pv", "events"},
    "sim": {"dt", "t_end", "integrator", "decimation", "startup_exclude"},
    "oscillator": {"r", "l", "c", "sigma", "phi", "r_s", "omega0", "orbit_peak"},
    "gains": {"i_gain", "v_gain"},
    "filter": {"r_f", "l_f", "c_f"},
    "vrl": {"kp", "ki", "v_ref_rms", "scale_min", "scale_max", "guard"},
    "grid": {"capacities", "load_w", "v_nom_rms", "fault_inductance"},
    "pv": {"power_w", "v_dc", "connected", "mode", "band_a", "l_f", "r_f"},
    "events": {"t", "kind", "value"},
}

_EVENT_KINDS = {k.value: k for k in EventKind}


def _check_keys(table: dict, scope: str, where: str) -> None:
    unknown = set(table) - _ALLOWED[scope]
    if unknown:
        raise ConfigError(
            f"unknown key(s) {sorted(unknown)} in {where or 'top level'}; "
            f"allowed: {sorted(_ALLOWED[scope])}"
        )


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete declarative description of one simulation run."""

    name: str = "custom"
    sim: SimConfig = field(default_factory=SimConfig)
    oscillator: OscillatorParams = field(default_factory=OscillatorParams)
    gains: FeedbackGains = field(default_factory=FeedbackGains)
    filt: FilterParams = field(default_factory=FilterParams)
    vrl: VrlState = field(default_factory=VrlState)
    capacities: tuple[float, ...] = (1.0,)
    load_w: float = 8000.0
    v_nom_rms: float = 230.0
    fault_inductance: float = DEFAULT_FAULT_INDUCTANCE
    pv: PvSource | None = None
    events: tuple[tuple[float, Event], ...] = ()

    # ---------------- dict mapping ----------------

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        _check_keys(d, "", "")
        sim_d = dict(d.get("sim", {}))
        _check_keys(sim_d, "sim", "[sim]")
        pv_d = d.get("pv")
        sim = SimConfig(
            dt=float(sim_d.get("dt", 1e-5)),
            t_end=float(sim_d.get("t_end", 4.0)),
            integrator=sim_d.get("integrator", "rk4"),
            decimation=int(sim_d.get("decimation", 100)),
            pv_mode=(pv_d or {}).get("mode", "averaged"),
            startup_exclude=float(sim_d.get("startup_exclude", 0.5)),
        )

        osc_d = dict(d.get("oscillator", {}))
        _check_keys(osc_d, "oscillator", "[oscillator]")
        explicit_orbit = "orbit_peak" in osc_d
        osc = OscillatorParams(
            r=float(osc_d.get("r", 10.0)),
            l=float(osc_d.get("l", 250e-6)),
            c=float(osc_d.get("c", 0.04052847)),
            sigma=float(osc_d.get("sigma", OscillatorParams.sigma)),
            phi=float(osc_d.get("phi", 1.0)),
            r_s=float(osc_d.get("r_s", 10.0)),
            omega0=float(osc_d.get("omega0", 100.0 * math.pi)),
            orbit_peak=float(osc_d.get("orbit_peak", DEFAULT_ORBIT_PEAK)),
        )
        if not explicit_orbit and _orbit_affecting_changed(osc):
            osc = replace(osc, orbit_peak=calibrate_orbit_peak(osc))

        g_d = dict(d.get("gains", {}))
        _check_keys(g_d, "gains", "[gains]")
        gains = FeedbackGains(
            i_gain=float(g_d.get("i_gain", FeedbackGains.i_gain)),
            v_gain=float(g_d.get("v_gain", FeedbackGains.v_gain)),
        )

        f_d = dict(d.get("filter", {}))
        _check_keys(f_d, "filter", "[filter]")
        filt = FilterParams(
            r_f=float(f_d.get("r_f", 0.1)),
            l_f=float(f_d.get("l_f", 2.5e-3)),
            c_f=float(f_d.get("c_f", 60e-6)),
        )

        v_d = dict(d.get("vrl", {}))
        _check_keys(v_d, "vrl", "[vrl]")
        vrl = VrlState(
            kp=float(v_d.get("kp", 2e-4)),
            ki=float(v_d.get("ki", 2e-2)),
            v_ref_rms=float(v_d.get("v_ref_rms", 230.0)),
            scale_min=float(v_d.get("scale_min", 0.5)),
            scale_max=float(v_d.get("scale_max", 1.5)),
            guard_enabled=bool(v_d.get("guard", True)),
        )

        gr_d = dict(d.get("grid", {}))
        _check_keys(gr_d, "grid", "[grid]")
        capacities = tuple(float(s) for s in gr_d.get("capacities", [1.0]))

        pv = None
        if pv_d is not None:
            pv_d = dict(pv_d)
            _check_keys(pv_d, "pv", "[pv]")
            mode = pv_d.get("mode", "averaged")
            if mode not in ("averaged", "switched"):
                raise ConfigError(f"pv mode must be 'averaged' or 'switched', got {mode!r}")
            pv = PvSource(
                p_generated=float(pv_d.get("power_w", 4800.0)),
                v_dc=float(pv_d.get("v_dc", 600.0)),
                connected=bool(pv_d.get("connected", True)),
                v_nom_rms=float(gr_d.get("v_nom_rms", 230.0)),
                band_a=float(pv_d.get("band_a", 0.5)),
                l_f=float(pv_d.get("l_f", 10e-3)),
                r_f=float(pv_d.get("r_f", 0.1)),
            )

        events = []
        for i, e_d in enumerate(d.get("events", [])):
            e_d = dict(e_d)
            _check_keys(e_d, "events", f"[[events]] #{i + 1}")
            if "t" not in e_d or "kind" not in e_d:
                raise ConfigError(f"[[events]] #{i + 1} needs 't' and 'kind'")
            kind = _EVENT_KINDS.get(e_d["kind"])
            if kind is None:
                raise ConfigError(
                    f"[[events]] #{i + 1}: unknown kind {e_d['kind']!r}; "
                    f"allowed: {sorted(_EVENT_KINDS)}"
                )
            events.append((float(e_d["t"]), Event(kind, float(e_d.get("value", 0.0)))))

        return cls(
            name=d.get("name", "custom"),
            sim=sim,
            oscillator=osc,
            gains=gains,
            filt=filt,
            vrl=vrl,
            capacities=capacities,
            load_w=float(gr_d.get("load_w", 8000.0)),
            v_nom_rms=float(gr_d.get("v_nom_rms", 230.0)),
            fault_inductance=float(gr_d.get("fault_inductance", DEFAULT_FAULT_INDUCTANCE)),
            pv=pv,
            events=tuple(events),
        )

    def to_dict(self) -> dict:
        d: dict = {
            "name": self.name,
            "sim": {
                "dt": self.sim.dt,
                "t_end": self.sim.t_end,
                "integrator": self.sim.integrator,
                "decimation": self.sim.decimation,
                "startup_exclude": self.sim.startup_exclude,
            },
            "oscillator": {
                "r": self.oscillator.r,
                "l": self.oscillator.l,
                "c": self.oscillator.c,
                "sigma": self.oscillator.sigma,
                "phi": self.oscillator.phi,
                "r_s": self.oscillator.r_s,
                "omega0": self.oscillator.omega0,
                "orbit_peak": self.oscillator.orbit_peak,
            },
            "gains": {"i_gain": self.gains.i_gain, "v_gain": self.gains.v_gain},
            "filter": {"r_f": self.filt.r_f, "l_f": self.filt.l_f, "c_f": self.filt.c_f},
            "vrl": {
                "kp": self.vrl.kp,
                "ki": self.vrl.ki,
                "v_ref_rms": self.vrl.v_ref_rms,
                "scale_min": self.vrl.scale_min,
                "scale_max": self.vrl.scale_max,
                "guard": self.vrl.guard_enabled,
            },
            "grid": {
                "capacities": list(self.capacities),
                "load_w": self.load_w,
                "v_nom_rms": self.v_nom_rms,
                "fault_inductance": self.fault_inductance,
            },
        }
        if self.pv is not None:
            d["pv"] = {
                "power_w": self.pv.p_generated,
                "v_dc": self.pv.v_dc,
                "connected": self.pv.connected,
                "mode": self.sim.pv_mode,
                "band_a": self.pv.band_a,
                "l_f": self.pv.l_f,
                "r_f": self.pv.r_f,
            }
        if self.events:
            d["events"] = [
                {"t": t, "kind": e.kind.value, "value": e.value} for t, e in self.events
            ]
        return d

    # ---------------- validation & build ----------------

    def validate(self) -> None:
        """Parameter sanity plus every design rule; lists all violations."""
        problems: list[str] = []
        try:
            self.oscillator.validate()
        except ValueError as exc:
            problems.append(str(exc))
        try:
            self.filt.validate()
        except ValueError as exc:
            problems.append(str(exc))
        if not self.capacities:
            problems.append("grid.capacities must not be empty")
        if any(not 0.0 < s <= 1.0 for s in self.capacities):
            problems.append("every capacity scale must be in (0, 1]")
        if self.load_w <= 0.0:
            problems.append("grid.load_w must be positive")
        report = validate_design(self.oscillator, self.gains)
        problems += [line for line, rule in zip(report.lines(), report.rules) if not rule.passed]
        running = self.load_w
        for t, e in self.events:
            if t > self.sim.t_end:
                problems.append(f"event at t={t} s is past t_end={self.sim.t_end} s")
            if e.kind is EventKind.LOAD_SET:
                running = e.value
            elif e.kind is EventKind.LOAD_DELTA:
                running += e.value
            if e.kind in (EventKind.LOAD_SET, EventKind.LOAD_DELTA) and running <= 0.0:
                problems.append(f"event at t={t} s drives load power to {running} W")
        try:
            self.sim.validate(has_pv=self.pv is not None)
        except ValueError as exc:
            problems.append(str(exc))
        if problems:
            raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(problems))

    def build(self) -> tuple[GridModel, SimConfig, EventSchedule]:
        """Instantiate the grid, integrator config and event schedule."""
        self.validate()
        base = InverterUnit(
            params=self.oscillator,
            gains=self.gains,
            vrl=replace(self.vrl),
            filt=self.filt,
        )
        units = [scale_unit_for_capacity(base, s) for s in self.capacities]
        pv = replace(self.pv) if self.pv is not None else None
        grid = GridModel(
            units=units,
            pv=pv,
            v_nom_rms=self.v_nom_rms,
            load_w=self.load_w,
            fault_inductance=self.fault_inductance,
            sample_dt=self.sim.dt,
        )
        return grid, self.sim, EventSchedule(self.events)


def _orbit_affecting_changed(osc: OscillatorParams) -> bool:
    ref = OscillatorParams()
    return (osc.r, osc.l, osc.c, osc.sigma, osc.phi) != (
        ref.r, ref.l, ref.c, ref.sigma, ref.phi,
    )


# ---------------- file I/O ----------------


def loads_toml(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from exc
    return ScenarioConfig.from_dict(data)


def loads_json(text: str) -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON parse error: line {exc.lineno}: {exc.msg}") from exc
    return ScenarioConfig.from_dict(data)


def load(path: Path | str) -> ScenarioConfig:
    """Load a scenario file; .json parses as JSON, anything else as TOML."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return loads_json(text)
    return loads_toml(text)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot encode {type(v)} as TOML")


def dumps_toml(cfg: ScenarioConfig) -> str:
    """Serialize to TOML; loads_toml(dumps_toml(cfg)) == cfg."""
    d = cfg.to_dict()
    lines = [f"name = {_toml_value(d['name'])}", ""]
    for table in ("sim", "oscillator", "gains", "filter", "vrl", "grid", "pv"):
        if table not in d:
            continue
        lines.append(f"[{table}]")
        for k, v in d[table].items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    for e in d.get("events", []):
        lines.append("[[events]]")
        for k, v in e.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)
