"""Figure rendering for recorded traces.

Every scenario run can drop a small set of PNGs next to its CSV/JSON
output: bus RMS, per-source powers, instantaneous bus voltage around
the first event, frequency estimate and the VRL scales.  The CSV stays
the machine-readable contract; the figures are the human-readable one.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .engine import EventSchedule, TraceRecord

_DPI = 130


def _mark_events(ax, schedule: EventSchedule) -> None:
    for t_e, e in schedule.entries:
        ax.axvline(t_e, color="0.6", ls=":", lw=0.9)
        ax.annotate(
            e.kind.value,
            xy=(t_e, 1.0),
            xycoords=("data", "axes fraction"),
            fontsize=7,
            rotation=90,
            va="top",
            ha="right",
            color="0.35",
        )


def fig_bus_rms(trace: TraceRecord, schedule: EventSchedule, v_nom: float, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(trace.t, trace["bus_rms"], lw=1.0, color="tab:blue")
    for lvl, ls in ((v_nom, "-"), (1.02 * v_nom, "--"), (0.98 * v_nom, "--")):
        ax.axhline(lvl, color="0.75", ls=ls, lw=0.8)
    _mark_events(ax, schedule)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("bus voltage RMS [V]")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def fig_powers(trace: TraceRecord, schedule: EventSchedule, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for k in range(trace.n_units):
        ax.plot(trace.t, trace[f"u{k}_p"] / 1e3, lw=1.0, label=f"unit {k + 1}")
    if np.any(trace["pv_p"] != 0.0):
        ax.plot(trace.t, trace["pv_p"] / 1e3, lw=1.0, label="pv")
    ax.plot(trace.t, trace["load_p"] / 1e3, lw=0.9, color="0.4", ls="--", label="load")
    _mark_events(ax, schedule)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("power [kW]")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def fig_bus_voltage(trace: TraceRecord, schedule: EventSchedule, path: Path) -> None:
    """Instantaneous abc voltages, zoomed around the first event if any."""
    t = trace.t
    if schedule.entries:
        t0 = schedule.entries[0][0]
        lo, hi = max(t[0], t0 - 0.06), min(t[-1], t0 + 0.1)
    else:
        lo, hi = max(t[0], t[-1] - 0.1), t[-1]
    m = (t >= lo) & (t <= hi)
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for ph, color in zip("abc", ("tab:blue", "tab:orange", "tab:green")):
        ax.plot(t[m], trace[f"bus_v_{ph}"][m], lw=0.8, color=color, label=ph)
    _mark_events(ax, schedule)
    ax.set_xlim(lo, hi)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("bus voltage [V]")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def fig_frequency(trace: TraceRecord, schedule: EventSchedule, f_nom: float, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(trace.t, trace["freq_hz"], lw=0.9, color="tab:purple")
    ax.axhline(f_nom, color="0.75", lw=0.8)
    _mark_events(ax, schedule)
    ax.set_ylim(f_nom - 2.0, f_nom + 2.0)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("frequency estimate [Hz]")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def fig_vrl_scales(trace: TraceRecord, schedule: EventSchedule, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for k in range(trace.n_units):
        ax.plot(trace.t, trace[f"u{k}_scale"], lw=1.0, label=f"unit {k + 1}")
    _mark_events(ax, schedule)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("VRL reference scale")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_run_figures(
    trace: TraceRecord,
    schedule: EventSchedule,
    out_dir: Path,
    v_nom: float = 230.0,
    f_nom: float = 50.0,
) -> list[Path]:
    """Render the standard figure set into ``out_dir``; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = {
        "bus_rms.png": lambda p: fig_bus_rms(trace, schedule, v_nom, p),
        "powers.png": lambda p: fig_powers(trace, schedule, p),
        "bus_voltage.png": lambda p: fig_bus_voltage(trace, schedule, p),
        "frequency.png": lambda p: fig_frequency(trace, schedule, f_nom, p),
        "vrl_scales.png": lambda p: fig_vrl_scales(trace, schedule, p),
    }
    paths = []
    for fname, render in jobs.items():
        p = out_dir / fname
        render(p)
        paths.append(p)
    return paths


def fig_impulse(t: np.ndarray, v: np.ndarray, label: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.0))
    ax.plot(t, v, lw=0.8, color="tab:blue")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("oscillator voltage [norm.]")
    ax.set_title(label, fontsize=9)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
