"""Outer control loops.

Voltage recovery loop (VRL): a PI controller on measured RMS voltage
that scales the oscillator's modulation reference, restoring the bus to
its setpoint after load changes without touching the fast oscillator
dynamics.  Includes conditional-integration anti-windup and a fault
guard that freezes the integrator during deep voltage collapses and
resets it on recovery, avoiding windup-driven overshoot.

Hysteresis current controller: per-phase bang-bang switching that keeps
a measured current inside a band around its reference; drives the
grid-following PV inverter legs.

PV source: a dispatched constant-power injector whose current reference
is locked to the measured bus-voltage angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .signals import SQRT_2_3, SQRT_3_2, AlphaBeta, ThreePhase, inverse_clarke

HIGH = 1
LOW = -1


@dataclass
class VrlState:
    """PI regulator state for the voltage recovery loop.

    The output scale multiplies the modulation reference and is clamped
    to [scale_min, scale_max].  The integrator is clamped to the band
    that can just saturate the output on its own, and integration is
    skipped while the output is saturated in the error direction, so
    un-saturating is always possible.
    """

    kp: float = 2e-4  # 1/V
    ki: float = 2e-2  # 1/(V*s)
    v_ref_rms: float = 230.0
    scale_min: float = 0.5
    scale_max: float = 1.5
    integrator: float = 0.0
    scale: float = 1.0
    frozen: bool = False
    # fault-guard thresholds and hold state
    guard_enabled: bool = True
    guard_low_pu: float = 0.5
    guard_recover_pu: float = 0.9
    guard_hold_s: float = 0.02
    low_steps: int = field(default=0, repr=False)


def vrl_step(s: VrlState, v_meas_rms: float, dt: float) -> float:
    """Advance the PI one sample and return the reference scale.

    error = v_ref_rms - v_meas_rms; the integrator holds while frozen or
    while the output is saturated against the error direction.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    err = s.v_ref_rms - v_meas_rms
    unsat = 1.0 + s.kp * err + s.integrator
    if not s.frozen:
        saturating = (unsat >= s.scale_max and err > 0.0) or (
            unsat <= s.scale_min and err < 0.0
        )
        if not saturating:
            s.integrator += s.ki * err * dt
            s.integrator = min(max(s.integrator, s.scale_min - 1.0), s.scale_max - 1.0)
    s.scale = min(max(1.0 + s.kp * err + s.integrator, s.scale_min), s.scale_max)
    return s.scale


def vrl_fault_guard(s: VrlState, v_meas_rms: float, dt: float) -> None:
    """Freeze/reset policy for deep voltage collapses.

    Below guard_low_pu of the setpoint for longer than guard_hold_s the
    integrator freezes (held, not cleared).  Once the voltage recovers
    above guard_recover_pu the integrator is zeroed and the loop
    released, so the PI restarts clean instead of unwinding stale state.
    """
    hold_steps = int(round(s.guard_hold_s / dt))
    if v_meas_rms < s.guard_low_pu * s.v_ref_rms:
        s.low_steps += 1
        if s.low_steps > hold_steps:
            s.frozen = True
    else:
        s.low_steps = 0
        if s.frozen and v_meas_rms > s.guard_recover_pu * s.v_ref_rms:
            s.integrator = 0.0
            s.frozen = False


@dataclass
class HysteresisController:
    """Per-phase two-level relay with a symmetric current band.

    State toggles only when the error leaves the band: measured below
    ref - band drives the leg HIGH, above ref + band drives it LOW,
    otherwise the previous state holds.
    """

    band: float = 0.5  # A, half-width
    state: tuple[int, int, int] = (HIGH, HIGH, HIGH)

    def leg_voltages(self, v_dc: float) -> ThreePhase:
        """Pole voltages for the current switch states (+/- v_dc/2)."""
        return ThreePhase(*(0.5 * v_dc * s for s in self.state))


def hysteresis_step(
    h: HysteresisController, i_meas: ThreePhase, i_ref: ThreePhase
) -> tuple[int, int, int]:
    """Update the three relays and return the new switch states."""
    if h.band <= 0.0:
        raise ValueError("band must be positive")
    new = []
    for meas, ref, prev in zip(
        (i_meas.a, i_meas.b, i_meas.c), (i_ref.a, i_ref.b, i_ref.c), h.state
    ):
        if meas < ref - h.band:
            new.append(HIGH)
        elif meas > ref + h.band:
            new.append(LOW)
        else:
            new.append(prev)
    h.state = tuple(new)
    return h.state


@dataclass
class PvSource:
    """Dispatched constant-power source behind a grid-following inverter.

    The DC link is treated as an ideal 600 V source; the injected
    current tracks the bus-voltage angle so the average three-phase
    power equals p_generated whenever connected and the bus is healthy.
    band_a / l_f / r_f describe the hysteresis-switched inverter used in
    switched mode; averaged mode injects the reference directly.
    """

    p_generated: float = 4800.0  # W
    v_dc: float = 600.0
    connected: bool = True
    v_nom_rms: float = 230.0  # phase RMS used for the undervoltage lockout
    band_a: float = 0.5  # A, hysteresis half-width
    l_f: float = 10e-3  # H, inverter-side choke
    r_f: float = 0.1  # ohm


def pv_reference(pv: PvSource, v_bus: AlphaBeta) -> ThreePhase:
    """Current reference in phase with the bus voltage.

    Peak magnitude 2*P/(3*V_phase_peak) makes the average three-phase
    power equal the dispatched power.  Below 0.1 pu bus amplitude (or
    when disconnected / zero dispatch) the reference is zero.
    """
    mag = math.sqrt(v_bus.alpha * v_bus.alpha + v_bus.beta * v_bus.beta)
    v_phase_peak = SQRT_2_3 * mag
    lockout = 0.1 * pv.v_nom_rms * math.sqrt(2.0)
    if not pv.connected or pv.p_generated <= 0.0 or v_phase_peak <= lockout:
        return ThreePhase(0.0, 0.0, 0.0)
    i_peak = 2.0 * pv.p_generated / (3.0 * v_phase_peak)
    g = SQRT_3_2 * i_peak / mag
    return inverse_clarke(AlphaBeta(g * v_bus.alpha, g * v_bus.beta))
