"""Dead-zone virtual oscillator.

A virtual parallel RLC circuit driven by a piecewise-linear
negative-conductance current source.  Inside the dead zone (|v| <= phi)
the source behaves as a negative conductance -sigma and the origin is
unstable; outside it the net conductance is positive and trajectories
decay.  The balance sustains a near-sinusoidal limit cycle at the RLC
resonance, which is the inverter's voltage reference.

This module only evaluates dynamics (derivatives) and the modulation
reference; time integration lives in :mod:`dzvoc.engine`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .signals import SQRT_3_2, AlphaBeta, ThreePhase, inverse_clarke

#: Peak of |v_osc| on the settled free-running orbit for the default
#: parameters, produced by ``calibrate_orbit_peak(OscillatorParams())``.
#: The modulation reference divides by this so that ``v_gain`` directly
#: sets the output phase-voltage amplitude.
DEFAULT_ORBIT_PEAK = 1.9985808050730993

#: Default current-feedback gain and modulation voltage scale.  v_gain is
#: the phase peak for 400 V line-to-line / 230 V phase RMS.
DEFAULT_I_GAIN = 1.0568e-3
DEFAULT_V_GAIN = 400.0 * math.sqrt(2.0) / math.sqrt(3.0)


@dataclass(frozen=True)
class OscillatorParams:
    """Virtual RLC circuit and dead-zone source constants.

    The defaults give a 50 Hz resonance.  ``sigma`` is back-solved so
    that, with the default feedback gains and ``r_s = r``, the linearized
    outer-segment eigenvalues are -7.3 +/- j*100*pi; it is not an
    independent design choice and should be retuned via
    :func:`dzvoc.stability.solve_sigma_for_decay_rate` if the targets
    change.  ``phi`` only sets the internal orbit scale (the dynamics are
    homogeneous of degree one in (v_osc, i_L, phi)); the modulation
    reference normalizes it away.
    """

    r: float = 10.0  # ohm, parallel loss resistance
    l: float = 250e-6  # H
    c: float = 0.04052847  # F, tuned with l for a 50 Hz resonance
    sigma: float = 0.4572007185310231  # S, half the max dead-zone slope
    phi: float = 1.0  # V, dead-zone half width
    r_s: float = 10.0  # ohm, effective load seen by the feedback chain
    omega0: float = 100.0 * math.pi  # rad/s
    orbit_peak: float = DEFAULT_ORBIT_PEAK  # V, settled |v_osc| peak, free run

    def validate(self) -> None:
        for name in ("r", "l", "c", "sigma", "phi", "r_s", "omega0", "orbit_peak"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"OscillatorParams.{name} must be positive")
        if self.sigma * self.r <= 1.0:
            raise ValueError("sigma * r must exceed 1 for a sustained near-circular orbit")
        w_n = 1.0 / math.sqrt(self.l * self.c)
        if abs(w_n - self.omega0) / self.omega0 >= 1e-3:
            raise ValueError(
                f"resonance 1/sqrt(l*c) = {w_n:.4f} rad/s deviates more than 0.1% "
                f"from omega0 = {self.omega0:.4f} rad/s"
            )


@dataclass(frozen=True)
class FeedbackGains:
    """Current-feedback gain and modulation voltage scale."""

    i_gain: float = DEFAULT_I_GAIN
    v_gain: float = DEFAULT_V_GAIN

    @property
    def alpha_total(self) -> float:
        """Overall loop gain: i_gain * v_gain."""
        return self.i_gain * self.v_gain


@dataclass
class OscillatorState:
    """Dynamic state: capacitor voltage and virtual inductor current."""

    v_osc: float = 0.0
    i_l: float = 0.0

    def radius(self, params: OscillatorParams) -> float:
        """Distance from the origin in the normalized (v, omega0*L*i_L) plane."""
        return math.hypot(self.v_osc, params.omega0 * params.l * self.i_l)


#: Startup state: a small kick off the unstable origin (exactly zero never starts).
STARTUP_STATE = (0.1, 0.0)


def dead_zone_f(v: float, p: OscillatorParams) -> float:
    """Piecewise-linear dead-zone function: zero inside |v| <= phi, slope 2*sigma outside."""
    if v > p.phi:
        return 2.0 * p.sigma * (v - p.phi)
    if v < -p.phi:
        return 2.0 * p.sigma * (v + p.phi)
    return 0.0


def source_current_g(v: float, p: OscillatorParams) -> float:
    """Output of the nonlinear source block: g(v) = f(v) - sigma*v.

    The current injected into the RLC node is -g(v); inside the dead zone
    this is +sigma*v, the negative-conductance region that feeds energy
    into the circuit.
    """
    return dead_zone_f(v, p) - p.sigma * v


def oscillator_derivative(
    s: OscillatorState,
    i_alpha_measured: float,
    p: OscillatorParams,
    g: FeedbackGains,
) -> tuple[float, float]:
    """Time derivatives (dv_osc/dt, di_L/dt).

    Current balance at the capacitor node: the loss branch -v/R, the
    nonlinear source -g(v), the inductor -i_L and the measured-current
    feedback -i_gain * i_alpha.  The inductor integrates v_osc.
    """
    i_feedback = g.i_gain * i_alpha_measured
    dv = (-s.v_osc / p.r - source_current_g(s.v_osc, p) - s.i_l - i_feedback) / p.c
    di = s.v_osc / p.l
    return dv, di


def pwm_reference(
    s: OscillatorState,
    p: OscillatorParams,
    g: FeedbackGains,
    vrl_scale: float = 1.0,
) -> ThreePhase:
    """Three-phase modulation reference.

    The oscillator plane provides the quadrature pair alpha = v_osc,
    beta = omega0 * L * i_L.  The pair is normalized by the calibrated
    free-running orbit peak so the settled reference has phase amplitude
    vrl_scale * v_gain; the sqrt(3/2) factor cancels the power-invariant
    inverse Clarke scaling.
    """
    k = vrl_scale * g.v_gain * SQRT_3_2 / p.orbit_peak
    alpha = k * s.v_osc
    beta = k * p.omega0 * p.l * s.i_l
    return inverse_clarke(AlphaBeta(alpha, beta))


def free_run(
    p: OscillatorParams,
    t_end: float = 2.0,
    dt: float = 1e-5,
    state0: tuple[float, float] = STARTUP_STATE,
    feedback_conductance: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate the unloaded oscillator with fixed-step RK4.

    ``feedback_conductance`` adds a linear term -g_fb * v_osc to the
    capacitor current balance; zero models a truly free-running unit,
    while alpha_total / r_s reproduces the loaded feedback chain used in
    the per-segment analysis.

    Returns (t, v_osc, i_l) sampled at every step.
    """
    if dt <= 0.0 or t_end <= dt:
        raise ValueError("need dt > 0 and t_end > dt")
    rho = p.sigma - 1.0 / p.r
    sigma, phi, c, l = p.sigma, p.phi, p.c, p.l
    g_fb = feedback_conductance

    def deriv(v: float, il: float) -> tuple[float, float]:
        if v > phi:
            f = 2.0 * sigma * (v - phi)
        elif v < -phi:
            f = 2.0 * sigma * (v + phi)
        else:
            f = 0.0
        return (rho * v - f - il - g_fb * v) / c, v / l

    n = int(round(t_end / dt))
    t = np.arange(n + 1) * dt
    v = np.empty(n + 1)
    il = np.empty(n + 1)
    v[0], il[0] = state0
    vk, ik = state0
    for i in range(1, n + 1):
        k1v, k1i = deriv(vk, ik)
        k2v, k2i = deriv(vk + 0.5 * dt * k1v, ik + 0.5 * dt * k1i)
        k3v, k3i = deriv(vk + 0.5 * dt * k2v, ik + 0.5 * dt * k2i)
        k4v, k4i = deriv(vk + dt * k3v, ik + dt * k3i)
        vk += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        ik += dt / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i)
        v[i] = vk
        il[i] = ik
    return t, v, il


def calibrate_orbit_peak(
    p: OscillatorParams, t_end: float = 2.0, dt: float = 1e-5
) -> float:
    """Measure the settled free-running |v_osc| peak for ``p``.

    Runs the unloaded oscillator from the startup state and takes the
    peak over the last quarter of the run.  Use this to refresh
    ``orbit_peak`` after changing any oscillator constant.
    """
    t, v, _ = free_run(p, t_end=t_end, dt=dt)
    settled = v[t >= 0.75 * t_end]
    return float(np.abs(settled).max())


def with_calibrated_orbit(p: OscillatorParams) -> OscillatorParams:
    """Return a copy of ``p`` with ``orbit_peak`` recalibrated."""
    return replace(p, orbit_peak=calibrate_orbit_peak(p))
