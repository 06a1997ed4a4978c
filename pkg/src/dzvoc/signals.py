"""Three-phase signal algebra.

Clarke (abc -> alpha-beta) and inverse Clarke transforms in the
power-invariant convention, a sliding-window RMS estimator, and
zero-crossing frequency estimation.  The zero-sequence component is
dropped throughout: every network here is a balanced three-wire system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT_2_3 = math.sqrt(2.0 / 3.0)
SQRT_3_2 = math.sqrt(1.5)
HALF_SQRT3 = math.sqrt(3.0) / 2.0


class InsufficientCrossings(ValueError):
    """Raised when a signal has too few rising zero crossings to estimate a frequency."""


@dataclass(frozen=True)
class ThreePhase:
    """Instantaneous three-phase sample (volts or amperes)."""

    a: float
    b: float
    c: float


@dataclass(frozen=True)
class AlphaBeta:
    """Instantaneous sample in the stationary orthogonal (alpha-beta) frame.

    For a balanced sinusoidal three-phase signal, alpha**2 + beta**2 is
    constant over time.
    """

    alpha: float
    beta: float


def clarke(x: ThreePhase) -> AlphaBeta:
    """Project a three-phase sample onto the stationary alpha-beta frame.

    Power-invariant scaling: alpha = sqrt(2/3) * (a - b/2 - c/2),
    beta = sqrt(2/3) * (sqrt(3)/2) * (b - c).  For zero-sequence-free
    signals a^2 + b^2 + c^2 == alpha^2 + beta^2.
    """
    alpha = SQRT_2_3 * (x.a - 0.5 * x.b - 0.5 * x.c)
    beta = SQRT_2_3 * HALF_SQRT3 * (x.b - x.c)
    return AlphaBeta(alpha, beta)


def inverse_clarke(x: AlphaBeta) -> ThreePhase:
    """Map an alpha-beta sample back to a zero-sequence-free three-phase set.

    Exact right-inverse of :func:`clarke` restricted to zero-sequence-free
    signals: clarke(inverse_clarke(x)) == x.
    """
    a = SQRT_2_3 * x.alpha
    b = SQRT_2_3 * (-0.5 * x.alpha + HALF_SQRT3 * x.beta)
    c = SQRT_2_3 * (-0.5 * x.alpha - HALF_SQRT3 * x.beta)
    return ThreePhase(a, b, c)


@dataclass
class SlidingRms:
    """Running RMS over a fixed time window (default one 50 Hz period).

    A ring buffer of squared samples plus a running sum keeps each push
    O(1).  Until the window is full the mean is taken over the samples
    seen so far.
    """

    window_s: float = 0.02
    sample_dt: float = 1e-5
    _buf: np.ndarray = field(init=False, repr=False)
    _idx: int = field(init=False, default=0)
    _count: int = field(init=False, default=0)
    _sumsq: float = field(init=False, default=0.0)

    def __post_init__(self) -> None:
        n = max(1, int(round(self.window_s / self.sample_dt)))
        self._buf = np.zeros(n)

    @property
    def size(self) -> int:
        return len(self._buf)

    def push(self, sample: float) -> float:
        """Add one sample and return the current RMS."""
        x2 = sample * sample
        if self._count < len(self._buf):
            self._buf[self._idx] = x2
            self._sumsq += x2
            self._count += 1
        else:
            self._sumsq += x2 - self._buf[self._idx]
            self._buf[self._idx] = x2
        self._idx += 1
        if self._idx == len(self._buf):
            self._idx = 0
        return math.sqrt(max(self._sumsq, 0.0) / self._count)

    def reset(self) -> None:
        self._buf[:] = 0.0
        self._idx = 0
        self._count = 0
        self._sumsq = 0.0


def rms_push(state: SlidingRms, sample: float) -> float:
    """Functional alias for :meth:`SlidingRms.push`."""
    return state.push(sample)


@dataclass
class SlidingMean:
    """Running mean over a fixed time window (same ring discipline as SlidingRms)."""

    window_s: float = 0.02
    sample_dt: float = 1e-5
    _buf: np.ndarray = field(init=False, repr=False)
    _idx: int = field(init=False, default=0)
    _count: int = field(init=False, default=0)
    _sum: float = field(init=False, default=0.0)

    def __post_init__(self) -> None:
        n = max(1, int(round(self.window_s / self.sample_dt)))
        self._buf = np.zeros(n)

    def push(self, sample: float) -> float:
        if self._count < len(self._buf):
            self._buf[self._idx] = sample
            self._sum += sample
            self._count += 1
        else:
            self._sum += sample - self._buf[self._idx]
            self._buf[self._idx] = sample
        self._idx += 1
        if self._idx == len(self._buf):
            self._idx = 0
        return self._sum / self._count


def rising_zero_crossings(samples: np.ndarray, dt: float) -> np.ndarray:
    """Times of rising zero crossings, linearly interpolated between samples."""
    x = np.asarray(samples, dtype=float)
    if len(x) < 2:
        return np.empty(0)
    prev = x[:-1]
    cur = x[1:]
    hit = (prev < 0.0) & (cur >= 0.0)
    idx = np.nonzero(hit)[0]
    frac = -prev[idx] / (cur[idx] - prev[idx])
    return (idx + frac) * dt


def estimate_frequency(samples: np.ndarray, dt: float) -> float:
    """Estimate the fundamental frequency from rising zero crossings.

    Returns 1 / mean spacing of rising zero crossings.  Raises
    :class:`InsufficientCrossings` when fewer than two rising crossings
    are present (e.g. a DC signal).
    """
    crossings = rising_zero_crossings(samples, dt)
    if len(crossings) < 2:
        raise InsufficientCrossings(
            f"need >= 2 rising zero crossings, found {len(crossings)}"
        )
    spacing = np.diff(crossings).mean()
    return 1.0 / spacing
