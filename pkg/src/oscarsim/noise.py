"""Thermal high-mode vibration as a random-phase sinusoid sum.

The thermally excited flexural modes displace the tip by

    delta_z_c(tau) = sum_n (b_n / z0) cos(Omega_n tau + Psi_n)

on top of the driven fundamental motion.  Each mode keeps a fixed
amplitude (equipartition) but loses phase memory: its Psi_n is redrawn
uniformly at renewal times spaced by tau_Psi = N * tau_0, where tau_0 is
redrawn each time from U[2 pi/(1.2 eps), 2 pi/(0.8 eps)] — N rf-ish
periods with a 20% frequency jitter.  N controls the correlation time of
the noise.  delta_z_c feeds only the spin detuning, never the force on
the cantilever.

The phase bookkeeping lives in tiny jitted helpers that the time-domain
kernel calls directly with the same arrays and the same Generator, so a
NoiseProcess replayed in Python reproduces the in-kernel noise exactly.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import ParameterError

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _delta_zc(omega, amp, phases, tau):
    s = 0.0
    for i in range(omega.size):
        s += amp[i] * np.cos(omega[i] * tau + phases[i])
    return s


@njit(cache=True)
def _renewal_interval(gen, n_renewal, epsilon):
    lo = TWO_PI / (1.2 * epsilon)
    hi = TWO_PI / (0.8 * epsilon)
    return n_renewal * (lo + (hi - lo) * gen.random())


@njit(cache=True)
def _advance(gen, phases, next_renewal, tau, n_renewal, epsilon, shared):
    """Redraw phases whose renewal time has passed.  Returns renewal count."""
    fired = 0
    if phases.size == 0:
        return fired
    if shared:
        if next_renewal[0] <= tau:
            while next_renewal[0] <= tau:
                next_renewal[0] += _renewal_interval(gen, n_renewal, epsilon)
                fired += 1
            for i in range(phases.size):
                phases[i] = TWO_PI * gen.random()
            for i in range(1, next_renewal.size):
                next_renewal[i] = next_renewal[0]
    else:
        for i in range(phases.size):
            while next_renewal[i] <= tau:
                phases[i] = TWO_PI * gen.random()
                next_renewal[i] += _renewal_interval(gen, n_renewal, epsilon)
                fired += 1
    return fired


@njit(cache=True)
def _init_schedule(gen, phases, next_renewal, tau_start, n_renewal, epsilon, shared):
    for i in range(phases.size):
        phases[i] = TWO_PI * gen.random()
    if shared:
        if next_renewal.size:
            t = tau_start + _renewal_interval(gen, n_renewal, epsilon)
            for i in range(next_renewal.size):
                next_renewal[i] = t
    else:
        for i in range(next_renewal.size):
            next_renewal[i] = tau_start + _renewal_interval(gen, n_renewal, epsilon)


class NoiseProcess:
    """Random-phase mode sum with per-mode (or shared) renewal clocks.

    omega: mode frequency ratios Omega_n; amp: tip amplitudes b_n/z0.
    Not thread-safe; tau must not decrease between advance() calls except
    for the sub-step rewind the feedback reset performs, which is smaller
    than any renewal interval.
    """

    def __init__(self, omega, amp, epsilon: float, n_renewal: float, rng,
                 shared_clock: bool = False, tau_start: float = 0.0):
        self.omega = np.ascontiguousarray(omega, dtype=float)
        self.amp = np.ascontiguousarray(amp, dtype=float)
        if self.omega.shape != self.amp.shape or self.omega.ndim != 1:
            raise ParameterError("omega and amp must be 1-D arrays of equal length")
        if self.omega.size and np.any(self.omega <= 0):
            raise ParameterError("mode frequencies must be positive")
        if self.omega.size and np.any(self.amp < 0):
            raise ParameterError("mode amplitudes must be non-negative")
        if epsilon <= 0 and self.omega.size:
            raise ParameterError("epsilon must be > 0 when noise modes are present")
        if n_renewal <= 0:
            raise ParameterError(f"renewal multiplier N must be > 0, got {n_renewal!r}")
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(int(rng))
        self.gen = rng
        self.epsilon = float(epsilon) if epsilon > 0 else 1.0
        self.n_renewal = float(n_renewal)
        self.shared_clock = bool(shared_clock)
        self.phases = np.zeros(self.omega.size)
        self.next_renewal = np.zeros(self.omega.size)
        if self.omega.size:
            _init_schedule(self.gen, self.phases, self.next_renewal,
                           float(tau_start), self.n_renewal, self.epsilon,
                           self.shared_clock)

    @property
    def n_modes(self) -> int:
        return self.omega.size

    def delta_zc(self, tau: float) -> float:
        """Tip displacement from the thermal modes at time tau, in z0 units."""
        if not self.omega.size:
            return 0.0
        return float(_delta_zc(self.omega, self.amp, self.phases, float(tau)))

    def advance(self, tau: float) -> int:
        """Fire any renewals due at or before tau; returns how many fired."""
        if not self.omega.size:
            return 0
        return int(_advance(self.gen, self.phases, self.next_renewal, float(tau),
                            self.n_renewal, self.epsilon, self.shared_clock))

    def renewal_bounds(self) -> tuple[float, float]:
        """(shortest, longest) possible renewal interval for these settings."""
        return (self.n_renewal * TWO_PI / (1.2 * self.epsilon),
                self.n_renewal * TWO_PI / (0.8 * self.epsilon))
