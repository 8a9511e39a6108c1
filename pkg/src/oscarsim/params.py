"""Physical parameters and their dimensionless reduction.

The simulation works in scaled variables: time in units of the inverse
fundamental cantilever angular frequency (tau = omega_c * t), lengths in
units of the cantilever oscillation amplitude z0, magnetic moments in
units of the per-site moment mu.  This module holds the lab-frame inputs
(:class:`PhysicalParams`) and computes the handful of dimensionless groups
the dynamics actually depends on (:class:`DimensionlessParams`):

    epsilon  = gamma * B1 / omega_c          rf field in rotating frame
    delta0   = (gamma * B_ext - omega) / omega_c   static detuning offset
    A_field  = (mu0/4pi) * gamma * m_tip / (omega_c * z0^3)
    A_force  = (mu0/4pi) * 3 * m_tip * mu / (k_c * z0^5)

plus the effective cantilever mass m_c = 4 k_c / omega_c^2 and the
thermal vibration amplitude in Rabi-frequency units

    b_R = (1/epsilon) * sqrt(2 k_B T / k_c)

which sets the scale of the frequency noise seen by the spins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError

# mu0 / 4 pi in T m / A (exact in SI since the 2019 redefinition to 9 digits)
MU0_OVER_4PI = 1.0e-7
# Boltzmann constant, J/K (exact)
K_B = 1.380649e-23
# electron gyromagnetic ratio magnitude, rad/(s T)
GAMMA_E = 1.760859e11


@dataclass(frozen=True)
class PhysicalParams:
    """Lab-frame experiment parameters, SI units throughout.

    The rf frequency can be given in two ways: directly as an angular
    frequency ``rf_omega`` (rad/s), or indirectly as ``slice_depth`` (m),
    the requested depth of the resonant-slice center below the sample
    surface on the symmetry axis.  Exactly one of the two must be set.
    """

    b_ext: float = 0.140          # static field, T
    b1: float = 0.3e-3            # rotating rf field amplitude, T
    k_c: float = 0.014            # cantilever spring constant, N/m
    f_c: float = 21.4e3           # fundamental cantilever frequency, Hz
    z0: float = 28e-9             # cantilever tip oscillation amplitude, m
    q_factor: float = 2.0e4       # quality factor of the fundamental mode
    m_tip: float = 1.5e-12        # tip magnetic moment, J/T
    r_p: float = 700e-9           # tip particle radius, m
    d1: float = 700e-9            # particle-surface gap at equilibrium, m
    m_s: float = 0.89             # sample spin magnetization, A/m
    t_k: float = 20.0             # temperature, K
    gamma: float = GAMMA_E        # gyromagnetic ratio, rad/(s T)
    x_p: float = 1.0              # particle attachment point, fraction of length
    rf_omega: float | None = None      # rf angular frequency, rad/s
    slice_depth: float | None = 175e-9  # slice-center depth below surface, m

    def __post_init__(self):
        positive = {
            "b_ext": self.b_ext, "b1": self.b1, "k_c": self.k_c,
            "f_c": self.f_c, "z0": self.z0, "q_factor": self.q_factor,
            "m_tip": self.m_tip, "r_p": self.r_p, "d1": self.d1,
            "m_s": self.m_s, "gamma": self.gamma,
        }
        for name, value in positive.items():
            if not math.isfinite(value) or value <= 0.0:
                raise ParameterError(f"{name} must be finite and > 0, got {value!r}")
        if self.b1 < 0 or not math.isfinite(self.b1):
            raise ParameterError(f"b1 must be finite and >= 0, got {self.b1!r}")
        if self.t_k < 0 or not math.isfinite(self.t_k):
            raise ParameterError(f"t_k must be finite and >= 0, got {self.t_k!r}")
        if self.q_factor < 1.0:
            raise ParameterError(f"q_factor must be >= 1, got {self.q_factor!r}")
        if not 0.0 < self.x_p <= 1.0:
            raise ParameterError(f"x_p must be in (0, 1], got {self.x_p!r}")
        # tip swing must stay inside the gap
        if self.z0 >= self.d1:
            raise ParameterError(
                f"oscillation amplitude z0={self.z0} must be smaller than the gap d1={self.d1}"
            )
        if (self.rf_omega is None) == (self.slice_depth is None):
            raise ParameterError("set exactly one of rf_omega and slice_depth")
        if self.rf_omega is not None and (not math.isfinite(self.rf_omega) or self.rf_omega <= 0):
            raise ParameterError(f"rf_omega must be finite and > 0, got {self.rf_omega!r}")
        if self.slice_depth is not None and (
            not math.isfinite(self.slice_depth) or self.slice_depth <= 0
        ):
            raise ParameterError(
                f"slice_depth must be finite and > 0, got {self.slice_depth!r}"
            )

    @property
    def omega_c(self) -> float:
        """Fundamental angular frequency, rad/s."""
        return 2.0 * math.pi * self.f_c


# bundle of scale-free groups consumed by geometry, noise and dynamics
@dataclass(frozen=True)
class DimensionlessParams:
    epsilon: float        # rf Rabi frequency / omega_c
    delta0: float         # uniform detuning offset / omega_c
    q_factor: float
    a_field: float        # dipole detuning prefactor (site coords in z0 units)
    a_force: float        # spin-cantilever coupling prefactor
    mu_mag: float         # per-site magnetic moment, J/T
    m_c: float            # effective cantilever mass, kg
    b_r_over_z0: float    # thermal amplitude b_R in units of z0

    def __post_init__(self):
        for name in ("epsilon", "delta0", "q_factor", "a_field", "a_force", "m_c"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ParameterError(f"dimensionless {name} is not finite: {v!r}")
        if self.epsilon < 0:
            raise ParameterError(f"epsilon must be >= 0, got {self.epsilon!r}")
        if self.q_factor < 1:
            raise ParameterError(f"q_factor must be >= 1, got {self.q_factor!r}")


def rabi_frequency_ratio(p: PhysicalParams) -> float:
    """epsilon = gamma B1 / omega_c."""
    return p.gamma * p.b1 / p.omega_c


def detuning_prefactor(p: PhysicalParams) -> float:
    """A_field = (mu0/4pi) gamma m_tip / (omega_c z0^3)."""
    return MU0_OVER_4PI * p.gamma * p.m_tip / (p.omega_c * p.z0**3)


def coupling_prefactor(p: PhysicalParams, mu_mag: float) -> float:
    """A_force = (mu0/4pi) 3 m_tip mu / (k_c z0^5)."""
    return MU0_OVER_4PI * 3.0 * p.m_tip * mu_mag / (p.k_c * p.z0**5)


def static_detuning(p: PhysicalParams, omega: float) -> float:
    """delta0 = (gamma B_ext - omega) / omega_c."""
    return (p.gamma * p.b_ext - omega) / p.omega_c


def rabi_noise_amplitude(p: PhysicalParams, epsilon: float) -> float:
    """Thermal cantilever amplitude referred to the Rabi frame, in meters.

    b_R = (1/epsilon) sqrt(2 k_B T / k_c).  Zero temperature gives zero;
    a zero rf field makes the Rabi frame undefined, reported as inf.
    """
    if p.t_k < 0:
        raise ParameterError(f"temperature must be >= 0, got {p.t_k!r}")
    num = math.sqrt(2.0 * K_B * p.t_k / p.k_c)
    if num == 0.0:
        return 0.0
    if epsilon <= 0.0:
        return math.inf
    return num / epsilon


def temperature_for_rabi_amplitude(p: PhysicalParams, b_r: float, epsilon: float) -> float:
    """Invert b_R(T): the temperature that produces thermal amplitude b_r."""
    if b_r < 0 or not math.isfinite(b_r):
        raise ParameterError(f"b_r must be finite and >= 0, got {b_r!r}")
    if epsilon <= 0:
        raise ParameterError("epsilon must be > 0 to target a Rabi-frame amplitude")
    return (b_r * epsilon) ** 2 * p.k_c / (2.0 * K_B)


def to_dimensionless(p: PhysicalParams, mu_mag: float) -> DimensionlessParams:
    """Reduce lab-frame parameters to the groups the dynamics uses.

    mu_mag is the per-site moment, supplied by the geometry module once
    the resonant-slice volume is known.  If the rf was specified as a
    slice depth, the rf frequency is resolved first.
    """
    if mu_mag < 0 or not math.isfinite(mu_mag):
        raise ParameterError(f"mu_mag must be finite and >= 0, got {mu_mag!r}")
    if p.rf_omega is not None:
        omega = p.rf_omega
    else:
        from .geometry import resolve_rf  # deferred: geometry imports this module

        omega = resolve_rf(p)
    eps = rabi_frequency_ratio(p)
    a_field = detuning_prefactor(p)
    a_force = coupling_prefactor(p, mu_mag)
    if not (math.isfinite(a_field) and math.isfinite(a_force)):
        raise ParameterError("field/force prefactor overflow; check z0 and m_tip")
    b_r = rabi_noise_amplitude(p, eps)
    return DimensionlessParams(
        epsilon=eps,
        delta0=static_detuning(p, omega),
        q_factor=p.q_factor,
        a_field=a_field,
        a_force=a_force,
        mu_mag=mu_mag,
        m_c=4.0 * p.k_c / p.omega_c**2,
        b_r_over_z0=(0.0 if b_r == 0.0 else b_r / p.z0),
    )
