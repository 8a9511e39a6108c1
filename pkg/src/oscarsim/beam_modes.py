"""Cantilever flexural modes: frequency ratios, tip amplitudes, thickness bumps.

A clamped-free uniform Euler-Bernoulli beam has mode frequencies
omega_n = c_n (t_c / l^2) sqrt(Y / 12 rho) with c_1 = (1.87510...)^2 and,
to excellent accuracy for n >= 2, c_n = [pi (n - 1/2)]^2.  Only the ratios
Omega_n = omega_n / omega_1 enter the simulation; they come either from
that asymptotic law or from the exact characteristic roots of
cos(kl) cosh(kl) = -1.

Each mode in thermal equilibrium carries k_B T / 2 of potential energy,
giving an rms-free amplitude a_n = (1/Omega_n) sqrt(k_B T / 2 k_c) for the
mode coordinate and a tip displacement b_n = tip_factor * a_n.  The
equipartition amplitude belongs to the rescaled deflection z sqrt(S/S_bar)
(the substitution that makes the kinetic term carry a flat weight), so

    tip_factor = |f_n(x_p)| / sqrt(S(x_p) / S_bar),

which reduces to |f_n(x_p)| = 2 for every mode of a uniform beam.

A thickness bump near the free end detunes the high modes away from the
rf resonance.  The nonuniform spectrum is solved by a Rayleigh-Ritz
expansion in the uniform-beam eigenfunctions: with S(x) ~ t(x) and
I(x) ~ t(x)^3, the weak form reduces to the generalized eigenproblem
K c = lambda M c where, in xi = x/l and delta(xi) = (t(xi) - t_c)/t_c,

    M_km = int (1 + delta) phi_k phi_m dxi
    K_km = int (1 + delta)^3 phi_k'' phi_m'' dxi.

Eigenfunctions are renormalized so that int (1+delta) f_n^2 dxi equals
int (1+delta) dxi, which keeps the equipartition amplitude formula valid
with the tip factor above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from .errors import NumericalError, ParameterError
from .params import K_B

# first clamped-free root of cos(kl) cosh(kl) = -1
KL1 = 1.875104068711961
# its square: c_1 in the asymptotic frequency law
C1 = KL1 * KL1

UNIFORM_TIP_FACTOR = 2.0


@lru_cache(maxsize=None)
def _clamped_free_root(n: int) -> float:
    # overflow-safe characteristic equation: cos(x) + sech(x) = 0
    if n == 1:
        lo, hi = 1.5, 2.2
    else:
        guess = math.pi * (n - 0.5)
        lo, hi = guess - 0.5, guess + 0.5
    return float(brentq(lambda x: math.cos(x) + 1.0 / math.cosh(x), lo, hi, xtol=1e-13))


def clamped_free_roots(n_max: int) -> np.ndarray:
    """First n_max roots kl_n of the clamped-free characteristic equation."""
    if n_max < 1:
        raise ParameterError(f"n_max must be >= 1, got {n_max}")
    return np.array([_clamped_free_root(n) for n in range(1, n_max + 1)])


@dataclass(frozen=True)
class ModeSpectrum:
    """Flexural-mode table: 1-based indices, frequency ratios, tip factors.

    tip_amplitude_b (meters) is filled in once a temperature is chosen;
    b_n * Omega_n / tip_factor = sqrt(k_B T / 2 k_c) is then the same for
    every mode.
    """

    indices: np.ndarray
    omega_ratio: np.ndarray
    tip_factor: np.ndarray
    tip_amplitude_b: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=int))
        object.__setattr__(self, "omega_ratio", np.asarray(self.omega_ratio, dtype=float))
        object.__setattr__(self, "tip_factor", np.asarray(self.tip_factor, dtype=float))
        if self.indices.shape != self.omega_ratio.shape or \
           self.indices.shape != self.tip_factor.shape:
            raise ParameterError("spectrum arrays must have matching length")
        if len(self.omega_ratio) == 0:
            return
        if np.any(self.omega_ratio <= 0):
            raise ParameterError("frequency ratios must be positive")
        if np.any(np.diff(self.omega_ratio) <= 0):
            raise ParameterError("frequency ratios must be strictly increasing")

    def __len__(self) -> int:
        return len(self.indices)

    def subset(self, indices) -> "ModeSpectrum":
        """Restrict to the given 1-based mode numbers (order preserved)."""
        pos = []
        index_list = list(self.indices)
        for n in np.atleast_1d(indices):
            if n not in index_list:
                raise ParameterError(f"mode {n} is not in the spectrum")
            pos.append(index_list.index(n))
        pos = np.array(pos, dtype=int)
        return ModeSpectrum(
            indices=self.indices[pos],
            omega_ratio=self.omega_ratio[pos],
            tip_factor=self.tip_factor[pos],
            tip_amplitude_b=None if self.tip_amplitude_b is None
            else self.tip_amplitude_b[pos],
        )


def uniform_mode_ratios(n_max: int, law: str = "asymptotic") -> ModeSpectrum:
    """Spectrum of a uniform cantilever up to mode n_max.

    law='asymptotic' uses c_n = [pi (n-1/2)]^2 for n >= 2 (with c_1 exact);
    law='exact_roots' solves the characteristic equation for every mode.
    """
    if n_max < 1:
        raise ParameterError(f"n_max must be >= 1, got {n_max}")
    ns = np.arange(1, n_max + 1)
    if law == "asymptotic":
        c = np.where(ns == 1, C1, (np.pi * (ns - 0.5)) ** 2)
        ratios = c / C1
    elif law == "exact_roots":
        kl = clamped_free_roots(n_max)
        ratios = (kl / kl[0]) ** 2
    else:
        raise ParameterError(f"unknown frequency law {law!r}")
    return ModeSpectrum(
        indices=ns,
        omega_ratio=ratios,
        tip_factor=np.full(n_max, UNIFORM_TIP_FACTOR),
    )


def thermal_tip_amplitudes(spectrum: ModeSpectrum, t_k: float, k_c: float) -> ModeSpectrum:
    """Attach equipartition tip amplitudes b_n = tip_factor/Omega_n sqrt(kT/2k_c)."""
    if t_k < 0 or not math.isfinite(t_k):
        raise ParameterError(f"temperature must be finite and >= 0, got {t_k!r}")
    if k_c <= 0:
        raise ParameterError(f"k_c must be > 0, got {k_c!r}")
    a = math.sqrt(K_B * t_k / (2.0 * k_c))
    b = spectrum.tip_factor * a / spectrum.omega_ratio
    return replace(spectrum, tip_amplitude_b=b)


def select_noise_modes(spectrum: ModeSpectrum, epsilon: float, count: int) -> np.ndarray:
    """Mode numbers of `count` consecutive modes starting at the one nearest epsilon.

    The modes that drive spin relaxation are those whose frequency sits close
    to the Rabi frequency; the selection walks upward from the closest one.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be > 0 to select resonant modes, got {epsilon!r}")
    if len(spectrum) == 0:
        raise ParameterError("spectrum is empty")
    start = int(np.argmin(np.abs(spectrum.omega_ratio - epsilon)))
    if start + count > len(spectrum):
        raise ParameterError(
            f"need modes {spectrum.indices[start]}..{spectrum.indices[start] + count - 1} "
            f"but the spectrum ends at {spectrum.indices[-1]}; request more modes"
        )
    return np.asarray(spectrum.indices[start:start + count])


def _sigma_terms(kl: float) -> tuple[float, float]:
    """(sigma, 1 - sigma) for the clamped-free eigenfunction, both to full precision.

    sigma = (cosh + cos)/(sinh + sin) tends to 1 exponentially; the direct
    difference 1 - sigma = (sin - cos - exp(-kl))/(sinh + sin) stays accurate.
    """
    one_minus = (math.sin(kl) - math.cos(kl) - math.exp(-kl)) / (math.sinh(kl) + math.sin(kl))
    return 1.0 - one_minus, one_minus


def uniform_eigenfunction(n: int, xi) -> np.ndarray:
    """Mode-n eigenfunction of the uniform clamped-free beam on xi in [0, 1].

    Normalized so that int_0^1 phi_n^2 dxi = 1 and |phi_n(1)| = 2.  Uses the
    exponential rewrite cosh - sigma sinh = exp(-arg) + (1-sigma) sinh(arg),
    which stays finite for arbitrarily high modes.
    """
    kl = _clamped_free_root(n)
    sigma, one_minus = _sigma_terms(kl)
    arg = kl * np.asarray(xi, dtype=float)
    return np.exp(-arg) + one_minus * np.sinh(arg) - np.cos(arg) + sigma * np.sin(arg)


def uniform_eigenfunction_curvature(n: int, xi) -> np.ndarray:
    """Second xi-derivative of uniform_eigenfunction (same stable form)."""
    kl = _clamped_free_root(n)
    sigma, one_minus = _sigma_terms(kl)
    arg = kl * np.asarray(xi, dtype=float)
    return kl * kl * (
        np.exp(-arg) + one_minus * np.sinh(arg) + np.cos(arg) - sigma * np.sin(arg)
    )


@dataclass(frozen=True)
class ThicknessProfile:
    """Cantilever thickness with a Gaussian bump centered at the free end.

    t(x) = t_c + bump_height * exp(-(x - l)^2 / bump_width^2), x in [0, l].
    Only the ratios bump_height/t_c and bump_width/length matter for the
    frequency ratios.  All lengths in meters.
    """

    t_c: float
    bump_height: float = 0.0
    bump_width: float = 1e-6
    length: float = 100e-6
    width: float = 10e-6

    def __post_init__(self):
        for name in ("t_c", "bump_width", "length", "width"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ParameterError(f"{name} must be finite and > 0, got {v!r}")
        if not math.isfinite(self.bump_height):
            raise ParameterError("bump_height must be finite")
        if self.t_c + min(0.0, self.bump_height) <= 0:
            raise ParameterError("thickness must stay positive everywhere")

    def delta(self, xi) -> np.ndarray:
        """Relative thickness change (t - t_c)/t_c as a function of xi = x/l."""
        xi = np.asarray(xi, dtype=float)
        w = self.bump_width / self.length
        return (self.bump_height / self.t_c) * np.exp(-((xi - 1.0) / w) ** 2)

    def thickness(self, x) -> np.ndarray:
        """Thickness in meters at position x (meters) along the beam."""
        x = np.asarray(x, dtype=float)
        return self.t_c + self.bump_height * np.exp(-((x - self.length) / self.bump_width) ** 2)


@dataclass(frozen=True)
class GalerkinSolution:
    """Result of the nonuniform-beam eigenproblem.

    coeffs[:, j] expands eigenfunction j in the uniform-beam basis, already
    scaled so that int (1+delta) f_j^2 dxi = int (1+delta) dxi = v_bar.
    lambdas are the raw generalized eigenvalues; for the uniform beam they
    equal (kl_n)^4.
    """

    profile: ThicknessProfile
    x_p: float
    k_max: int
    lambdas: np.ndarray
    coeffs: np.ndarray
    v_bar: float
    omega_ratio: np.ndarray
    tip_factor: np.ndarray

    def eigenfunction(self, j: int, xi) -> np.ndarray:
        """Renormalized eigenfunction f_j (1-based j) evaluated at xi."""
        if not 1 <= j <= self.coeffs.shape[1]:
            raise ParameterError(f"mode index {j} out of range 1..{self.coeffs.shape[1]}")
        xi = np.asarray(xi, dtype=float)
        out = np.zeros_like(xi, dtype=float)
        for k in range(self.k_max):
            out += self.coeffs[k, j - 1] * uniform_eigenfunction(k + 1, xi)
        return out

    def spectrum(self) -> ModeSpectrum:
        n = len(self.omega_ratio)
        return ModeSpectrum(
            indices=np.arange(1, n + 1),
            omega_ratio=self.omega_ratio,
            tip_factor=self.tip_factor,
        )

    def angular_frequency(self, young: float, density: float) -> np.ndarray:
        """Dimensional omega_n (rad/s) for a given material, from the eigenvalues."""
        scale = (self.profile.t_c / self.profile.length ** 2) * math.sqrt(
            young / (12.0 * density)
        )
        return np.sqrt(self.lambdas) * scale


def _simpson_weights(npts: int) -> np.ndarray:
    if npts < 3 or npts % 2 == 0:
        raise ParameterError(f"Simpson rule needs an odd number of points >= 3, got {npts}")
    h = 1.0 / (npts - 1)
    w = np.full(npts, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * (h / 3.0)


def solve_nonuniform(
    profile: ThicknessProfile,
    k_max: int = 70,
    x_p: float = 1.0,
    n_modes: int | None = None,
    quad_points: int = 4001,
) -> GalerkinSolution:
    """Solve the thickness-modulated beam by expansion in uniform-beam modes.

    Keeps the lowest n_modes eigenpairs (default k_max - 30, at most 40);
    the top of the expansion basis is always discarded as unconverged.
    """
    if k_max < 8:
        raise ParameterError(f"k_max must be >= 8, got {k_max}")
    if not 0.0 < x_p <= 1.0:
        raise ParameterError(f"x_p must be in (0, 1], got {x_p!r}")
    if n_modes is None:
        n_modes = max(1, min(40, (3 * k_max) // 5))
    if n_modes > k_max:
        raise ParameterError(f"n_modes={n_modes} exceeds basis size k_max={k_max}")

    wts = _simpson_weights(quad_points)
    xi = np.linspace(0.0, 1.0, quad_points)
    delta = profile.delta(xi)
    w1 = 1.0 + delta
    w3 = w1 ** 3
    if np.any(w1 <= 0):
        raise ParameterError("thickness profile is non-positive somewhere on the beam")

    phi = np.empty((k_max, quad_points))
    curv = np.empty((k_max, quad_points))
    for k in range(k_max):
        phi[k] = uniform_eigenfunction(k + 1, xi)
        curv[k] = uniform_eigenfunction_curvature(k + 1, xi)

    m_mat = (phi * (wts * w1)) @ phi.T
    k_mat = (curv * (wts * w3)) @ curv.T
    m_mat = 0.5 * (m_mat + m_mat.T)
    k_mat = 0.5 * (k_mat + k_mat.T)

    try:
        lam, c = eigh(k_mat, m_mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"generalized eigensolve failed: {exc}") from exc
    if lam[0] <= 0 or not np.all(np.isfinite(lam)):
        raise NumericalError(
            f"non-positive or non-finite eigenvalue (min {lam[0]:.3e}); "
            "mass matrix may be ill-conditioned, reduce k_max or refine quadrature"
        )

    lam = lam[:n_modes]
    c = c[:, :n_modes]

    v_bar = float(wts @ w1)
    c = c * math.sqrt(v_bar)

    # thermal amplitudes follow the rescaled deflection z sqrt(S/S_bar);
    # converting back to physical displacement at the attachment point
    # costs a factor 1/sqrt(S(x_p)/S_bar)
    s_xp = 1.0 + float(np.asarray(profile.delta(np.array([x_p])))[0])
    zeta_scale = math.sqrt(s_xp / v_bar)

    # fix signs: positive value at the attachment point when clearly nonzero,
    # else positive dominant coefficient
    tip_vals = np.zeros(n_modes)
    basis_at_xp = np.array([uniform_eigenfunction(k + 1, x_p) for k in range(k_max)])
    for j in range(n_modes):
        v = float(basis_at_xp @ c[:, j])
        s = math.copysign(1.0, v) if abs(v) > 1e-6 else \
            math.copysign(1.0, c[np.argmax(np.abs(c[:, j])), j])
        c[:, j] *= s
        tip_vals[j] = abs(v) / zeta_scale

    return GalerkinSolution(
        profile=profile,
        x_p=x_p,
        k_max=k_max,
        lambdas=lam,
        coeffs=c,
        v_bar=v_bar,
        omega_ratio=np.sqrt(lam / lam[0]),
        tip_factor=tip_vals,
    )
