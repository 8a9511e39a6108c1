"""Resonant-slice geometry and spin-ensemble sampling.

Coordinates: lengths in units of the oscillation amplitude z0, origin at
the equilibrium position of the tip-particle center, z axis pointing from
the sample toward the particle.  The sample surface therefore sits at
z = -(r_p + d1)/z0 and every sample site has z below that.  The particle
center moves as z_c(tau), displacing the whole dipole field with it.

A site at (x, y, z) sees the relative coordinate zt = z - z_c and
rt = sqrt(x^2 + y^2 + zt^2), giving the detuning contribution (on top of
the static offset delta0)

    A_field * (3 zt^2 - rt^2) / rt^5

and the per-spin force coupling

    eta = A_force * zt * (5 zt^2 - 3 rt^2) / rt^7.

The resonant slice is the locus where the detuning crosses zero at some
point of the cantilever swing z_c in [-1, 1]; spins are drawn uniformly
from it by rejection sampling, and the per-site moment is set from the
slice volume so the total moment matches the sample magnetization.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ParameterError
from .params import (
    MU0_OVER_4PI,
    PhysicalParams,
    detuning_prefactor,
    static_detuning,
)

# rejection-sampling batch size; large enough to amortize predicate setup
_BATCH = 1 << 14


def dipole_detuning_term(x, y, z, z_c: float, a_field: float):
    """Position-dependent detuning A_field (3 zt^2 - rt^2)/rt^5, zt = z - z_c.

    Accepts scalars or broadcastable arrays in z0 units.
    """
    zt = np.asarray(z, dtype=float) - z_c
    zt2 = zt * zt
    r2 = np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2 + zt2
    r = np.sqrt(r2)
    bad = r2 <= 0.0
    if np.any(bad):
        raise GeometryError("site coincides with the particle center")
    return a_field * (3.0 * zt2 - r2) / (r2 * r2 * r)


def detuning(x, y, z, z_c: float, delta0: float, a_field: float):
    """Full dimensionless detuning delta0 + dipole term at one swing position."""
    return delta0 + dipole_detuning_term(x, y, z, z_c, a_field)


def coupling_eta(x, y, z, z_c: float, a_force: float):
    """Per-spin force coupling A_force zt (5 zt^2 - 3 rt^2)/rt^7."""
    zt = np.asarray(z, dtype=float) - z_c
    zt2 = zt * zt
    r2 = np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2 + zt2
    r = np.sqrt(r2)
    bad = r2 <= 0.0
    if np.any(bad):
        raise GeometryError("site coincides with the particle center")
    r7 = r2 * r2 * r2 * r
    return a_force * zt * (5.0 * zt2 - 3.0 * r2) / r7


def on_axis_dipole_field(m_tip: float, r: float) -> float:
    """Dipole field magnitude on the symmetry axis at distance r, in tesla."""
    if r <= 0:
        raise GeometryError(f"distance must be > 0, got {r!r}")
    return 2.0 * MU0_OVER_4PI * m_tip / r**3


def resolve_rf(p: PhysicalParams) -> float:
    """rf angular frequency placing the slice center slice_depth below the surface.

    On the axis the resonance condition is omega = gamma (B_ext + B_dip) with
    B_dip evaluated at r_c = r_p + d1 + depth from the particle center.
    """
    if p.slice_depth is None:
        raise ParameterError("resolve_rf needs slice_depth; rf_omega was given directly")
    depth = p.slice_depth
    if depth <= 0:
        raise GeometryError(f"slice depth must be > 0 (below the surface), got {depth!r}")
    r_c = p.r_p + p.d1 + depth
    return p.gamma * (p.b_ext + on_axis_dipole_field(p.m_tip, r_c))


def locate_slice(p: PhysicalParams, omega: float) -> float:
    """Inverse of resolve_rf: slice-center depth below the surface for a given omega.

    Raises GeometryError when omega is at or below the bare Larmor frequency,
    in which case no resonance exists under the particle.
    """
    excess = omega / p.gamma - p.b_ext
    if excess <= 0:
        raise GeometryError(
            "rf frequency is at or below the bare Larmor frequency; no slice below the tip"
        )
    r_c = (2.0 * MU0_OVER_4PI * p.m_tip / excess) ** (1.0 / 3.0)
    return r_c - p.r_p - p.d1


def slice_radius_bound(delta0: float, a_field: float) -> float:
    """Largest distance from the particle center at which the detuning can vanish.

    On the zero-detuning surface, A(3 zt^2 - rt^2) = -delta0 rt^5 with
    3 zt^2 - rt^2 <= 2 rt^2, so rt^3 <= 2 A / (-delta0).  Requires delta0 < 0
    (rf above the bare Larmor frequency), else the slice does not exist.
    """
    if delta0 >= 0:
        raise GeometryError(
            "delta0 must be negative for a resonant slice to exist below the particle"
        )
    if a_field <= 0:
        raise GeometryError(f"a_field must be > 0, got {a_field!r}")
    return (2.0 * a_field / (-delta0)) ** (1.0 / 3.0)


def in_slice(x, y, z, delta0: float, a_field: float, margin: float = 0.0):
    """True where the detuning changes sign over the cantilever swing.

    The swing is z_c in [-1 - margin, 1 + margin]; a positive margin widens
    the slice to sites whose resonance lies a little outside the nominal
    swing (near-slice spins).  Vectorized over site coordinates.
    """
    if margin < 0:
        raise ParameterError(f"margin must be >= 0, got {margin!r}")
    top = detuning(x, y, z, 1.0 + margin, delta0, a_field)
    bottom = detuning(x, y, z, -1.0 - margin, delta0, a_field)
    return (top * bottom) < 0.0


@dataclass
class SpinEnsemble:
    """Sampled spin sites (z0 units) and their evolving moments (units of mu_mag).

    xyz has shape (n, 3); mu has shape (n, 3) and starts as (0, 0, 1) per site.
    slice_volume is in m^3, mu_mag in J/T.
    """

    xyz: np.ndarray
    mu: np.ndarray
    mu_mag: float
    slice_volume: float
    margin: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.xyz.shape[0]

    def __post_init__(self):
        self.xyz = np.ascontiguousarray(self.xyz, dtype=float)
        self.mu = np.ascontiguousarray(self.mu, dtype=float)
        if self.xyz.ndim != 2 or self.xyz.shape[1] != 3:
            raise ParameterError(f"xyz must have shape (n, 3), got {self.xyz.shape}")
        if self.mu.shape != self.xyz.shape:
            raise ParameterError("mu must match xyz in shape")


def sample_spins(
    p: PhysicalParams,
    n: int,
    rng,
    margin: float = 0.0,
    lateral_cutoff: float | None = None,
    min_trials: int = 1_000_000,
    max_trials: int = 200_000_000,
) -> SpinEnsemble:
    """Draw n sites uniformly from the resonant slice and set the per-site moment.

    rng is a seeded numpy Generator (or an int seed).  lateral_cutoff is in
    meters; None uses 3 (r_p + d2) with d2 the particle-to-slice-center
    distance along the axis.  The slice volume is estimated from the
    acceptance fraction over at least min_trials proposals, and
    mu_mag = M_s * V_slice / n.
    """
    if n < 1:
        raise ParameterError(f"need at least one spin, got n={n}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))

    omega = p.rf_omega if p.rf_omega is not None else resolve_rf(p)
    delta0 = static_detuning(p, omega)
    a_field = detuning_prefactor(p)
    r_max = slice_radius_bound(delta0, a_field)

    if lateral_cutoff is None:
        d2 = locate_slice(p, omega) + p.d1
        lateral_cutoff = 3.0 * (p.r_p + d2)
    rho_max = min(lateral_cutoff / p.z0, r_max)
    if rho_max <= 0:
        raise GeometryError(f"lateral cutoff {lateral_cutoff!r} m leaves no volume")

    z_top = -(p.r_p + p.d1) / p.z0                # sample surface
    z_bot = -(1.0 + margin) - r_max               # below any reachable resonance
    if z_bot >= z_top:
        raise GeometryError("slice bounding box is empty; geometry misconfigured")

    # closest possible approach of an accepted site to the particle surface
    if z_top > -(1.0 + margin) - p.r_p / p.z0:
        raise GeometryError("cantilever swing would drive the particle into the sample")

    volume_box = math.pi * rho_max**2 * (z_top - z_bot)   # z0^3 units

    xs, ys, zs = [], [], []
    accepted = 0
    trials = 0
    while True:
        u = rng.random(_BATCH)
        phi = rng.random(_BATCH) * (2.0 * math.pi)
        rho = rho_max * np.sqrt(u)
        x = rho * np.cos(phi)
        y = rho * np.sin(phi)
        z = z_bot + (z_top - z_bot) * rng.random(_BATCH)
        keep = in_slice(x, y, z, delta0, a_field, margin)
        trials += _BATCH
        k = int(np.count_nonzero(keep))
        if k:
            xs.append(x[keep])
            ys.append(y[keep])
            zs.append(z[keep])
            accepted += k
        if trials >= min_trials and accepted >= n:
            break
        if trials >= max_trials:
            raise GeometryError(
                f"acceptance rate {accepted / trials:.2e} after {trials} trials; "
                "slice too small for the requested ensemble"
            )
        if trials >= 10_000_000 and accepted / trials < 1e-6:
            raise GeometryError(
                f"acceptance rate {accepted / trials:.2e}; geometry misconfigured "
                "(empty or vanishing resonant slice)"
            )

    # whole batches are always counted, so accepted/trials is unbiased (Wald)
    frac = accepted / trials
    slice_volume = frac * volume_box * p.z0**3
    if slice_volume <= 0:
        raise GeometryError("estimated slice volume is zero; check rf and geometry")

    x = np.concatenate(xs)[:n]
    y = np.concatenate(ys)[:n]
    z = np.concatenate(zs)[:n]
    xyz = np.column_stack([x, y, z])
    mu = np.zeros((n, 3))
    mu[:, 2] = 1.0
    mu_mag = p.m_s * slice_volume / n
    return SpinEnsemble(
        xyz=xyz,
        mu=mu,
        mu_mag=mu_mag,
        slice_volume=slice_volume,
        margin=margin,
        meta={
            "trials": trials,
            "accepted": accepted,
            "acceptance": accepted / trials,
            "rho_max": rho_max,
            "z_top": z_top,
            "z_bot": z_bot,
            "delta0": delta0,
            "a_field": a_field,
            "omega": omega,
        },
    )


def save_ensemble_csv(path, ens: SpinEnsemble) -> None:
    """Write sites and moments as CSV: k,x,y,z,mu_x,mu_y,mu_z (full precision)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "x", "y", "z", "mu_x", "mu_y", "mu_z"])
        for k in range(ens.n):
            row = [k] + [f"{v:.17g}" for v in (*ens.xyz[k], *ens.mu[k])]
            w.writerow(row)


def load_ensemble_csv(path, mu_mag: float = 1.0, slice_volume: float = 0.0,
                      margin: float = 0.0) -> SpinEnsemble:
    """Read an ensemble written by save_ensemble_csv.

    The CSV stores only sites and moments; mu_mag and slice_volume are not
    part of the format and must be supplied if the ensemble is reused in a run.
    """
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["k", "x", "y", "z", "mu_x", "mu_y", "mu_z"]:
            raise ParameterError(f"unexpected ensemble CSV header: {header}")
        xyz, mu = [], []
        for row in r:
            if not row:
                continue
            vals = [float(v) for v in row[1:7]]
            xyz.append(vals[:3])
            mu.append(vals[3:])
    if not xyz:
        raise ParameterError("ensemble CSV contains no sites")
    return SpinEnsemble(
        xyz=np.array(xyz), mu=np.array(mu),
        mu_mag=mu_mag, slice_volume=slice_volume, margin=margin,
    )
