"""Parameter reduction checks against hand-derived values."""

import math

import pytest

from oscarsim.errors import ParameterError
from oscarsim.params import (
    GAMMA_E,
    K_B,
    PhysicalParams,
    coupling_prefactor,
    detuning_prefactor,
    rabi_frequency_ratio,
    rabi_noise_amplitude,
    static_detuning,
    temperature_for_rabi_amplitude,
    to_dimensionless,
)

OMEGA_C = 2.0 * math.pi * 21.4e3


def default(**kw):
    return PhysicalParams(**kw)


def test_epsilon_default_b1():
    # gamma * 0.3 mT / (2 pi 21.4 kHz)
    eps = rabi_frequency_ratio(default())
    assert eps == pytest.approx(392.873, abs=0.001)


def test_epsilon_half_b1():
    eps = rabi_frequency_ratio(default(b1=0.15e-3))
    assert eps == pytest.approx(196.4365, abs=0.001)


def test_epsilon_roundtrip_b1():
    p = default()
    eps = rabi_frequency_ratio(p)
    assert eps * p.omega_c / p.gamma == pytest.approx(p.b1, rel=1e-14)


def test_detuning_prefactor_value():
    # 1e-7 * gamma * m_tip / (omega_c z0^3): independent arithmetic
    p = default()
    expect = 1e-7 * GAMMA_E * 1.5e-12 / (OMEGA_C * 28e-9**3)
    assert detuning_prefactor(p) == pytest.approx(expect, rel=1e-12)
    assert detuning_prefactor(p) == pytest.approx(8.948e9, rel=1e-3)


def test_coupling_prefactor_linear_in_mu():
    p = default()
    a1 = coupling_prefactor(p, 1e-22)
    a2 = coupling_prefactor(p, 2e-22)
    assert a2 == pytest.approx(2 * a1, rel=1e-14)


def test_static_detuning_sign():
    p = default()
    # driving above the Larmor frequency of the bare field gives delta0 < 0
    omega = p.gamma * p.b_ext * 1.5
    assert static_detuning(p, omega) < 0
    assert static_detuning(p, p.gamma * p.b_ext) == 0.0


def test_rabi_noise_amplitude_headline():
    # 20 K, k_c = 0.014 N/m, epsilon = 195 -> close to 1 pm
    p = default(t_k=20.0, k_c=0.014)
    b_r = rabi_noise_amplitude(p, 195.0)
    assert b_r == pytest.approx(1.02e-12, abs=0.05e-12)
    assert b_r == pytest.approx(1.0185e-12, rel=1e-3)


def test_rabi_noise_amplitude_default_epsilon():
    p = default()
    eps = rabi_frequency_ratio(p)
    assert rabi_noise_amplitude(p, eps) == pytest.approx(0.5055e-12, rel=1e-3)


def test_rabi_noise_scalings():
    p = default()
    b = rabi_noise_amplitude(p, 200.0)
    # ~ sqrt(T), ~ 1/sqrt(k_c), ~ 1/epsilon
    assert rabi_noise_amplitude(default(t_k=80.0), 200.0) == pytest.approx(2 * b, rel=1e-12)
    assert rabi_noise_amplitude(default(k_c=0.014 * 4), 200.0) == pytest.approx(b / 2, rel=1e-12)
    assert rabi_noise_amplitude(p, 400.0) == pytest.approx(b / 2, rel=1e-12)


def test_rabi_noise_amplitude_edge_cases():
    assert rabi_noise_amplitude(default(t_k=0.0), 195.0) == 0.0
    assert rabi_noise_amplitude(default(), 0.0) == math.inf


def test_eps_T_trade_off():
    # doubling T by 4x and epsilon by 2x leaves b_R unchanged
    b1 = rabi_noise_amplitude(default(t_k=20.0), 195.0)
    b2 = rabi_noise_amplitude(default(t_k=80.0), 390.0)
    assert b1 == pytest.approx(b2, rel=1e-12)


def test_temperature_for_rabi_amplitude_inverts():
    p = default()
    for t in (5.0, 20.0, 300.0):
        b = rabi_noise_amplitude(default(t_k=t), 390.0)
        assert temperature_for_rabi_amplitude(p, b, 390.0) == pytest.approx(t, rel=1e-12)
    # direct formula check
    t = temperature_for_rabi_amplitude(p, 5e-12, 390.0)
    assert t == pytest.approx((5e-12 * 390.0) ** 2 * 0.014 / (2 * K_B), rel=1e-12)


def test_to_dimensionless_fields():
    p = default(rf_omega=3.8e10, slice_depth=None)
    d = to_dimensionless(p, mu_mag=2e-22)
    assert d.epsilon == pytest.approx(392.873, abs=0.001)
    assert d.delta0 == pytest.approx((GAMMA_E * 0.140 - 3.8e10) / OMEGA_C, rel=1e-12)
    assert d.m_c == pytest.approx(4 * 0.014 / OMEGA_C**2, rel=1e-12)
    assert d.b_r_over_z0 > 0
    assert d.a_force == pytest.approx(coupling_prefactor(p, 2e-22), rel=1e-12)


def test_to_dimensionless_resolves_slice_depth():
    # slice_depth route must agree with passing the resolved rf directly
    from oscarsim.geometry import resolve_rf

    p = default()
    omega = resolve_rf(p)
    d1 = to_dimensionless(p, mu_mag=1e-22)
    d2 = to_dimensionless(default(rf_omega=omega, slice_depth=None), mu_mag=1e-22)
    assert d1.delta0 == d2.delta0


@pytest.mark.parametrize(
    "kw",
    [
        {"k_c": 0.0},
        {"k_c": -1.0},
        {"f_c": 0.0},
        {"z0": -1e-9},
        {"t_k": -1.0},
        {"q_factor": 0.5},
        {"x_p": 0.0},
        {"x_p": 1.5},
        {"z0": 800e-9},  # exceeds the gap d1
        {"rf_omega": 3.8e10},  # both rf specs set
        {"rf_omega": None, "slice_depth": None},
        {"rf_omega": -1.0, "slice_depth": None},
        {"b_ext": float("nan")},
    ],
)
def test_invalid_params_raise(kw):
    with pytest.raises(ParameterError):
        PhysicalParams(**kw)


def test_negative_mu_mag_raises():
    with pytest.raises(ParameterError):
        to_dimensionless(default(), mu_mag=-1e-22)
