"""Spin relaxation in oscillating-cantilever MRFM with thermal mode noise.

A cantilever with a ferromagnetic tip cyclically inverts the spins of a
resonant sample slice; the spins shift the cantilever period, and thermal
vibrations of the cantilever's high flexural modes destroy the adiabatic
lock, making the period shift decay with a characteristic time tau_m.
This package simulates that process end to end: slice geometry and spin
sampling, mode spectra of uniform and thickness-modulated cantilevers,
random-phase thermal noise, the coupled time integration, and the
period-shift analysis that extracts tau_m.
"""

from .analysis import DecayFit, PeriodSeries, fit_relaxation, oscar_signal
from .beam_modes import (
    GalerkinSolution,
    ModeSpectrum,
    ThicknessProfile,
    select_noise_modes,
    solve_nonuniform,
    thermal_tip_amplitudes,
    uniform_eigenfunction,
    uniform_mode_ratios,
)
from .config import ExperimentConfig, parse_config, serialize_config, with_overrides
from .dynamics import RunConfig, RunResult, calibrate_base_period, default_dtau, run
from .errors import (
    AnalysisError,
    ConfigError,
    GeometryError,
    IntegrationError,
    NumericalError,
    OscarSimError,
    ParameterError,
)
from .geometry import (
    SpinEnsemble,
    coupling_eta,
    detuning,
    dipole_detuning_term,
    in_slice,
    locate_slice,
    resolve_rf,
    sample_spins,
)
from .noise import NoiseProcess
from .params import (
    DimensionlessParams,
    PhysicalParams,
    rabi_frequency_ratio,
    rabi_noise_amplitude,
    to_dimensionless,
)
from .scenarios import Experiment, assemble, describe, preset_cells, run_cell, run_scenario

__version__ = "0.1.0"
