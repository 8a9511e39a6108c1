"""Experiment assembly and preset scenario sweeps.

assemble() turns a validated config into everything a run needs: resolved
rf frequency, mode spectrum with thermal amplitudes, sampled spin
ensemble, and the integrator configuration.  run_cell() executes one such
experiment end to end (calibration, main run, signal extraction, fit) and
writes the per-cell artifacts.

Scenario presets cover the standard parameter sweeps:

    renewal     phase-renewal interval sweep N at large thermal amplitude
    amplitude   oscillation-amplitude sweep (15 vs 7.5 nm) and near-slice margin
    fieldtemp   rf amplitude and temperature grid
    modecount   noise mode-count sweep (2, 3, 22, 33 modes)
    nonuniform  thickness-bump height sweep against the uniform beam
    custom      the config as given, single cell

Each cell gets a deterministic seed derived from the master seed and the
cell index, its own output directory with the resolved config, and a row
in the scenario manifest.  Scenarios emit a standalone plot script that
renders the decay curves from the written CSVs.
"""

from __future__ import annotations

import csv
import hashlib
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import beam_modes
from .analysis import (
    DecayFit,
    PeriodSeries,
    fit_relaxation,
    oscar_signal,
    write_peaks_csv,
    write_summary_csv,
)
from .config import (
    ExperimentConfig,
    resolve_tau_end,
    serialize_config,
    to_physical,
    with_overrides,
)
from .dynamics import RunConfig, RunResult, calibrate_base_period, default_dtau, run
from .errors import OscarSimError, ParameterError
from .geometry import SpinEnsemble, resolve_rf, sample_spins, save_ensemble_csv
from .params import (
    DimensionlessParams,
    PhysicalParams,
    rabi_frequency_ratio,
    to_dimensionless,
)

SCENARIO_NAMES = ("renewal", "amplitude", "fieldtemp", "modecount",
                  "nonuniform", "custom")


def derive_seed(master: int, tag) -> int:
    """Deterministic 63-bit child seed from a master seed and a tag."""
    digest = hashlib.sha256(f"{master}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class Experiment:
    cfg: ExperimentConfig
    phys: PhysicalParams
    dim: DimensionlessParams
    omega_rf: float
    spectrum: beam_modes.ModeSpectrum      # selected noise modes, amplitudes set
    ensemble: SpinEnsemble
    run_cfg: RunConfig


def build_spectrum(cfg: ExperimentConfig, phys: PhysicalParams) -> beam_modes.ModeSpectrum:
    """Selected noise modes with thermal tip amplitudes, per the config."""
    if cfg.noise_modes == 0:
        empty = np.zeros(0)
        return beam_modes.ModeSpectrum(
            indices=empty.astype(int), omega_ratio=empty, tip_factor=empty,
            tip_amplitude_b=empty,
        )
    eps = rabi_frequency_ratio(phys)
    if cfg.profile == "uniform":
        # generous table; selection will tell us if it is still too short
        table = beam_modes.uniform_mode_ratios(256, cfg.frequency_law)
    else:
        profile = beam_modes.ThicknessProfile(
            t_c=1e-6,
            bump_height=cfg.bump_height_ratio * 1e-6,
            bump_width=cfg.bump_width_ratio * 100e-6,
            length=100e-6,
            width=10e-6,
        )
        sol = beam_modes.solve_nonuniform(
            profile, k_max=cfg.k_max, x_p=cfg.x_p,
            n_modes=cfg.galerkin_modes, quad_points=cfg.quad_points,
        )
        table = sol.spectrum()
    chosen = beam_modes.select_noise_modes(table, eps, cfg.noise_modes)
    subset = table.subset(chosen)
    return beam_modes.thermal_tip_amplitudes(subset, phys.t_k, phys.k_c)


def assemble(cfg: ExperimentConfig) -> Experiment:
    """Resolve, sample, and wire a config into a runnable experiment."""
    phys = to_physical(cfg)
    omega_rf = phys.rf_omega if phys.rf_omega is not None else resolve_rf(phys)
    spectrum = build_spectrum(cfg, phys)

    ens_rng = np.random.default_rng(derive_seed(cfg.seed, "ensemble"))
    cutoff = None if cfg.lateral_cutoff_nm is None else cfg.lateral_cutoff_nm * 1e-9
    ensemble = sample_spins(
        phys, cfg.n_spins, ens_rng,
        margin=cfg.slice_margin, lateral_cutoff=cutoff,
        min_trials=cfg.volume_trials,
    )
    dim = to_dimensionless(phys, ensemble.mu_mag)

    amp_over_z0 = (spectrum.tip_amplitude_b / phys.z0
                   if spectrum.tip_amplitude_b is not None else np.zeros(0))
    run_cfg = RunConfig(
        dim=dim,
        tau_end=resolve_tau_end(cfg),
        dtau=cfg.dtau,
        feedback=cfg.feedback,
        record_stride=cfg.record_stride,
        seed=derive_seed(cfg.seed, "noise"),
        n_renewal=cfg.N_renewal,
        shared_renewal_clock=cfg.shared_renewal_clock,
        renorm_interval=cfg.renorm_interval,
        mode_omega=spectrum.omega_ratio,
        mode_amp_over_z0=amp_over_z0,
    )
    return Experiment(cfg=cfg, phys=phys, dim=dim, omega_rf=omega_rf,
                      spectrum=spectrum, ensemble=ensemble, run_cfg=run_cfg)


def describe(cfg: ExperimentConfig) -> str:
    """Resolved-parameter echo: what the config actually means for the run."""
    exp_lines = []
    phys = to_physical(cfg)
    omega_rf = phys.rf_omega if phys.rf_omega is not None else resolve_rf(phys)
    eps = rabi_frequency_ratio(phys)
    from .geometry import locate_slice
    from .params import rabi_noise_amplitude, static_detuning

    depth = locate_slice(phys, omega_rf)
    spectrum = build_spectrum(cfg, phys)
    dtau = cfg.dtau if cfg.dtau is not None else default_dtau(eps, spectrum.omega_ratio)
    b_r = rabi_noise_amplitude(phys, eps) if eps > 0 else float("inf")
    exp_lines.append(f"omega_rf = {omega_rf:.6e} rad/s")
    exp_lines.append(f"slice depth d2 - d1 = {depth * 1e9:.2f} nm "
                     f"(d2 = {(depth + phys.d1) * 1e9:.2f} nm)")
    exp_lines.append(f"epsilon = {eps:.4g}")
    exp_lines.append(f"delta0 = {static_detuning(phys, omega_rf):.6g}")
    exp_lines.append(f"T = {phys.t_k:.4g} K"
                     + (" (from b_R_pm)" if cfg.b_R_pm is not None else ""))
    exp_lines.append(f"b_R = {b_r * 1e12:.4g} pm")
    if len(spectrum):
        modes = ", ".join(str(int(n)) for n in spectrum.indices)
        exp_lines.append(f"noise modes n = {modes}")
        exp_lines.append("mode Omega_n = "
                         + ", ".join(f"{w:.4g}" for w in spectrum.omega_ratio))
        exp_lines.append("mode b_n = "
                         + ", ".join(f"{b * 1e12:.4g} pm"
                                     for b in spectrum.tip_amplitude_b))
    else:
        exp_lines.append("noise modes: none (noise off)")
    exp_lines.append(f"dtau = {dtau:.6g} ({2 * math.pi / dtau:.0f} steps/period)")
    exp_lines.append(f"tau_end = {resolve_tau_end(cfg):.6g} "
                     f"({resolve_tau_end(cfg) / (2 * math.pi):.0f} periods)")
    return "\n".join(exp_lines)


@dataclass
class CellResult:
    label: str
    seed: int
    config_text: str
    t_base: float
    result: RunResult
    series: PeriodSeries | None
    fit: DecayFit | None
    fit_error: str | None


def run_cell(cfg: ExperimentConfig, label: str = "cell",
             out_dir: str | Path | None = None, progress=None) -> CellResult:
    """Calibrate, run, analyze, and optionally write one experiment cell.

    A failed relaxation fit (e.g. the window is too short for the decay)
    is recorded in the result rather than raised; the caller decides.
    """
    text = serialize_config(cfg)
    exp = assemble(cfg)
    # snapshot before run(): the ensemble csv records the sampled input
    # state, not the relaxed moments
    initial = replace(exp.ensemble, mu=exp.ensemble.mu.copy())
    t_base = calibrate_base_period(exp.dim, exp.run_cfg.dtau)
    result = run(exp.run_cfg, exp.ensemble, progress=progress)

    series = None
    fit = None
    fit_error = None
    try:
        series = oscar_signal(result.peaks, t_base, exp.phys.omega_c,
                              head=cfg.signal_head)
        fit = fit_relaxation(series, cfg.smoothing_window,
                             (cfg.fit_low, cfg.fit_high))
    except OscarSimError as exc:
        fit_error = str(exc)

    if out_dir is not None:
        cell_dir = Path(out_dir)
        cell_dir.mkdir(parents=True, exist_ok=True)
        (cell_dir / "config.txt").write_text(text)
        save_ensemble_csv(cell_dir / "ensemble.csv", initial)
        write_peaks_csv(cell_dir / "peaks.csv", result.peaks)
        _write_modes_csv(cell_dir / "modes.csv", exp.spectrum)
        if result.trajectory is not None:
            _write_trajectory_csv(cell_dir / "trajectory.csv", result.trajectory)
        if fit is not None and series is not None:
            write_summary_csv(cell_dir / "summary.csv", fit, series)
        (cell_dir / "resolved.txt").write_text(describe(cfg) + "\n")

    return CellResult(label=label, seed=cfg.seed, config_text=text,
                      t_base=t_base, result=result, series=series, fit=fit,
                      fit_error=fit_error)


def _write_modes_csv(path, spectrum: beam_modes.ModeSpectrum) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "omega_ratio", "tip_factor", "b_n_pm"])
        b = spectrum.tip_amplitude_b
        for i in range(len(spectrum)):
            w.writerow([
                int(spectrum.indices[i]),
                f"{spectrum.omega_ratio[i]:.10g}",
                f"{spectrum.tip_factor[i]:.10g}",
                f"{b[i] * 1e12:.10g}" if b is not None else "",
            ])


def _write_trajectory_csv(path, rec: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "z_c", "v_c", "mean_mu_z", "delta_zc"])
        for row in rec:
            w.writerow([f"{v:.10g}" for v in row])


def _window(cfg: ExperimentConfig, t_end_ms: float) -> ExperimentConfig:
    # preset measurement windows yield to an explicit one in the base config
    if "t_end_ms" in cfg.explicit or "tau_end" in cfg.explicit:
        return cfg
    return with_overrides(cfg, t_end_ms=t_end_ms)


def preset_cells(name: str, base: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """(label, config) pairs for a named scenario, built on the given base.

    Each cell carries a default measurement window sized to its expected
    relaxation time; an explicit t_end_ms/tau_end in the base wins.
    """
    if name == "custom":
        return [("custom", base)]
    if name == "renewal":
        b = with_overrides(base, z0_nm=15.0, b_R_pm=5.0, noise_modes=3)
        return [
            (f"N{int(n):d}", _window(with_overrides(b, N_renewal=float(n)), 50.0))
            for n in (1e5, 1e3, 100, 10, 2)
        ]
    if name == "amplitude":
        b = with_overrides(base, b_R_pm=1.0, noise_modes=3)
        return [
            ("z15", _window(with_overrides(b, z0_nm=15.0), 400.0)),
            ("z7.5-margin",
             _window(with_overrides(b, z0_nm=7.5, slice_margin=0.25), 150.0)),
            ("z7.5", _window(with_overrides(b, z0_nm=7.5), 150.0)),
        ]
    if name == "fieldtemp":
        b = with_overrides(base, z0_nm=28.0, noise_modes=3)
        return [
            ("eps390-T20", _window(with_overrides(b, B1_mT=0.3, T_K=20.0), 1500.0)),
            ("eps390-T40", _window(with_overrides(b, B1_mT=0.3, T_K=40.0), 1000.0)),
            ("eps390-T80", _window(with_overrides(b, B1_mT=0.3, T_K=80.0), 600.0)),
            ("eps195-T80", _window(with_overrides(b, B1_mT=0.15, T_K=80.0), 400.0)),
        ]
    if name == "modecount":
        b = with_overrides(base, z0_nm=15.0, b_R_pm=5.0)
        windows = {2: 150.0, 3: 80.0, 22: 40.0, 33: 40.0}
        return [
            (f"modes{m}", _window(with_overrides(b, noise_modes=m), windows[m]))
            for m in (2, 3, 22, 33)
        ]
    if name == "nonuniform":
        b = with_overrides(base, z0_nm=15.0, b_R_pm=5.0, noise_modes=3,
                           profile="bump")
        heights = [("uniform", 0.0, 80.0), ("bump0.25", 0.25, 150.0),
                   ("bump0.5", 0.5, 300.0), ("bump1.0", 1.0, 500.0)]
        return [
            (label, _window(with_overrides(b, bump_height_ratio=h), win))
            for label, h, win in heights
        ]
    raise ParameterError(
        f"unknown scenario {name!r}; choose from {', '.join(SCENARIO_NAMES)}"
    )


def _cell_task(args):
    """Worker entry: run one serialized cell and report a manifest row."""
    label, text, out_dir = args
    from .config import parse_config

    t0 = time.perf_counter()
    seed = -1
    try:
        cfg = parse_config(text)
        seed = cfg.seed
        cell = run_cell(cfg, label=label, out_dir=out_dir)
        status = "ok" if cell.fit is not None else "no-fit"
        tau_m = cell.fit.tau_m_ms if cell.fit is not None else float("nan")
        r2 = cell.fit.r2 if cell.fit is not None else float("nan")
        note = cell.fit_error or ""
    except Exception:
        status = "failed"
        tau_m = float("nan")
        r2 = float("nan")
        note = traceback.format_exc(limit=3).strip().replace("\n", " | ")
    return {
        "cell": label,
        "seed": seed,
        "config_hash": config_hash(text),
        "status": status,
        "tau_m_ms": tau_m,
        "r2": r2,
        "note": note,
        "wall_s": time.perf_counter() - t0,
    }


def run_scenario(name: str, base: ExperimentConfig, out_dir: str | Path,
                 master_seed: int | None = None, parallel: int = 1,
                 log=print) -> list[dict]:
    """Run every cell of a scenario; returns the manifest rows.

    Cell seeds are derived from the master seed (default: the config's) and
    the cell index, so a scenario is reproducible from (config, seed) alone.
    Failed cells are recorded in the manifest and do not stop the others.
    """
    if name not in SCENARIO_NAMES:
        raise ParameterError(
            f"unknown scenario {name!r}; choose from {', '.join(SCENARIO_NAMES)}"
        )
    master = base.seed if master_seed is None else master_seed
    out = Path(out_dir) / name
    out.mkdir(parents=True, exist_ok=True)

    tasks = []
    for idx, (label, cfg) in enumerate(preset_cells(name, base)):
        cfg = with_overrides(cfg, seed=derive_seed(master, idx))
        tasks.append((label, serialize_config(cfg), str(out / label)))

    log(f"scenario {name}: {len(tasks)} cells -> {out}")
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(_cell_task, tasks))
    else:
        rows = []
        for t in tasks:
            rows.append(_cell_task(t))
            r = rows[-1]
            log(f"  {r['cell']}: {r['status']} tau_m={r['tau_m_ms']:.4g} ms "
                f"r2={r['r2']:.3f} ({r['wall_s']:.0f} s)")

    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "seed", "config_hash", "status", "tau_m_ms", "r2"])
        for r in rows:
            w.writerow([r["cell"], r["seed"], r["config_hash"], r["status"],
                        f"{r['tau_m_ms']:.8g}", f"{r['r2']:.6g}"])
    with open(out / "cells.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "status", "tau_m_ms", "r2", "note"])
        for r in rows:
            w.writerow([r["cell"], r["status"], f"{r['tau_m_ms']:.8g}",
                        f"{r['r2']:.6g}", r["note"]])
    _emit_plot_script(out / "plot_signal.py", base, [t[0] for t in tasks])
    return rows


_PLOT_TEMPLATE = '''\
"""Plot the decay curves of every cell in this scenario directory.

Reads <cell>/peaks.csv and <cell>/summary.csv, rebuilds the normalized
period-shift signal, and writes signal.png.  Needs numpy and matplotlib.
"""

import csv
from pathlib import Path

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

OMEGA_C = {omega_c!r}
HEAD = {head!r}
SMOOTH = {smooth!r}
CELLS = {cells!r}

here = Path(__file__).parent
fig, ax = plt.subplots(figsize=(7, 5))
for cell in CELLS:
    pk = here / cell / "peaks.csv"
    sm = here / cell / "summary.csv"
    if not pk.exists() or not sm.exists():
        print(f"skipping {{cell}}: missing outputs")
        continue
    with open(pk) as fh:
        rows = list(csv.reader(fh))[1:]
    peaks = np.array([float(r[1]) for r in rows])
    with open(sm) as fh:
        srow = list(csv.DictReader(fh))[0]
    t_base = float(srow["T_base"])
    tau_m = float(srow["tau_m_ms"])
    dt = np.diff(peaks) - t_base
    dt0 = dt[:HEAD].mean()
    signal = dt / dt0
    if SMOOTH > 1 and signal.size > SMOOTH:
        kernel = np.full(SMOOTH, 1.0 / SMOOTH)
        signal = np.convolve(signal, kernel, mode="valid")
        t_ms = peaks[SMOOTH // 2: SMOOTH // 2 + signal.size] / OMEGA_C * 1e3
    else:
        t_ms = peaks[:-1] / OMEGA_C * 1e3
    ax.plot(t_ms, signal, label=f"{{cell}} (tau_m = {{tau_m:.3g}} ms)")

ax.set_xlabel("t (ms)")
ax.set_ylabel("period shift (normalized)")
ax.set_ylim(-0.1, 1.15)
ax.axhline(0.0, color="k", lw=0.5)
ax.legend(loc="best", fontsize=8)
ax.set_title(here.name)
fig.tight_layout()
fig.savefig(here / "signal.png", dpi=150)
print("wrote", here / "signal.png")
'''


def _emit_plot_script(path: Path, base: ExperimentConfig, cells: list[str]) -> None:
    omega_c = 2.0 * math.pi * base.f_c_kHz * 1e3
    path.write_text(_PLOT_TEMPLATE.format(
        omega_c=omega_c, head=base.signal_head, smooth=base.smoothing_window,
        cells=cells,
    ))
