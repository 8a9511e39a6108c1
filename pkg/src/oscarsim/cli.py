"""Command-line interface.

    oscarsim run   --config FILE [--scenario NAME] [--seed N] [--out DIR] [--parallel P]
    oscarsim modes --config FILE [--out DIR]
    oscarsim fit   --in peaks.csv --out summary.csv [--config FILE] [--t-base T]

Exit codes: 0 success, 1 configuration or validation error, 2 run failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analysis import fit_relaxation, load_peaks_csv, oscar_signal, write_summary_csv
from .config import ExperimentConfig, parse_config, with_overrides
from .errors import IntegrationError, NumericalError, OscarSimError
from .scenarios import SCENARIO_NAMES, _write_modes_csv, build_spectrum, describe, run_scenario
from .params import rabi_frequency_ratio


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad usage; the contract reserves 2 for
    # run failures, so route usage problems through the validation path
    def error(self, message):
        raise OscarSimError(f"argument error: {message}")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oscarsim",
                description="OSCAR spin-relaxation simulator for thermally "
                            "driven cantilever noise")
    sub = p.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario sweep or a single custom cell")
    p_run.add_argument("--config", required=True, help="config file path")
    p_run.add_argument("--scenario", default="custom", choices=SCENARIO_NAMES)
    p_run.add_argument("--seed", type=int, default=None,
                       help="master seed override (default: config seed)")
    p_run.add_argument("--out", default=None,
                       help="output directory (default: config out_dir)")
    p_run.add_argument("--parallel", type=int, default=1,
                       help="worker processes for sweep cells")

    p_modes = sub.add_parser("modes", help="write the selected noise-mode table")
    p_modes.add_argument("--config", required=True)
    p_modes.add_argument("--out", default=None)

    p_fit = sub.add_parser("fit", help="fit a relaxation time to a peaks CSV")
    p_fit.add_argument("--in", dest="infile", required=True, help="peaks.csv path")
    p_fit.add_argument("--out", dest="outfile", required=True, help="summary.csv path")
    p_fit.add_argument("--config", default=None,
                       help="config for T_base calibration and fit settings "
                            "(defaults used otherwise)")
    p_fit.add_argument("--t-base", type=float, default=None,
                       help="reference period in tau units (skips calibration)")
    return p


def _load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return parse_config(Path(path).read_text())


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = with_overrides(cfg, seed=args.seed)
    out = args.out if args.out is not None else cfg.out_dir
    print(describe(cfg))
    rows = run_scenario(args.scenario, cfg, out, master_seed=args.seed,
                        parallel=max(1, args.parallel))
    bad = [r for r in rows if r["status"] == "failed"]
    for r in bad:
        print(f"cell {r['cell']} failed: {r['note']}", file=sys.stderr)
    return 2 if bad else 0


def _cmd_modes(args) -> int:
    cfg = _load_config(args.config)
    from .config import to_physical

    phys = to_physical(cfg)
    spectrum = build_spectrum(cfg, phys)
    out = Path(args.out if args.out is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_modes_csv(out / "modes.csv", spectrum)
    eps = rabi_frequency_ratio(phys)
    print(f"epsilon = {eps:.6g}; wrote {len(spectrum)} modes to {out / 'modes.csv'}")
    return 0


def _cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    peaks = load_peaks_csv(args.infile)
    if args.t_base is not None:
        t_base = args.t_base
    else:
        # the reference period needs no spins: calibrate a spin-free system
        # at the dtau the config implies
        from .config import to_physical
        from .dynamics import calibrate_base_period, default_dtau
        from .params import rabi_frequency_ratio as _eps, to_dimensionless

        phys = to_physical(cfg)
        dim = to_dimensionless(phys, mu_mag=0.0)
        spectrum = build_spectrum(cfg, phys)
        dtau = cfg.dtau if cfg.dtau is not None else default_dtau(
            dim.epsilon, spectrum.omega_ratio)
        t_base = calibrate_base_period(dim, dtau)
    import math

    omega_c = 2.0 * math.pi * cfg.f_c_kHz * 1e3
    series = oscar_signal(peaks, t_base, omega_c, head=cfg.signal_head)
    fit = fit_relaxation(series, cfg.smoothing_window, (cfg.fit_low, cfg.fit_high))
    write_summary_csv(args.outfile, fit, series)
    flag = " (low confidence)" if fit.low_confidence else ""
    print(f"tau_m = {fit.tau_m_ms:.6g} ms, r2 = {fit.r2:.4f}{flag}; "
          f"window periods [{fit.i0}, {fit.i1})")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "modes":
            return _cmd_modes(args)
        if args.command == "fit":
            return _cmd_fit(args)
        return 1
    except (IntegrationError, NumericalError) as exc:
        print(f"run failure: {exc}", file=sys.stderr)
        return 2
    except OscarSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
