"""Flat text configuration: parsing, validation, unit conversion.

Config files are `key = value` lines with `#` comments.  Keys carry their
unit in the name (B1_mT, z0_nm, ...) and every key has a default matching
the reference experiment, so an empty file is a valid config.  Unknown
keys and out-of-range values are rejected with the offending line number.

The temperature can be set either directly (T_K) or through the target
thermal amplitude b_R_pm, from which the temperature is back-solved via
b_R = sqrt(2 k_B T / k_c) / epsilon; setting both explicitly is an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .params import GAMMA_E, K_B, PhysicalParams


@dataclass(frozen=True)
class ExperimentConfig:
    # static and rf fields
    B_ext_mT: float = 140.0
    B1_mT: float = 0.3
    # cantilever
    k_c_N_per_m: float = 0.014
    f_c_kHz: float = 21.4
    z0_nm: float = 28.0
    Q: float = 2.0e4
    m_tip_J_per_T: float = 1.5e-12
    R_p_nm: float = 700.0
    d1_nm: float = 700.0
    x_p: float = 1.0
    # sample
    M_s_A_per_m: float = 0.89
    T_K: float = 20.0
    gamma_rad_per_sT: float = GAMMA_E
    # rf targeting: slice depth below the surface, or the rf frequency itself
    slice_depth_nm: float = 175.0
    rf_omega_rad_per_s: float | None = None
    # thermal noise
    noise_modes: int = 3
    N_renewal: float = 10.0
    frequency_law: str = "asymptotic"
    b_R_pm: float | None = None
    shared_renewal_clock: bool = False
    # thickness profile (bump heights relative to t_c, width relative to length)
    profile: str = "uniform"
    bump_height_ratio: float = 0.5
    bump_width_ratio: float = 0.01
    k_max: int = 70
    quad_points: int = 4001
    galerkin_modes: int = 40
    # ensemble
    n_spins: int = 200
    slice_margin: float = 0.0
    lateral_cutoff_nm: float | None = None
    volume_trials: int = 1_000_000
    # run control
    t_end_ms: float = 50.0
    tau_end: float | None = None
    dtau: float | None = None
    seed: int = 1
    record_stride: int = 0
    feedback: bool = True
    renorm_interval: int = 4096
    # analysis
    smoothing_window: int = 11
    fit_low: float = 0.2
    fit_high: float = 0.9
    signal_head: int = 5
    # output
    out_dir: str = "out"
    # keys the user set explicitly (parse/override bookkeeping)
    explicit: frozenset = field(default_factory=frozenset)


_OPTIONAL_FLOATS = {"rf_omega_rad_per_s", "b_R_pm", "lateral_cutoff_nm",
                    "tau_end", "dtau"}
_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _field_types() -> dict:
    out = {}
    for f in fields(ExperimentConfig):
        if f.name == "explicit":
            continue
        if f.name in _OPTIONAL_FLOATS:
            out[f.name] = float
        else:
            out[f.name] = type(f.default)
    return out


_TYPES = _field_types()


def _coerce(key: str, raw: str, line: int):
    want = _TYPES[key]
    raw = raw.strip()
    try:
        if want is bool:
            word = raw.lower()
            if word not in _BOOL_WORDS:
                raise ValueError(f"not a boolean: {raw!r}")
            return _BOOL_WORDS[word]
        if want is int:
            try:
                # plain integers parse exactly (seeds use the full 63 bits)
                return int(raw)
            except ValueError:
                pass
            # accept 1e5-style integers
            v = float(raw)
            if v != int(v):
                raise ValueError(f"not an integer: {raw!r}")
            return int(v)
        if want is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(str(exc), key=key, line=line) from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document; returns a frozen config."""
    values = {}
    lines = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        body = rawline.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", line=lineno)
        key, _, raw = body.partition("=")
        key = key.strip()
        if key not in _TYPES:
            raise ConfigError("unknown key", key=key, line=lineno)
        if key in values:
            raise ConfigError(
                f"duplicate key (first set on line {lines[key]})", key=key, line=lineno
            )
        values[key] = _coerce(key, raw, lineno)
        lines[key] = lineno
    cfg = ExperimentConfig(**values, explicit=frozenset(values))
    validate_config(cfg, lines)
    return cfg


def with_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    """New config with the given keys changed and marked explicit."""
    for key in overrides:
        if key not in _TYPES:
            raise ConfigError("unknown key", key=key)
    new = replace(cfg, **overrides,
                  explicit=frozenset(cfg.explicit | set(overrides)))
    validate_config(new)
    return new


def _positive(cfg, lines, *keys):
    for key in keys:
        v = getattr(cfg, key)
        if v is None:
            continue
        if not math.isfinite(v) or v <= 0:
            raise ConfigError(f"must be finite and > 0, got {v!r}",
                              key=key, line=lines.get(key))


def validate_config(cfg: ExperimentConfig, lines: dict | None = None) -> None:
    lines = lines or {}

    def fail(key, msg):
        raise ConfigError(msg, key=key, line=lines.get(key))

    _positive(cfg, lines, "B_ext_mT", "k_c_N_per_m", "f_c_kHz", "z0_nm", "Q",
              "m_tip_J_per_T", "R_p_nm", "d1_nm", "M_s_A_per_m",
              "gamma_rad_per_sT", "slice_depth_nm", "rf_omega_rad_per_s",
              "b_R_pm", "lateral_cutoff_nm", "N_renewal", "t_end_ms",
              "tau_end", "dtau", "bump_width_ratio")
    if cfg.B1_mT < 0:
        fail("B1_mT", f"must be >= 0, got {cfg.B1_mT!r}")
    if cfg.T_K < 0:
        fail("T_K", f"must be >= 0, got {cfg.T_K!r}")
    if cfg.Q < 1:
        fail("Q", f"must be >= 1, got {cfg.Q!r}")
    if cfg.z0_nm >= cfg.d1_nm:
        fail("z0_nm", f"oscillation amplitude {cfg.z0_nm} nm must be below the "
                      f"gap d1_nm = {cfg.d1_nm}")
    if not 0 < cfg.x_p <= 1:
        fail("x_p", f"must be in (0, 1], got {cfg.x_p!r}")
    if cfg.noise_modes < 0:
        fail("noise_modes", f"must be >= 0, got {cfg.noise_modes}")
    if cfg.n_spins < 1:
        fail("n_spins", f"must be >= 1, got {cfg.n_spins}")
    if cfg.slice_margin < 0:
        fail("slice_margin", f"must be >= 0, got {cfg.slice_margin!r}")
    if cfg.volume_trials < 10_000:
        fail("volume_trials", f"must be >= 10000, got {cfg.volume_trials}")
    if cfg.record_stride < 0:
        fail("record_stride", f"must be >= 0, got {cfg.record_stride}")
    if cfg.renorm_interval < 1:
        fail("renorm_interval", f"must be >= 1, got {cfg.renorm_interval}")
    if cfg.smoothing_window < 1 or cfg.smoothing_window % 2 == 0:
        fail("smoothing_window", f"must be odd and >= 1, got {cfg.smoothing_window}")
    if not 0 < cfg.fit_low < cfg.fit_high:
        fail("fit_low", f"need 0 < fit_low < fit_high, got "
                        f"{cfg.fit_low!r} vs {cfg.fit_high!r}")
    if cfg.signal_head < 1:
        fail("signal_head", f"must be >= 1, got {cfg.signal_head}")
    if cfg.frequency_law not in ("asymptotic", "exact_roots"):
        fail("frequency_law", f"must be 'asymptotic' or 'exact_roots', "
                              f"got {cfg.frequency_law!r}")
    if cfg.profile not in ("uniform", "bump"):
        fail("profile", f"must be 'uniform' or 'bump', got {cfg.profile!r}")
    if cfg.profile == "bump" and cfg.bump_height_ratio <= -1.0:
        fail("bump_height_ratio", "bump would make the thickness non-positive")
    if cfg.k_max < 8:
        fail("k_max", f"must be >= 8, got {cfg.k_max}")
    if cfg.quad_points < 101 or cfg.quad_points % 2 == 0:
        fail("quad_points", f"must be odd and >= 101, got {cfg.quad_points}")
    if cfg.galerkin_modes < 1 or cfg.galerkin_modes > cfg.k_max:
        fail("galerkin_modes", f"must be in 1..k_max, got {cfg.galerkin_modes}")
    if "rf_omega_rad_per_s" in cfg.explicit and "slice_depth_nm" in cfg.explicit:
        fail("rf_omega_rad_per_s", "set either rf_omega_rad_per_s or "
                                   "slice_depth_nm, not both")
    if "b_R_pm" in cfg.explicit and "T_K" in cfg.explicit:
        fail("b_R_pm", "set either b_R_pm or T_K, not both")
    if "tau_end" in cfg.explicit and "t_end_ms" in cfg.explicit:
        fail("tau_end", "set either tau_end or t_end_ms, not both")
    if cfg.b_R_pm is not None and cfg.B1_mT <= 0:
        fail("b_R_pm", "b_R targeting needs a nonzero rf field B1_mT")


def epsilon_of(cfg: ExperimentConfig) -> float:
    """Rabi frequency ratio implied by the config, before full assembly."""
    omega_c = 2.0 * math.pi * cfg.f_c_kHz * 1e3
    return cfg.gamma_rad_per_sT * cfg.B1_mT * 1e-3 / omega_c


def effective_temperature(cfg: ExperimentConfig) -> float:
    """T_K, or the temperature reproducing b_R_pm when that is set."""
    if cfg.b_R_pm is None:
        return cfg.T_K
    eps = epsilon_of(cfg)
    b_r = cfg.b_R_pm * 1e-12
    return (b_r * eps) ** 2 * cfg.k_c_N_per_m / (2.0 * K_B)


def to_physical(cfg: ExperimentConfig) -> PhysicalParams:
    """Convert config units to SI and build the validated parameter set."""
    use_omega = "rf_omega_rad_per_s" in cfg.explicit and cfg.rf_omega_rad_per_s is not None
    return PhysicalParams(
        b_ext=cfg.B_ext_mT * 1e-3,
        b1=cfg.B1_mT * 1e-3,
        k_c=cfg.k_c_N_per_m,
        f_c=cfg.f_c_kHz * 1e3,
        z0=cfg.z0_nm * 1e-9,
        q_factor=cfg.Q,
        m_tip=cfg.m_tip_J_per_T,
        r_p=cfg.R_p_nm * 1e-9,
        d1=cfg.d1_nm * 1e-9,
        m_s=cfg.M_s_A_per_m,
        t_k=effective_temperature(cfg),
        gamma=cfg.gamma_rad_per_sT,
        x_p=cfg.x_p,
        rf_omega=cfg.rf_omega_rad_per_s if use_omega else None,
        slice_depth=None if use_omega else cfg.slice_depth_nm * 1e-9,
    )


def resolve_tau_end(cfg: ExperimentConfig) -> float:
    if cfg.tau_end is not None:
        return cfg.tau_end
    return cfg.t_end_ms * 1e-3 * 2.0 * math.pi * cfg.f_c_kHz * 1e3


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parsing it back reproduces the same run exactly.

    Keys with an exclusive alternative set (slice depth vs rf frequency,
    T_K vs b_R_pm, t_end_ms vs tau_end) emit only the governing one.
    """
    skip = set()
    if cfg.rf_omega_rad_per_s is not None and "rf_omega_rad_per_s" in cfg.explicit:
        skip.add("slice_depth_nm")
    if cfg.b_R_pm is not None:
        skip.add("T_K")
    if cfg.tau_end is not None:
        skip.add("t_end_ms")
    out = []
    for f in fields(ExperimentConfig):
        if f.name == "explicit" or f.name in skip:
            continue
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"
