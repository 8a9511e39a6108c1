"""Period-shift signal and relaxation-time extraction.

The spins advance or retard each cantilever period by a few parts in 1e5.
Against the spin-free reference period T_base, the shift of period i is
DT_i = T_i - T_base; normalizing by the early-time mean DT_0 gives the
signal DT_i / DT_0, which starts at 1 and decays as spins lose their
adiabatic lock on the effective field.  The relaxation time tau_m is the
log-linear slope of the (smoothed) signal inside a band of signal values,
reported in milliseconds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import AnalysisError, ParameterError

# period measurement noise floor in tau units; quadratic peak interpolation
# at the default step leaves residuals far below this
PERIOD_NOISE_FLOOR = 1e-9


@dataclass(frozen=True)
class PeriodSeries:
    """Per-period measurement record.

    signal[i] belongs to the period starting at tau_peaks[i], whose start
    time in milliseconds is t_ms[i].
    """

    tau_peaks: np.ndarray     # peak times, tau units (one more than periods)
    periods: np.ndarray       # T_i = tau_peaks[i+1] - tau_peaks[i]
    delta_t: np.ndarray       # T_i - T_base
    t_ms: np.ndarray          # period start times in ms
    signal: np.ndarray        # delta_t / delta_t0
    delta_t0: float
    t_base: float
    omega_c: float

    def __len__(self) -> int:
        return len(self.periods)


@dataclass(frozen=True)
class DecayFit:
    tau_m_ms: float
    r2: float
    i0: int                   # fit window in period indices, [i0, i1)
    i1: int
    slope: float              # d log(signal) / d t_ms
    intercept: float
    n_points: int
    low_confidence: bool      # r2 < 0.7
    window_shrunk: bool       # smoothed signal went non-positive inside the band


def oscar_signal(peaks, t_base: float, omega_c: float, head: int = 5) -> PeriodSeries:
    """Normalized period-shift signal from raw peak times.

    head periods define the normalization DT_0 (their mean shift).
    """
    peaks = np.asarray(peaks, dtype=float)
    if peaks.ndim != 1 or peaks.size < max(head + 5, 10):
        raise ParameterError(
            f"need at least {max(head + 5, 10)} peaks, got {peaks.size}"
        )
    if head < 1:
        raise ParameterError(f"head must be >= 1, got {head}")
    if t_base <= 0:
        raise ParameterError(f"t_base must be > 0, got {t_base!r}")
    if omega_c <= 0:
        raise ParameterError(f"omega_c must be > 0, got {omega_c!r}")
    periods = np.diff(peaks)
    if np.any(periods <= 0):
        raise AnalysisError("peak times are not strictly increasing")
    delta_t = periods - t_base
    delta_t0 = float(np.mean(delta_t[:head]))
    if abs(delta_t0) < 10.0 * PERIOD_NOISE_FLOOR:
        raise AnalysisError(
            f"initial period shift {delta_t0:.3e} is at the measurement noise "
            "floor; no spin signal to normalize by"
        )
    return PeriodSeries(
        tau_peaks=peaks,
        periods=periods,
        delta_t=delta_t,
        t_ms=peaks[:-1] / omega_c * 1e3,
        signal=delta_t / delta_t0,
        delta_t0=delta_t0,
        t_base=t_base,
        omega_c=omega_c,
    )


def smooth(values, window: int) -> np.ndarray:
    """Centered moving average, valid region only (length n - window + 1)."""
    values = np.asarray(values, dtype=float)
    if window < 1 or window % 2 == 0:
        raise ParameterError(f"smoothing window must be odd and >= 1, got {window}")
    if window == 1:
        return values.copy()
    if values.size < window:
        raise ParameterError(
            f"need at least {window} samples to smooth, got {values.size}"
        )
    kernel = np.full(window, 1.0 / window)
    return np.convolve(values, kernel, mode="valid")


def fit_relaxation(series: PeriodSeries, smoothing_window: int = 11,
                   fit_band: tuple[float, float] = (0.2, 0.9),
                   window: tuple[int, int] | None = None,
                   min_points: int = 10) -> DecayFit:
    """Log-linear fit of the smoothed signal; returns tau_m in ms.

    The fit window is either given explicitly as period indices [i0, i1)
    or found as the stretch where the smoothed signal first sits inside
    [fit_band[0], fit_band[1]].  Non-positive smoothed values truncate the
    window (flagged).  R^2 below 0.7 sets low_confidence rather than failing.
    """
    lo, hi = fit_band
    if not (0.0 < lo < hi):
        raise ParameterError(f"fit band must satisfy 0 < lo < hi, got {fit_band}")
    sm = smooth(series.signal, smoothing_window)
    off = smoothing_window // 2          # original index of sm[0]
    t = series.t_ms[off:off + sm.size]

    if window is not None:
        i0, i1 = window
        j0 = max(0, i0 - off)
        j1 = min(sm.size, i1 - off)
    else:
        below_hi = np.nonzero(sm <= hi)[0]
        if below_hi.size == 0:
            raise AnalysisError(
                f"smoothed signal never drops to {hi}; decay too slow for the "
                "band, pass an explicit window"
            )
        j0 = int(below_hi[0])
        under_lo = np.nonzero(sm[j0:] < lo)[0]
        j1 = j0 + int(under_lo[0]) if under_lo.size else sm.size

    window_shrunk = False
    if j1 <= j0:
        raise AnalysisError("empty fit window")
    seg = sm[j0:j1]
    nonpos = np.nonzero(seg <= 0.0)[0]
    if nonpos.size:
        j1 = j0 + int(nonpos[0])
        seg = sm[j0:j1]
        window_shrunk = True
    if seg.size < min_points:
        raise AnalysisError(
            f"only {seg.size} usable points in the fit window, need {min_points}"
        )

    x = t[j0:j1]
    y = np.log(seg)
    xm = x.mean()
    ym = y.mean()
    dx = x - xm
    var = float(dx @ dx)
    if var == 0.0:
        raise AnalysisError("degenerate fit window (zero time spread)")
    slope = float(dx @ (y - ym)) / var
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - ym) ** 2).sum())
    r2 = 1.0 - float((resid @ resid)) / ss_tot if ss_tot > 0 else 0.0
    if slope >= 0.0:
        raise AnalysisError(
            f"signal does not decay over the fit window (slope {slope:.3e}/ms)"
        )
    return DecayFit(
        tau_m_ms=-1.0 / slope,
        r2=r2,
        i0=j0 + off,
        i1=j1 + off,
        slope=slope,
        intercept=intercept,
        n_points=seg.size,
        low_confidence=r2 < 0.7,
        window_shrunk=window_shrunk,
    )


def write_peaks_csv(path, peaks) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "tau_peak"])
        for i, tp in enumerate(np.asarray(peaks, dtype=float)):
            w.writerow([i, f"{tp:.17g}"])


def load_peaks_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["i", "tau_peak"]:
            raise ParameterError(f"unexpected peaks CSV header: {header}")
        return np.array([float(row[1]) for row in r if row])


def write_summary_csv(path, fit: DecayFit, series: PeriodSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau_m_ms", "r2", "i0", "i1", "delta_T0", "T_base"])
        w.writerow([
            f"{fit.tau_m_ms:.8g}", f"{fit.r2:.6g}", fit.i0, fit.i1,
            f"{series.delta_t0:.10g}", f"{series.t_base:.17g}",
        ])
