"""Trajectory diagnostics: spectrum, order parameter, backflow measure,
and the four-way dynamical-phase classifier.

Phases
------
TISS       magnetization settles to a fixed point (late-window m_z
           peak-to-peak below eps_tiss).
BTC        period-1 limit cycle: the orbit closes in full 3-space after
           one dominant-peak period, traces a non-degenerate loop, and
           the dominant spectral peak has no comparable rival.
HOLC       closed orbit of higher multiplicity, or one whose spectrum
           carries comparable competing peaks.
IRREGULAR  everything else: non-closing oscillations, and closed curves
           that degenerate to a retraced arc (periodic in time but not a
           limit cycle on the sphere).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .integrator import Trajectory
from .model import BathParams, kappa

__all__ = [
    "AnalysisThresholds",
    "PhaseLabel",
    "Spectrum",
    "PhaseReport",
    "WindowTooShort",
    "power_spectrum",
    "peak_ratio",
    "order_parameter",
    "nm_measure",
    "classify_phase",
]

PEAK_RATIO_CAP = 1e6

MIN_WINDOW_SAMPLES = 256


class WindowTooShort(ValueError):
    """Analysis window holds fewer than the minimum number of samples."""


class PhaseLabel(str, Enum):
    TISS = "TISS"
    BTC = "BTC"
    HOLC = "HOLC"
    IRREGULAR = "IRREGULAR"

    def __str__(self) -> str:  # CSV-friendly
        return self.value


@dataclass(frozen=True)
class AnalysisThresholds:
    """Pinned classifier constants, exposed as CLI flags for reproducibility.

    eps_tiss: late-window m_z peak-to-peak below which the state counts
        as stationary.
    eps_lc: closure tolerance in 3-space Bloch distance.
    r_btc: minimum power ratio of the dominant peak over its strongest
        competitor for the BTC label.
    loop_area_min: minimum normalized loop area of the closed orbit;
        below it the "orbit" is a retraced arc, not a limit cycle.
    max_multiplicity: largest period multiple tried in the closure test.
    """

    eps_tiss: float = 1e-3
    eps_lc: float = 1e-2
    r_btc: float = 10.0
    loop_area_min: float = 0.05
    max_multiplicity: int = 8
    noise_floor_factor: float = 3.0
    peak_separation_bins: int = 5
    harmonic_tol_bins: float = 2.5


DEFAULT_THRESHOLDS = AnalysisThresholds()


@dataclass(frozen=True)
class Spectrum:
    """One-sided power spectrum of m_z over an analysis window.

    ``amps`` are squared rfft magnitudes of the mean-subtracted,
    Hann-windowed signal; ``freqs`` are angular frequencies, strictly
    increasing and starting above the DC-exclusion threshold
    2/(t_b - t_a).  ``peaks`` lists (freq, power) local maxima above the
    noise floor, dominant first, each separated from any larger peak by
    at least peak_separation_bins bins.
    """

    freqs: np.ndarray
    amps: np.ndarray
    window: Tuple[float, float]
    peaks: Tuple[Tuple[float, float], ...]
    noise_floor: float

    @property
    def bin_width(self) -> float:
        return float(self.freqs[1] - self.freqs[0])


@dataclass(frozen=True)
class PhaseReport:
    """Classifier output plus the diagnostics it was based on."""

    label: PhaseLabel
    peak_ratio: float
    closure_error: float
    multiplicity: Optional[int]
    amplitude: float
    mu: float
    nm_measure: Optional[float] = None
    dominant_freq: Optional[float] = None
    loop_area: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "label": self.label.value,
            "peak_ratio": self.peak_ratio,
            "closure_error": self.closure_error,
            "multiplicity": self.multiplicity,
            "amplitude": self.amplitude,
            "mu": self.mu,
            "nm_measure": self.nm_measure,
            "dominant_freq": self.dominant_freq,
            "loop_area": self.loop_area,
        }


def power_spectrum(
    traj: Trajectory,
    window: Optional[Tuple[float, float]] = None,
    thresholds: AnalysisThresholds = DEFAULT_THRESHOLDS,
) -> Spectrum:
    """Hann-windowed power spectrum of m_z over ``window``.

    The signal is mean-subtracted before windowing; bins at and below
    the DC-exclusion threshold 2/(t_b - t_a) are dropped.  Peaks are
    local maxima above noise_floor_factor times the median power,
    collected in descending power with a minimum bin separation
    (sidelobe guard) enforced against larger peaks.
    """
    if window is None:
        window = (traj.horizon / 2.0, traj.horizon)
    t_a, t_b = float(window[0]), float(window[1])
    if t_a < traj.t[0] - 1e-12 or t_b > traj.horizon + 1e-12 or t_b <= t_a:
        raise ValueError(f"window {window} not contained in [0, {traj.horizon}]")
    sel = (traj.t >= t_a - 1e-12) & (traj.t <= t_b + 1e-12)
    x = traj.m_z[sel]
    if len(x) < MIN_WINDOW_SAMPLES:
        raise WindowTooShort(
            f"window holds {len(x)} samples, need >= {MIN_WINDOW_SAMPLES}"
        )
    x = x - x.mean()
    w = np.hanning(len(x))
    power = np.abs(np.fft.rfft(x * w)) ** 2
    freqs = 2.0 * np.pi * np.fft.rfftfreq(len(x), traj.dt)
    keep = freqs > 2.0 / (t_b - t_a)
    freqs, power = freqs[keep], power[keep]

    floor = thresholds.noise_floor_factor * float(np.median(power))
    interior = (
        (power[1:-1] > power[:-2])
        & (power[1:-1] >= power[2:])
        & (power[1:-1] > floor)
    )
    candidates = np.flatnonzero(interior) + 1
    order = candidates[np.argsort(-power[candidates], kind="stable")]
    kept: list[int] = []
    for i in order:
        if all(abs(i - j) >= thresholds.peak_separation_bins for j in kept):
            kept.append(int(i))
    peaks = tuple((float(freqs[i]), float(power[i])) for i in kept)
    return Spectrum(
        freqs=freqs, amps=power, window=(t_a, t_b), peaks=peaks, noise_floor=floor
    )


def peak_ratio(spec: Spectrum) -> float:
    """Dominant-peak power over the second-largest peak's power.

    With a single peak the noise floor stands in for the second peak and
    the result is capped; with no peaks at all (stationary signal) the
    ratio is 0.
    """
    if not spec.peaks:
        return 0.0
    if len(spec.peaks) >= 2:
        return spec.peaks[0][1] / spec.peaks[1][1]
    if spec.noise_floor <= 0.0:
        return PEAK_RATIO_CAP
    return min(spec.peaks[0][1] / spec.noise_floor, PEAK_RATIO_CAP)


def _rival_ratio(spec: Spectrum, harmonic_tol_bins: float) -> float:
    """Dominant power over the strongest peak that is not one of its
    integer harmonics (noise floor as fallback, capped)."""
    if not spec.peaks:
        return 0.0
    f1, a1 = spec.peaks[0]
    tol = harmonic_tol_bins * spec.bin_width
    for f, a in spec.peaks[1:]:
        k = round(f / f1)
        if k >= 1 and abs(f - k * f1) <= tol:
            continue
        return a1 / a
    if spec.noise_floor <= 0.0:
        return PEAK_RATIO_CAP
    return min(a1 / spec.noise_floor, PEAK_RATIO_CAP)


def order_parameter(
    traj: Trajectory, window: Optional[Tuple[float, float]] = None
) -> float:
    """Trapezoidal time average of m_z; the dynamical order parameter.

    Defaults to the full horizon [0, T]; pass a late window to average
    over the settled dynamics instead.
    """
    if window is None:
        sel = slice(None)
        t_a, t_b = float(traj.t[0]), traj.horizon
    else:
        t_a, t_b = float(window[0]), float(window[1])
        if t_a < traj.t[0] - 1e-12 or t_b > traj.horizon + 1e-12 or t_b <= t_a:
            raise ValueError(f"window {window} not contained in [0, {traj.horizon}]")
        sel = (traj.t >= t_a - 1e-12) & (traj.t <= t_b + 1e-12)
    t = traj.t[sel]
    return float(np.trapezoid(traj.m_z[sel], t) / (t[-1] - t[0]))


def nm_measure(
    bath: BathParams, horizon: float = 500.0, quadrature_step: float = 1e-3
) -> float:
    """Backflow measure: integral of max(-kappa(t), 0) over [0, horizon].

    Uses the capped rate on a uniform trapezoidal grid; the step must
    resolve the cap plateaus (<= 0.001/kappa0).  Identically zero iff
    the dynamics is memoryless (kappa >= 0 throughout), e.g. for any
    Markovian-branch or constant-rate bath.
    """
    if not (horizon > 0):
        raise ValueError("horizon must be > 0")
    if not (0 < quadrature_step <= 1e-3 / bath.kappa0):
        raise ValueError("quadrature_step must be in (0, 0.001/kappa0]")
    n = int(math.ceil(horizon / quadrature_step))
    t = np.linspace(0.0, horizon, n + 1)
    f = np.maximum(-np.asarray(kappa(bath, t)), 0.0)
    return float(np.trapezoid(f, t))


# --- closure machinery ----------------------------------------------------


def _closure_error(
    t: np.ndarray, m: np.ndarray, t_a: float, t_b: float, period: float
) -> float:
    """Mean 3-space distance between m(t) and m(t + period) over the
    window (restricted so t + period stays inside it)."""
    if period <= 0 or t_a + period >= t_b:
        return math.inf
    sel = (t >= t_a - 1e-12) & (t <= t_b - period + 1e-12)
    ts = t[sel]
    if len(ts) < 8:
        return math.inf
    d2 = np.zeros(len(ts))
    for i in range(3):
        a = np.interp(ts, t, m[:, i])
        b = np.interp(ts + period, t, m[:, i])
        d2 += (a - b) ** 2
    return float(np.mean(np.sqrt(d2)))


def _refine_period(
    t: np.ndarray,
    m: np.ndarray,
    t_a: float,
    t_b: float,
    p_lo: float,
    p_hi: float,
    eps_lc: float,
    n_coarse: int = 17,
    n_golden: int = 24,
) -> Tuple[float, float]:
    """Locate the period minimizing the closure error within [p_lo, p_hi].

    Coarse scan bracketing plus golden-section refinement; the
    refinement is skipped when the coarse minimum is far above the
    closure tolerance (nothing there to resolve).
    """
    ps = np.linspace(p_lo, p_hi, n_coarse)
    cs = np.array([_closure_error(t, m, t_a, t_b, p) for p in ps])
    i = int(np.argmin(cs))
    if not math.isfinite(cs[i]) or cs[i] > 20.0 * eps_lc:
        return float(ps[i]), float(cs[i])
    lo, hi = ps[max(0, i - 1)], ps[min(n_coarse - 1, i + 1)]
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc = _closure_error(t, m, t_a, t_b, c)
    fd = _closure_error(t, m, t_a, t_b, d)
    for _ in range(n_golden):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = _closure_error(t, m, t_a, t_b, c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = _closure_error(t, m, t_a, t_b, d)
    p_best = 0.5 * (a + b)
    return p_best, _closure_error(t, m, t_a, t_b, p_best)


def _loop_area(
    t: np.ndarray, m: np.ndarray, t_a: float, period: float
) -> float:
    """Normalized vector area of one orbit period starting at t_a.

    |1/2 sum m_i x m_{i+1}| over the closed polygon, divided by
    pi * r_rms^2 of the points about their centroid: ~1 for a circular
    loop, ~0 for a retraced arc (degenerate, not a limit cycle).
    """
    sel = (t >= t_a - 1e-12) & (t <= t_a + period + 1e-12)
    pts = m[sel]
    if len(pts) < 8:
        return 0.0
    closed = np.vstack([pts, pts[:1]])
    vec_area = 0.5 * np.linalg.norm(np.cross(closed[:-1], closed[1:]).sum(axis=0))
    centroid = pts.mean(axis=0)
    r2 = float(((pts - centroid) ** 2).sum(axis=1).mean())
    if r2 <= 0.0:
        return 0.0
    return float(vec_area / (math.pi * r2))


def classify_phase(
    traj: Trajectory,
    spec: Spectrum,
    thresholds: AnalysisThresholds = DEFAULT_THRESHOLDS,
    nm: Optional[float] = None,
) -> PhaseReport:
    """Assign one dynamical-phase label from a trajectory and its spectrum.

    Decision procedure, all on the spectrum's window W:

    1. amplitude = max(m_z) - min(m_z) on W; below eps_tiss -> TISS.
    2. From the dominant spectral frequency f1, test period candidates
       k * 2*pi/f1 for k = 1..max_multiplicity, each refined against the
       closure error within one FFT bin; multiplicity = smallest k whose
       closure error beats eps_lc.
    3. No such k -> IRREGULAR.  A closed orbit whose loop area is
       degenerate (retraced arc) -> IRREGULAR.  Otherwise k == 1 with no
       comparable competing peak -> BTC, else HOLC.  For memoryless
       dynamics (kappa >= 0 throughout) integer harmonics of f1 are not
       competitors (only TISS and BTC occur there); with backflow
       present the literal second-largest peak competes.

    ``nm`` is the precomputed backflow measure for the report (callers
    that know the bath pass it; it does not influence the label).
    """
    t_a, t_b = spec.window
    sel = (traj.t >= t_a - 1e-12) & (traj.t <= t_b + 1e-12)
    mz = traj.m_z[sel]
    if len(mz) < MIN_WINDOW_SAMPLES:
        raise WindowTooShort(
            f"window holds {len(mz)} samples, need >= {MIN_WINDOW_SAMPLES}"
        )
    amplitude = float(mz.max() - mz.min())
    mu = order_parameter(traj)
    ratio = peak_ratio(spec)

    if amplitude < thresholds.eps_tiss:
        return PhaseReport(
            label=PhaseLabel.TISS,
            peak_ratio=ratio,
            closure_error=math.inf,
            multiplicity=None,
            amplitude=amplitude,
            mu=mu,
            nm_measure=nm,
        )
    if not spec.peaks:
        return PhaseReport(
            label=PhaseLabel.IRREGULAR,
            peak_ratio=ratio,
            closure_error=math.inf,
            multiplicity=None,
            amplitude=amplitude,
            mu=mu,
            nm_measure=nm,
        )

    f1 = spec.peaks[0][0]
    df = spec.bin_width
    # candidate periods live one FFT bin around 2*pi/f1; the upper edge
    # degenerates when f1 sits on the first bin, so clamp it to the
    # longest period the closure test can still resolve in the window
    p_len = t_b - t_a
    p_lo1 = 2.0 * math.pi / (f1 + df)
    p_hi1 = 2.0 * math.pi / max(f1 - df, 2.0 * math.pi / p_len / 2.0)

    multiplicity: Optional[int] = None
    closure = math.inf
    period = None
    for k in range(1, thresholds.max_multiplicity + 1):
        p_lo = k * p_lo1
        p_hi = min(k * p_hi1, 0.9 * p_len)
        if p_lo >= p_hi:
            break
        pk, ck = _refine_period(
            traj.t, traj.m, t_a, t_b, p_lo, p_hi, thresholds.eps_lc
        )
        closure = min(closure, ck)
        if ck < thresholds.eps_lc:
            multiplicity = k
            closure = ck
            period = pk
            break

    if multiplicity is None:
        return PhaseReport(
            label=PhaseLabel.IRREGULAR,
            peak_ratio=ratio,
            closure_error=closure,
            multiplicity=None,
            amplitude=amplitude,
            mu=mu,
            nm_measure=nm,
            dominant_freq=f1,
        )

    area = _loop_area(traj.t, traj.m, t_a, period)
    if area < thresholds.loop_area_min:
        label = PhaseLabel.IRREGULAR
    else:
        memoryless = bool(np.min(traj.kappa) >= 0.0)
        gate = (
            _rival_ratio(spec, thresholds.harmonic_tol_bins) if memoryless else ratio
        )
        if multiplicity == 1 and gate >= thresholds.r_btc:
            label = PhaseLabel.BTC
        else:
            label = PhaseLabel.HOLC
    return PhaseReport(
        label=label,
        peak_ratio=ratio,
        closure_error=closure,
        multiplicity=multiplicity,
        amplitude=amplitude,
        mu=mu,
        nm_measure=nm,
        dominant_freq=f1,
        loop_area=area,
    )
