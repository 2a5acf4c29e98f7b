from __future__ import annotations

import math

import numpy as np
import pytest

from btcsim import (
    AnalysisThresholds,
    BathParams,
    ModelParams,
    PhaseLabel,
    Trajectory,
    WindowTooShort,
    classify_phase,
    constant_kappa_mode,
    integrate,
    nm_measure,
    order_parameter,
    peak_ratio,
    power_spectrum,
)


def synthetic_trajectory(signal, T=500.0, dt=0.05):
    """Trajectory carrying an arbitrary m_z(t) for spectrum tests."""
    t = np.arange(int(round(T / dt)) + 1) * dt
    mz = signal(t)
    m = np.zeros((len(t), 3))
    m[:, 2] = mz
    m[:, 0] = np.sqrt(np.clip(1.0 - mz**2, 0.0, None))
    return Trajectory(
        t=t,
        m=m,
        kappa=np.ones_like(t),
        cp_integral=t.copy(),
        norm_drift_max=0.0,
        cp_violated=False,
    )


def brute_force_peak_power(t, x, omega):
    """Independent oracle: Hann-windowed DFT power at one frequency by
    direct summation (no FFT library)."""
    x = x - x.mean()
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(len(x)) / (len(x) - 1))
    z = np.sum(w * x * np.exp(-1j * omega * (t - t[0])))
    return abs(z) ** 2


class TestPowerSpectrum:
    def test_pure_tone_peak_location(self):
        traj = synthetic_trajectory(lambda t: np.sin(2.0 * t))
        spec = power_spectrum(traj, (250.0, 500.0))
        assert spec.peaks, "tone must produce a peak"
        f0, _ = spec.peaks[0]
        assert abs(f0 - 2.0) <= spec.bin_width

    def test_pure_tone_amp_matches_brute_force_dft(self):
        traj = synthetic_trajectory(lambda t: np.sin(2.0 * t))
        spec = power_spectrum(traj, (250.0, 500.0))
        sel = (traj.t >= 250.0 - 1e-12) & (traj.t <= 500.0 + 1e-12)
        f0, a0 = spec.peaks[0]
        oracle = brute_force_peak_power(traj.t[sel], traj.m_z[sel], f0)
        assert a0 == pytest.approx(oracle, rel=1e-10)

    def test_constant_signal_all_power_removed(self):
        traj = synthetic_trajectory(lambda t: np.full_like(t, 0.7))
        spec = power_spectrum(traj, (250.0, 500.0))
        assert spec.peaks == ()
        assert peak_ratio(spec) == 0.0

    def test_frequencies_start_above_dc_exclusion(self, btc_trajectory):
        spec = power_spectrum(btc_trajectory)
        assert np.all(np.diff(spec.freqs) > 0)
        assert spec.freqs[0] > 2.0 / (spec.window[1] - spec.window[0])

    def test_peaks_sorted_descending(self, btc_trajectory):
        spec = power_spectrum(btc_trajectory)
        amps = [a for _, a in spec.peaks]
        assert amps == sorted(amps, reverse=True)

    def test_peak_separation(self, btc_trajectory):
        spec = power_spectrum(btc_trajectory)
        idx = [int(round(f / spec.bin_width)) for f, _ in spec.peaks]
        for i, a in enumerate(idx):
            for b in idx[:i]:
                assert abs(a - b) >= 5

    def test_window_too_short(self, btc_trajectory):
        with pytest.raises(WindowTooShort):
            power_spectrum(btc_trajectory, (497.0, 500.0))

    def test_window_outside_horizon(self, btc_trajectory):
        with pytest.raises(ValueError):
            power_spectrum(btc_trajectory, (250.0, 600.0))

    def test_parseval(self, btc_trajectory):
        # full-rfft energy identity validates the FFT plumbing
        sel = (btc_trajectory.t >= 250.0 - 1e-12)
        x = btc_trajectory.m_z[sel]
        x = x - x.mean()
        xw = x * np.hanning(len(x))
        F = np.fft.rfft(xw)
        n = len(xw)
        last = 1.0 if n % 2 == 0 else 2.0  # Nyquist bin is unpaired for even n
        spectral = (
            np.abs(F[0]) ** 2
            + 2.0 * np.sum(np.abs(F[1:-1]) ** 2)
            + last * np.abs(F[-1]) ** 2
        )
        energy = n * np.sum(xw**2)
        assert spectral == pytest.approx(energy, rel=1e-8)


class TestPeakRatio:
    def test_equal_amplitude_two_tone(self):
        # bin-aligned tones near 1.0 and 2.5 so both suffer identical
        # (zero) scalloping and the symmetric construction holds
        w1 = 2.0 * np.pi * 40 / 250.0
        w2 = 2.0 * np.pi * 100 / 250.0
        traj = synthetic_trajectory(lambda t: 0.45 * (np.sin(w1 * t) + np.sin(w2 * t)))
        spec = power_spectrum(traj, (250.0, 500.0))
        assert len(spec.peaks) >= 2
        assert peak_ratio(spec) == pytest.approx(1.0, abs=0.1)

    def test_pure_tone_hits_floor_fallback(self):
        traj = synthetic_trajectory(lambda t: np.sin(2.0 * t))
        spec = power_spectrum(traj, (250.0, 500.0))
        assert len(spec.peaks) == 1
        assert peak_ratio(spec) >= 1e3

    def test_ratio_at_least_one_with_two_peaks(self, btc_trajectory):
        spec = power_spectrum(btc_trajectory)
        if len(spec.peaks) >= 2:
            assert peak_ratio(spec) >= 1.0


class TestOrderParameter:
    def test_constant(self):
        traj = synthetic_trajectory(lambda t: np.full_like(t, -0.37))
        assert order_parameter(traj) == pytest.approx(-0.37, abs=1e-14)

    def test_integer_periods_average_to_zero(self):
        # frequency commensurate with the grid: trapezoid sums cancel
        omega = 2.0 * np.pi * 100 / 500.0
        traj = synthetic_trajectory(lambda t: np.sin(omega * t))
        assert abs(order_parameter(traj)) < 1e-10

    def test_late_window_option(self, tiss_trajectory):
        mu_late = order_parameter(tiss_trajectory, (250.0, 500.0))
        assert mu_late == pytest.approx(-0.8660254, abs=1e-6)

    def test_weak_drive_is_negative(self, libration_trajectory):
        # weak-drive oscillations sit mostly below the equator
        assert order_parameter(libration_trajectory) < 0.0


class TestNmMeasure:
    def test_markovian_exactly_zero(self):
        assert nm_measure(BathParams(spectral_width_m=4.0), horizon=200.0) == 0.0

    def test_boundary_exactly_zero(self):
        assert nm_measure(BathParams(spectral_width_m=2.0), horizon=200.0) == 0.0

    def test_constant_mode_zero(self):
        bath = constant_kappa_mode(BathParams(spectral_width_m=0.25))
        assert nm_measure(bath, horizon=200.0) == 0.0

    def test_nonmarkovian_positive_and_converged(self):
        bath = BathParams(spectral_width_m=0.25)
        coarse = nm_measure(bath, horizon=500.0, quadrature_step=1e-3)
        fine = nm_measure(bath, horizon=500.0, quadrature_step=5e-4)
        assert coarse > 0.0
        assert abs(fine - coarse) / coarse < 1e-3

    def test_additivity(self):
        bath = BathParams(spectral_width_m=0.5)
        a = nm_measure(bath, horizon=100.0)
        total = nm_measure(bath, horizon=200.0)
        # second half computed on the same grid alignment
        t = np.linspace(100.0, 200.0, 100_001)
        from btcsim import kappa

        b = np.trapezoid(np.maximum(-np.asarray(kappa(bath, t)), 0.0), t)
        assert a + b == pytest.approx(total, rel=1e-6)

    def test_monotone_in_horizon(self):
        bath = BathParams(spectral_width_m=0.25)
        values = [nm_measure(bath, horizon=h) for h in (50.0, 100.0, 150.0)]
        assert values[0] <= values[1] <= values[2]

    def test_rejects_coarse_step(self):
        with pytest.raises(ValueError):
            nm_measure(BathParams(spectral_width_m=0.25), quadrature_step=0.01)


class TestClassifier:
    def test_tiss_constant_kappa(self, tiss_trajectory):
        spec = power_spectrum(tiss_trajectory)
        report = classify_phase(tiss_trajectory, spec)
        assert report.label is PhaseLabel.TISS
        assert report.amplitude < 1e-3

    def test_btc_flagship(self, btc_trajectory):
        spec = power_spectrum(btc_trajectory)
        report = classify_phase(btc_trajectory, spec)
        assert report.label is PhaseLabel.BTC
        assert report.multiplicity == 1
        assert report.closure_error < 1e-2
        assert report.peak_ratio >= 10.0

    def test_irregular_weak_drive(self, libration_trajectory):
        # time-periodic but the orbit degenerates to a retraced arc:
        # not a limit cycle
        spec = power_spectrum(libration_trajectory)
        report = classify_phase(libration_trajectory, spec)
        assert report.label is PhaseLabel.IRREGULAR
        assert report.amplitude > 1e-3
        assert report.loop_area is not None and report.loop_area < 0.05

    def test_holc_multiplicity(self, default_cfg):
        traj = integrate(ModelParams(1.5), BathParams(spectral_width_m=0.25), default_cfg)
        spec = power_spectrum(traj)
        report = classify_phase(traj, spec)
        assert report.label is PhaseLabel.HOLC
        assert report.multiplicity is not None and report.multiplicity > 1
        assert report.closure_error < 1e-2

    def test_markovian_persistent_oscillation_is_btc(self, default_cfg):
        bath = constant_kappa_mode(BathParams())
        traj = integrate(ModelParams(2.0), bath, default_cfg)
        report = classify_phase(traj, power_spectrum(traj))
        assert report.label is PhaseLabel.BTC

    def test_exactly_one_label(self, btc_trajectory, tiss_trajectory,
                               libration_trajectory):
        for traj in (btc_trajectory, tiss_trajectory, libration_trajectory):
            report = classify_phase(traj, power_spectrum(traj))
            assert report.label in PhaseLabel

    def test_window_shift_by_one_period_keeps_label(self, btc_trajectory):
        spec = power_spectrum(btc_trajectory)
        base = classify_phase(btc_trajectory, spec)
        p1 = 2.0 * math.pi / base.dominant_freq
        shifted = power_spectrum(btc_trajectory, (250.0 + p1, 500.0))
        again = classify_phase(btc_trajectory, shifted)
        assert again.label is base.label

    def test_nm_passthrough(self, btc_trajectory):
        spec = power_spectrum(btc_trajectory)
        report = classify_phase(btc_trajectory, spec, nm=123.4)
        assert report.nm_measure == 123.4

    def test_report_invariants(self, btc_trajectory, tiss_trajectory):
        for traj in (btc_trajectory, tiss_trajectory):
            r = classify_phase(traj, power_spectrum(traj))
            if r.label is PhaseLabel.TISS:
                assert r.amplitude < 1e-3
            if r.label is PhaseLabel.BTC:
                assert r.multiplicity == 1 and r.closure_error < 1e-2
            if r.label is PhaseLabel.HOLC:
                assert r.multiplicity > 1 and r.closure_error < 1e-2

    def test_thresholds_are_configurable(self, btc_trajectory):
        # absurdly large TISS threshold reroutes everything to TISS
        th = AnalysisThresholds(eps_tiss=10.0)
        report = classify_phase(btc_trajectory, power_spectrum(btc_trajectory), th)
        assert report.label is PhaseLabel.TISS
