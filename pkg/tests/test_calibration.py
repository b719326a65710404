"""
Tests for thermo-optic shifter calibration: voltage/phase conversion and fringe fitting.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from bellgen.core.calibration import (
    CalibrationFit,
    ThermalCalib,
    calib_phase_from_voltage,
    fit_calibration,
    voltage_for_phase,
)
from bellgen.core.circuit import PhaseConfig, SourceParams
from bellgen.core.exceptions import FitError, PhaseRangeError, ValidationError
from bellgen.core.experiment import SCAN_DEFAULTS, DetectorBank, calibration_scan

TRUE_CALIB = ThermalCalib(xi0=0.3, alpha=1.0, beta=0.02)
VOLTAGES = np.linspace(0.0, 10.0, 201)


def synthetic_scan(shifter="phi2", calib=TRUE_CALIB, voltages=VOLTAGES, rate_noise=0.0, seed=0):
    cfg, pair = SCAN_DEFAULTS[shifter]
    return calibration_scan(
        shifter, voltages, cfg, SourceParams(), DetectorBank(), seed, calib,
        rail_pair=pair, rate_noise=rate_noise, poisson=False,
    )


def circular_distance(a, b, period=2 * math.pi):
    d = (a - b) % period
    return min(d, period - d)


class TestThermalCalib:
    """Test the calibration record itself."""

    def test_defaults_and_saturation(self):
        assert ThermalCalib(0.0, 1.0).saturation == math.inf
        assert TRUE_CALIB.saturation == pytest.approx(0.3 + 50.0)

    @pytest.mark.parametrize("kwargs,parameter", [
        ({"xi0": 0.0, "alpha": 0.0}, "alpha"),
        ({"xi0": 0.0, "alpha": -1.0}, "alpha"),
        ({"xi0": 0.0, "alpha": 1.0, "beta": -0.1}, "beta"),
        ({"xi0": float("nan"), "alpha": 1.0}, "xi0"),
        ({"xi0": "zero", "alpha": 1.0}, "xi0"),
    ])
    def test_invalid_fields(self, kwargs, parameter):
        with pytest.raises(ValidationError) as exc_info:
            ThermalCalib(**kwargs)
        assert exc_info.value.parameter == parameter

    def test_dict_round_trip(self):
        assert ThermalCalib.from_dict(TRUE_CALIB.to_dict()) == TRUE_CALIB

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValidationError):
            ThermalCalib.from_dict({"xi0": 0.0, "alpha": 1.0, "gamma": 2.0})


class TestPhaseVoltage:
    """Test the forward model and its inverse."""

    def test_forward_model(self):
        assert calib_phase_from_voltage(TRUE_CALIB, 0.0) == pytest.approx(0.3)
        assert calib_phase_from_voltage(TRUE_CALIB, 5.0) == pytest.approx(0.3 + 25.0 / 1.5)
        assert isinstance(TRUE_CALIB.phase(1.0), float)

    def test_forward_model_arrays(self):
        phases = calib_phase_from_voltage(TRUE_CALIB, [0.0, 1.0, 2.0])
        assert phases.shape == (3,)
        assert_allclose(phases, [0.3, 0.3 + 1.0 / 1.02, 0.3 + 4.0 / 1.08])

    def test_forward_model_monotone_and_bounded(self):
        phases = calib_phase_from_voltage(TRUE_CALIB, np.linspace(0.0, 100.0, 1000))
        assert np.all(np.diff(phases) > 0.0)
        assert np.all(phases < TRUE_CALIB.saturation)

    @pytest.mark.parametrize("target", [0.0, 0.3, 1.0, math.pi, 5.5, -2.0, 12.0])
    def test_inverse_round_trip(self, target):
        """phase(voltage_for_phase(t)) equals t modulo 2*pi."""
        voltage = voltage_for_phase(TRUE_CALIB, target)
        assert voltage >= 0.0
        phase = calib_phase_from_voltage(TRUE_CALIB, voltage)
        assert circular_distance(phase, target) < 1e-9

    def test_inverse_picks_smallest_branch(self):
        """The returned voltage needs less than one extra turn of phase."""
        voltage = voltage_for_phase(TRUE_CALIB, 0.2)
        assert calib_phase_from_voltage(TRUE_CALIB, voltage) - TRUE_CALIB.xi0 < 2 * math.pi

    def test_offset_phase_needs_zero_voltage(self):
        assert voltage_for_phase(TRUE_CALIB, 0.3 + 2 * math.pi) == pytest.approx(0.0, abs=1e-6)

    def test_unreachable_phase(self):
        """A strongly saturating shifter cannot reach phases beyond xi0 + alpha/beta."""
        calib = ThermalCalib(xi0=0.3, alpha=1.0, beta=0.5)
        assert voltage_for_phase(calib, 0.3 + 1.5) > 0.0
        with pytest.raises(PhaseRangeError) as exc_info:
            voltage_for_phase(calib, 0.3 + 3.0)
        assert exc_info.value.saturation == pytest.approx(2.3)
        assert "2.3" in str(exc_info.value)

    def test_non_finite_target(self):
        with pytest.raises(ValidationError):
            voltage_for_phase(TRUE_CALIB, float("inf"))


class TestFitCalibration:
    """Test fringe fitting on synthetic scans."""

    def test_noiseless_recovery(self):
        fit = fit_calibration(synthetic_scan())
        assert isinstance(fit, CalibrationFit)
        assert circular_distance(fit.calib.xi0, TRUE_CALIB.xi0) < 1e-6
        assert fit.calib.alpha == pytest.approx(TRUE_CALIB.alpha, abs=1e-6)
        assert fit.calib.beta == pytest.approx(TRUE_CALIB.beta, abs=1e-6)
        assert fit.amplitude == pytest.approx(500.0, rel=1e-6)
        assert fit.background == pytest.approx(0.0, abs=1e-3)
        assert fit.harmonic == 1
        assert fit.n_points == 201

    def test_one_percent_noise(self):
        """Multiplicative 1% rate noise still recovers the calibration within 1%."""
        fit = fit_calibration(synthetic_scan(rate_noise=0.01, seed=11))
        assert fit.calib.alpha == pytest.approx(TRUE_CALIB.alpha, rel=0.01)
        assert fit.calib.beta == pytest.approx(TRUE_CALIB.beta, rel=0.01)
        assert circular_distance(fit.calib.xi0, TRUE_CALIB.xi0) < 0.01

    @pytest.mark.parametrize("shifter", ["phi1", "theta1", "phi3", "theta3", "phi4", "theta4"])
    def test_other_shifters(self, shifter):
        fit = fit_calibration(synthetic_scan(shifter))
        assert circular_distance(fit.calib.xi0, TRUE_CALIB.xi0) < 1e-5
        assert fit.calib.alpha == pytest.approx(TRUE_CALIB.alpha, rel=1e-5)

    def test_theta2_second_harmonic(self):
        """theta2 enters the state twice, so its scan needs harmonic 2."""
        fit = fit_calibration(synthetic_scan("theta2"), harmonic=2)
        assert circular_distance(fit.calib.xi0, TRUE_CALIB.xi0, math.pi) < 1e-5
        assert fit.calib.alpha == pytest.approx(TRUE_CALIB.alpha, rel=1e-5)
        assert fit.calib.beta == pytest.approx(TRUE_CALIB.beta, rel=1e-4)

    def test_theta2_fringe_twice_as_fast(self):
        """Fitting both scans as first-harmonic fringes shows theta2 oscillating twice as fast."""
        phi2_fit = fit_calibration(synthetic_scan("phi2"), harmonic=1)
        theta2_fit = fit_calibration(synthetic_scan("theta2"), harmonic=1)
        ratio = theta2_fit.calib.alpha / phi2_fit.calib.alpha
        assert ratio == pytest.approx(2.0, rel=0.05)

    def test_model_and_lookup(self):
        fit = fit_calibration(synthetic_scan())
        voltages, rates = np.array(synthetic_scan()).T
        assert_allclose(fit.model(voltages), rates, atol=1e-2)
        lookup = fit.lookup([0.0, math.pi])
        assert [phase for phase, _ in lookup] == [0.0, math.pi]
        for phase, voltage in lookup:
            assert circular_distance(fit.calib.phase(voltage), phase) < 1e-9

    def test_to_dict(self):
        data = fit_calibration(synthetic_scan()).to_dict()
        assert set(data) == {
            "calibration", "saturation", "amplitude", "background", "harmonic",
            "residual_norm", "rms", "n_points", "restarts",
        }
        assert data["saturation"] == pytest.approx(TRUE_CALIB.saturation, rel=1e-5)

    def test_deterministic(self):
        scan = synthetic_scan(rate_noise=0.02, seed=5)
        assert fit_calibration(scan, seed=3) == fit_calibration(scan, seed=3)


class TestFitFailures:
    """Test preconditions and fit errors."""

    def test_too_few_points(self):
        with pytest.raises(ValidationError) as exc_info:
            fit_calibration(synthetic_scan(voltages=np.linspace(0.0, 10.0, 7)))
        assert exc_info.value.parameter == "scan"

    def test_malformed_scan(self):
        with pytest.raises(ValidationError):
            fit_calibration([(1.0,)] * 10)

    def test_single_voltage(self):
        with pytest.raises(ValidationError):
            fit_calibration([(1.0, float(i)) for i in range(10)])

    @pytest.mark.parametrize("harmonic", [0, 3])
    def test_bad_harmonic(self, harmonic):
        with pytest.raises(ValidationError):
            fit_calibration(synthetic_scan(), harmonic=harmonic)

    def test_flat_scan(self):
        scan = [(v, 5.0) for v in np.linspace(0.0, 10.0, 50)]
        with pytest.raises(FitError) as exc_info:
            fit_calibration(scan)
        assert "flat" in str(exc_info.value)

    def test_zero_amplitude_configuration(self):
        """With only source B pumped, pair (a, c) stays dark and the scan is flat."""
        scan = calibration_scan(
            "phi2", VOLTAGES, PhaseConfig(phi1=0.0), SourceParams(), DetectorBank(), 0, TRUE_CALIB,
        )
        assert all(rate == 0.0 for _, rate in scan)
        with pytest.raises(FitError):
            fit_calibration(scan)

    def test_scan_shorter_than_one_fringe(self):
        scan = synthetic_scan(voltages=np.linspace(0.0, 1.0, 50))
        with pytest.raises(FitError) as exc_info:
            fit_calibration(scan)
        assert exc_info.value.diagnostics
