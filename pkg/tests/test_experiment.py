"""
Tests for the acquisition layer: noise, counting statistics, fringes and CAR.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from bellgen.core.calibration import ThermalCalib
from bellgen.core.circuit import (
    SETTINGS,
    PhaseConfig,
    SourceParams,
    fock_output_probability,
    mzi_transfer,
    target_phases,
)
from bellgen.core.exceptions import AccidentalsWarning, FitError, ValidationError
from bellgen.core.experiment import (
    SCAN_DEFAULTS,
    SHIFTER_HARMONICS,
    CoincidenceRecord,
    DetectorBank,
    FringePoint,
    NoiseModel,
    accidental_rate,
    acquire_tomography,
    apply_noise,
    calibration_scan,
    car,
    car_slope,
    car_sweep,
    expected_counts,
    expected_records,
    fringe_period,
    fringe_to_rows,
    noon_fringe,
    noon_probability,
    sample_record,
    setting_probabilities,
    singles_rates,
    visibility,
)
from bellgen.core.quantum import DensityMatrix, TwoQubitKet, basis_state, bell_state, concurrence, fidelity
from bellgen.core.utils.seeding import split_seed

NOON_GRID = np.linspace(0.0, math.pi, 25)


def phi_plus_rho():
    return bell_state("phi+").to_density_matrix()


class TestDetectorBank:
    """Test detector bank validation."""

    def test_defaults(self):
        det = DetectorBank()
        assert det.eta == (1.0, 1.0, 1.0, 1.0)
        assert det.window == 1e-9
        assert det.dark == 0.0

    @pytest.mark.parametrize("kwargs,parameter", [
        ({"eta": (1.0, 1.0, 1.0)}, "eta"),
        ({"eta": (1.0, 0.0, 1.0, 1.0)}, "eta"),
        ({"eta": (1.0, 1.2, 1.0, 1.0)}, "eta"),
        ({"window": -1e-9}, "window"),
        ({"dark": -5.0}, "dark"),
        ({"heralding": 0.0}, "heralding"),
        ({"heralding": 1.5}, "heralding"),
    ])
    def test_invalid(self, kwargs, parameter):
        with pytest.raises(ValidationError) as exc_info:
            DetectorBank(**kwargs)
        assert exc_info.value.parameter == parameter

    def test_pair_efficiencies(self):
        det = DetectorBank(eta=(1.0, 0.8, 0.5, 0.25))
        assert_allclose(det.pair_efficiencies(), [0.5, 0.25, 0.4, 0.2])

    def test_dict_round_trip(self):
        det = DetectorBank(eta=(0.9, 0.8, 0.7, 0.6), window=2e-9, dark=100.0)
        assert DetectorBank.from_dict(det.to_dict()) == det

    def test_from_dict_unknown_key(self):
        with pytest.raises(ValidationError):
            DetectorBank.from_dict({"jitter": 1e-12})


class TestNoise:
    """Test the effective dephasing model."""

    def test_noise_model_validation(self):
        with pytest.raises(ValidationError):
            NoiseModel(visibility=1.5)
        with pytest.raises(ValidationError):
            NoiseModel(phase_jitter=-0.1)

    def test_coherence_factor(self):
        assert NoiseModel(0.9, 0.2).coherence == pytest.approx(0.9 * math.exp(-0.02))

    def test_noiseless_limit(self):
        psi = bell_state("psi+")
        assert_allclose(apply_noise(psi, NoiseModel()).entries, psi.projector(), atol=1e-15)

    def test_full_dephasing(self):
        rho = apply_noise(bell_state("phi+"), NoiseModel(visibility=0.0))
        assert_allclose(rho.entries, np.diag([0.5, 0.0, 0.0, 0.5]), atol=1e-15)
        assert concurrence(rho) == pytest.approx(0.0, abs=1e-12)

    def test_partial_visibility_fidelity(self):
        """F(Phi+) = (1 + V) / 2 because only the |00>-|11> coherence is damped."""
        rho = apply_noise(bell_state("phi+"), NoiseModel(visibility=0.85))
        assert fidelity(rho, bell_state("phi+")) == pytest.approx(0.925, abs=1e-12)

    def test_intra_source_coherence_untouched(self):
        """|00> and |01> come from the same source and keep their coherence."""
        psi = bell_state("phi+")
        product = TwoQubitKet([1.0, 1.0, 0.0, 0.0])
        rho = apply_noise(product, NoiseModel(visibility=0.0))
        assert rho.entries[0, 1] == pytest.approx(0.5)
        assert apply_noise(psi, NoiseModel(visibility=0.0)).entries[0, 3] == 0.0

    def test_jitter_ensemble_average(self):
        rho = apply_noise(bell_state("phi+"), NoiseModel(visibility=1.0, phase_jitter=0.3))
        assert rho.entries[0, 3].real == pytest.approx(0.5 * math.exp(-0.045))

    @pytest.mark.parametrize("rng_seed", [None, 0, 3, 4, 2 ** 63])
    def test_seed_does_not_change_jitter_model(self, rng_seed):
        """Jitter always enters as its Gaussian average, seeded or not."""
        nm = NoiseModel(visibility=1.0, phase_jitter=0.5)
        rho = apply_noise(bell_state("phi+"), nm, rng_seed=rng_seed)
        expected = (1.0 + math.exp(-0.5 ** 2 / 2.0)) / 2.0
        assert fidelity(rho, bell_state("phi+")) == pytest.approx(expected, abs=1e-12)
        assert_allclose(rho.entries, apply_noise(bell_state("phi+"), nm).entries, atol=1e-15)

    def test_invalid_seed_rejected(self):
        with pytest.raises(ValidationError):
            apply_noise(bell_state("phi+"), NoiseModel(), rng_seed=-1)

    @pytest.mark.parametrize("label", ["phi+", "phi-", "psi+", "psi-", "00", "11"])
    @pytest.mark.parametrize("v", [0.0, 0.3, 0.97])
    def test_output_is_density_matrix(self, label, v):
        psi = bell_state(label) if label.startswith(("phi", "psi")) else basis_state(label)
        rho = apply_noise(psi, NoiseModel(visibility=v, phase_jitter=0.1))
        assert isinstance(rho, DensityMatrix)
        assert np.trace(rho.entries).real == pytest.approx(1.0)


class TestCounting:
    """Test expected counts, accidentals and Poisson sampling."""

    def test_phi_plus_zz_counts(self):
        counts = expected_counts(phi_plus_rho(), "ZZ", DetectorBank(), 1000.0, 2.0, include_accidentals=False)
        assert_allclose(counts, [1000.0, 0.0, 0.0, 1000.0], atol=1e-9)

    def test_efficiency_product(self):
        det = DetectorBank(eta=(1.0, 1.0, 0.5, 0.5))
        counts = expected_counts(phi_plus_rho(), "ZZ", det, 1000.0, 2.0, include_accidentals=False)
        assert_allclose(counts, [500.0, 0.0, 0.0, 500.0], atol=1e-9)

    def test_zero_rate_leaves_accidental_floor(self):
        det = DetectorBank(dark=100.0, window=1e-9)
        counts = expected_counts(phi_plus_rho(), "XX", det, 0.0, 2.0)
        assert_allclose(counts, [2e-5] * 4)

    @pytest.mark.parametrize("setting", SETTINGS)
    def test_counts_sum_over_setting(self, setting):
        """Equal efficiencies: every setting collects pair_rate * t * eta^2 coincidences."""
        det = DetectorBank(eta=(0.9, 0.9, 0.9, 0.9))
        rho = apply_noise(bell_state("psi-"), NoiseModel(0.8))
        counts = expected_counts(rho, setting, det, 1000.0, 2.0, include_accidentals=False)
        assert counts.sum() == pytest.approx(2000.0 * 0.81, abs=1e-9)

    def test_phi_plus_projection_probabilities(self):
        """Correlated outcomes at 0.5 in matching bases, 0.25 across mixed bases."""
        rho = phi_plus_rho()
        for setting in SETTINGS:
            probs = setting_probabilities(rho, setting)
            if setting in ("XX", "ZZ"):
                assert_allclose(probs, [0.5, 0.0, 0.0, 0.5], atol=1e-12)
            elif setting == "YY":
                assert_allclose(probs, [0.0, 0.5, 0.5, 0.0], atol=1e-12)
            else:
                assert_allclose(probs, [0.25] * 4, atol=1e-12)

    def test_accidental_rate(self):
        assert accidental_rate(1e5, 1e5, 1e-9) == pytest.approx(10.0)
        assert accidental_rate(1e5, 1e5, 0.0) == 0.0
        with pytest.raises(ValidationError):
            accidental_rate(-1.0, 1e5, 1e-9)

    def test_singles_rates(self):
        singles = singles_rates(phi_plus_rho(), "ZZ", DetectorBank(dark=10.0), 1000.0)
        assert_allclose(singles, [5e4 + 10.0] * 4)

    def test_sample_zero_expected(self):
        record = sample_record([0.0, 0.0, 0.0, 0.0], 1)
        assert record.counts == (0.0, 0.0, 0.0, 0.0)

    def test_sample_deterministic(self):
        assert sample_record([10.0, 20.0, 30.0, 40.0], 9) == sample_record([10.0, 20.0, 30.0, 40.0], 9)

    def test_sample_mean(self):
        """The mean of 10^4 draws at 1000 lies within three standard errors."""
        draws = [sample_record([1000.0] * 4, s).counts for s in split_seed(2, 2500)]
        mean = float(np.mean(draws))
        assert abs(mean - 1000.0) < 3.0 * math.sqrt(1000.0 / 1e4)

    def test_sample_rejects_negative(self):
        with pytest.raises(ValidationError):
            sample_record([-1.0, 0.0, 0.0, 0.0], 1)

    def test_sample_rejects_bad_seed(self):
        with pytest.raises(ValidationError):
            sample_record([1.0, 0.0, 0.0, 0.0], -3)


class TestCoincidenceRecord:
    """Test the record type."""

    def test_normalizes_setting(self):
        record = CoincidenceRecord(("X", "Z"), (1, 2, 3, 4), 2.0)
        assert record.setting == "XZ"
        assert record.total == 10.0

    def test_invalid_counts(self):
        with pytest.raises(ValidationError):
            CoincidenceRecord("XX", (1, 2, 3), 2.0)
        with pytest.raises(ValidationError):
            CoincidenceRecord("XX", (1, -2, 3, 4), 2.0)

    def test_invalid_integration(self):
        with pytest.raises(ValidationError):
            CoincidenceRecord("XX", (1, 2, 3, 4), 0.0)

    def test_dict_round_trip(self):
        record = CoincidenceRecord("YZ", (5, 0, 7, 1), 2.0, True, 42)
        data = record.to_dict()
        assert data["counts"] == [5, 0, 7, 1]
        assert data["integration_s"] == 2.0
        assert CoincidenceRecord.from_dict(data) == record

    def test_from_dict_missing_counts(self):
        with pytest.raises(ValidationError):
            CoincidenceRecord.from_dict({"setting": "XX"})


class TestAcquisition:
    """Test the full tomography acquisition."""

    def test_nine_settings_in_order(self):
        records = acquire_tomography(target_phases("phi+"), SourceParams(), DetectorBank(),
                                     NoiseModel(), 1000.0, 2.0, 0)
        assert [r.setting for r in records] == list(SETTINGS)
        assert all(r.integration == 2.0 for r in records)
        assert all(r.accidentals_subtracted for r in records)

    def test_phi_plus_zz_populates_correlated_pairs(self):
        records = acquire_tomography(target_phases("phi+"), SourceParams(), DetectorBank(window=0.0),
                                     NoiseModel(), 1000.0, 2.0, 3)
        zz = records[SETTINGS.index("ZZ")]
        assert zz.counts[1] == 0 and zz.counts[2] == 0
        assert zz.counts[0] > 0 and zz.counts[3] > 0

    def test_deterministic(self):
        args = (target_phases("psi-"), SourceParams(), DetectorBank(), NoiseModel(0.9), 1000.0, 2.0)
        assert acquire_tomography(*args, seed=17) == acquire_tomography(*args, seed=17)
        assert acquire_tomography(*args, seed=17) != acquire_tomography(*args, seed=18)

    def test_raw_counts_keep_accidentals(self):
        records = acquire_tomography(target_phases("phi+"), SourceParams(), DetectorBank(),
                                     NoiseModel(), 1000.0, 2.0, 3, subtract_accidentals=False)
        assert not any(r.accidentals_subtracted for r in records)
        assert all(float(c).is_integer() for r in records for c in r.counts)

    def test_expected_records(self):
        records = expected_records(phi_plus_rho())
        assert len(records) == 9
        assert records[SETTINGS.index("ZZ")].counts == pytest.approx((1000.0, 0.0, 0.0, 1000.0), abs=1e-9)


class TestNoonFringe:
    """Test the two-photon fringe and its visibility."""

    def test_noon_probability_extremes(self):
        assert float(noon_probability(0.0)) == pytest.approx(1.0)
        assert float(noon_probability(math.pi / 2)) == pytest.approx(0.0, abs=1e-15)
        assert float(noon_probability(0.0, offset=math.pi)) == pytest.approx(0.0, abs=1e-15)

    def test_visibility_reduces_contrast_not_mean(self):
        grid = np.linspace(0.0, math.pi, 64, endpoint=False)
        p = noon_probability(grid, visibility=0.6)
        assert float(np.mean(p)) == pytest.approx(0.5, abs=1e-12)
        assert float(p.max()) == pytest.approx(0.8)
        assert float(p.min()) == pytest.approx(0.2)

    def test_ideal_fringe_matches_fock_oracle(self):
        fringe = noon_fringe(NOON_GRID, NoiseModel(), 1000.0, 2.0, seed=0)
        for point in fringe:
            oracle = fock_output_probability(mzi_transfer(point.x), [1, 1], [1, 1])
            assert point.expected / 2000.0 == pytest.approx(oracle, abs=1e-9)

    def test_fringe_is_seeded(self):
        assert noon_fringe(NOON_GRID, NoiseModel(), 1000.0, 2.0, 5) == noon_fringe(NOON_GRID, NoiseModel(), 1000.0, 2.0, 5)

    def test_jitter_reduces_visibility(self):
        fringe = noon_fringe(NOON_GRID, NoiseModel(1.0, 0.1), 1000.0, 2.0, 0)
        expected_min = min(p.expected for p in fringe)
        assert expected_min == pytest.approx(2000.0 * (1.0 - math.exp(-0.02)) / 2.0, rel=1e-9)

    def test_detector_bank_scales_and_adds_floor(self):
        det = DetectorBank(eta=(0.5, 0.5, 1.0, 1.0))
        fringe = noon_fringe(NOON_GRID, NoiseModel(), 1000.0, 2.0, 0, det=det)
        floor = (0.5 * 1000.0 / 0.01) ** 2 * 1e-9 * 2.0
        assert fringe[0].expected == pytest.approx(0.25 * 2000.0 + floor)

    def test_empty_grid(self):
        with pytest.raises(ValidationError):
            noon_fringe([], NoiseModel(), 1000.0, 2.0, 0)

    def test_fringe_rows(self):
        rows = fringe_to_rows([FringePoint(0.0, 3.0, 2.5)])
        assert rows == [{"x": 0.0, "counts": 3.0, "expected": 2.5}]

    def test_perfect_cosine_visibility(self):
        fringe = [(x, 1000.0 * (1.0 + math.cos(2 * x)) / 2.0) for x in NOON_GRID]
        result = visibility(fringe)
        assert result.fit_visibility == pytest.approx(1.0, abs=1e-6)
        assert result.hybrid_visibility == pytest.approx(1.0, abs=1e-6)

    def test_constant_signal(self):
        result = visibility([(x, 500.0) for x in NOON_GRID])
        assert result.fit_visibility == pytest.approx(0.0, abs=1e-9)
        assert result.hybrid_visibility == pytest.approx(0.0, abs=1e-9)

    def test_noisy_visibility_recovered(self):
        """V = 0.99 with Poisson noise at 1 kHz and 20 s per point."""
        fringe = noon_fringe(NOON_GRID, NoiseModel(visibility=0.99), 1000.0, 20.0, seed=8)
        result = visibility(fringe)
        assert result.fit_visibility == pytest.approx(0.99, abs=0.01)
        assert result.fit_error < 0.01

    def test_period_is_pi(self):
        fringe = noon_fringe(NOON_GRID, NoiseModel(visibility=0.99), 1000.0, 20.0, seed=8)
        period, error = fringe_period(fringe)
        assert period == pytest.approx(math.pi, abs=max(3.0 * error, 0.01))

    def test_too_few_points(self):
        with pytest.raises(ValidationError):
            visibility([(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)])

    def test_span_shorter_than_period(self):
        with pytest.raises(ValidationError):
            visibility([(x, 10.0 + x) for x in np.linspace(0.0, 1.0, 10)])

    def test_dark_fringe_has_no_mean_level(self):
        with pytest.raises(FitError):
            visibility([(x, 0.0) for x in NOON_GRID])

    def test_to_dict(self):
        fringe = [(x, 1000.0 * (1.0 + math.cos(2 * x)) / 2.0) for x in NOON_GRID]
        assert set(visibility(fringe).to_dict()) == {
            "fit_visibility", "fit_error", "hybrid_visibility", "hybrid_error",
            "mean_level", "amplitude", "phase_offset", "residual_norm",
        }


class TestCalibrationScan:
    """Test simulated shifter scans."""

    def test_phi2_fringe_shape(self):
        calib = ThermalCalib(0.3, 1.0, 0.02)
        voltages = np.linspace(0.0, 10.0, 21)
        cfg, pair = SCAN_DEFAULTS["phi2"]
        scan = calibration_scan("phi2", voltages, cfg, SourceParams(), DetectorBank(), 0, calib,
                                rail_pair=pair, poisson=False)
        expected = 500.0 * np.sin(calib.phase(voltages) / 2.0) ** 2
        assert_allclose([rate for _, rate in scan], expected, atol=1e-9)

    def test_seeded(self):
        calib = ThermalCalib(0.3, 1.0, 0.02)
        args = ("phi2", np.linspace(0.0, 10.0, 21), PhaseConfig(), SourceParams(), DetectorBank())
        assert calibration_scan(*args, 4, calib) == calibration_scan(*args, 4, calib)

    def test_harmonics(self):
        assert SHIFTER_HARMONICS["theta2"] == 2
        assert all(m == 1 for shifter, m in SHIFTER_HARMONICS.items() if shifter != "theta2")

    def test_unknown_shifter(self):
        with pytest.raises(ValidationError):
            calibration_scan("phi9", [0.0, 1.0], PhaseConfig(), SourceParams(), DetectorBank(), 0,
                             ThermalCalib(0.0, 1.0))

    def test_bad_rail_pair(self):
        with pytest.raises(ValidationError):
            calibration_scan("phi2", [0.0, 1.0], PhaseConfig(), SourceParams(), DetectorBank(), 0,
                             ThermalCalib(0.0, 1.0), rail_pair=("a", "b"))


class TestCar:
    """Test the coincidence-to-accidental ratio."""

    def test_default_scenario(self):
        """1 kHz with a 1 ns window and 1% heralding gives CAR = 100."""
        assert car(1000.0, DetectorBank()) == pytest.approx(100.0)

    def test_inverse_rate_law(self):
        points = car_sweep(np.logspace(4.0, 6.0, 9), DetectorBank())
        assert car_slope(points) == pytest.approx(-1.0, abs=0.05)
        assert points[0].car > points[-1].car

    def test_single_point_has_no_slope(self):
        points = car_sweep([1e4], DetectorBank())
        assert len(points) == 1
        assert car_slope(points) is None

    def test_zero_window_sentinel(self):
        with pytest.warns(AccidentalsWarning):
            assert car(1000.0, DetectorBank(window=0.0)) == math.inf
        with pytest.warns(AccidentalsWarning):
            points = car_sweep([1e4, 1e5], DetectorBank(window=0.0))
        assert all(p.car == math.inf for p in points)
        assert car_slope(points) is None

    def test_sweep_rejects_bad_rates(self):
        with pytest.raises(ValidationError):
            car_sweep([], DetectorBank())
        with pytest.raises(ValidationError):
            car_sweep([0.0], DetectorBank())
