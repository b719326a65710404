"""
Stochastic acquisition layer.

Turns generated states into Poissonian coincidence counts through lumped
detector efficiencies, accidental coincidences and an effective dephasing
model. Also simulates the two-photon N00N fringe, shifter calibration
scans and the coincidence-to-accidental ratio.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .calibration import ThermalCalib, calib_phase_from_voltage
from .circuit import (
    ANALYSIS_SHIFTERS,
    RAIL_PAIRS,
    SETTINGS,
    SHIFTERS,
    PhaseConfig,
    SourceParams,
    analysis_vectors,
    generate_state,
    parse_setting,
    projector_from_phases,
    state_amplitudes,
)
from .exceptions import AccidentalsWarning, FitError, ValidationError
from .quantum import DensityMatrix, TwoQubitKet, as_density_matrix
from .utils.seeding import make_rng, split_seed, validate_seed

logger = logging.getLogger(__name__)

RAILS = ("a", "b", "c", "d")

MIN_FRINGE_POINTS = 6


def _non_negative(name: str, value: Any) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ValidationError(name, value, "non-negative number")
    if not math.isfinite(number) or number < 0.0:
        raise ValidationError(name, value, "finite non-negative number")
    return number


def _positive(name: str, value: Any) -> float:
    number = _non_negative(name, value)
    if number == 0.0:
        raise ValidationError(name, value, "positive number")
    return number


@dataclass(frozen=True)
class DetectorBank:
    """
    Lumped detection chain for rails a, b, c, d.

    heralding is the probability that the partner of a detected photon is
    also detected; it sets the singles level that feeds accidentals.
    """

    eta: Tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    window: float = 1e-9
    dark: float = 0.0
    heralding: float = 0.01

    def __post_init__(self):
        try:
            eta = tuple(float(e) for e in self.eta)
        except (TypeError, ValueError):
            raise ValidationError("eta", self.eta, "4 efficiencies in (0, 1]")
        if len(eta) != 4 or not all(0.0 < e <= 1.0 for e in eta):
            raise ValidationError("eta", self.eta, "4 efficiencies in (0, 1]")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "window", _non_negative("window", self.window))
        object.__setattr__(self, "dark", _non_negative("dark", self.dark))
        heralding = _positive("heralding", self.heralding)
        if heralding > 1.0:
            raise ValidationError("heralding", heralding, "probability in (0, 1]")
        object.__setattr__(self, "heralding", heralding)

    def pair_efficiencies(self) -> np.ndarray:
        """N_jk = eta_j * eta_k in RAIL_PAIRS order."""
        eta = dict(zip(RAILS, self.eta))
        return np.array([eta[j] * eta[k] for j, k in RAIL_PAIRS])

    def to_dict(self) -> Dict[str, Any]:
        return {"eta": list(self.eta), "window": self.window, "dark": self.dark, "heralding": self.heralding}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DetectorBank":
        unknown = set(data) - {"eta", "window", "dark", "heralding"}
        if unknown:
            raise ValidationError("detectors", sorted(unknown), "keys among ['eta', 'window', 'dark', 'heralding']")
        return cls(**dict(data))


@dataclass(frozen=True)
class NoiseModel:
    """Effective coherence loss between the two sources."""

    visibility: float = 1.0
    phase_jitter: float = 0.0

    def __post_init__(self):
        visibility = _non_negative("visibility", self.visibility)
        if visibility > 1.0:
            raise ValidationError("visibility", visibility, "value in [0, 1]")
        object.__setattr__(self, "visibility", visibility)
        object.__setattr__(self, "phase_jitter", _non_negative("phase_jitter", self.phase_jitter))

    @property
    def coherence(self) -> float:
        """Factor applied to inter-source coherences: V * exp(-sigma^2 / 2)."""
        return self.visibility * math.exp(-self.phase_jitter ** 2 / 2.0)

    def to_dict(self) -> Dict[str, float]:
        return {"visibility": self.visibility, "phase_jitter": self.phase_jitter}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "NoiseModel":
        unknown = set(data) - {"visibility", "phase_jitter"}
        if unknown:
            raise ValidationError("noise", sorted(unknown), "keys among ['visibility', 'phase_jitter']")
        return cls(**dict(data))


@dataclass(frozen=True)
class CoincidenceRecord:
    """
    Coincidence counts of one Pauli setting.

    counts follow RAIL_PAIRS order (a,c), (a,d), (b,c), (b,d). Sampled and
    accidental-subtracted records hold integral values; exact expected
    counts may be fractional.
    """

    setting: str
    counts: Tuple[float, float, float, float]
    integration: float
    accidentals_subtracted: bool = False
    seed: Optional[int] = None

    def __post_init__(self):
        pauli_a, pauli_b = parse_setting(self.setting)
        object.__setattr__(self, "setting", pauli_a + pauli_b)
        try:
            counts = tuple(float(c) for c in self.counts)
        except (TypeError, ValueError):
            raise ValidationError("counts", self.counts, "4 non-negative counts")
        if len(counts) != 4 or not all(math.isfinite(c) and c >= 0.0 for c in counts):
            raise ValidationError("counts", self.counts, "4 non-negative counts")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "integration", _positive("integration", self.integration))
        object.__setattr__(self, "accidentals_subtracted", bool(self.accidentals_subtracted))

    @property
    def total(self) -> float:
        return float(sum(self.counts))

    def with_counts(self, counts: Sequence[float], seed: Optional[int] = None) -> "CoincidenceRecord":
        return CoincidenceRecord(self.setting, tuple(counts), self.integration, self.accidentals_subtracted, seed)

    def to_dict(self) -> Dict[str, Any]:
        counts = [int(c) if float(c).is_integer() else c for c in self.counts]
        return {
            "setting": self.setting,
            "counts": counts,
            "integration_s": self.integration,
            "accidentals_subtracted": self.accidentals_subtracted,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CoincidenceRecord":
        try:
            return cls(
                setting=data["setting"],
                counts=tuple(data["counts"]),
                integration=data.get("integration_s", data.get("integration", 1.0)),
                accidentals_subtracted=data.get("accidentals_subtracted", False),
                seed=data.get("seed"),
            )
        except KeyError as e:
            raise ValidationError("records", dict(data), f"record with field {e}")


@dataclass(frozen=True)
class FringePoint:
    x: float
    counts: float
    expected: float


@dataclass(frozen=True)
class VisibilityResult:
    """Fit and hybrid visibility estimators of a two-photon fringe."""

    fit_visibility: float
    fit_error: float
    hybrid_visibility: float
    hybrid_error: float
    mean_level: float
    amplitude: float
    phase_offset: float
    residual_norm: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "fit_visibility": self.fit_visibility,
            "fit_error": self.fit_error,
            "hybrid_visibility": self.hybrid_visibility,
            "hybrid_error": self.hybrid_error,
            "mean_level": self.mean_level,
            "amplitude": self.amplitude,
            "phase_offset": self.phase_offset,
            "residual_norm": self.residual_norm,
        }


@dataclass(frozen=True)
class CarPoint:
    pgr: float
    true_rate: float
    accidental_rate: float
    car: float


def apply_noise(psi: TwoQubitKet, nm: NoiseModel, rng_seed: Optional[int] = None) -> DensityMatrix:
    """
    Dephase the coherences between the two sources.

    The coherences between the |00>,|01> block (source A) and the |10>,|11>
    block (source B) are multiplied by V exp(-sigma^2 / 2), the jitter
    entering only through its Gaussian average.

    Args:
        psi: Generated pure state
        nm: Noise model
        rng_seed: Optional seed; validated, the result does not depend on it

    Returns:
        DensityMatrix
    """
    if rng_seed is not None:
        validate_seed(rng_seed, "rng_seed")
    rho = psi.projector()
    factor = nm.coherence

    # Source A fills |00>, |01>; source B fills |10>, |11>
    weights = np.ones((4, 4), dtype=complex)
    weights[:2, 2:] = factor
    weights[2:, :2] = np.conj(factor)
    return DensityMatrix(rho * weights)


def accidental_rate(singles_j: float, singles_k: float, window: float) -> float:
    """Two-fold accidental rate S_j * S_k * window (Hz)."""
    return (
        _non_negative("singles_j", singles_j)
        * _non_negative("singles_k", singles_k)
        * _non_negative("window", window)
    )


def _setting_index(setting) -> int:
    pauli_a, pauli_b = parse_setting(setting)
    return SETTINGS.index(pauli_a + pauli_b)


def setting_probabilities(rho, setting) -> np.ndarray:
    """Tr(rho Pi_jk) for the four rail pairs of a Pauli setting."""
    rho = as_density_matrix(rho)
    vectors = analysis_vectors()[_setting_index(setting)]
    probs = np.einsum("ri,ij,rj->r", vectors.conj(), rho.entries, vectors).real
    return np.clip(probs, 0.0, None)


def singles_rates(rho, setting, det: DetectorBank, pair_rate: float) -> np.ndarray:
    """
    Singles rate per detector (a, b, c, d).

    S_j = eta_j * pair_rate * P(rail j) / heralding + dark, where P(rail j)
    is the marginal probability of the post-selected photon leaving on j.
    """
    pair_rate = _non_negative("pair_rate", pair_rate)
    p = setting_probabilities(rho, setting)
    marginals = np.array([p[0] + p[1], p[2] + p[3], p[0] + p[2], p[1] + p[3]])
    return np.asarray(det.eta) * pair_rate * marginals / det.heralding + det.dark


def _accidentals_per_pair(singles: np.ndarray, window: float) -> np.ndarray:
    idx = {rail: i for i, rail in enumerate(RAILS)}
    return np.array([accidental_rate(singles[idx[j]], singles[idx[k]], window) for j, k in RAIL_PAIRS])


def expected_counts(rho, setting, det: DetectorBank, pair_rate: float, t: float,
                    include_accidentals: bool = True) -> np.ndarray:
    """
    Expected coincidences for the four rail pairs of one setting.

    C_jk = eta_j eta_k * pair_rate * t * Tr(rho Pi_jk) + R_acc,jk * t
    """
    pair_rate = _non_negative("pair_rate", pair_rate)
    t = _positive("t", t)
    rho = as_density_matrix(rho)

    counts = det.pair_efficiencies() * pair_rate * t * setting_probabilities(rho, setting)
    if include_accidentals:
        counts = counts + expected_accidentals(rho, setting, det, pair_rate, t)
    return counts


def expected_accidentals(rho, setting, det: DetectorBank, pair_rate: float, t: float) -> np.ndarray:
    singles = singles_rates(rho, setting, det, pair_rate)
    return _accidentals_per_pair(singles, det.window) * t


def sample_record(expected: Sequence[float], rng_seed: int, setting: str = "ZZ",
                  integration: float = 1.0) -> CoincidenceRecord:
    """Independent Poisson draws for the four rail pairs."""
    lam = np.asarray(expected, dtype=float)
    if lam.shape != (4,) or not np.all(np.isfinite(lam)) or np.any(lam < 0.0):
        raise ValidationError("expected", expected, "4 non-negative expected counts")
    seed = validate_seed(rng_seed, "rng_seed")
    counts = make_rng(seed).poisson(lam)
    return CoincidenceRecord(setting, tuple(int(c) for c in counts), integration, False, seed)


def noisy_state(cfg: PhaseConfig, src: SourceParams, nm: NoiseModel) -> DensityMatrix:
    return apply_noise(generate_state(cfg, src), nm)


def acquire_tomography(cfg: PhaseConfig, src: SourceParams, det: DetectorBank, nm: NoiseModel,
                       pair_rate: float, t: float, seed: int,
                       subtract_accidentals: bool = True) -> List[CoincidenceRecord]:
    """
    Simulate a full 36-count tomography run.

    The analysis phases of ``cfg`` are replaced by each Pauli setting in
    turn. Each setting samples from its own sub-seed; with
    ``subtract_accidentals`` the expected accidental counts are removed from
    the sampled counts (clipped at zero and rounded).

    Returns:
        9 records in SETTINGS order
    """
    rho = noisy_state(cfg, src, nm)
    sub_seeds = split_seed(seed, len(SETTINGS))

    records = []
    for setting, sub_seed in zip(SETTINGS, sub_seeds):
        expected = expected_counts(rho, setting, det, pair_rate, t)
        record = sample_record(expected, sub_seed, setting, t)
        if subtract_accidentals:
            accidentals = expected_accidentals(rho, setting, det, pair_rate, t)
            corrected = np.maximum(0.0, np.round(np.asarray(record.counts) - accidentals))
            record = CoincidenceRecord(setting, tuple(int(c) for c in corrected), t, True, sub_seed)
        records.append(record)

    logger.info(
        "Acquired %d settings (%.0f coincidences, %.1f s model time)",
        len(records), sum(r.total for r in records), len(records) * t,
    )
    return records


def expected_records(rho, det: Optional[DetectorBank] = None, pair_rate: float = 1000.0,
                     t: float = 2.0) -> List[CoincidenceRecord]:
    """Noiseless records holding exact expected counts without accidentals."""
    det = det or DetectorBank()
    return [
        CoincidenceRecord(setting, tuple(expected_counts(rho, setting, det, pair_rate, t, False)), t)
        for setting in SETTINGS
    ]


def noon_probability(theta3, visibility: float = 1.0, offset: float = 0.0):
    """
    Coincidence probability behind the qubit-A coupler for the two-photon N00N state.

    P_cc = (1 + V cos(2 theta3 + offset)) / 2. V multiplies only the
    oscillating term: partial distinguishability removes fringe contrast
    while the pairs still split across the two rails half of the time, so
    the mean level stays 1/2. Scaling the whole fringe by V would instead
    lose pairs. offset = 0 for the bare directional coupler; an MZI biased
    at pi/2 gives offset = pi.
    """
    theta3 = np.asarray(theta3, dtype=float)
    return (1.0 + visibility * np.cos(2.0 * theta3 + offset)) / 2.0


def noon_fringe(theta3_grid: Sequence[float], nm: NoiseModel, pair_rate: float, t: float, seed: int,
                offset: float = 0.0, det: Optional[DetectorBank] = None) -> List[FringePoint]:
    """
    Two-photon interference fringe versus theta3.

    Jitter on theta3 enters at twice the phase, so the fringe visibility is
    V * exp(-2 sigma^2). With a detector bank the fringe is scaled by
    eta_a * eta_b and sits on the accidental floor.
    """
    grid = np.asarray(theta3_grid, dtype=float).reshape(-1)
    if grid.size == 0 or not np.all(np.isfinite(grid)):
        raise ValidationError("theta3_grid", theta3_grid, "non-empty list of finite phases")
    pair_rate = _non_negative("pair_rate", pair_rate)
    t = _positive("t", t)

    fringe_visibility = nm.visibility * math.exp(-2.0 * nm.phase_jitter ** 2)
    expected = pair_rate * t * noon_probability(grid, fringe_visibility, offset)
    if det is not None:
        singles_a = det.eta[0] * pair_rate / det.heralding + det.dark
        singles_b = det.eta[1] * pair_rate / det.heralding + det.dark
        expected = det.eta[0] * det.eta[1] * expected + accidental_rate(singles_a, singles_b, det.window) * t

    counts = make_rng(seed).poisson(expected)
    return [FringePoint(float(x), float(n), float(e)) for x, n, e in zip(grid, counts, expected)]


def fringe_to_rows(fringe: Sequence[FringePoint]) -> List[Dict[str, float]]:
    return [{"x": p.x, "counts": p.counts, "expected": p.expected} for p in fringe]


def _fringe_arrays(fringe) -> Tuple[np.ndarray, np.ndarray]:
    points = [(p.x, p.counts) if isinstance(p, FringePoint) else (p[0], p[1]) for p in fringe]
    data = np.asarray(points, dtype=float).reshape(-1, 2)
    if data.shape[0] < MIN_FRINGE_POINTS:
        raise ValidationError(
            "fringe", data.shape[0], f"at least {MIN_FRINGE_POINTS} points",
            "Too few points to fit a visibility",
        )
    x, y = data[:, 0], data[:, 1]
    if not np.all(np.isfinite(data)) or np.any(y < 0.0):
        raise ValidationError("fringe", fringe, "finite phases and non-negative counts")
    step = np.ptp(x) / max(x.size - 1, 1)
    if np.ptp(x) + step < math.pi * (1.0 - 1e-9):
        raise ValidationError("fringe", float(np.ptp(x)), "points spanning one period (pi)")
    return x, y


def visibility(fringe) -> VisibilityResult:
    """
    Fringe visibility from a weighted fit of A (1 + V cos(2x + delta)) / 2 + B.

    A and B enter only through the mean level m = A/2 + B and the amplitude
    a = A V / 2, so the fit is linear in (m, a cos delta, a sin delta) and
    the fit visibility is a / m. The hybrid estimator combines the fitted
    maximum with the smallest measured count. Weights follow Poisson
    statistics, sigma = sqrt(N + 1).

    Raises:
        ValidationError: Fewer than 6 points or less than one period
        FitError: Singular fit or non-positive mean level
    """
    x, y = _fringe_arrays(fringe)
    sigma = np.sqrt(y + 1.0)
    design = np.column_stack([np.ones_like(x), np.cos(2.0 * x), -np.sin(2.0 * x)])
    weighted = design / sigma[:, None]

    normal = weighted.T @ weighted
    if np.linalg.cond(normal) > 1e12:
        raise FitError("singular visibility fit", {"n_points": x.size, "span": float(np.ptp(x))})
    cov = np.linalg.inv(normal)
    mean, c, s = cov @ (weighted.T @ (y / sigma))

    residuals = design @ np.array([mean, c, s]) - y
    residual_norm = float(np.linalg.norm(residuals))
    if mean <= 0.0:
        raise FitError("non-positive mean level", {"mean_level": float(mean), "residual_norm": residual_norm})

    amp = math.hypot(c, s)
    delta = math.atan2(s, c)
    dof = max(x.size - 3, 1)
    chi2 = float(np.sum((residuals / sigma) ** 2)) / dof
    cov = cov * max(chi2, 1.0)

    # Gradients of a and of fit maximum m + a with respect to (m, c, s)
    grad_amp = np.array([0.0, c / amp, s / amp]) if amp > 0.0 else np.zeros(3)
    fit_vis = amp / mean
    grad_vis = (grad_amp * mean - np.array([amp, 0.0, 0.0])) / mean ** 2
    fit_err = math.sqrt(max(float(grad_vis @ cov @ grad_vis), 0.0))

    peak = mean + amp
    grad_peak = np.array([1.0, 0.0, 0.0]) + grad_amp
    var_peak = max(float(grad_peak @ cov @ grad_peak), 0.0)
    trough = float(np.min(y))
    hybrid = (peak - trough) / (peak + trough)
    # d hybrid / d peak and d hybrid / d trough
    d_peak = 2.0 * trough / (peak + trough) ** 2
    d_trough = -2.0 * peak / (peak + trough) ** 2
    hybrid_err = math.sqrt(d_peak ** 2 * var_peak + d_trough ** 2 * max(trough, 1.0))

    return VisibilityResult(
        fit_visibility=float(min(max(fit_vis, 0.0), 1.0)),
        fit_error=fit_err,
        hybrid_visibility=float(min(max(hybrid, 0.0), 1.0)),
        hybrid_error=hybrid_err,
        mean_level=float(mean),
        amplitude=float(amp),
        phase_offset=float(delta),
        residual_norm=residual_norm,
    )


def fringe_period(fringe) -> Tuple[float, float]:
    """
    Fringe period with a free-frequency sinusoid fit.

    Returns:
        (period, one-sigma error) in the units of x
    """
    x, y = _fringe_arrays(fringe)
    seed = visibility(fringe)

    def model(xs, mean, amp, freq, delta):
        return mean + amp * np.cos(freq * xs + delta)

    try:
        popt, pcov = optimize.curve_fit(
            model, x, y,
            p0=[seed.mean_level, seed.amplitude, 2.0, seed.phase_offset],
            sigma=np.sqrt(y + 1.0), absolute_sigma=True, maxfev=5000,
        )
    except RuntimeError as e:
        raise FitError("period fit did not converge", {"reason": str(e)})

    freq, freq_err = abs(popt[2]), math.sqrt(abs(pcov[2, 2]))
    period = 2.0 * math.pi / freq
    return period, period * freq_err / freq


# Per-shifter harmonic of the coincidence fringe: theta2 enters twice.
SHIFTER_HARMONICS = {shifter: 2 if shifter == "theta2" else 1 for shifter in SHIFTERS}

# Base device setting and detector pair per shifter; each gives a pure sin^2 fringe with no circuit offset.
SCAN_DEFAULTS = {
    "phi1": (PhaseConfig(phi2=0.0), ("a", "d")),
    "theta1": (PhaseConfig(phi2=math.pi, phi3=math.pi / 2, phi4=math.pi / 2), ("a", "c")),
    "theta2": (PhaseConfig(phi2=math.pi, phi3=math.pi / 2, phi4=math.pi / 2), ("a", "c")),
    "phi2": (PhaseConfig(), ("a", "c")),
    "phi3": (PhaseConfig(phi1=math.pi, phi2=math.pi), ("a", "c")),
    "theta3": (PhaseConfig(phi2=math.pi / 2, phi3=math.pi / 2), ("b", "c")),
    "phi4": (PhaseConfig(phi1=math.pi, phi2=math.pi), ("a", "c")),
    "theta4": (PhaseConfig(phi1=math.pi, phi2=math.pi / 2, phi4=math.pi / 2), ("a", "d")),
}


def _pair_probability(cfg: PhaseConfig, src: SourceParams, nm: NoiseModel, projector: np.ndarray) -> float:
    """Post-selected pair probability weighted by source brightness relative to full pump."""
    amplitudes = state_amplitudes(cfg, src)
    brightness = float(np.vdot(amplitudes, amplitudes).real)
    if brightness == 0.0:
        return 0.0
    reference = src.p0 * max(src.eta_a, src.eta_b) ** 2
    rho = apply_noise(TwoQubitKet(amplitudes), nm)
    return brightness / reference * max(float(np.real(np.trace(rho.entries @ projector))), 0.0)


def calibration_scan(shifter_id: str, voltage_grid: Sequence[float], cfg: PhaseConfig,
                     src: SourceParams, det: DetectorBank, seed: int,
                     calib: ThermalCalib, pair_rate: float = 1000.0, t: float = 2.0,
                     rail_pair: Tuple[str, str] = ("a", "c"),
                     nm: Optional[NoiseModel] = None,
                     rate_noise: float = 0.0, poisson: bool = True) -> List[Tuple[float, float]]:
    """
    Coincidence rate of one detector pair while sweeping one shifter.

    The swept phase is calib's xi(V); every other phase stays at cfg. The
    rate follows source brightness, so sweeping phi1 changes it even though
    the post-selected state stays normalized. Counts are Poisson sampled
    (unless ``poisson`` is False) and optionally scaled by 1 + N(0, rate_noise).

    Returns:
        (voltage, count rate in Hz) pairs
    """
    if shifter_id not in SHIFTERS:
        raise ValidationError("shifter_id", shifter_id, f"one of {list(SHIFTERS)}")
    voltages = np.asarray(voltage_grid, dtype=float).reshape(-1)
    if voltages.size == 0 or not np.all(np.isfinite(voltages)):
        raise ValidationError("voltage_grid", voltage_grid, "non-empty list of finite voltages")
    if tuple(rail_pair) not in RAIL_PAIRS:
        raise ValidationError("rail_pair", rail_pair, f"one of {list(RAIL_PAIRS)}")
    t = _positive("t", t)
    rate_noise = _non_negative("rate_noise", rate_noise)
    nm = nm or NoiseModel()

    eta = dict(zip(RAILS, det.eta))
    efficiency = eta[rail_pair[0]] * eta[rail_pair[1]]
    projector = projector_from_phases(rail_pair[0], rail_pair[1], cfg.phi3, cfg.theta3, cfg.phi4, cfg.theta4)

    expected = np.empty(voltages.size)
    for i, phase in enumerate(calib_phase_from_voltage(calib, voltages)):
        swept = cfg.with_phase(shifter_id, float(phase))
        # Analysis shifters move the projector, not the state.
        if shifter_id in ANALYSIS_SHIFTERS:
            proj = projector_from_phases(rail_pair[0], rail_pair[1], swept.phi3, swept.theta3,
                                         swept.phi4, swept.theta4)
        else:
            proj = projector
        expected[i] = efficiency * pair_rate * t * _pair_probability(swept, src, nm, proj)

    rng = make_rng(seed)
    counts = rng.poisson(expected).astype(float) if poisson else expected
    if rate_noise > 0.0:
        counts = counts * (1.0 + rng.normal(0.0, rate_noise, counts.size))
    logger.debug("Simulated %d-point scan of %s on pair %s", voltages.size, shifter_id, "".join(rail_pair))
    return [(float(v), float(n / t)) for v, n in zip(voltages, counts)]


def car(pair_rate: float, det: DetectorBank) -> float:
    """
    Coincidence-to-accidental ratio for a maximally entangled pair stream.

    Every rail carries half of the photons; true coincidences sum over the
    four rail pairs. A zero window gives an infinite CAR with a warning.
    """
    true_rate, acc_rate = _car_rates(pair_rate, det)
    if acc_rate == 0.0:
        warnings.warn(
            "Accidental rate is zero (zero window or no singles); CAR is reported as infinite",
            AccidentalsWarning,
            stacklevel=2,
        )
        return math.inf
    return true_rate / acc_rate


def _car_rates(pair_rate: float, det: DetectorBank) -> Tuple[float, float]:
    pair_rate = _non_negative("pair_rate", pair_rate)
    singles = np.asarray(det.eta) * pair_rate / (2.0 * det.heralding) + det.dark
    true_rate = float(np.sum(det.pair_efficiencies()) * pair_rate / 4.0)
    acc_rate = float(np.sum(_accidentals_per_pair(singles, det.window)))
    return true_rate, acc_rate


def car_sweep(pgr_values: Sequence[float], det: DetectorBank) -> List[CarPoint]:
    """CAR at each pair generation rate."""
    values = [_positive("pgr", pgr) for pgr in pgr_values]
    if not values:
        raise ValidationError("pgr_values", pgr_values, "at least one pair generation rate")

    points = []
    warned = False
    for pgr in values:
        true_rate, acc_rate = _car_rates(pgr, det)
        if acc_rate == 0.0:
            if not warned:
                warnings.warn(
                    "Accidental rate is zero (zero window or no singles); CAR is reported as infinite",
                    AccidentalsWarning,
                    stacklevel=2,
                )
                warned = True
            ratio = math.inf
        else:
            ratio = true_rate / acc_rate
        points.append(CarPoint(pgr, true_rate, acc_rate, ratio))
    return points


def car_slope(points: Sequence[CarPoint]) -> Optional[float]:
    """Log-log slope of CAR against PGR; None below two finite points."""
    finite = [(p.pgr, p.car) for p in points if math.isfinite(p.car) and p.car > 0.0]
    if len(finite) < 2 or len({pgr for pgr, _ in finite}) < 2:
        return None
    pgr, ratio = np.log10(np.asarray(finite)).T
    return float(np.polyfit(pgr, ratio, 1)[0])
