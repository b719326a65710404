"""
Thermo-optic phase shifter calibration.

The phase of a heater-driven shifter follows

    xi(V) = xi0 + alpha * V^2 / (1 + beta * V^2)

which is quadratic at low drive and saturates at xi0 + alpha / beta.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy import optimize

from .exceptions import FitError, PhaseRangeError, ValidationError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

MIN_SCAN_POINTS = 8
RESTART_BUDGET = 16

# Coarse grid for the variable-projection seed
_CURVATURE_GRID = np.concatenate(([0.0], np.logspace(-2.0, 1.5, 28)))
_EXCURSION_STEP = 0.2
_MAX_EXCURSION_STEPS = 2000


@dataclass(frozen=True)
class ThermalCalib:
    """Calibration of one phase shifter: xi0 (rad), alpha (rad/V^2), beta (1/V^2)."""

    xi0: float
    alpha: float
    beta: float = 0.0

    def __post_init__(self):
        for name in ("xi0", "alpha", "beta"):
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise ValidationError(name, value, "real number")
            if not math.isfinite(value):
                raise ValidationError(name, value, "finite real number")
            object.__setattr__(self, name, value)
        if self.alpha <= 0.0:
            raise ValidationError("alpha", self.alpha, "positive number (rad/V^2)")
        if self.beta < 0.0:
            raise ValidationError("beta", self.beta, "non-negative number (1/V^2)")

    @property
    def saturation(self) -> float:
        """Limiting phase xi0 + alpha / beta (infinite when beta = 0)."""
        if self.beta == 0.0:
            return math.inf
        return self.xi0 + self.alpha / self.beta

    def phase(self, voltage):
        return calib_phase_from_voltage(self, voltage)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ThermalCalib":
        unknown = set(data) - {"xi0", "alpha", "beta"}
        if unknown:
            raise ValidationError("calibration", sorted(unknown), "keys among ['xi0', 'alpha', 'beta']")
        return cls(**dict(data))


def calib_phase_from_voltage(c: ThermalCalib, v):
    """
    Phase produced at drive voltage v.

    Accepts a scalar or an array of voltages and returns the same shape.
    """
    v2 = np.square(np.asarray(v, dtype=float))
    phase = c.xi0 + c.alpha * v2 / (1.0 + c.beta * v2)
    if phase.ndim == 0:
        return float(phase)
    return phase


def voltage_for_phase(c: ThermalCalib, target: float) -> float:
    """
    Smallest non-negative voltage producing ``target`` modulo 2*pi.

    Args:
        c: Shifter calibration
        target: Requested phase in radians

    Returns:
        V = sqrt(delta / (alpha - beta * delta)) for the smallest admissible
        delta = target + 2*pi*k - xi0 >= 0

    Raises:
        PhaseRangeError: If every branch lies beyond the saturation bound
    """
    target = float(target)
    if not math.isfinite(target):
        raise ValidationError("target", target, "finite phase in radians")

    delta = (target - c.xi0) % TWO_PI
    if TWO_PI - delta < 1e-12:
        delta = 0.0

    if c.beta > 0.0 and delta >= c.alpha / c.beta:
        raise PhaseRangeError(target, c.saturation)

    return math.sqrt(delta / (c.alpha - c.beta * delta))


@dataclass(frozen=True)
class CalibrationFit:
    """Fitted shifter calibration with the fringe amplitude and background."""

    calib: ThermalCalib
    amplitude: float
    background: float
    harmonic: int
    residual_norm: float
    rms: float
    n_points: int
    restarts: int

    def model(self, voltages) -> np.ndarray:
        phase = calib_phase_from_voltage(self.calib, np.asarray(voltages, dtype=float))
        return self.amplitude * np.sin(self.harmonic * phase / 2.0) ** 2 + self.background

    def lookup(self, phases: Sequence[float]) -> List[Tuple[float, float]]:
        """(phase, voltage) pairs for the requested phases."""
        return [(float(phase), voltage_for_phase(self.calib, phase)) for phase in phases]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "calibration": self.calib.to_dict(),
            "saturation": None if math.isinf(self.calib.saturation) else self.calib.saturation,
            "amplitude": self.amplitude,
            "background": self.background,
            "harmonic": self.harmonic,
            "residual_norm": self.residual_norm,
            "rms": self.rms,
            "n_points": self.n_points,
            "restarts": self.restarts,
        }


def _scan_array(scan) -> np.ndarray:
    try:
        data = np.asarray([(float(v), float(r)) for v, r in scan], dtype=float)
    except (TypeError, ValueError):
        raise ValidationError("scan", scan, "sequence of (voltage, count_rate) pairs")

    if data.shape[0] < MIN_SCAN_POINTS:
        raise ValidationError(
            "scan", data.shape[0], f"at least {MIN_SCAN_POINTS} scan points",
            "Too few points to fit a calibration fringe",
        )
    if not np.all(np.isfinite(data)):
        raise ValidationError("scan", scan, "finite voltages and rates")
    if np.ptp(np.abs(data[:, 0])) == 0.0:
        raise ValidationError("scan", scan, "at least two distinct voltages")
    return data


def _grid_seeds(x: np.ndarray, y: np.ndarray, harmonic: int, count: int) -> List[np.ndarray]:
    """
    Coarse seeds from a variable-projection grid.

    For fixed (alpha, beta) the model is linear in (1, cos, sin) of the
    harmonic phase, so the amplitude, background and offset are solved in
    closed form and only the grid over the two nonlinear parameters remains.
    """
    x_max = float(np.max(x))
    u = x / x_max
    n = x.size
    max_excursion = min(_EXCURSION_STEP * _MAX_EXCURSION_STEPS, math.pi * n / 2.0) / harmonic
    excursions = np.arange(0.25, max_excursion + _EXCURSION_STEP, _EXCURSION_STEP / harmonic)
    sum_y2 = float(np.dot(y, y))

    candidates = []
    for curvature in _CURVATURE_GRID:
        shape = (1.0 + curvature) * u / (1.0 + curvature * u)
        phases = harmonic * np.outer(excursions, shape)
        cos, sin = np.cos(phases), np.sin(phases)

        gram = np.empty((excursions.size, 3, 3))
        gram[:, 0, 0] = n
        gram[:, 0, 1] = gram[:, 1, 0] = cos.sum(axis=1)
        gram[:, 0, 2] = gram[:, 2, 0] = sin.sum(axis=1)
        gram[:, 1, 1] = (cos * cos).sum(axis=1)
        gram[:, 2, 2] = (sin * sin).sum(axis=1)
        gram[:, 1, 2] = gram[:, 2, 1] = (cos * sin).sum(axis=1)
        rhs = np.stack([np.full(excursions.size, y.sum()), cos @ y, sin @ y], axis=1)

        conditioned = np.linalg.cond(gram) < 1e12
        if not np.any(conditioned):
            continue
        coeffs = np.linalg.solve(gram[conditioned], rhs[conditioned][..., None])[..., 0]
        costs = sum_y2 - np.einsum("ij,ij->i", rhs[conditioned], coeffs)
        for excursion, coeff, cost in zip(excursions[conditioned], coeffs, costs):
            candidates.append((float(cost), float(excursion), float(curvature), coeff))

    candidates.sort(key=lambda item: item[0])
    seeds = []
    for cost, excursion, curvature, (c0, c1, c2) in candidates:
        alpha = excursion * (1.0 + curvature) / x_max
        beta = curvature / x_max
        half_amp = math.hypot(c1, c2)
        xi0 = math.atan2(c2, -c1) / harmonic
        seed = np.array([xi0, alpha, beta, 2.0 * half_amp, c0 - half_amp])
        if any(np.allclose(seed[1:3], other[1:3], rtol=0.05) for other in seeds):
            continue
        seeds.append(seed)
        if len(seeds) == count:
            break
    return seeds


def fit_calibration(scan, harmonic: int = 1, restarts: int = RESTART_BUDGET,
                    seed: int = 0) -> CalibrationFit:
    """
    Fit a thermo-optic calibration fringe.

    The model is rate = A * sin^2(m * xi(V) / 2) + B, where m = 1 for a
    shifter inside an MZI and m = 2 for a source-phase shifter (theta2),
    whose phase enters the state twice. A coarse variable-projection grid
    seeds a bounded least-squares refinement; the best of ``restarts``
    local fits is returned.

    Args:
        scan: Sequence of (voltage, count_rate) pairs
        harmonic: Fringe harmonic m (1 or 2)
        restarts: Number of local refinements
        seed: Seed for restart perturbations

    Returns:
        CalibrationFit

    Raises:
        ValidationError: If the scan has fewer than 8 points
        FitError: For flat scans, non-converging fits, or scans shorter than one fringe
    """
    if harmonic not in (1, 2):
        raise ValidationError("harmonic", harmonic, "1 or 2")
    if restarts < 1:
        raise ValidationError("restarts", restarts, "positive integer")

    data = _scan_array(scan)
    voltages, rates = data[:, 0], data[:, 1]
    x = voltages ** 2
    scale = max(float(np.max(np.abs(rates))), 1e-300)

    if np.ptp(rates) <= 1e-9 * scale:
        raise FitError("scan is flat, no fringe to fit", {"n_points": rates.size, "ptp": float(np.ptp(rates))})

    y = rates / scale
    n_grid = max(1, restarts // 2)
    seeds = _grid_seeds(x, y, harmonic, n_grid)
    if not seeds:
        raise FitError("no usable seed on the calibration grid", {"n_points": rates.size})

    rng = np.random.default_rng(seed)
    while len(seeds) < restarts:
        base = seeds[len(seeds) % n_grid]
        jitter = np.array([
            rng.normal(0.0, 0.3),
            base[1] * rng.uniform(0.9, 1.1),
            base[2] * rng.uniform(0.5, 1.5),
            base[3],
            base[4],
        ])
        jitter[0] += base[0]
        seeds.append(jitter)

    def residuals(p):
        xi0, alpha, beta, amp, bg = p
        phase = xi0 + alpha * x / (1.0 + beta * x)
        return amp * np.sin(harmonic * phase / 2.0) ** 2 + bg - y

    lower = [-np.inf, 1e-12, 0.0, 0.0, -np.inf]
    upper = [np.inf, np.inf, np.inf, np.inf, np.inf]

    best = None
    diagnostics = []
    for index, start in enumerate(seeds):
        start = np.clip(start, [-1e6, 1e-12, 0.0, 0.0, -1e6], None)
        try:
            result = optimize.least_squares(
                residuals, start, bounds=(lower, upper), x_scale="jac",
                ftol=1e-12, xtol=1e-12, gtol=1e-12, max_nfev=5000,
            )
        except (ValueError, np.linalg.LinAlgError) as e:
            diagnostics.append({"start": index, "error": str(e)})
            continue

        cost = float(2.0 * result.cost)
        diagnostics.append({"start": index, "cost": cost, "status": int(result.status)})
        logger.debug("Calibration restart %d: status=%d cost=%.6g", index, result.status, cost)
        if result.status > 0 and np.all(np.isfinite(result.x)):
            if best is None or cost < best[0]:
                best = (cost, result.x)

    if best is None:
        raise FitError(
            "no restart converged",
            {"restarts": len(seeds), "reasons": [d.get("error", d.get("status")) for d in diagnostics]},
        )

    cost, (xi0, alpha, beta, amp, bg) = best
    if amp <= 1e-9:
        raise FitError("fitted fringe amplitude vanishes", {"amplitude": amp * scale})

    excursion = harmonic * alpha * float(np.max(x)) / (1.0 + beta * float(np.max(x)))
    if excursion < TWO_PI * (1.0 - 1e-6):
        raise FitError(
            "scan covers less than one fringe period",
            {"phase_excursion": excursion, "required": TWO_PI},
        )

    period = TWO_PI / harmonic
    calib = ThermalCalib(xi0=float(xi0 % period), alpha=float(alpha), beta=float(beta))
    residual_norm = math.sqrt(cost) * scale
    fit = CalibrationFit(
        calib=calib,
        amplitude=float(amp * scale),
        background=float(bg * scale),
        harmonic=harmonic,
        residual_norm=residual_norm,
        rms=residual_norm / math.sqrt(rates.size),
        n_points=int(rates.size),
        restarts=len(seeds),
    )
    logger.info(
        "Calibration fit: xi0=%.6g alpha=%.6g beta=%.6g residual=%.4g",
        calib.xi0, calib.alpha, calib.beta, residual_norm,
    )
    return fit
