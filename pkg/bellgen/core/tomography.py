"""
Maximum-likelihood two-qubit state tomography.

The density matrix is parametrized as rho = T^dagger T / Tr(T^dagger T)
with T lower-triangular, which keeps every candidate physical. The
objective is the channel-normalized least-squares distance between the 36
measured coincidences and their predictions

    C~_i = N_ch(i) q_i * S / sum_k N_ch(k) q_k,   q_i = || T u_i ||^2

where N are the four detector-pair norms and S the total count. When the
number of pairs sent per setting is known, predictions use the absolute
scale M N q / Tr(T^dagger T) instead and the norms become absolute
pair detection efficiencies.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, optimize

from .circuit import RAIL_PAIRS, SETTINGS, analysis_vectors
from .exceptions import DegenerateInputError, ReconstructionError, ValidationError
from .experiment import CoincidenceRecord
from .quantum import (
    PAULIS,
    DensityMatrix,
    TwoQubitKet,
    as_density_matrix,
    concurrence,
    fidelity,
    named_state,
    partial_trace,
    purity,
    von_neumann_entropy,
)
from .utils.performance import ProgressTracker
from .utils.seeding import make_rng, split_seed, validate_seed

logger = logging.getLogger(__name__)

N_T_PARAMS = 16
N_NORMS = len(RAIL_PAIRS)
NORM_BOUNDS = (1e-3, 1e3)
MAX_FAILURE_FRACTION = 0.1
MIN_MC_SAMPLES = 50

# Strictly lower-triangular positions in row-major order
_LOWER = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))
_EXCHANGE = np.fliplr(np.eye(4))

# Outcome signs for rails (a,c), (a,d), (b,c), (b,d)
_SIGN_AB = np.array([1.0, -1.0, -1.0, 1.0])
_SIGN_A = np.array([1.0, 1.0, -1.0, -1.0])
_SIGN_B = np.array([1.0, -1.0, 1.0, -1.0])

CONVERGED_STATUSES = (0, 2)


@dataclass(frozen=True, eq=False)
class TParams:
    """
    16 real parameters of the lower-triangular factor T.

    Layout: the four real diagonal entries, then (Re, Im) of the six
    strictly lower entries in row-major order.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.shape != (N_T_PARAMS,) or not np.all(np.isfinite(values)):
            raise ValidationError("t", self.values, f"{N_T_PARAMS} finite real parameters")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def matrix(self) -> np.ndarray:
        return _t_matrix(self.values)

    @classmethod
    def from_matrix(cls, t: np.ndarray) -> "TParams":
        t = np.asarray(t, dtype=complex)
        values = [t[i, i].real for i in range(4)]
        for i, j in _LOWER:
            values.extend((t[i, j].real, t[i, j].imag))
        return cls(np.array(values))

    @classmethod
    def identity(cls) -> "TParams":
        return cls.from_matrix(np.eye(4))


def _t_matrix(values: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = values[:4]
    for k, (i, j) in enumerate(_LOWER):
        t[i, j] = values[4 + 2 * k] + 1j * values[5 + 2 * k]
    return t


def _t_gradient(d_re: np.ndarray, d_im: np.ndarray) -> np.ndarray:
    grad = np.empty(N_T_PARAMS)
    grad[:4] = np.diag(d_re)
    for k, (i, j) in enumerate(_LOWER):
        grad[4 + 2 * k] = d_re[i, j]
        grad[5 + 2 * k] = d_im[i, j]
    return grad


def rho_from_t(t: Union[TParams, Sequence[float]]) -> DensityMatrix:
    """
    Density matrix T^dagger T / Tr(T^dagger T).

    Raises:
        DegenerateInputError: If all parameters vanish
    """
    params = t if isinstance(t, TParams) else TParams(t)
    mat = params.matrix()
    gram = mat.conj().T @ mat
    trace = float(np.trace(gram).real)
    if trace <= 0.0:
        raise DegenerateInputError("t", params.values, "Tr(T^dagger T) is zero")
    return DensityMatrix(gram / trace)


@dataclass(frozen=True)
class MLEOptions:
    """Optimizer budget and multi-start layout of mle_reconstruct."""

    n_starts: int = 8
    max_iter: int = 2000
    tol: float = 1e-10
    seed: int = 0
    workers: int = 1
    pairs_per_setting: Optional[float] = None

    def __post_init__(self):
        for name in ("n_starts", "max_iter", "workers"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ValidationError(name, value, "positive integer")
        if not (isinstance(self.tol, (int, float)) and 0.0 < self.tol < 1.0):
            raise ValidationError("tol", self.tol, "tolerance in (0, 1)")
        validate_seed(self.seed)
        if self.pairs_per_setting is not None:
            if not (isinstance(self.pairs_per_setting, (int, float)) and self.pairs_per_setting > 0):
                raise ValidationError("pairs_per_setting", self.pairs_per_setting, "positive number")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_starts": self.n_starts,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "seed": self.seed,
            "workers": self.workers,
            "pairs_per_setting": self.pairs_per_setting,
        }


@dataclass(frozen=True)
class StartOutcome:
    index: int
    label: str
    objective: float
    status: int
    message: str
    iterations: int
    converged: bool
    x: np.ndarray = field(repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "label": self.label,
            "objective": self.objective if math.isfinite(self.objective) else None,
            "status": self.status,
            "message": self.message,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class TomographyResult:
    """Reconstructed state, detector norms and Table-style metrics."""

    rho: DensityMatrix
    norms: Tuple[float, float, float, float]
    residual: float
    metrics: Dict[str, float]
    uncertainties: Dict[str, float] = field(default_factory=dict)
    target: Optional[str] = None
    t_params: Optional[TParams] = None
    starts: Tuple[Dict[str, Any], ...] = ()
    best_start: int = 0

    def with_uncertainties(self, uncertainties: Dict[str, float]) -> "TomographyResult":
        return replace(self, uncertainties=dict(uncertainties))

    def to_dict(self) -> Dict[str, Any]:
        entries = self.rho.entries
        return {
            "rho": [[[float(v.real), float(v.imag)] for v in row] for row in entries],
            "norms": list(self.norms),
            "residual": self.residual,
            "metrics": dict(self.metrics),
            "uncertainties": dict(self.uncertainties),
            "target": self.target,
            "best_start": self.best_start,
            "starts": list(self.starts),
        }


def records_to_counts(records: Sequence[CoincidenceRecord]) -> np.ndarray:
    """
    Counts as a (9, 4) array in SETTINGS x RAIL_PAIRS order.

    Raises:
        ValidationError: Unless every Pauli setting appears exactly once
    """
    records = list(records)
    by_setting: Dict[str, CoincidenceRecord] = {}
    for record in records:
        if not isinstance(record, CoincidenceRecord):
            raise ValidationError("records", record, "CoincidenceRecord")
        if record.setting in by_setting:
            raise ValidationError("records", record.setting, "one record per setting", "Duplicate setting")
        by_setting[record.setting] = record

    missing = [s for s in SETTINGS if s not in by_setting]
    if missing:
        raise ValidationError("records", missing, "complete set of 9 settings", "Missing settings")

    counts = np.array([by_setting[s].counts for s in SETTINGS], dtype=float)
    if counts.sum() <= 0.0:
        raise DegenerateInputError("records", counts.tolist(), "Records contain no coincidences")
    return counts


def expected_probabilities(rho) -> np.ndarray:
    """Tr(rho Pi) for all 36 projectors, shape (9, 4)."""
    rho = as_density_matrix(rho)
    vectors = analysis_vectors()
    return np.clip(np.einsum("sri,ij,srj->sr", vectors.conj(), rho.entries, vectors).real, 0.0, None)


class _Objective:
    """Least-squares objective over [16 T parameters, 4 norms] with analytic gradient."""

    def __init__(self, counts: np.ndarray, pairs_per_setting: Optional[float] = None):
        self.counts = counts.reshape(-1)
        self.total = float(self.counts.sum())
        self.vectors = analysis_vectors().reshape(-1, 4)
        self.channel = np.tile(np.arange(N_NORMS), len(SETTINGS))
        self.pairs = pairs_per_setting

    def residuals(self, x: np.ndarray) -> Tuple[np.ndarray, Dict[str, Any]]:
        t = _t_matrix(x[:N_T_PARAMS])
        w = x[N_T_PARAMS:][self.channel]
        v = self.vectors @ t.T
        q = np.sum(np.abs(v) ** 2, axis=1)

        if self.pairs is None:
            scale = float(w @ q)
            if scale <= 1e-300:
                return -self.counts, {"degenerate": True}
            pred = self.total * w * q / scale
        else:
            scale = float(np.sum(np.abs(t) ** 2))
            if scale <= 1e-300:
                return -self.counts, {"degenerate": True}
            pred = self.pairs * w * q / scale
        return pred - self.counts, {"t": t, "w": w, "v": v, "q": q, "scale": scale, "pred": pred}

    def value(self, x: np.ndarray) -> float:
        r, _ = self.residuals(x)
        return float(r @ r)

    def __call__(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        r, parts = self.residuals(x)
        value = float(r @ r)
        if parts.get("degenerate"):
            return value / self.total, np.zeros_like(x)

        t, w, v, q, scale, pred = (parts[k] for k in ("t", "w", "v", "q", "scale", "pred"))
        if self.pairs is None:
            centred = r - (r @ pred) / self.total
            g_q = 2.0 * (self.total * w / scale) * centred
            g_w = 2.0 * (self.total * q / scale) * centred
            g_trace = 0.0
        else:
            g_q = 2.0 * r * self.pairs * w / scale
            g_w = 2.0 * r * self.pairs * q / scale
            g_trace = -2.0 * float(r @ pred) / scale

        # dq_k / dT_ab = conj(v_k[a]) u_k[b] (real part for Re T, minus imaginary part for Im T)
        h = (g_q[:, None] * v.conj()).T @ self.vectors
        d_re = 2.0 * h.real + 2.0 * g_trace * t.real
        d_im = -2.0 * h.imag + 2.0 * g_trace * t.imag

        grad = np.concatenate([
            _t_gradient(d_re, d_im),
            np.bincount(self.channel, weights=g_w, minlength=N_NORMS),
        ])
        return value / self.total, grad / self.total


def likelihood(t: Union[TParams, Sequence[float]], norms: Sequence[float],
               records: Sequence[CoincidenceRecord],
               pairs_per_setting: Optional[float] = None) -> float:
    """
    Least-squares distance sum_i |C_i - C~_i|^2 between records and predictions.

    Raises:
        ValidationError: For incomplete records or a wrong number of norms
    """
    params = t if isinstance(t, TParams) else TParams(t)
    norms = np.asarray(norms, dtype=float).reshape(-1)
    if norms.shape != (N_NORMS,) or not np.all(norms > 0.0):
        raise ValidationError("norms", norms.tolist(), f"{N_NORMS} positive norms")
    objective = _Objective(records_to_counts(records), pairs_per_setting)
    return objective.value(np.concatenate([params.values, norms]))


def _pauli_expectations(counts: np.ndarray) -> Dict[Tuple[str, str], float]:
    totals = counts.sum(axis=1)
    expectations: Dict[Tuple[str, str], float] = {("I", "I"): 1.0}
    marginal_a: Dict[str, List[float]] = {p: [] for p in "XYZ"}
    marginal_b: Dict[str, List[float]] = {p: [] for p in "XYZ"}

    for setting, row, total in zip(SETTINGS, counts, totals):
        pauli_a, pauli_b = setting
        if total <= 0.0:
            expectations[(pauli_a, pauli_b)] = 0.0
            continue
        freqs = row / total
        expectations[(pauli_a, pauli_b)] = float(freqs @ _SIGN_AB)
        marginal_a[pauli_a].append(float(freqs @ _SIGN_A))
        marginal_b[pauli_b].append(float(freqs @ _SIGN_B))

    for pauli in "XYZ":
        expectations[(pauli, "I")] = float(np.mean(marginal_a[pauli])) if marginal_a[pauli] else 0.0
        expectations[("I", pauli)] = float(np.mean(marginal_b[pauli])) if marginal_b[pauli] else 0.0
    return expectations


def linear_inversion_estimate(records: Sequence[CoincidenceRecord]) -> DensityMatrix:
    """
    Direct Pauli inversion projected onto the physical states.

    Negative eigenvalues are clipped to zero and the trace renormalized.
    """
    counts = records_to_counts(records)
    rho = np.zeros((4, 4), dtype=complex)
    for (pauli_a, pauli_b), value in _pauli_expectations(counts).items():
        rho += value * np.kron(PAULIS[pauli_a], PAULIS[pauli_b])
    rho = 0.5 * (rho + rho.conj().T) / 4.0

    values, vectors = linalg.eigh(rho)
    values = np.clip(values, 0.0, None)
    if values.sum() <= 0.0:
        return DensityMatrix.maximally_mixed()
    values /= values.sum()
    return DensityMatrix((vectors * values) @ vectors.conj().T)


def _cholesky_padded(mat: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Lower Cholesky factor L L^dagger = mat that zero-pads columns at vanishing pivots."""
    n = mat.shape[0]
    lower = np.zeros_like(mat, dtype=complex)
    for j in range(n):
        pivot = mat[j, j].real - np.sum(np.abs(lower[j, :j]) ** 2)
        if pivot <= tol:
            continue
        lower[j, j] = math.sqrt(pivot)
        for i in range(j + 1, n):
            lower[i, j] = (mat[i, j] - np.sum(lower[i, :j] * lower[j, :j].conj())) / lower[j, j]
    return lower


def lower_factor(rho) -> np.ndarray:
    """Lower-triangular T with T^dagger T = rho."""
    rho = as_density_matrix(rho)
    reversed_rho = _EXCHANGE @ rho.entries @ _EXCHANGE
    chol = _cholesky_padded(reversed_rho)
    return _EXCHANGE @ chol.conj().T @ _EXCHANGE


def linear_inversion_seed(records: Sequence[CoincidenceRecord]) -> TParams:
    """T factor of the linear-inversion estimate; always a valid optimizer seed."""
    return TParams.from_matrix(lower_factor(linear_inversion_estimate(records)))


def _linear_norm_estimates(counts: np.ndarray, rho_lin: DensityMatrix) -> np.ndarray:
    probs = expected_probabilities(rho_lin)
    share = counts.sum(axis=0) / counts.sum()
    predicted = probs.sum(axis=0) / len(SETTINGS)
    with np.errstate(divide="ignore", invalid="ignore"):
        estimates = np.where(predicted > 1e-12, share / predicted, 1.0)
    return np.clip(estimates, *NORM_BOUNDS)


def _starting_points(records, options: MLEOptions) -> List[Tuple[str, np.ndarray]]:
    ones = np.ones(N_NORMS)
    candidates = [
        ("identity", np.concatenate([TParams.identity().values, ones])),
        ("linear_inversion", np.concatenate([linear_inversion_seed(records).values, ones])),
    ]
    rng = make_rng(options.seed)
    index = 0
    while len(candidates) < options.n_starts:
        candidates.append((f"random_{index}", np.concatenate([rng.normal(0.0, 1.0, N_T_PARAMS), ones])))
        index += 1
    return candidates[:options.n_starts]


def _run_start(objective: _Objective, options: MLEOptions, index: int, label: str,
               x0: np.ndarray) -> StartOutcome:
    bounds = [(None, None)] * N_T_PARAMS + [NORM_BOUNDS] * N_NORMS
    try:
        result = optimize.minimize(
            objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": options.max_iter, "maxfun": 20 * options.max_iter,
                     "ftol": options.tol, "gtol": options.tol},
        )
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as e:
        return StartOutcome(index, label, math.inf, -1, str(e), 0, False, x0)

    value = float(result.fun)
    converged = int(result.status) in CONVERGED_STATUSES and math.isfinite(value) and np.all(np.isfinite(result.x))
    if converged and np.linalg.norm(result.x[:N_T_PARAMS]) == 0.0:
        converged = False
    logger.debug("MLE start %d (%s): status=%d objective=%.6g nit=%d", index, label,
                 result.status, value, result.nit)
    message = result.message.decode() if isinstance(result.message, bytes) else str(result.message)
    return StartOutcome(index, label, value, int(result.status), message, int(result.nit), bool(converged), result.x)


def state_metrics(rho, target: Union[str, TwoQubitKet, None] = None) -> Dict[str, float]:
    """Fidelity (when a target is given), concurrence, marginal entropies and purity."""
    rho = as_density_matrix(rho)
    metrics = {
        "concurrence": concurrence(rho),
        "entropy_a": von_neumann_entropy(partial_trace(rho, "A")),
        "entropy_b": von_neumann_entropy(partial_trace(rho, "B")),
        "purity": purity(rho),
    }
    if target is not None:
        ket = named_state(target) if isinstance(target, str) else target
        metrics["fidelity"] = fidelity(rho, ket)
    return metrics


def mle_reconstruct(records: Sequence[CoincidenceRecord], options: Optional[MLEOptions] = None,
                    target: Union[str, TwoQubitKet, None] = None) -> TomographyResult:
    """
    Reconstruct rho and the detector-pair norms from 36 coincidence counts.

    Runs L-BFGS-B from the identity, the linear-inversion estimate and
    seeded random starts; the best converged start wins, ties broken by
    start index, so threaded and serial runs agree.

    Args:
        records: The 9 coincidence records of one tomography run
        options: Optimizer budget; defaults to MLEOptions()
        target: Optional reference state for the fidelity metric

    Returns:
        TomographyResult

    Raises:
        ValidationError: For incomplete records
        ReconstructionError: If no start converges
    """
    records = list(records)
    options = options or MLEOptions()
    counts = records_to_counts(records)
    objective = _Objective(counts, options.pairs_per_setting)
    starts = _starting_points(records, options)

    def run(item):
        index, (label, x0) = item
        return _run_start(objective, options, index, label, x0)

    if options.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=options.workers) as pool:
            outcomes = list(pool.map(run, enumerate(starts)))
    else:
        outcomes = [run(item) for item in enumerate(starts)]

    converged = [o for o in outcomes if o.converged]
    if not converged:
        raise ReconstructionError(
            f"none of {len(outcomes)} starts converged within {options.max_iter} iterations",
            [o.to_dict() for o in outcomes],
        )
    best = min(converged, key=lambda o: (o.objective, o.index))

    t_params = TParams(best.x[:N_T_PARAMS])
    rho = rho_from_t(t_params)
    norms = np.asarray(best.x[N_T_PARAMS:], dtype=float)
    if options.pairs_per_setting is None:
        # The normalized objective is blind to a common norm scale; pin the product to the linear estimate
        target_product = float(np.prod(_linear_norm_estimates(counts, linear_inversion_estimate(records))))
        norms = np.clip(norms * (target_product / float(np.prod(norms))) ** (1.0 / N_NORMS), *NORM_BOUNDS)

    residual = objective.value(np.concatenate([t_params.values, norms]))
    logger.info("MLE best start %d (%s): objective=%.6g", best.index, best.label, best.objective)

    label = target if isinstance(target, str) else None
    return TomographyResult(
        rho=rho,
        norms=tuple(float(n) for n in norms),
        residual=float(residual),
        metrics=state_metrics(rho, target),
        target=label,
        t_params=t_params,
        starts=tuple(o.to_dict() for o in outcomes),
        best_start=best.index,
    )


@dataclass(frozen=True)
class MonteCarloSummary:
    """Spread of the metrics over Poisson-resampled reconstructions."""

    std: Dict[str, float]
    mean: Dict[str, float]
    n_samples: int
    n_failed: int

    def to_dict(self) -> Dict[str, Any]:
        return {"std": dict(self.std), "mean": dict(self.mean),
                "n_samples": self.n_samples, "n_failed": self.n_failed}


def monte_carlo_uncertainty(records: Sequence[CoincidenceRecord], n_samples: int = MIN_MC_SAMPLES,
                            seed: int = 0, target: Union[str, TwoQubitKet, None] = None,
                            options: Optional[MLEOptions] = None,
                            show_progress: bool = False) -> MonteCarloSummary:
    """
    Propagate counting statistics by Poisson resampling.

    Each count is redrawn as Poisson(observed) from a per-sample sub-seed
    and the reconstruction is repeated; the standard deviation of each
    metric is reported.

    Args:
        records: Observed tomography records
        n_samples: Number of resamples, at least 50
        seed: Parent seed of the resampling
        target: Reference state for the fidelity metric
        options: MLE options used for every resample
        show_progress: Report progress on stderr

    Returns:
        MonteCarloSummary

    Raises:
        ValidationError: If n_samples < 50
        ReconstructionError: If more than 10% of the resamples fail
    """
    if isinstance(n_samples, bool) or not isinstance(n_samples, (int, np.integer)) or n_samples < MIN_MC_SAMPLES:
        raise ValidationError("n_samples", n_samples, f"integer >= {MIN_MC_SAMPLES}")
    records = list(records)
    counts = records_to_counts(records)
    by_setting = {r.setting: r for r in records}
    options = options or MLEOptions()
    inner = replace(options, workers=1)
    sub_seeds = split_seed(seed, n_samples)
    progress = ProgressTracker(n_samples, "Monte Carlo", enabled=show_progress)

    def resample(sub_seed: int) -> Optional[Dict[str, float]]:
        drawn = make_rng(sub_seed).poisson(counts)
        resampled = [by_setting[s].with_counts(row, sub_seed) for s, row in zip(SETTINGS, drawn)]
        try:
            metrics = mle_reconstruct(resampled, inner, target).metrics
        except (ReconstructionError, ValidationError) as e:
            logger.debug("Monte Carlo sample failed: %s", e)
            metrics = None
        return metrics

    # Progress is only touched from the calling thread
    results = []
    with ThreadPoolExecutor(max_workers=options.workers) if options.workers > 1 else nullcontext() as pool:
        for metrics in (pool.map(resample, sub_seeds) if pool else map(resample, sub_seeds)):
            results.append(metrics)
            progress.update(1)
    progress.finish()

    successes = [r for r in results if r is not None]
    n_failed = n_samples - len(successes)
    logger.info("Monte Carlo: %d samples, %d failed", n_samples, n_failed)
    if n_failed > MAX_FAILURE_FRACTION * n_samples or len(successes) < 2:
        raise ReconstructionError(f"{n_failed} of {n_samples} Monte Carlo resamples failed")

    keys = sorted(successes[0])
    table = {key: np.array([r[key] for r in successes]) for key in keys}
    return MonteCarloSummary(
        std={key: float(np.std(values, ddof=1)) for key, values in table.items()},
        mean={key: float(np.mean(values)) for key, values in table.items()},
        n_samples=n_samples,
        n_failed=n_failed,
    )
