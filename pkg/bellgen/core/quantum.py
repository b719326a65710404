"""
Two-qubit state algebra and entanglement metrics.

Basis ordering is a fixed contract used by every other module: the
computational index of |AB> is ``2 * A + B``, where qubit A is carried by
rails (a, b) and qubit B by rails (c, d). Rail a (c) encodes logical 0.
"""

from dataclasses import dataclass
from typing import Dict, Tuple, Union

import numpy as np
from scipy import linalg

from .exceptions import DegenerateInputError, ValidationError

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-10
EIGEN_TOL = 1e-10
TRACE_TOL = 1e-10

BASIS_LABELS = ("00", "01", "10", "11")
BELL_LABELS = ("phi+", "phi-", "psi+", "psi-")

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": PAULI_I, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}

_SPIN_FLIP = np.kron(PAULI_Y, PAULI_Y)

_LABEL_ALIASES = {
    "phi+": "phi+", "Φ+": "phi+", "phi_plus": "phi+", "PHI+": "phi+",
    "phi-": "phi-", "Φ-": "phi-", "Φ−": "phi-", "phi_minus": "phi-", "PHI-": "phi-",
    "psi+": "psi+", "Ψ+": "psi+", "psi_plus": "psi+", "PSI+": "psi+",
    "psi-": "psi-", "Ψ-": "psi-", "Ψ−": "psi-", "psi_minus": "psi-", "PSI-": "psi-",
}


def canonical_label(label: str) -> str:
    """
    Map a state label to its canonical ASCII spelling.

    Accepts Bell labels in ASCII or Greek form ('phi+', 'Φ+', 'psi_minus', ...)
    and computational basis labels ('00' ... '11', optionally written '|01>').

    Raises:
        ValidationError: If the label names no known state
    """
    if not isinstance(label, str):
        raise ValidationError("label", label, "string")

    text = label.strip()
    if text.startswith("|") and text.endswith(">"):
        text = text[1:-1]

    if text in BASIS_LABELS:
        return text

    key = text if text in _LABEL_ALIASES else text.lower()
    if key in _LABEL_ALIASES:
        return _LABEL_ALIASES[key]

    raise ValidationError(
        "label", label, f"one of {list(BELL_LABELS) + list(BASIS_LABELS)}"
    )


def _as_vector(amplitudes, size: int, parameter: str) -> np.ndarray:
    vec = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if vec.shape != (size,):
        raise ValidationError(parameter, amplitudes, f"{size} complex amplitudes")
    if not np.all(np.isfinite(vec)):
        raise ValidationError(parameter, amplitudes, "finite amplitudes")
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise DegenerateInputError(parameter, amplitudes, "State has zero norm")
    vec = vec / norm
    vec.setflags(write=False)
    return vec


@dataclass(frozen=True, eq=False)
class SingleQubitState:
    """Normalized single-qubit ket (|0>, |1> amplitudes)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", _as_vector(self.amplitudes, 2, "amplitudes"))

    def overlap(self, other: "SingleQubitState") -> complex:
        """Inner product <self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True, eq=False)
class TwoQubitKet:
    """
    Normalized post-selected dual-rail two-qubit state.

    Amplitudes are normalized on construction; index ``2 * A + B`` holds |AB>.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", _as_vector(self.amplitudes, 4, "amplitudes"))

    def overlap(self, other: "TwoQubitKet") -> complex:
        """Inner product <self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def equals_up_to_phase(self, other: "TwoQubitKet", tol: float = 1e-9) -> bool:
        """True when |<self|other>|^2 = 1 within ``tol``."""
        return abs(abs(self.overlap(other)) ** 2 - 1.0) <= tol

    def to_density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(self.projector())


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """
    Hermitian, positive semidefinite, unit-trace matrix (4x4, or 2x2 for a reduced qubit).

    The invariants are checked on construction; violations raise ValidationError.
    """

    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", _validated_matrix(self.entries))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_ket(cls, psi: Union[TwoQubitKet, SingleQubitState]) -> "DensityMatrix":
        return cls(psi.projector())

    @classmethod
    def maximally_mixed(cls, dim: int = 4) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in ascending order, clipped at zero."""
        return np.clip(linalg.eigvalsh(self.entries), 0.0, None)


def _validated_matrix(entries) -> np.ndarray:
    try:
        mat = np.array(entries, dtype=complex)
    except (TypeError, ValueError):
        raise ValidationError("rho", entries, "complex square matrix")

    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] not in (2, 4):
        raise ValidationError("rho", entries, "2x2 or 4x4 complex matrix")

    if not np.all(np.isfinite(mat)):
        raise ValidationError("rho", entries, "finite entries")

    if np.max(np.abs(mat - mat.conj().T)) > HERMITIAN_TOL:
        raise ValidationError("rho", entries, "Hermitian matrix", "Matrix is not Hermitian within 1e-10")

    trace = np.trace(mat).real
    if abs(trace - 1.0) > TRACE_TOL:
        raise ValidationError("rho", entries, "unit trace", f"Trace is {trace:.12g}")

    # Symmetrize so downstream eigensolvers see an exactly Hermitian matrix
    mat = 0.5 * (mat + mat.conj().T)
    smallest = linalg.eigvalsh(mat)[0]
    if smallest < -EIGEN_TOL:
        raise ValidationError(
            "rho", entries, "positive semidefinite matrix", f"Smallest eigenvalue is {smallest:.3e}"
        )

    mat.setflags(write=False)
    return mat


def as_density_matrix(rho) -> DensityMatrix:
    """Coerce an array or DensityMatrix to a validated DensityMatrix."""
    if isinstance(rho, DensityMatrix):
        return rho
    return DensityMatrix(rho)


def basis_state(label: str) -> TwoQubitKet:
    """Computational basis ket for a label among '00', '01', '10', '11'."""
    key = canonical_label(label)
    if key not in BASIS_LABELS:
        raise ValidationError("label", label, f"one of {list(BASIS_LABELS)}")
    amplitudes = np.zeros(4, dtype=complex)
    amplitudes[int(key, 2)] = 1.0
    return TwoQubitKet(amplitudes)


def bell_state(label: str) -> TwoQubitKet:
    """
    Standard maximally entangled state.

    Args:
        label: 'phi+', 'phi-', 'psi+' or 'psi-' (Greek spellings accepted)

    Returns:
        TwoQubitKet, e.g. phi+ = (|00> + |11>)/sqrt(2)

    Raises:
        ValidationError: If the label is not a Bell label
    """
    key = canonical_label(label)
    vectors = {
        "phi+": [1, 0, 0, 1],
        "phi-": [1, 0, 0, -1],
        "psi+": [0, 1, 1, 0],
        "psi-": [0, 1, -1, 0],
    }
    if key not in vectors:
        raise ValidationError("label", label, f"one of {list(BELL_LABELS)}")
    return TwoQubitKet(np.array(vectors[key], dtype=complex))


def named_state(label: str) -> TwoQubitKet:
    """Bell state or computational basis state by label."""
    key = canonical_label(label)
    if key in BASIS_LABELS:
        return basis_state(key)
    return bell_state(key)


def pauli_eigenstates() -> Dict[str, SingleQubitState]:
    """
    The six single-qubit Pauli eigenstates used as tomographic projections.

    Returns:
        Ordered mapping '0', '1', '+', '-', 'i', '-i' -> SingleQubitState
    """
    s = 1.0 / np.sqrt(2.0)
    return {
        "0": SingleQubitState([1.0, 0.0]),
        "1": SingleQubitState([0.0, 1.0]),
        "+": SingleQubitState([s, s]),
        "-": SingleQubitState([s, -s]),
        "i": SingleQubitState([s, 1j * s]),
        "-i": SingleQubitState([s, -1j * s]),
    }


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product in the A-then-B ordering."""
    return np.kron(np.asarray(a), np.asarray(b))


def fidelity(rho, target: TwoQubitKet) -> float:
    """
    Pure-target fidelity F = <target|rho|target>.

    Invariant under global phase of ``target``.

    Raises:
        ValidationError: If rho violates the DensityMatrix invariants
    """
    rho = as_density_matrix(rho)
    if not isinstance(target, TwoQubitKet):
        target = TwoQubitKet(target)
    psi = target.amplitudes
    value = np.vdot(psi, rho.entries @ psi).real
    return float(np.clip(value, 0.0, 1.0))


def uhlmann_fidelity(rho, sigma) -> float:
    """Mixed-state fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    rho, sigma = as_density_matrix(rho), as_density_matrix(sigma)
    if rho.dim != sigma.dim:
        raise ValidationError("sigma", sigma.entries, f"{rho.dim}x{rho.dim} density matrix")
    root = _psd_sqrt(rho.entries)
    inner = root @ sigma.entries @ root
    inner = 0.5 * (inner + inner.conj().T)
    value = float(np.sum(np.sqrt(np.clip(linalg.eigvalsh(inner), 0.0, None)))) ** 2
    return float(np.clip(value, 0.0, 1.0))


def purity(rho) -> float:
    """Tr(rho^2)."""
    rho = as_density_matrix(rho)
    return float(np.real(np.trace(rho.entries @ rho.entries)))


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    values, vectors = linalg.eigh(mat)
    values = np.sqrt(np.clip(values, 0.0, None))
    return (vectors * values) @ vectors.conj().T


def concurrence(rho) -> float:
    """
    Wootters concurrence of a two-qubit state.

    The decreasing square roots of the eigenvalues of rho * rho_tilde are
    obtained from the Hermitian form sqrt(rho) rho_tilde sqrt(rho), which has
    the same spectrum and is numerically stable for near-pure inputs.

    Raises:
        ValidationError: If rho is not a valid 4x4 density matrix
    """
    rho = as_density_matrix(rho)
    if rho.dim != 4:
        raise ValidationError("rho", rho.entries, "4x4 density matrix")

    rho_tilde = _SPIN_FLIP @ rho.entries.conj() @ _SPIN_FLIP
    root = _psd_sqrt(rho.entries)
    product = root @ rho_tilde @ root
    product = 0.5 * (product + product.conj().T)
    lambdas = np.sqrt(np.clip(linalg.eigvalsh(product), 0.0, None))[::-1]
    value = lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]
    return float(min(1.0, max(0.0, value)))


def partial_trace(rho, keep: str = "A") -> DensityMatrix:
    """
    Reduced density matrix of one qubit.

    Args:
        rho: 4x4 density matrix
        keep: 'A' (rails a, b) or 'B' (rails c, d)

    Returns:
        2x2 DensityMatrix
    """
    rho = as_density_matrix(rho)
    if rho.dim != 4:
        raise ValidationError("rho", rho.entries, "4x4 density matrix")

    tensor4 = rho.entries.reshape(2, 2, 2, 2)
    side = str(keep).upper()
    if side == "A":
        reduced = np.einsum("ijkj->ik", tensor4)
    elif side == "B":
        reduced = np.einsum("ijil->jl", tensor4)
    else:
        raise ValidationError("keep", keep, "'A' or 'B'")
    return DensityMatrix(reduced)


def von_neumann_entropy(rho2) -> float:
    """
    S = -sum(l * ln l) in nats; 0 * ln 0 is taken as 0.
    """
    rho2 = as_density_matrix(rho2)
    values = rho2.eigenvalues()
    values = values[values > 0.0]
    return float(max(0.0, -np.sum(values * np.log(values))))


def chsh_violation_guaranteed(rho) -> bool:
    """Concurrence above 1/sqrt(2) guarantees a CHSH violation for some measurement."""
    return concurrence(rho) > 1.0 / np.sqrt(2.0)


def entanglement_summary(rho) -> Tuple[float, float, float]:
    """Concurrence and both marginal entropies in one pass."""
    rho = as_density_matrix(rho)
    return (
        concurrence(rho),
        von_neumann_entropy(partial_trace(rho, "A")),
        von_neumann_entropy(partial_trace(rho, "B")),
    )
