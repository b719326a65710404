"""
Custom exception classes for the bellgen library.

Errors carry the offending parameter, path or diagnostics so the CLI can
report them as JSON; warnings flag regimes where the model is approximate.
"""

import errno
from typing import Any, Dict, List, Optional


class BellgenError(Exception):
    """Base exception class for all bellgen library errors."""
    pass


class ValidationError(BellgenError):
    """Raised when input validation fails."""

    def __init__(self, parameter: str, value: Any, expected_type: Optional[str] = None,
                 additional_info: Optional[str] = None):
        self.parameter = parameter
        self.value = value
        self.expected_type = expected_type

        message = f"Invalid value for parameter '{parameter}': {_short_repr(value)}"

        if expected_type:
            message += f". Expected {expected_type}"

        if additional_info:
            message += f". {additional_info}"

        # Add suggestions based on common validation errors
        if parameter == "rho":
            message += " Suggestion: Build density matrices with DensityMatrix.from_ket or rho_from_t."
        elif parameter == "records":
            message += " Suggestion: Provide one record for each of the 9 Pauli settings (36 counts)."
        elif parameter in ("eta_a", "eta_b", "p0"):
            message += " Suggestion: Lower the pump power so that r = eta * sqrt(P) stays below 0.1."

        super().__init__(message)


class DegenerateInputError(ValidationError):
    """Raised when an input has no physical content (zero-norm state, all-zero parameters)."""

    def __init__(self, parameter: str, value: Any, reason: str):
        super().__init__(parameter, value, None, reason)


class PhaseRangeError(BellgenError):
    """Raised when a target phase cannot be reached by a saturating phase shifter."""

    def __init__(self, target: float, saturation: float):
        self.target = target
        self.saturation = saturation

        message = (
            f"Phase {target:.6g} rad is unreachable: every 2*pi branch lies beyond the "
            f"saturation bound xi0 + alpha/beta = {saturation:.6g} rad. "
            f"Suggestion: Recalibrate the shifter or request the phase modulo 2*pi inside the bound."
        )
        super().__init__(message)


class FitError(BellgenError):
    """Raised when a calibration or visibility fit fails."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}

        full_message = f"Fit failed: {message}"
        if self.diagnostics:
            details = ", ".join(f"{key}={_short_repr(val)}" for key, val in sorted(self.diagnostics.items()))
            full_message += f" ({details})"

        super().__init__(full_message)


class ReconstructionError(BellgenError):
    """Raised when maximum-likelihood reconstruction fails."""

    def __init__(self, message: str, diagnostics: Optional[List[Dict[str, Any]]] = None):
        self.diagnostics = diagnostics or []

        full_message = f"Reconstruction failed: {message}"
        if self.diagnostics:
            full_message += f" ({len(self.diagnostics)} start(s) reported)"
        full_message += " Suggestion: Increase max_iter or n_starts, or check the record set."

        super().__init__(full_message)


class ConfigError(BellgenError):
    """Raised when an experiment configuration violates the schema."""

    def __init__(self, path: str, message: str):
        self.path = path

        super().__init__(f"Invalid configuration at '{path}': {message}")


class FileOperationError(BellgenError):
    """
    Failure reading or writing a records file, report or scan.

    Subclasses set the action and file kind; the cause is summarized from the
    type of ``original_error`` and kept on the instance.
    """

    action = "access"
    kind = "file"
    suggestion = "Check the path."

    def __init__(self, filename: str, original_error: Optional[Exception] = None):
        self.filename = filename
        self.original_error = original_error

        message = f"Failed to {self.action} {self.kind} {filename}: {self._cause(original_error)}"
        super().__init__(f"{message} Suggestion: {self.suggestion}")

    def _cause(self, error: Optional[Exception]) -> str:
        if error is None:
            return "unknown error."
        if isinstance(error, FileNotFoundError):
            return "File not found."
        if isinstance(error, PermissionError):
            where = "file" if self.action == "read" else "directory"
            return f"Permission denied, check {where} permissions."
        if isinstance(error, OSError) and error.errno == errno.ENOSPC:
            return "No space left on device."
        return f"{error}."


class CSVReadError(FileOperationError):
    """Raised when a scan CSV cannot be read or parsed."""

    action = "read"
    kind = "CSV file"
    suggestion = "Provide two numeric columns (volts, counts per second) with an optional header."


class CSVWriteError(FileOperationError):
    """Raised when a CSV table cannot be written."""

    action = "write"
    kind = "CSV file"
    suggestion = "Make sure the output directory is writable."


class JSONReadError(FileOperationError):
    """Raised when a config, records or report file cannot be read."""

    action = "read"
    kind = "JSON file"
    suggestion = "The file must exist and hold a valid JSON document."


class JSONWriteError(FileOperationError):
    """Raised when a JSON report cannot be written."""

    action = "write"
    kind = "JSON file"
    suggestion = "Make sure the output directory is writable."


class TruncationWarning(UserWarning):
    """Warning for squeezing parameters approaching the first-order guard."""
    pass


class AccidentalsWarning(UserWarning):
    """Warning for degenerate accidental-coincidence estimates."""
    pass


class TableDiscrepancyWarning(UserWarning):
    """Warning for published phase settings that disagree with the state formula."""
    pass


def _short_repr(value: Any, limit: int = 80) -> str:
    text = repr(value)
    if len(text) > limit:
        text = text[:limit - 3] + "..."
    return text
