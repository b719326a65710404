"""
bellgen - Simulate reconfigurable dual-rail entangled-photon experiments.

Generates the post-selected two-qubit states of a two-source photonic chip,
simulates coincidence counting and reconstructs states by maximum
likelihood tomography.
"""

from typing import List, Optional, Sequence, Union

from .core.circuit import (
    NAMED_TARGETS,
    PhaseConfig,
    SourceParams,
    generate_state,
    target_phases,
)
from .core.config import ExperimentConfig, load_config
from .core.exceptions import (
    AccidentalsWarning,
    BellgenError,
    ConfigError,
    CSVReadError,
    CSVWriteError,
    DegenerateInputError,
    FileOperationError,
    FitError,
    JSONReadError,
    JSONWriteError,
    PhaseRangeError,
    ReconstructionError,
    TableDiscrepancyWarning,
    TruncationWarning,
    ValidationError,
)
from .core.experiment import CoincidenceRecord, DetectorBank, NoiseModel
from .core.io.json_handler import read_records
from .core.quantum import DensityMatrix, TwoQubitKet
from .core.runner import ExperimentRunner
from .core.tomography import MLEOptions, TomographyResult, mle_reconstruct


def generate(target: str, source: Optional[SourceParams] = None) -> TwoQubitKet:
    """
    Generate one of the named target states with formula-derived phases.

    Args:
        target: '00', '01', '10', '11', 'phi+', 'phi-', 'psi+' or 'psi-'
        source: Source efficiencies (defaults to SourceParams())

    Returns:
        TwoQubitKet produced by the chip
    """
    source = source or SourceParams()
    return generate_state(target_phases(target, source), source)


def reconstruct(records: Union[str, Sequence[CoincidenceRecord]], target: Optional[str] = None,
                options: Optional[MLEOptions] = None) -> TomographyResult:
    """
    Reconstruct a state from tomography records or a records JSON file.

    Examples:
        >>> result = bellgen.reconstruct('out/records.json', target='psi+')
        >>> round(result.metrics['fidelity'], 3)
    """
    if isinstance(records, str):
        records = read_records(records)
    return mle_reconstruct(records, options, target)


def list_targets() -> List[str]:
    """Print the named targets with their derived phases and return their labels."""
    print(ExperimentRunner().run("list", None).summary)
    return list(NAMED_TARGETS)


def help():
    """Display help information about bellgen usage."""
    print("""
bellgen - Reconfigurable Entangled-Photon Simulator
===================================================

Quick Examples:
  import bellgen

  # Generate a named state
  psi = bellgen.generate('phi+')

  # Reconstruct from simulated or lab records
  result = bellgen.reconstruct('out/records.json', target='phi+')
  print(result.metrics)

Available Functions:
  bellgen.list_targets()   - Show the named targets and their phases
  bellgen.help()           - Show this help
  bellgen.generate()       - Generate a named target state
  bellgen.reconstruct()    - Maximum likelihood tomography

Command line:
  bellgen generate|tomography|noon|calibrate|car-sweep|list --config FILE
""")


__version__ = "0.1.0"

__all__ = [
    "__version__",
    "generate",
    "reconstruct",
    "list_targets",
    "help",
    "load_config",
    "ExperimentConfig",
    "ExperimentRunner",
    "PhaseConfig",
    "SourceParams",
    "DetectorBank",
    "NoiseModel",
    "CoincidenceRecord",
    "DensityMatrix",
    "TwoQubitKet",
    "MLEOptions",
    "TomographyResult",
    "BellgenError",
    "ValidationError",
    "DegenerateInputError",
    "ConfigError",
    "FitError",
    "PhaseRangeError",
    "ReconstructionError",
    "FileOperationError",
    "CSVReadError",
    "CSVWriteError",
    "JSONReadError",
    "JSONWriteError",
    "TruncationWarning",
    "AccidentalsWarning",
    "TableDiscrepancyWarning",
]
