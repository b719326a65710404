"""
Experiment configuration.

Configs are JSON documents validated in-process; every error names the
dotted path of the offending field (e.g. ``detectors.eta[2]``). The
published JSON Schema in ``bellgen/schema/experiment.schema.json``
describes the same structure for external tools.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .calibration import ThermalCalib
from .circuit import NAMED_TARGETS, SHIFTERS, PhaseConfig, SourceParams, target_phases
from .exceptions import ConfigError, ValidationError
from .io.json_handler import read_json
from .experiment import RAIL_PAIRS, DetectorBank, NoiseModel
from .quantum import canonical_label
from .tomography import MIN_MC_SAMPLES, MLEOptions
from .utils.seeding import MAX_SEED

TOP_LEVEL_KEYS = {
    "target", "phases", "source", "detectors", "noise", "pair_rate", "integration",
    "seed", "subtract_accidentals", "mle", "monte_carlo", "noon", "calibration",
    "car_sweep", "metadata", "output",
}


def _require_mapping(value: Any, path: str) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise ConfigError(path, f"expected an object, got {type(value).__name__}")
    return value


def _reject_unknown(data: Mapping[str, Any], allowed, path: str) -> None:
    for key in data:
        if key not in allowed:
            prefix = f"{path}." if path else ""
            raise ConfigError(f"{prefix}{key}", f"unknown field; expected one of {sorted(allowed)}")


def _number(value: Any, path: str, minimum: Optional[float] = None, exclusive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(path, f"expected a finite number, got {value!r}")
    if minimum is not None and (value < minimum or (exclusive and value == minimum)):
        bound = ">" if exclusive else ">="
        raise ConfigError(path, f"must be {bound} {minimum}, got {value!r}")
    return value


def _integer(value: Any, path: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value!r}")
    return value


def _build(path: str, factory: Callable[..., Any], **kwargs: Any) -> Any:
    """Construct a domain object, mapping its ValidationError onto a config path."""
    try:
        return factory(**kwargs)
    except ValidationError as e:
        raise ConfigError(f"{path}.{e.parameter}" if path else e.parameter, str(e))


def parse_grid(value: Any, path: str) -> Tuple[float, ...]:
    """Explicit list, or {start, stop, num} expanded with linspace (endpoint included)."""
    if isinstance(value, Mapping):
        _reject_unknown(value, {"start", "stop", "num"}, path)
        for key in ("start", "stop", "num"):
            if key not in value:
                raise ConfigError(f"{path}.{key}", "is required")
        start = _number(value["start"], f"{path}.start")
        stop = _number(value["stop"], f"{path}.stop")
        num = _integer(value["num"], f"{path}.num", 1)
        return tuple(float(x) for x in np.linspace(start, stop, num))
    if isinstance(value, (list, tuple)):
        if not value:
            raise ConfigError(path, "must not be empty")
        return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))
    raise ConfigError(path, "expected a list of numbers or an object {start, stop, num}")


def _grid_dict(values: Tuple[float, ...]) -> List[float]:
    return list(values)


@dataclass(frozen=True)
class NoonSettings:
    """Two-photon fringe scan: theta3 grid, coupler offset and fringe-level noise."""

    grid: Tuple[float, ...] = tuple(float(x) for x in np.linspace(0.0, math.pi, 25))
    offset: float = 0.0
    visibility: float = 1.0
    phase_jitter: float = 0.0
    include_accidentals: bool = False

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], path: str = "noon") -> "NoonSettings":
        data = _require_mapping(data, path)
        _reject_unknown(data, {"grid", "offset", "visibility", "phase_jitter", "include_accidentals"}, path)
        kwargs: Dict[str, Any] = {}
        if "grid" in data:
            kwargs["grid"] = parse_grid(data["grid"], f"{path}.grid")
        if "offset" in data:
            kwargs["offset"] = _number(data["offset"], f"{path}.offset")
        for key in ("visibility", "phase_jitter"):
            if key in data:
                kwargs[key] = _number(data[key], f"{path}.{key}", 0.0)
        if "include_accidentals" in data:
            if not isinstance(data["include_accidentals"], bool):
                raise ConfigError(f"{path}.include_accidentals", "expected true or false")
            kwargs["include_accidentals"] = data["include_accidentals"]
        settings = cls(**kwargs)
        settings.noise_model(path)
        return settings

    def noise_model(self, path: str = "noon") -> NoiseModel:
        return _build(path, NoiseModel, visibility=self.visibility, phase_jitter=self.phase_jitter)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "grid": _grid_dict(self.grid),
            "offset": self.offset,
            "visibility": self.visibility,
            "phase_jitter": self.phase_jitter,
            "include_accidentals": self.include_accidentals,
        }


@dataclass(frozen=True)
class CalibrationSettings:
    """
    Shifter calibration run.

    Without ``scan_file`` a synthetic scan is simulated from ``true``.
    """

    shifter: str = "phi2"
    voltages: Tuple[float, ...] = tuple(float(x) for x in np.linspace(0.0, 10.0, 201))
    true: ThermalCalib = field(default_factory=lambda: ThermalCalib(0.3, 1.0, 0.02))
    harmonic: Optional[int] = None
    rate_noise: float = 0.0
    poisson: bool = True
    scan_file: Optional[str] = None
    lookup_phases: Tuple[float, ...] = ()
    rail_pair: Optional[Tuple[str, str]] = None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], path: str = "calibration") -> "CalibrationSettings":
        data = _require_mapping(data, path)
        allowed = {"shifter", "voltages", "true", "harmonic", "noise", "poisson",
                   "scan_file", "lookup_phases", "rail_pair"}
        _reject_unknown(data, allowed, path)
        kwargs: Dict[str, Any] = {}

        if "shifter" in data:
            if data["shifter"] not in SHIFTERS:
                raise ConfigError(f"{path}.shifter", f"expected one of {list(SHIFTERS)}, got {data['shifter']!r}")
            kwargs["shifter"] = data["shifter"]
        if "voltages" in data:
            kwargs["voltages"] = parse_grid(data["voltages"], f"{path}.voltages")
        if "true" in data:
            true = _require_mapping(data["true"], f"{path}.true")
            _reject_unknown(true, {"xi0", "alpha", "beta"}, f"{path}.true")
            kwargs["true"] = _build(f"{path}.true", ThermalCalib, **dict(true))
        if data.get("harmonic") is not None:
            harmonic = _integer(data["harmonic"], f"{path}.harmonic", 1)
            if harmonic not in (1, 2):
                raise ConfigError(f"{path}.harmonic", "must be 1 or 2")
            kwargs["harmonic"] = harmonic
        if "noise" in data:
            kwargs["rate_noise"] = _number(data["noise"], f"{path}.noise", 0.0)
        if "poisson" in data:
            if not isinstance(data["poisson"], bool):
                raise ConfigError(f"{path}.poisson", "expected true or false")
            kwargs["poisson"] = data["poisson"]
        if data.get("scan_file") is not None:
            if not isinstance(data["scan_file"], str) or not data["scan_file"].strip():
                raise ConfigError(f"{path}.scan_file", "expected a non-empty path")
            kwargs["scan_file"] = data["scan_file"]
        if "lookup_phases" in data:
            phases = data["lookup_phases"]
            if not isinstance(phases, (list, tuple)):
                raise ConfigError(f"{path}.lookup_phases", "expected a list of phases")
            kwargs["lookup_phases"] = tuple(_number(p, f"{path}.lookup_phases[{i}]") for i, p in enumerate(phases))
        if data.get("rail_pair") is not None:
            pair = tuple(data["rail_pair"]) if isinstance(data["rail_pair"], (list, tuple)) else None
            if pair not in RAIL_PAIRS:
                raise ConfigError(f"{path}.rail_pair", f"expected one of {[list(p) for p in RAIL_PAIRS]}")
            kwargs["rail_pair"] = pair
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "shifter": self.shifter,
            "voltages": _grid_dict(self.voltages),
            "true": self.true.to_dict(),
            "harmonic": self.harmonic,
            "noise": self.rate_noise,
            "poisson": self.poisson,
            "scan_file": self.scan_file,
            "lookup_phases": list(self.lookup_phases),
            "rail_pair": list(self.rail_pair) if self.rail_pair else None,
        }


@dataclass(frozen=True)
class CarSweepSettings:
    """Logarithmic sweep of the pair generation rate."""

    pgr_min: float = 1e4
    pgr_max: float = 1e6
    num: int = 9
    window: Optional[float] = None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], path: str = "car_sweep") -> "CarSweepSettings":
        data = _require_mapping(data, path)
        _reject_unknown(data, {"pgr_min", "pgr_max", "num", "window"}, path)
        kwargs: Dict[str, Any] = {}
        for key in ("pgr_min", "pgr_max"):
            if key in data:
                kwargs[key] = _number(data[key], f"{path}.{key}", 0.0, exclusive=True)
        if "num" in data:
            kwargs["num"] = _integer(data["num"], f"{path}.num", 1)
        if data.get("window") is not None:
            kwargs["window"] = _number(data["window"], f"{path}.window", 0.0)
        settings = cls(**kwargs)
        if settings.pgr_max < settings.pgr_min:
            raise ConfigError(f"{path}.pgr_max", "must not be below pgr_min")
        return settings

    def rates(self) -> Tuple[float, ...]:
        if self.num == 1:
            return (self.pgr_min,)
        return tuple(float(x) for x in np.logspace(math.log10(self.pgr_min), math.log10(self.pgr_max), self.num))

    def to_dict(self) -> Dict[str, Any]:
        return {"pgr_min": self.pgr_min, "pgr_max": self.pgr_max, "num": self.num, "window": self.window}


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Fully resolved experiment description.

    ``phases`` always holds the phases in use: formula-derived when a named
    ``target`` is given, explicit otherwise.
    """

    seed: int
    target: Optional[str] = None
    phases: PhaseConfig = field(default_factory=PhaseConfig)
    source: SourceParams = field(default_factory=SourceParams)
    detectors: DetectorBank = field(default_factory=DetectorBank)
    noise: NoiseModel = field(default_factory=NoiseModel)
    pair_rate: float = 1000.0
    integration: float = 2.0
    subtract_accidentals: bool = True
    mle: MLEOptions = field(default_factory=MLEOptions)
    monte_carlo_samples: int = MIN_MC_SAMPLES
    noon: NoonSettings = field(default_factory=NoonSettings)
    calibration: CalibrationSettings = field(default_factory=CalibrationSettings)
    car_sweep: CarSweepSettings = field(default_factory=CarSweepSettings)
    metadata: Dict[str, Any] = field(default_factory=dict)
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        """
        Validate and resolve a config document.

        Raises:
            ConfigError: With the dotted path of the first invalid field
        """
        data = _require_mapping(data, "$")
        _reject_unknown(data, TOP_LEVEL_KEYS, "")

        if "seed" not in data:
            raise ConfigError("seed", "is required; runs are never seeded from the clock")
        seed = _integer(data["seed"], "seed", 0)
        if seed > MAX_SEED:
            raise ConfigError("seed", "must fit in 64 bits")

        source = SourceParams()
        if "source" in data:
            section = _require_mapping(data["source"], "source")
            _reject_unknown(section, {"eta_a", "eta_b", "p0"}, "source")
            for key, value in section.items():
                _number(value, f"source.{key}", 0.0)
            source = _build("source", SourceParams, **dict(section))

        detectors = DetectorBank()
        if "detectors" in data:
            section = _require_mapping(data["detectors"], "detectors")
            _reject_unknown(section, {"eta", "window", "dark", "heralding"}, "detectors")
            if "eta" in section:
                eta = section["eta"]
                if not isinstance(eta, (list, tuple)) or len(eta) != 4:
                    raise ConfigError("detectors.eta", "expected 4 efficiencies for rails a, b, c, d")
                for i, value in enumerate(eta):
                    number = _number(value, f"detectors.eta[{i}]")
                    if not 0.0 < number <= 1.0:
                        raise ConfigError(f"detectors.eta[{i}]", f"efficiency must lie in (0, 1], got {value!r}")
            for key in ("window", "dark", "heralding"):
                if key in section:
                    _number(section[key], f"detectors.{key}", 0.0)
            detectors = _build("detectors", DetectorBank, **dict(section))

        noise = NoiseModel()
        if "noise" in data:
            section = _require_mapping(data["noise"], "noise")
            _reject_unknown(section, {"visibility", "phase_jitter"}, "noise")
            for key, value in section.items():
                _number(value, f"noise.{key}", 0.0)
            noise = _build("noise", NoiseModel, **dict(section))

        target = None
        theta1 = 0.0
        if "phases" in data:
            section = _require_mapping(data["phases"], "phases")
            _reject_unknown(section, set(SHIFTERS), "phases")
            for key, value in section.items():
                _number(value, f"phases.{key}")
            phases = _build("phases", PhaseConfig, **dict(section))
            theta1 = phases.theta1
        else:
            phases = PhaseConfig()

        if data.get("target") is not None:
            try:
                target = canonical_label(data["target"])
            except ValidationError:
                raise ConfigError("target", f"expected one of {list(NAMED_TARGETS)}, got {data['target']!r}")
            if "phases" in data:
                raise ConfigError("phases", "give either a named target or explicit phases, not both")
            phases = target_phases(target, source, theta1)

        pair_rate = _number(data.get("pair_rate", 1000.0), "pair_rate", 0.0)
        integration = _number(data.get("integration", 2.0), "integration", 0.0, exclusive=True)

        subtract = data.get("subtract_accidentals", True)
        if not isinstance(subtract, bool):
            raise ConfigError("subtract_accidentals", "expected true or false")

        mle = MLEOptions(seed=seed)
        if "mle" in data:
            section = _require_mapping(data["mle"], "mle")
            _reject_unknown(section, {"n_starts", "max_iter", "tol", "workers", "pairs_per_setting"}, "mle")
            mle = _build("mle", MLEOptions, seed=seed, **dict(section))

        samples = MIN_MC_SAMPLES
        if "monte_carlo" in data:
            section = _require_mapping(data["monte_carlo"], "monte_carlo")
            _reject_unknown(section, {"n_samples"}, "monte_carlo")
            if "n_samples" in section:
                samples = _integer(section["n_samples"], "monte_carlo.n_samples", 0)
                if 0 < samples < MIN_MC_SAMPLES:
                    raise ConfigError(
                        "monte_carlo.n_samples", f"must be 0 (disabled) or at least {MIN_MC_SAMPLES}"
                    )

        noon = NoonSettings.from_dict(data["noon"]) if "noon" in data else NoonSettings()
        calibration = (
            CalibrationSettings.from_dict(data["calibration"]) if "calibration" in data else CalibrationSettings()
        )
        car_sweep = CarSweepSettings.from_dict(data["car_sweep"]) if "car_sweep" in data else CarSweepSettings()

        metadata = dict(_require_mapping(data.get("metadata", {}), "metadata"))

        output_dir = "out"
        if "output" in data:
            section = _require_mapping(data["output"], "output")
            _reject_unknown(section, {"dir"}, "output")
            if "dir" in section:
                if not isinstance(section["dir"], str) or not section["dir"].strip():
                    raise ConfigError("output.dir", "expected a non-empty path")
                output_dir = section["dir"]

        return cls(
            seed=seed,
            target=target,
            phases=phases,
            source=source,
            detectors=detectors,
            noise=noise,
            pair_rate=pair_rate,
            integration=integration,
            subtract_accidentals=subtract,
            mle=mle,
            monte_carlo_samples=samples,
            noon=noon,
            calibration=calibration,
            car_sweep=car_sweep,
            metadata=metadata,
            output_dir=output_dir,
        )

    def with_seed(self, seed: int) -> "ExperimentConfig":
        seed = _integer(seed, "seed", 0)
        if seed > MAX_SEED:
            raise ConfigError("seed", "must fit in 64 bits")
        return replace(self, seed=seed, mle=replace(self.mle, seed=seed))

    def with_output_dir(self, output_dir: str) -> "ExperimentConfig":
        return replace(self, output_dir=output_dir)

    def to_dict(self) -> Dict[str, Any]:
        mle = self.mle.to_dict()
        mle.pop("seed")
        return {
            "seed": self.seed,
            "target": self.target,
            "phases": self.phases.to_dict(),
            "source": self.source.to_dict(),
            "detectors": self.detectors.to_dict(),
            "noise": self.noise.to_dict(),
            "pair_rate": self.pair_rate,
            "integration": self.integration,
            "subtract_accidentals": self.subtract_accidentals,
            "mle": mle,
            "monte_carlo": {"n_samples": self.monte_carlo_samples},
            "noon": self.noon.to_dict(),
            "calibration": self.calibration.to_dict(),
            "car_sweep": self.car_sweep.to_dict(),
            "metadata": dict(self.metadata),
            "output": {"dir": self.output_dir},
        }

    def sha256(self) -> str:
        """Hash of the canonical JSON of the resolved config."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config(filename: str) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    return ExperimentConfig.from_dict(read_json(filename))
