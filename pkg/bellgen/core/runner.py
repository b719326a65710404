"""
Experiment pipelines behind the command-line surface.

Coordinates the command registry and writes the deterministic reports of
each run (generate, tomography, noon, calibrate, car-sweep, list).
"""

import dataclasses
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np

from .calibration import fit_calibration
from .circuit import (
    NAMED_TARGETS,
    SourceParams,
    bell_decompose,
    explain_settings,
    generate_state,
    pump_split,
    published_settings,
    squeezing,
    target_phases,
)
from .config import ExperimentConfig
from .exceptions import FileOperationError, ReconstructionError, ValidationError
from .experiment import (
    SCAN_DEFAULTS,
    SHIFTER_HARMONICS,
    acquire_tomography,
    calibration_scan,
    car_slope,
    car_sweep,
    fringe_period,
    noon_fringe,
    visibility,
)
from .io.csv_handler import read_scan_csv, write_csv
from .io.json_handler import write_json, write_records
from .quantum import BASIS_LABELS, BELL_LABELS, TwoQubitKet
from .tomography import monte_carlo_uncertainty, mle_reconstruct, state_metrics
from .utils.performance import PerformanceProfiler
from .utils.seeding import split_seed

logger = logging.getLogger(__name__)

OUTPUT_FORMATS = ("csv", "json")
METRIC_COLUMNS = (("fidelity", "F"), ("concurrence", "C"), ("entropy_a", "S_A"),
                  ("entropy_b", "S_B"), ("purity", "purity"))


@dataclass
class CommandResult:
    """Outcome of one command: the JSON report, files written and a human summary."""

    command: str
    report: Dict[str, Any]
    files: List[Path] = field(default_factory=list)
    summary: str = ""
    report_name: Optional[str] = None


Handler = Callable[["RunContext"], CommandResult]


@dataclass
class RunContext:
    config: ExperimentConfig
    out_dir: Path
    fmt: str = "csv"
    explain: bool = False
    show_progress: bool = False


def _complex_pair(value: complex) -> List[float]:
    return [float(np.real(value)), float(np.imag(value))]


def canonical_global_phase(amplitudes: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the largest amplitude (first on ties) is real positive."""
    amplitudes = np.asarray(amplitudes, dtype=complex)
    magnitudes = np.round(np.abs(amplitudes), 12)
    pivot = amplitudes[int(np.argmax(magnitudes))]
    if abs(pivot) == 0.0:
        return amplitudes
    return amplitudes * (abs(pivot) / pivot)


def report_header(command: str, config: Optional[ExperimentConfig]) -> Dict[str, Any]:
    if config is None:
        return {"command": command}
    return {"command": command, "seed": config.seed, "config_sha256": config.sha256()}


def format_metrics_table(rows: List[Dict[str, Any]]) -> str:
    """Target, F, C, S_A, S_B and purity with their Monte Carlo spread."""
    header = f"{'target':<8}" + "".join(f"{title:>20}" for _, title in METRIC_COLUMNS)
    lines = [header]
    for row in rows:
        cells = []
        for key, _ in METRIC_COLUMNS:
            value = row["metrics"].get(key)
            if value is None:
                cells.append(f"{'-':>20}")
                continue
            std = row["uncertainties"].get(key)
            text = f"{value:.4f}" if std is None else f"{value:.4f} ± {std:.4f}"
            cells.append(f"{text:>20}")
        lines.append(f"{row['target']:<8}" + "".join(cells))
    return "\n".join(lines) + "\n"


class ExperimentRunner:
    """
    Command registry coordinating the experiment pipelines.

    Every command writes its reports into the output directory and returns
    a CommandResult. Warnings raised during a run are collected into the
    report under ``warnings``.
    """

    def __init__(self):
        self.commands: Dict[str, Handler] = {}
        self.profiler = PerformanceProfiler()
        self.register_command("generate", self._cmd_generate)
        self.register_command("tomography", self._cmd_tomography)
        self.register_command("noon", self._cmd_noon)
        self.register_command("calibrate", self._cmd_calibrate)
        self.register_command("car-sweep", self._cmd_car_sweep)
        self.register_command("list", self._cmd_list)

    def register_command(self, name: str, handler: Handler) -> None:
        """
        Register a command handler.

        Raises:
            ValidationError: If the name is empty or the handler is not callable
        """
        if not isinstance(name, str) or not name.strip():
            raise ValidationError("name", name, "non-empty string")
        if not callable(handler):
            raise ValidationError("handler", handler, "callable taking a RunContext")
        self.commands[name] = handler

    def run(self, command: str, config: Optional[ExperimentConfig], out_dir: Union[str, Path, None] = None,
            fmt: str = "csv", explain: bool = False, show_progress: bool = False) -> CommandResult:
        """
        Run one registered command.

        Args:
            command: Registered command name
            config: Resolved experiment config (optional for 'list')
            out_dir: Output directory; defaults to the config's output.dir
            fmt: 'csv' writes tables as CSV next to the JSON reports, 'json' embeds them
            explain: Append the published-versus-derived settings table
            show_progress: Report Monte Carlo progress on stderr

        Raises:
            ValidationError: For unknown commands or formats
        """
        if command not in self.commands:
            raise ValidationError("command", command, f"one of {sorted(self.commands)}")
        if fmt not in OUTPUT_FORMATS:
            raise ValidationError("format", fmt, f"one of {list(OUTPUT_FORMATS)}")
        if config is None and command != "list":
            raise ValidationError("config", None, "experiment config", f"'{command}' needs --config")

        directory = Path(out_dir) if out_dir is not None else Path(config.output_dir if config else "out")
        context = RunContext(config, directory, fmt, explain, show_progress)

        logger.info("Running %s", command)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            with self.profiler.stage(command):
                result = self.commands[command](context)

        messages = []
        for warning in caught:
            text = f"{warning.category.__name__}: {warning.message}"
            if text not in messages:
                messages.append(text)
                logger.warning("%s", text)
        if messages:
            result.report["warnings"] = messages
        if result.report_name:
            path = context.out_dir / result.report_name
            write_json(result.report, path)
            result.files.append(path)
        logger.info("Finished %s (%d files)", command, len(result.files))
        return result

    def _cmd_generate(self, ctx: RunContext) -> CommandResult:
        config = ctx.config
        psi = generate_state(config.phases, config.source)
        amplitudes = canonical_global_phase(psi.amplitudes)
        coefficients = bell_decompose(TwoQubitKet(amplitudes))
        r_a, r_b = squeezing(config.source, config.phases.phi1)
        p_a, p_b = pump_split(config.phases.phi1, config.source.p0)

        report = report_header("generate", config)
        report.update({
            "target": config.target,
            "phase_source": "derived" if config.target else "explicit",
            "phases": config.phases.to_dict(),
            "amplitudes": {label: _complex_pair(a) for label, a in zip(BASIS_LABELS, amplitudes)},
            "bell_decomposition": {
                label: {"coefficient": _complex_pair(c), "weight": float(abs(c) ** 2)}
                for label, c in zip(BELL_LABELS, coefficients)
            },
            "pump_split": {"p_a": p_a, "p_b": p_b},
            "squeezing": {"r_a": r_a, "r_b": r_b},
            "metrics": state_metrics(psi.to_density_matrix(), config.target),
        })

        lines = [f"Generated state ({report['phase_source']} phases"
                 + (f" for target {config.target})" if config.target else ")")]
        for label, a in zip(BASIS_LABELS, amplitudes):
            lines.append(f"  |{label}>  {a.real:+.6f} {a.imag:+.6f}i")
        lines.append("Bell weights: " + ", ".join(
            f"{label} {abs(c) ** 2:.6f}" for label, c in zip(BELL_LABELS, coefficients)))
        if ctx.explain:
            lines.append("")
            lines.append(self._explanation(config))

        return CommandResult("generate", report, [], "\n".join(lines), "state.json")

    def _explanation(self, config: ExperimentConfig) -> str:
        if config.target is not None:
            # Emits TableDiscrepancyWarning for the basis states with a known mismatch
            published_settings(config.target)
        return explain_settings(config.source)

    def _cmd_tomography(self, ctx: RunContext) -> CommandResult:
        config = ctx.config
        acquisition_seed, resampling_seed = split_seed(config.seed, 2)
        reference = config.target or generate_state(config.phases, config.source)
        header = report_header("tomography", config)
        files: List[Path] = []

        with self.profiler.stage("acquisition"):
            records = acquire_tomography(
                config.phases, config.source, config.detectors, config.noise,
                config.pair_rate, config.integration, acquisition_seed, config.subtract_accidentals,
            )
        records_path = ctx.out_dir / "records.json"
        write_records(records, records_path)
        files.append(records_path)

        try:
            with self.profiler.stage("reconstruction"):
                result = mle_reconstruct(records, config.mle, reference)
            monte_carlo = None
            if config.monte_carlo_samples > 0:
                with self.profiler.stage("monte_carlo"):
                    monte_carlo = monte_carlo_uncertainty(
                        records, config.monte_carlo_samples, resampling_seed, reference,
                        config.mle, show_progress=ctx.show_progress,
                    )
                result = result.with_uncertainties(monte_carlo.std)
        except ReconstructionError as e:
            diagnostics = dict(header)
            diagnostics.update({"error": type(e).__name__, "message": str(e), "diagnostics": e.diagnostics})
            write_json(diagnostics, ctx.out_dir / "diagnostics.json")
            raise

        report = dict(header)
        report.update({
            "target": config.target,
            "phases": config.phases.to_dict(),
            "result": result.to_dict(),
            "monte_carlo": monte_carlo.to_dict() if monte_carlo else None,
        })
        label = config.target or "custom"
        summary = format_metrics_table([{"target": label, "metrics": result.metrics,
                                         "uncertainties": result.uncertainties}])
        summary_path = ctx.out_dir / "summary.txt"
        try:
            summary_path.parent.mkdir(parents=True, exist_ok=True)
            summary_path.write_text(summary, encoding="utf-8")
        except OSError as e:
            raise FileOperationError(f"Failed to write summary table: {e}", str(summary_path))
        files.append(summary_path)
        return CommandResult("tomography", report, files, summary.rstrip("\n"), "tomography.json")

    def _cmd_noon(self, ctx: RunContext) -> CommandResult:
        config = ctx.config
        settings = config.noon
        detectors = config.detectors if settings.include_accidentals else None
        fringe = noon_fringe(settings.grid, settings.noise_model(), config.pair_rate, config.integration,
                             config.seed, settings.offset, detectors)
        result = visibility(fringe)
        period, period_error = fringe_period(fringe)

        rows = [{"theta3": p.x, "counts": p.counts, "expected": p.expected} for p in fringe]
        report = report_header("noon", config)
        report.update({
            "visibility": result.to_dict(),
            "period": {"value": period, "error": period_error},
            "n_points": len(rows),
            "model_visibility": settings.visibility * float(np.exp(-2.0 * settings.phase_jitter ** 2)),
        })
        files = []
        if ctx.fmt == "csv":
            csv_path = ctx.out_dir / "noon.csv"
            write_csv(rows, csv_path, ["theta3", "counts", "expected"])
            files.append(csv_path)
        else:
            report["fringe"] = rows

        summary = (
            f"Fit visibility     {result.fit_visibility:.4f} ± {result.fit_error:.4f}\n"
            f"Hybrid visibility  {result.hybrid_visibility:.4f} ± {result.hybrid_error:.4f}\n"
            f"Fringe period      {period:.4f} ± {period_error:.4f} rad"
        )
        return CommandResult("noon", report, files, summary, "noon.json")

    def _cmd_calibrate(self, ctx: RunContext) -> CommandResult:
        config = ctx.config
        settings = config.calibration
        harmonic = settings.harmonic or SHIFTER_HARMONICS[settings.shifter]

        if settings.scan_file:
            scan = read_scan_csv(settings.scan_file)
            origin: Dict[str, Any] = {"scan_file": settings.scan_file}
        else:
            base, default_pair = SCAN_DEFAULTS[settings.shifter]
            rail_pair = settings.rail_pair or default_pair
            scan = calibration_scan(
                settings.shifter, settings.voltages, base, config.source, config.detectors, config.seed,
                settings.true, config.pair_rate, config.integration, rail_pair, config.noise,
                settings.rate_noise, settings.poisson,
            )
            origin = {"synthetic": True, "true_calibration": settings.true.to_dict(), "rail_pair": list(rail_pair)}

        fit = fit_calibration(scan, harmonic, seed=config.seed)
        model = fit.model([v for v, _ in scan])
        scan_rows = [{"voltage": v, "rate": r, "model": float(m)} for (v, r), m in zip(scan, model)]

        report = report_header("calibrate", config)
        report.update({"shifter": settings.shifter, "fit": fit.to_dict(), "source": origin})
        files = []

        # The fit is reported even when a requested lookup phase is out of range
        write_json(report, ctx.out_dir / "calibration.json")
        lookup_rows = [{"phase": phase, "voltage": voltage} for phase, voltage in fit.lookup(settings.lookup_phases)]
        report["lookup"] = lookup_rows

        if ctx.fmt == "csv":
            scan_path = ctx.out_dir / "scan.csv"
            write_csv(scan_rows, scan_path, ["voltage", "rate", "model"])
            files.append(scan_path)
            if lookup_rows:
                lookup_path = ctx.out_dir / "lookup.csv"
                write_csv(lookup_rows, lookup_path, ["phase", "voltage"])
                files.append(lookup_path)
        else:
            report["scan"] = scan_rows

        calib = fit.calib
        summary = (
            f"{settings.shifter}: xi0={calib.xi0:.6f} rad, alpha={calib.alpha:.6f} rad/V, "
            f"beta={calib.beta:.6f} rad/V^2 (rms residual {fit.rms:.4g})"
        )
        return CommandResult("calibrate", report, files, summary, "calibration.json")

    def _cmd_car_sweep(self, ctx: RunContext) -> CommandResult:
        config = ctx.config
        settings = config.car_sweep
        detectors = config.detectors
        if settings.window is not None:
            detectors = dataclasses.replace(detectors, window=settings.window)

        points = car_sweep(settings.rates(), detectors)
        slope = car_slope(points)
        rows = [{"pgr": p.pgr, "true_rate": p.true_rate, "accidental_rate": p.accidental_rate, "car": p.car}
                for p in points]

        report = report_header("car-sweep", config)
        report.update({"slope": slope, "window": detectors.window, "n_points": len(rows)})
        files = []
        if ctx.fmt == "csv":
            csv_path = ctx.out_dir / "car_sweep.csv"
            write_csv(rows, csv_path, ["pgr", "true_rate", "accidental_rate", "car"])
            files.append(csv_path)
        else:
            report["points"] = rows
        slope_text = "n/a" if slope is None else f"{slope:.4f}"
        summary = f"CAR over {len(rows)} pair rates; log-log slope {slope_text}"
        return CommandResult("car-sweep", report, files, summary, "car_sweep.json")

    def _cmd_list(self, ctx: RunContext) -> CommandResult:
        source = ctx.config.source if ctx.config else SourceParams()
        rows = []
        for label in NAMED_TARGETS:
            phases = target_phases(label, source)
            rows.append({"target": label, "phi1": phases.phi1, "phi2": phases.phi2, "theta2": phases.theta2})

        report = report_header("list", ctx.config)
        report["targets"] = rows
        lines = [f"{'target':<8}{'phi1':>12}{'phi2':>12}{'theta2':>12}"]
        lines.extend(f"{r['target']:<8}{r['phi1']:>12.6f}{r['phi2']:>12.6f}{r['theta2']:>12.6f}" for r in rows)
        if ctx.explain:
            lines.append("")
            lines.append(explain_settings(source))
        return CommandResult("list", report, [], "\n".join(lines))
