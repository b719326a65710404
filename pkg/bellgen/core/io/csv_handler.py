"""
CSV file I/O handler.

Reads two-column calibration scans and writes plot-ready tables
(fringes, scans, lookup tables, CAR sweeps).
"""

import csv
import math
import re
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

from ..exceptions import CSVReadError, CSVWriteError, ValidationError

SIGNIFICANT_DIGITS = 12
_DELIMITERS = re.compile(r"[,;\t ]+")


def _format_cell(value: Any) -> str:
    if isinstance(value, bool) or value is None:
        return "" if value is None else str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, f".{SIGNIFICANT_DIGITS}g")
    try:
        return format(float(value), f".{SIGNIFICANT_DIGITS}g")
    except (TypeError, ValueError):
        return str(value)


def write_csv(rows: Sequence[Dict[str, Any]], filename: Union[str, Path], columns: Sequence[str]) -> None:
    """
    Write rows with a fixed column order.

    Args:
        rows: Mappings from column name to value
        filename: Output path
        columns: Header and column order

    Raises:
        CSVWriteError: If the file cannot be written
    """
    if not isinstance(filename, (str, Path)) or not str(filename).strip():
        raise ValidationError("filename", filename, "non-empty path")
    if not columns:
        raise ValidationError("columns", columns, "non-empty list of column names")

    file_path = Path(filename)
    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_format_cell(row.get(column)) for column in columns])
    except OSError as e:
        raise CSVWriteError(str(filename), e)


def read_scan_csv(filename: Union[str, Path]) -> List[Tuple[float, float]]:
    """
    Read a calibration scan of (volts, counts per second).

    A non-numeric first row is treated as a header. Blank lines and lines
    starting with '#' are skipped.

    Raises:
        CSVReadError: If the file is missing or a data row is malformed
    """
    if not isinstance(filename, (str, Path)) or not str(filename).strip():
        raise ValidationError("filename", filename, "non-empty path")

    file_path = Path(filename)
    if not file_path.exists():
        raise CSVReadError(str(filename), FileNotFoundError(f"No such file or directory: '{filename}'"))

    try:
        with open(file_path, "r", encoding="utf-8", newline="") as handle:
            lines = [line.strip() for line in handle]
    except (UnicodeDecodeError, OSError) as e:
        raise CSVReadError(str(filename), e)

    rows = [line for line in lines if line and not line.startswith("#")]
    scan = []
    for i, row in enumerate(rows):
        cells = [cell for cell in _DELIMITERS.split(row) if cell]
        try:
            if len(cells) < 2:
                raise ValueError(f"expected 2 columns, found {len(cells)}")
            scan.append((float(cells[0]), float(cells[1])))
        except ValueError as e:
            if i == 0:
                continue
            raise CSVReadError(str(filename), Exception(f"Row {i + 1} is malformed: {e}"))

    if not scan:
        raise CSVReadError(str(filename), Exception("No data rows found - file may be empty or malformed"))
    return scan
