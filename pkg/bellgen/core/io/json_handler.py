"""
JSON file I/O handler.

Reads experiment configs and tomography records; writes deterministic
reports (sorted keys, floats rounded to 12 significant digits).
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from ..exceptions import JSONReadError, JSONWriteError, ValidationError
from ..experiment import CoincidenceRecord

SIGNIFICANT_DIGITS = 12


def round_floats(value: Any) -> Any:
    """
    Recursively normalize a report for serialization.

    Floats are rounded to 12 significant digits, numpy scalars and arrays
    become plain Python values and non-finite floats become None.
    """
    if isinstance(value, dict):
        return {str(k): round_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(v) for v in value]
    if isinstance(value, np.ndarray):
        return round_floats(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(format(value, f".{SIGNIFICANT_DIGITS}g"))
    if isinstance(value, complex):
        return [round_floats(value.real), round_floats(value.imag)]
    return value


def dumps(data: Any) -> str:
    return json.dumps(round_floats(data), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def read_json(filename: Union[str, Path]) -> Any:
    """
    Read a JSON document.

    Raises:
        ValidationError: If the filename is empty
        JSONReadError: If the file is missing, unreadable or malformed
    """
    if not isinstance(filename, (str, Path)) or not str(filename).strip():
        raise ValidationError("filename", filename, "non-empty path")

    file_path = Path(filename)
    if not file_path.exists():
        raise JSONReadError(str(filename), FileNotFoundError(f"No such file or directory: '{filename}'"))

    try:
        with open(file_path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except json.JSONDecodeError as e:
        raise JSONReadError(str(filename), e)
    except (UnicodeDecodeError, OSError) as e:
        raise JSONReadError(str(filename), e)


def write_json(data: Any, filename: Union[str, Path]) -> None:
    """
    Write a report as deterministic JSON.

    Raises:
        JSONWriteError: If the file cannot be written
    """
    if not isinstance(filename, (str, Path)) or not str(filename).strip():
        raise ValidationError("filename", filename, "non-empty path")

    file_path = Path(filename)
    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        text = dumps(data)
        with open(file_path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
    except (TypeError, ValueError) as e:
        raise JSONWriteError(str(filename), e)
    except OSError as e:
        raise JSONWriteError(str(filename), e)


def records_to_json(records: Sequence[CoincidenceRecord]) -> List[Dict[str, Any]]:
    """Records as the documented array of {setting, counts, integration_s, seed} objects."""
    return [record.to_dict() for record in records]


def write_records(records: Sequence[CoincidenceRecord], filename: Union[str, Path]) -> None:
    write_json(records_to_json(records), filename)


def read_records(filename: Union[str, Path]) -> List[CoincidenceRecord]:
    """
    Read tomography records from a JSON array (simulated or lab data).

    Raises:
        JSONReadError: If the document is not an array of record objects
        ValidationError: If a record is malformed
    """
    content = read_json(filename)
    if isinstance(content, dict) and "records" in content:
        content = content["records"]
    if not isinstance(content, list):
        raise JSONReadError(str(filename), Exception("Records file must contain a JSON array of objects"))

    records = []
    for i, item in enumerate(content):
        if not isinstance(item, dict):
            raise JSONReadError(str(filename), Exception(f"Item {i} in JSON array is not an object"))
        records.append(CoincidenceRecord.from_dict(item))
    return records
