"""
Tests for JSON reports and records, and CSV scans and tables.
"""

import json
import math

import numpy as np
import pytest

from bellgen.core.exceptions import CSVReadError, JSONReadError, JSONWriteError, ValidationError
from bellgen.core.experiment import CoincidenceRecord
from bellgen.core.io.csv_handler import read_scan_csv, write_csv
from bellgen.core.io.json_handler import (
    dumps,
    read_json,
    read_records,
    records_to_json,
    round_floats,
    write_json,
    write_records,
)


class TestRoundFloats:
    """Test report normalization."""

    def test_twelve_significant_digits(self):
        assert round_floats(math.pi) == 3.14159265359
        assert round_floats(1.0 / 3.0e-9) == 333333333.333

    def test_numpy_values(self):
        data = {"a": np.float64(0.5), "b": np.int64(3), "c": np.array([1.0, 2.0]), "d": np.bool_(True)}
        assert round_floats(data) == {"a": 0.5, "b": 3, "c": [1.0, 2.0], "d": True}
        assert type(round_floats(np.int64(3))) is int

    def test_non_finite_become_null(self):
        assert round_floats([math.inf, -math.inf, math.nan]) == [None, None, None]

    def test_complex_as_pair(self):
        assert round_floats(1.0 - 2.0j) == [1.0, -2.0]

    def test_bool_is_not_int(self):
        assert round_floats(True) is True

    def test_keys_become_strings(self):
        assert round_floats({1: (2, 3)}) == {"1": [2, 3]}


class TestJsonHandler:
    """Test deterministic JSON reports."""

    def test_dumps_sorted_and_newline_terminated(self):
        text = dumps({"b": 1, "a": 0.1 + 0.2})
        assert text.endswith("\n")
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {"a": 0.3, "b": 1}

    def test_write_creates_directories(self, tmp_path):
        path = tmp_path / "nested" / "deeper" / "report.json"
        write_json({"value": 1.5}, path)
        assert read_json(path) == {"value": 1.5}

    def test_identical_content_identical_bytes(self, tmp_path):
        report = {"rho": np.eye(2) / 2.0, "metrics": {"fidelity": 0.9999999999999}}
        write_json(report, tmp_path / "one.json")
        write_json(dict(reversed(list(report.items()))), tmp_path / "two.json")
        assert (tmp_path / "one.json").read_bytes() == (tmp_path / "two.json").read_bytes()

    def test_unserializable_value(self, tmp_path):
        with pytest.raises(JSONWriteError):
            write_json({"value": object()}, tmp_path / "bad.json")

    @pytest.mark.parametrize("filename", ["", "   ", None])
    def test_invalid_filename(self, filename):
        with pytest.raises(ValidationError):
            read_json(filename)

    def test_missing_file(self, tmp_path):
        with pytest.raises(JSONReadError) as exc_info:
            read_json(tmp_path / "missing.json")
        assert exc_info.value.filename.endswith("missing.json")

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(JSONReadError) as exc_info:
            read_json(path)
        assert exc_info.value.filename.endswith("broken.json")


class TestRecordFiles:
    """Test the tomography record file format."""

    RECORDS = [
        CoincidenceRecord("ZZ", (120, 3, 0, 118), 2.0, True, 11),
        CoincidenceRecord("XY", (60.5, 61, 59, 60), 2.0),
    ]

    def test_documented_fields(self):
        data = records_to_json(self.RECORDS)
        assert data[0] == {
            "setting": "ZZ",
            "counts": [120, 3, 0, 118],
            "integration_s": 2.0,
            "accidentals_subtracted": True,
            "seed": 11,
        }
        assert data[1]["counts"] == [60.5, 61, 59, 60]

    def test_write_then_read(self, tmp_path):
        path = tmp_path / "records.json"
        write_records(self.RECORDS, path)
        assert read_records(path) == self.RECORDS

    def test_wrapped_records(self, tmp_path):
        path = tmp_path / "lab.json"
        path.write_text(json.dumps({"records": [{"setting": "xx", "counts": [1, 2, 3, 4]}]}), encoding="utf-8")
        records = read_records(path)
        assert records[0].setting == "XX"
        assert records[0].integration == 1.0

    def test_not_an_array(self, tmp_path):
        path = tmp_path / "object.json"
        path.write_text(json.dumps({"setting": "ZZ"}), encoding="utf-8")
        with pytest.raises(JSONReadError):
            read_records(path)

    def test_item_not_an_object(self, tmp_path):
        path = tmp_path / "items.json"
        path.write_text(json.dumps([[1, 2, 3, 4]]), encoding="utf-8")
        with pytest.raises(JSONReadError) as exc_info:
            read_records(path)
        assert "Item 0" in str(exc_info.value)

    def test_record_missing_counts(self, tmp_path):
        path = tmp_path / "partial.json"
        path.write_text(json.dumps([{"setting": "ZZ"}]), encoding="utf-8")
        with pytest.raises(ValidationError) as exc_info:
            read_records(path)
        assert exc_info.value.parameter == "records"


class TestCsvHandler:
    """Test scan reading and table writing."""

    def test_write_fixed_columns(self, tmp_path):
        path = tmp_path / "table.csv"
        rows = [{"x": 0.1, "y": 2, "z": None}, {"x": math.inf, "y": True}]
        write_csv(rows, path, ["x", "y", "z"])
        assert path.read_text(encoding="utf-8") == "x,y,z\n0.1,2,\ninf,true,\n"

    def test_write_requires_columns(self, tmp_path):
        with pytest.raises(ValidationError):
            write_csv([], tmp_path / "empty.csv", [])

    def test_read_scan_with_header(self, tmp_path):
        path = tmp_path / "scan.csv"
        path.write_text("volts,rate\n0.0,10\n0.5,12.5\n", encoding="utf-8")
        assert read_scan_csv(path) == [(0.0, 10.0), (0.5, 12.5)]

    def test_read_scan_mixed_delimiters(self, tmp_path):
        path = tmp_path / "scan.txt"
        path.write_text("# lab scan\n0.0\t10\n\n0.5 ; 12\n1.0 14 extra\n", encoding="utf-8")
        assert read_scan_csv(path) == [(0.0, 10.0), (0.5, 12.0), (1.0, 14.0)]

    def test_malformed_row(self, tmp_path):
        path = tmp_path / "scan.csv"
        path.write_text("0.0,10\n0.5,high\n", encoding="utf-8")
        with pytest.raises(CSVReadError) as exc_info:
            read_scan_csv(path)
        assert "Row 2" in str(exc_info.value)

    def test_empty_scan(self, tmp_path):
        path = tmp_path / "scan.csv"
        path.write_text("volts,rate\n", encoding="utf-8")
        with pytest.raises(CSVReadError):
            read_scan_csv(path)

    def test_missing_scan(self, tmp_path):
        with pytest.raises(CSVReadError) as exc_info:
            read_scan_csv(tmp_path / "missing.csv")
        assert "File not found" in str(exc_info.value)
