import json
import math

import pytest

from simulator.data_logger import DataLogger, db_cell, format_value
from simulator.models import SirStatus
from simulator.report import MANIFEST_FILE, ReportGenerator


@pytest.fixture
def data_logger(tmp_path):
    logger = DataLogger(str(tmp_path))
    logger.setup_run_dir("run")
    return logger


class TestFormatting:
    @pytest.mark.parametrize("value, text", [
        (None, ""),
        (True, "true"),
        (0.1, "0.1"),
        (3, "3"),
        (math.inf, "inf"),
        (-math.inf, "-inf"),
        (math.nan, "nan"),
        (SirStatus.ZERO_SIGNAL, "zero_signal"),
    ])
    def test_format_value(self, value, text):
        assert format_value(value) == text

    def test_db_cell(self):
        assert db_cell(12.345678) == "12.3457"
        assert db_cell(-math.inf) == "-inf"
        assert db_cell(None) == ""


class TestDataLogger:
    def test_csv_layout(self, data_logger):
        path = data_logger.write_csv("table.csv", ["a", "b"], [[1, "x"], [0.5, None]])
        assert path.read_text() == "a,b\n1,x\n0.5,\n"
        assert data_logger.written == ["table.csv"]

    def test_row_width_checked(self, data_logger):
        with pytest.raises(ValueError):
            data_logger.write_csv("table.csv", ["a", "b"], [[1]])

    def test_json_is_sorted(self, data_logger):
        path = data_logger.write_json("out.json", {"b": 1, "a": 2})
        assert path.read_text() == '{\n  "a": 2,\n  "b": 1\n}\n'

    def test_lines(self, data_logger):
        path = data_logger.write_lines("events.jsonl", ["{}", "{}"])
        assert path.read_text() == "{}\n{}\n"

    def test_setup_replaces_old_run(self, data_logger):
        data_logger.write_lines("stale.txt", ["x"])
        run_dir = data_logger.setup_run_dir("run")
        assert not (run_dir / "stale.txt").exists()
        assert data_logger.written == []

    def test_writing_needs_a_run_dir(self, tmp_path):
        with pytest.raises(ValueError):
            DataLogger(str(tmp_path)).write_json("x.json", {})

    def test_discard(self, data_logger):
        run_dir = data_logger.run_dir
        data_logger.write_lines("partial.txt", ["x"])
        data_logger.discard()
        assert not run_dir.exists()


class TestReport:
    def test_manifest_lists_outputs(self, data_logger):
        data_logger.write_lines("events.jsonl", [])
        reporter = ReportGenerator(data_logger)
        manifest = reporter.build_manifest("protocol-sim", {"seed": 3}, seed=3, threads=1, preset="protocol")
        path = reporter.save_manifest(manifest)
        saved = json.loads(path.read_text())
        assert saved["outputs"] == ["events.jsonl", MANIFEST_FILE]
        assert saved["summary"] == {}
        assert saved["preset"] == "protocol"
