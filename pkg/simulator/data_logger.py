"""
Data logger for saving simulation outputs.
Writes tidy CSV and JSON into one directory per run for external plotting.
"""

import csv
import json
import math
import shutil
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence


DB_DECIMALS = 4


def format_value(value: Any) -> str:
    """CSV cell text: floats in repr form, None empty, non-finite as inf/-inf/nan"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def db_cell(value_db: Optional[float]) -> str:
    """dB value rounded for CSV output; None becomes an empty cell"""
    if value_db is None:
        return ""
    if math.isinf(value_db) or math.isnan(value_db):
        return format_value(value_db)
    return f"{value_db:.{DB_DECIMALS}f}"


class DataLogger:
    """Saves run outputs under <base_dir>/<run_name>/"""

    def __init__(self, base_dir: str = "data/runs"):
        self.base_dir = Path(base_dir)
        self.run_dir: Optional[Path] = None
        self.written: List[str] = []

    def setup_run_dir(self, run_name: str) -> Path:
        """Create (or reuse) the run directory; earlier contents are replaced"""
        run_dir = self.base_dir / run_name
        if run_dir.exists():
            shutil.rmtree(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        self.run_dir = run_dir
        self.written = []
        return run_dir

    def _path(self, filename: str) -> Path:
        if self.run_dir is None:
            raise ValueError("setup_run_dir() must be called before writing outputs")
        path = self.run_dir / filename
        path.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(filename)
        return path

    def write_csv(self, filename: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """
        Save a CSV table.

        Args:
            filename: Path relative to the run directory
            header: Column names
            rows: Row values; strings are written as-is, other values via format_value

        Returns:
            Path of the written file
        """
        path = self._path(filename)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                if len(row) != len(header):
                    raise ValueError(f"{filename}: row has {len(row)} cells, header has {len(header)}")
                writer.writerow([c if isinstance(c, str) else format_value(c) for c in row])
        return path

    def write_json(self, filename: str, data: Any) -> Path:
        path = self._path(filename)
        with open(path, "w") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
        return path

    def write_lines(self, filename: str, lines: Iterable[str]) -> Path:
        path = self._path(filename)
        with open(path, "w", newline="") as f:
            for line in lines:
                f.write(line + "\n")
        return path

    def discard(self):
        """Remove a partially written run directory"""
        if self.run_dir is not None and self.run_dir.exists():
            shutil.rmtree(self.run_dir)
        self.run_dir = None
        self.written = []
