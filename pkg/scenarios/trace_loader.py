"""
Mobility trace loader - joins a waypoint CSV with a YAML join/leave manifest
"""

import csv
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional

import yaml

from simulator.models import LeaveMode, MobilityTrace, Waypoint
from simulator.protocol import rf_address_for


TRACE_COLUMNS = ("receiver_id", "time", "x", "y")


def read_waypoints(file_path: str) -> Dict[int, List[Waypoint]]:
    """
    Read waypoints grouped by receiver.

    The CSV needs a header with receiver_id, time, x and y; other columns are
    ignored. Rows may come in any order.

    Raises:
        ValueError: missing columns or unparsable values
    """
    path = Path(file_path)
    grouped: Dict[int, List[Waypoint]] = defaultdict(list)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in TRACE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{file_path}: missing columns {missing}")
        for line_no, row in enumerate(reader, start=2):
            try:
                rid = int(row["receiver_id"])
                grouped[rid].append(Waypoint(time=float(row["time"]), x=float(row["x"]), y=float(row["y"])))
            except ValueError as e:
                raise ValueError(f"{file_path}:{line_no}: {e}") from e
    return {rid: sorted(points, key=lambda w: w.time) for rid, points in grouped.items()}


def read_manifest(file_path: str) -> Dict[int, dict]:
    """
    Read the join/leave manifest.

    Expected layout:
        receivers:
          - receiver_id: 0
            rf_address: "02:00:00:00:00:00"
            join_time: 0.0
            leave_time: 3.0
            leave_mode: graceful
    """
    data = yaml.safe_load(Path(file_path).read_text()) or {}
    entries = data.get("receivers", []) if isinstance(data, dict) else []
    manifest = {}
    for entry in entries:
        rid = int(entry["receiver_id"])
        if rid in manifest:
            raise ValueError(f"{file_path}: receiver {rid} listed twice")
        manifest[rid] = entry
    return manifest


def load_traces(traces_file: str, manifest_file: Optional[str] = None) -> List[MobilityTrace]:
    """
    Build one MobilityTrace per receiver in the waypoint CSV.

    Receivers missing from the manifest join at their first waypoint, never
    leave, and get a locally administered address derived from their id.

    Args:
        traces_file: Waypoint CSV
        manifest_file: Optional YAML join/leave manifest

    Returns:
        Traces sorted by receiver id
    """
    waypoints = read_waypoints(traces_file)
    manifest = read_manifest(manifest_file) if manifest_file else {}
    unknown = sorted(set(manifest) - set(waypoints))
    if unknown:
        raise ValueError(f"Manifest lists receivers without waypoints: {unknown}")

    traces = []
    for rid in sorted(waypoints):
        points = waypoints[rid]
        entry = manifest.get(rid, {})
        traces.append(MobilityTrace(
            receiver_id=rid,
            rf_address=str(entry.get("rf_address", rf_address_for(rid))),
            waypoints=tuple(points),
            join_time=float(entry.get("join_time", points[0].time)),
            leave_time=entry.get("leave_time"),
            leave_mode=LeaveMode(entry.get("leave_mode", LeaveMode.UNGRACEFUL.value)),
        ))
    return traces
