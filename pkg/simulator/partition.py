"""
Board partitioning among receivers.

Two receivers split the bulb along the perpendicular bisector of the segment
joining them; N receivers use the nearest-receiver rule, evaluated as a
sequence of the same pairwise bisector tests so that N=2 reproduces the
bisector split exactly. Ties go to the lower receiver id.
"""

from typing import Dict, List, Sequence, Tuple

import numpy as np

from simulator.geometry import board_floor_point
from simulator.models import Partition, Point2, RoomSpec, TransmitterBoard


def board_points(boards: Sequence[TransmitterBoard], room: RoomSpec) -> np.ndarray:
    """(n_boards, 2) floor points: boresight projections, or board xy when there is none"""
    return np.array([board_floor_point(b, room) for b in boards], dtype=float).reshape(-1, 2)


def assign_points(points: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """
    Index of the receiver owning each point.

    Receivers are visited in the given order; a later receiver takes a point
    only when the point lies strictly on its side of the bisector with the
    current owner, so earlier receivers win ties.

    Args:
        points: (n, 2) floor points
        positions: (k, 2) receiver positions, in tie-break priority order

    Returns:
        (n,) integer array of receiver indices
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    owner = np.zeros(len(points), dtype=int)
    for j in range(1, len(positions)):
        a = positions[owner]
        b = positions[j]
        mid = (a + b) / 2.0
        side = np.sum((points - mid) * (b - a), axis=1)
        owner = np.where(side > 0.0, j, owner)
    return owner


def _ordered_receivers(receivers: Sequence[Tuple[int, Point2]]) -> List[Tuple[int, Point2]]:
    if not receivers:
        raise ValueError("At least one receiver is required")
    ordered = sorted(((int(rid), (float(p[0]), float(p[1]))) for rid, p in receivers), key=lambda r: r[0])
    ids = [rid for rid, _ in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError(f"Duplicate receiver ids: {ids}")
    positions = [p for _, p in ordered]
    if len(set(positions)) != len(positions):
        raise ValueError(f"Receivers must have distinct positions, got {positions}")
    return ordered


def _partition(receivers: Sequence[Tuple[int, Point2]], boards: Sequence[TransmitterBoard],
               room: RoomSpec) -> Partition:
    ordered = _ordered_receivers(receivers)
    ids = [rid for rid, _ in ordered]
    owner = assign_points(board_points(boards, room), np.array([p for _, p in ordered]))
    assignment: Dict[int, int] = {b.id: ids[i] for b, i in zip(boards, owner)}
    if len(assignment) != len(boards):
        raise ValueError("Board ids must be distinct")
    return Partition(assignment=assignment, receiver_positions_snapshot=dict(ordered))


def bisector_partition(
    r1: Point2,
    r2: Point2,
    boards: Sequence[TransmitterBoard],
    room: RoomSpec,
    receiver_ids: Tuple[int, int] = (1, 2),
) -> Partition:
    """
    Split boards between two receivers by the perpendicular bisector of r1-r2.

    Args:
        r1: Floor position of the first receiver
        r2: Floor position of the second receiver
        boards: Bulb boards
        room: Room
        receiver_ids: Ids for r1 and r2

    Returns:
        Partition; boards on the bisector go to the smaller id

    Raises:
        ValueError: coincident receivers or no boards
    """
    if not boards:
        raise ValueError("bisector_partition needs at least one board")
    if tuple(r1) == tuple(r2):
        raise ValueError(f"Receivers coincide at {tuple(r1)}")
    return _partition([(receiver_ids[0], r1), (receiver_ids[1], r2)], boards, room)


def repartition(
    receivers: Sequence[Tuple[int, Point2]],
    boards: Sequence[TransmitterBoard],
    room: RoomSpec,
) -> Partition:
    """Assign every board to the receiver nearest its floor point (ties: lower id)"""
    return _partition(receivers, boards, room)


def partition_rows(partition: Partition) -> List[Tuple[int, int]]:
    return sorted(partition.assignment.items())
