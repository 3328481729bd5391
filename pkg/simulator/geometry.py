"""
Geometry construction: hemispherical multi-layer bulbs, flat multi-LED
ceiling clusters, receivers, and boresight projections onto the floor.

Frame: floor at z=0, ceiling at z=room.height, bulb centre on the ceiling.
"""

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from simulator.models import (
    BulbDesign,
    ClusterType,
    FlatClusterSpec,
    PdElement,
    ReceiverSpec,
    RoomSpec,
    TransmitterBoard,
    Vec3,
)


DIVERSITY_TILT_DEG = 40.0


class FloorProjection(NamedTuple):
    x: float
    y: float
    in_room: bool


@dataclass(frozen=True)
class TransmitterLayout:
    """Boards of one or more transmitters plus their cluster grouping"""
    boards: Tuple[TransmitterBoard, ...]
    clusters: Dict[int, Tuple[int, ...]] = field(default_factory=dict)

    def cluster_of(self, board_id: int) -> Optional[int]:
        for cluster_id, board_ids in self.clusters.items():
            if board_id in board_ids:
                return cluster_id
        return None

    @property
    def board_ids(self) -> Tuple[int, ...]:
        return tuple(b.id for b in self.boards)


def direction(tilt_deg: float, azimuth_deg: float) -> Vec3:
    """Unit vector tilted `tilt_deg` from straight down toward `azimuth_deg`"""
    theta = math.radians(tilt_deg)
    phi = math.radians(azimuth_deg)
    return (
        math.sin(theta) * math.cos(phi),
        math.sin(theta) * math.sin(phi),
        -math.cos(theta),
    )


def _normalized(v: Vec3) -> Vec3:
    norm = math.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
    return (v[0] / norm, v[1] / norm, v[2] / norm)


def _board_disk(center: Vec3, normal: Vec3, radius: float, ring: int = 6) -> Tuple[Vec3, ...]:
    """Centre plus a ring of LED positions on the board disk"""
    # any vector not parallel to the normal spans the disk plane
    helper = (0.0, 0.0, 1.0) if abs(normal[2]) < 0.9 else (1.0, 0.0, 0.0)
    u = _normalized((
        normal[1] * helper[2] - normal[2] * helper[1],
        normal[2] * helper[0] - normal[0] * helper[2],
        normal[0] * helper[1] - normal[1] * helper[0],
    ))
    w = (
        normal[1] * u[2] - normal[2] * u[1],
        normal[2] * u[0] - normal[0] * u[2],
        normal[0] * u[1] - normal[1] * u[0],
    )
    r = radius * 0.5
    points = [center]
    for i in range(ring):
        a = 2.0 * math.pi * i / ring
        points.append(tuple(
            center[k] + r * (math.cos(a) * u[k] + math.sin(a) * w[k]) for k in range(3)
        ))
    return tuple(points)


def build_bulb(design: BulbDesign) -> List[TransmitterBoard]:
    """
    Place every board of a hemispherical bulb.

    Args:
        design: Bulb design

    Returns:
        Boards with ids assigned layer by layer; board.cluster_id is the layer index

    Raises:
        ValueError: if two boards would overlap
    """
    cx, cy, cz = design.center
    boards: List[TransmitterBoard] = []
    next_id = 0

    for layer_index, layer in enumerate(design.layers):
        for i in range(layer.board_count):
            azimuth = layer.azimuth_offset_deg + i * layer.azimuth_spacing_deg
            orientation = direction(layer.elevation_deg, azimuth)
            position = (
                cx + design.radius * orientation[0],
                cy + design.radius * orientation[1],
                cz + design.radius * orientation[2],
            )
            boards.append(TransmitterBoard(
                id=next_id,
                position=position,
                orientation=orientation,
                divergence_angle=design.divergence_angle,
                half_intensity_angle=design.half_intensity_angle,
                power=design.power_per_board,
                led_positions=_board_disk(position, orientation, design.board_radius),
                cluster_id=layer_index,
            ))
            next_id += 1

    min_gap = 2.0 * design.board_radius
    for a, b in combinations(boards, 2):
        gap = math.dist(a.position, b.position)
        if gap < min_gap - 1e-12:
            raise ValueError(
                f"Boards {a.id} and {b.id} overlap: centre distance {gap:.4f} m "
                f"< 2*board_radius = {min_gap:.4f} m"
            )

    return boards


def build_flat_cluster(spec: FlatClusterSpec, first_id: int = 0,
                       cluster_id: Optional[int] = None) -> List[TransmitterBoard]:
    """
    Build a flat 3-LED or 7-LED ceiling transmitter; every LED is its own board.

    Args:
        spec: Cluster spec
        first_id: Id of the first board (layouts number boards globally)
        cluster_id: Stored on every board

    Returns:
        3 or 7 boards
    """
    if spec.cluster_type == ClusterType.THREE_LED:
        ring = [(i * 120.0) for i in range(3)]
        with_center = False
    else:
        ring = [(i * 60.0) for i in range(6)]
        with_center = True

    elements: List[Tuple[Vec3, Vec3]] = []
    cx, cy, cz = spec.center
    if with_center:
        elements.append((spec.center, (0.0, 0.0, -1.0)))
    for azimuth in ring:
        a = math.radians(azimuth)
        position = (
            cx + spec.element_spacing * math.cos(a),
            cy + spec.element_spacing * math.sin(a),
            cz,
        )
        elements.append((position, direction(spec.tilt_deg, azimuth)))

    return [
        TransmitterBoard(
            id=first_id + i,
            position=position,
            orientation=orientation,
            divergence_angle=spec.divergence_deg,
            half_intensity_angle=spec.half_intensity_deg,
            power=spec.per_led_power,
            led_positions=(position,),
            cluster_id=cluster_id,
        )
        for i, (position, orientation) in enumerate(elements)
    ]


def build_cluster_layout(
    cluster_type: ClusterType,
    rows: int,
    cols: int,
    room: RoomSpec,
    tilt_deg: float = 25.0,
    spacing: float = 0.1,
    per_led_power: float = 1.0,
    half_intensity_deg: float = 30.0,
    divergence_deg: float = 90.0,
) -> TransmitterLayout:
    """
    Uniform rows x cols grid of flat clusters on the ceiling, half-spacing margins.

    Columns run along x (width), rows along y (depth).
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"Cluster grid must be at least 1x1, got {rows}x{cols}")

    dx = room.width / cols
    dy = room.depth / rows
    boards: List[TransmitterBoard] = []
    clusters: Dict[int, Tuple[int, ...]] = {}

    for r in range(rows):
        for c in range(cols):
            cluster_id = r * cols + c
            spec = FlatClusterSpec(
                cluster_type=cluster_type,
                center=((c + 0.5) * dx, (r + 0.5) * dy, room.height),
                tilt_deg=tilt_deg,
                element_spacing=spacing,
                per_led_power=per_led_power,
                half_intensity_deg=half_intensity_deg,
                divergence_deg=divergence_deg,
            )
            cluster = build_flat_cluster(spec, first_id=len(boards), cluster_id=cluster_id)
            clusters[cluster_id] = tuple(b.id for b in cluster)
            boards.extend(cluster)

    return TransmitterLayout(boards=tuple(boards), clusters=clusters)


def boresight_floor_projection(board: TransmitterBoard, room: RoomSpec) -> Optional[FloorProjection]:
    """
    Intersect the board's boresight ray with the floor plane.

    Points outside the floor rectangle are returned unclamped with in_room=False.
    Returns None when the ray never reaches the floor.
    """
    px, py, pz = board.position
    ox, oy, oz = board.orientation
    if oz >= 0.0:
        return None
    if ox == 0.0 and oy == 0.0:
        return FloorProjection(px, py, room.contains_floor_point((px, py)))
    s = -pz / oz
    x = px + s * ox
    y = py + s * oy
    return FloorProjection(x, y, room.contains_floor_point((x, y)))


def board_floor_point(board: TransmitterBoard, room: RoomSpec) -> Tuple[float, float]:
    """Boresight projection, or the board's horizontal position when there is none"""
    projection = boresight_floor_projection(board, room)
    if projection is None:
        return (board.position[0], board.position[1])
    return (projection.x, projection.y)


def make_receiver(
    receiver_id: int,
    x: float,
    y: float,
    z: float = 0.0,
    aperture_radius: float = 0.0375,
    fov_deg: float = 90.0,
    rf_address: str = "",
) -> ReceiverSpec:
    """Single upward-facing photodetector"""
    return ReceiverSpec(
        id=receiver_id,
        position=(x, y, z),
        elements=(PdElement(normal=(0.0, 0.0, 1.0), aperture_radius=aperture_radius, fov_deg=fov_deg),),
        rf_address=rf_address,
    )


def make_diversity_receiver(
    receiver_id: int,
    x: float,
    y: float,
    z: float = 0.0,
    aperture_radius: float = 0.0375,
    fov_deg: float = 40.0,
    tilt_deg: float = DIVERSITY_TILT_DEG,
    rf_address: str = "",
) -> ReceiverSpec:
    """
    7-element receiver: element 0 faces up (identical to make_receiver's PD),
    elements 1..6 are tilted by tilt_deg toward azimuths 0, 60, ..., 300 degrees.
    """
    elements = [PdElement(normal=(0.0, 0.0, 1.0), aperture_radius=aperture_radius, fov_deg=fov_deg)]
    for i in range(6):
        down = direction(tilt_deg, i * 60.0)
        elements.append(PdElement(
            normal=(down[0], down[1], -down[2]),
            aperture_radius=aperture_radius,
            fov_deg=fov_deg,
        ))
    return ReceiverSpec(
        id=receiver_id,
        position=(x, y, z),
        elements=tuple(elements),
        rf_address=rf_address,
    )


def grid_receivers(
    room: RoomSpec,
    diversity: bool = False,
    z: float = 0.0,
    aperture_radius: float = 0.0375,
    fov_deg: float = 90.0,
    tilt_deg: float = DIVERSITY_TILT_DEG,
) -> List[ReceiverSpec]:
    """One receiver per floor grid cell, ids in row-major (y outer, x inner) order"""
    xs, ys = room.floor_grid()
    receivers = []
    for y in ys:
        for x in xs:
            rid = len(receivers)
            if diversity:
                receivers.append(make_diversity_receiver(
                    rid, float(x), float(y), z, aperture_radius, fov_deg, tilt_deg
                ))
            else:
                receivers.append(make_receiver(rid, float(x), float(y), z, aperture_radius, fov_deg))
    return receivers


def translate_boards(boards: Sequence[TransmitterBoard], dx: float, dy: float) -> List[TransmitterBoard]:
    """Shift boards horizontally; orientations are unchanged"""
    moved = []
    for b in boards:
        moved.append(b.model_copy(update={
            "position": (b.position[0] + dx, b.position[1] + dy, b.position[2]),
            "led_positions": tuple((p[0] + dx, p[1] + dy, p[2]) for p in b.led_positions),
        }))
    return moved
