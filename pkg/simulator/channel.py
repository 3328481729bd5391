"""
Optical DC channel: generalized Lambertian line-of-sight gains, diffuse
wall reflections via a patch mesh, received power and floor irradiance.

  LOS gain     H = (m+1) A / (2 pi d^2) * cos^m(phi) * cos(psi)
  Lambertian   m = -ln 2 / ln cos(half-intensity angle)
  Reflections  patches re-emit as first-order Lambertian sources;
               order n+1 = (rho * order n) @ F, F[p,q] = cos_p cos_q A_q / (pi d^2)
"""

import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from simulator.models import (
    CoverageGate,
    PdElement,
    ReceiverSpec,
    RoomSpec,
    Surface,
    TransmitterBoard,
    Vec3,
)


logger = logging.getLogger(__name__)

GATE_TOLERANCE = 1e-12
MAX_REFLECTION_ORDER = 4
COARSE_PATCH_SIZE = 0.5
DEFAULT_PATCH_SIZE = 0.25


@lru_cache(maxsize=256)
def lambertian_order(half_intensity_deg: float) -> float:
    """
    Lambertian mode number for a half-intensity angle.

    Results within 1e-12 of an integer are snapped to it so that the textbook
    cases (60 deg -> 1, 45 deg -> 2) come out exact.

    Raises:
        ValueError: outside (0, 90) degrees
    """
    if not (0.0 < half_intensity_deg < 90.0):
        raise ValueError(f"half_intensity_deg must be in (0, 90), got {half_intensity_deg}")
    m = -math.log(2.0) / math.log(math.cos(math.radians(half_intensity_deg)))
    nearest = round(m)
    if abs(m - nearest) < 1e-12:
        return float(nearest)
    return m


# ---------------------------------------------------------------------------
# Vectorized kernels
# ---------------------------------------------------------------------------

def _lambertian_kernel(
    src_pos: np.ndarray,
    src_dir: np.ndarray,
    orders: np.ndarray,
    dst_pos: np.ndarray,
    dst_normal: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-unit-area gain from every source to every destination point.

    Returns:
        (gain, cos_phi, cos_psi), each shaped (n_src, n_dst); gain is
        (m+1)/(2 pi d^2) cos^m(phi) cos(psi), zero when either cosine is <= 0
    """
    # explicit per-axis sums keep every entry independent of the array shape
    vx = dst_pos[None, :, 0] - src_pos[:, None, 0]
    vy = dst_pos[None, :, 1] - src_pos[:, None, 1]
    vz = dst_pos[None, :, 2] - src_pos[:, None, 2]
    d2 = vx * vx + vy * vy + vz * vz
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.sqrt(d2)
        cos_phi = (vx * src_dir[:, None, 0] + vy * src_dir[:, None, 1] + vz * src_dir[:, None, 2]) / d
        cos_psi = -(vx * dst_normal[None, :, 0] + vy * dst_normal[None, :, 1] + vz * dst_normal[None, :, 2]) / d
        valid = (d2 > 0.0) & (cos_phi > 0.0) & (cos_psi > 0.0)
        cp = np.where(valid, cos_phi, 0.0)
        radiant = (orders[:, None] + 1.0) / (2.0 * math.pi) * np.power(cp, orders[:, None])
        gain = np.where(valid, radiant * cos_psi / d2, 0.0)
    cos_phi = np.where(d2 > 0.0, cos_phi, 0.0)
    cos_psi = np.where(d2 > 0.0, cos_psi, 0.0)
    return gain, cos_phi, cos_psi


def _board_arrays(boards: Sequence[TransmitterBoard]):
    pos = np.array([b.position for b in boards], dtype=float).reshape(-1, 3)
    ori = np.array([b.orientation for b in boards], dtype=float).reshape(-1, 3)
    orders = np.array([lambertian_order(b.half_intensity_angle) for b in boards], dtype=float)
    cos_div = np.cos(np.radians([b.divergence_angle for b in boards]))
    power = np.array([b.power for b in boards], dtype=float)
    return pos, ori, orders, cos_div, power


@dataclass(frozen=True, eq=False)
class _Columns:
    keys: Tuple[Tuple[int, int], ...]
    positions: np.ndarray
    normals: np.ndarray
    areas: np.ndarray
    cos_fov: np.ndarray

    @classmethod
    def from_receivers(cls, receivers: Sequence[ReceiverSpec]) -> "_Columns":
        keys, positions, normals, areas, fovs = [], [], [], [], []
        for receiver in receivers:
            for element_id, element in enumerate(receiver.elements):
                keys.append((receiver.id, element_id))
                positions.append(receiver.position)
                normals.append(element.normal)
                areas.append(element.area)
                fovs.append(element.fov_deg)
        return cls(
            keys=tuple(keys),
            positions=np.array(positions, dtype=float).reshape(-1, 3),
            normals=np.array(normals, dtype=float).reshape(-1, 3),
            areas=np.array(areas, dtype=float),
            cos_fov=np.cos(np.radians(fovs)),
        )

    def chunk(self, start: int, stop: int) -> "_Columns":
        return _Columns(
            keys=self.keys[start:stop],
            positions=self.positions[start:stop],
            normals=self.normals[start:stop],
            areas=self.areas[start:stop],
            cos_fov=self.cos_fov[start:stop],
        )


def _gate_mask(gate: CoverageGate, cos_phi, cos_psi, cos_div, cos_fov) -> np.ndarray:
    divergence_ok = cos_phi >= cos_div[:, None] - GATE_TOLERANCE
    fov_ok = cos_psi >= cos_fov[None, :] - GATE_TOLERANCE
    if gate == CoverageGate.DIVERGENCE:
        return divergence_ok
    if gate == CoverageGate.FOV:
        return fov_ok
    return divergence_ok & fov_ok


def _los_block(boards: Sequence[TransmitterBoard], columns: _Columns, gate: CoverageGate) -> np.ndarray:
    pos, ori, orders, cos_div, _ = _board_arrays(boards)
    gain, cos_phi, cos_psi = _lambertian_kernel(pos, ori, orders, columns.positions, columns.normals)
    mask = _gate_mask(gate, cos_phi, cos_psi, cos_div, columns.cos_fov)
    return np.where(mask, gain * columns.areas[None, :], 0.0)


def los_gains_to_points(
    boards: Sequence[TransmitterBoard],
    points: np.ndarray,
    gate: CoverageGate = CoverageGate.DIVERGENCE,
    aperture_radius: float = 0.0375,
    fov_deg: float = 90.0,
) -> np.ndarray:
    """LOS gains (n_boards, n_points) to upward-facing PDs at each point"""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(points)
    columns = _Columns(
        keys=tuple((i, 0) for i in range(n)),
        positions=points,
        normals=np.tile((0.0, 0.0, 1.0), (n, 1)),
        areas=np.full(n, math.pi * aperture_radius ** 2),
        cos_fov=np.full(n, math.cos(math.radians(fov_deg))),
    )
    return _los_block(boards, columns, gate)


def los_gain(
    board: TransmitterBoard,
    pd: PdElement,
    position: Vec3,
    gate: CoverageGate = CoverageGate.DIVERGENCE,
) -> float:
    """
    Line-of-sight DC gain from one board to one photodetector element.

    Args:
        board: Transmitter board
        pd: Photodetector element
        position: PD position in meters
        gate: Coverage gate deciding whether the link counts

    Returns:
        Unitless gain, 0 when the gate fails

    Raises:
        ValueError: when the PD sits on the board
    """
    if math.dist(board.position, position) <= 0.0:
        raise ValueError(f"PD at {position} coincides with board {board.id}")
    columns = _Columns(
        keys=((0, 0),),
        positions=np.array([position], dtype=float),
        normals=np.array([pd.normal], dtype=float),
        areas=np.array([pd.area]),
        cos_fov=np.cos(np.radians([pd.fov_deg])),
    )
    return float(_los_block([board], columns, gate)[0, 0])


# ---------------------------------------------------------------------------
# Surface mesh and reflections
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Patch mesh over the room surfaces; arrays are aligned by patch index"""
    centers: np.ndarray
    normals: np.ndarray
    areas: np.ndarray
    reflectivities: np.ndarray
    surfaces: Tuple[Surface, ...]
    patch_size: float

    def __len__(self) -> int:
        return len(self.areas)

    @property
    def patches(self) -> List[Tuple[Vec3, Vec3, float, float]]:
        return [
            (tuple(c), tuple(n), float(a), float(r))
            for c, n, a, r in zip(self.centers, self.normals, self.areas, self.reflectivities)
        ]

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    def scaled_reflectivity(self, factor: float) -> "SurfaceMesh":
        return replace(self, reflectivities=self.reflectivities * factor)


def _surface_frame(room: RoomSpec, surface: Surface):
    """(origin, u axis, u length, v axis, v length, inward normal, reflectivity)"""
    W, D, H = room.width, room.depth, room.height
    ex, ey, ez = np.eye(3)
    frames = {
        Surface.FLOOR: (np.zeros(3), ex, W, ey, D, ez, room.floor_reflectivity),
        Surface.CEILING: (H * ez, ex, W, ey, D, -ez, room.ceiling_reflectivity),
        Surface.WALL_X0: (np.zeros(3), ey, D, ez, H, ex, room.wall_reflectivity),
        Surface.WALL_X1: (W * ex, ey, D, ez, H, -ex, room.wall_reflectivity),
        Surface.WALL_Y0: (np.zeros(3), ex, W, ez, H, ey, room.wall_reflectivity),
        Surface.WALL_Y1: (D * ey, ex, W, ez, H, -ey, room.wall_reflectivity),
    }
    return frames[surface]


def build_surface_mesh(
    room: RoomSpec,
    patch_size: float = DEFAULT_PATCH_SIZE,
    surfaces: Optional[Iterable[Surface]] = None,
) -> SurfaceMesh:
    """
    Uniformly subdivide room surfaces into patches of roughly patch_size.

    Args:
        room: Room
        patch_size: Target patch edge in meters
        surfaces: Surfaces to mesh (default: all six)

    Returns:
        SurfaceMesh whose patch areas sum exactly to the meshed surface area
    """
    if patch_size <= 0:
        raise ValueError(f"patch_size must be positive, got {patch_size}")
    if patch_size > COARSE_PATCH_SIZE:
        warnings.warn(
            f"patch_size {patch_size} m exceeds {COARSE_PATCH_SIZE} m; "
            f"reflection gains lose accuracy",
            stacklevel=2,
        )

    surfaces = tuple(surfaces) if surfaces is not None else tuple(Surface)
    centers, normals, areas, rhos, labels = [], [], [], [], []

    for surface in surfaces:
        origin, u, lu, v, lv, normal, rho = _surface_frame(room, surface)
        nu = max(1, int(round(lu / patch_size)))
        nv = max(1, int(round(lv / patch_size)))
        su = (np.arange(nu) + 0.5) * (lu / nu)
        sv = (np.arange(nv) + 0.5) * (lv / nv)
        grid_u, grid_v = np.meshgrid(su, sv, indexing="ij")
        pts = origin[None, :] + grid_u.reshape(-1, 1) * u[None, :] + grid_v.reshape(-1, 1) * v[None, :]
        count = nu * nv
        centers.append(pts)
        normals.append(np.tile(normal, (count, 1)))
        areas.append(np.full(count, (lu / nu) * (lv / nv)))
        rhos.append(np.full(count, rho))
        labels.extend([surface] * count)

    mesh = SurfaceMesh(
        centers=np.vstack(centers),
        normals=np.vstack(normals),
        areas=np.concatenate(areas),
        reflectivities=np.concatenate(rhos),
        surfaces=tuple(labels),
        patch_size=patch_size,
    )
    logger.debug("Built surface mesh: %d patches, %.2f m^2", len(mesh), mesh.total_area)
    return mesh


def _patch_transfer(mesh: SurfaceMesh, chunk_size: int) -> np.ndarray:
    """F[p, q]: fraction of power leaving patch p that lands on patch q"""
    n = len(mesh)
    ones = np.ones(n)
    transfer = np.empty((n, n))
    for start in range(0, n, chunk_size):
        stop = min(start + chunk_size, n)
        gain, _, _ = _lambertian_kernel(
            mesh.centers[start:stop], mesh.normals[start:stop], ones[start:stop],
            mesh.centers, mesh.normals,
        )
        transfer[start:stop] = gain * mesh.areas[None, :]
    return transfer


def _reflected_weights(
    boards: Sequence[TransmitterBoard],
    mesh: SurfaceMesh,
    max_order: int,
    chunk_size: int,
) -> np.ndarray:
    """Power re-emitted by each patch, summed over orders 1..max_order, per board"""
    pos, ori, orders, _, _ = _board_arrays(boards)
    incident, _, _ = _lambertian_kernel(pos, ori, orders, mesh.centers, mesh.normals)
    incident = incident * mesh.areas[None, :]

    transfer = _patch_transfer(mesh, chunk_size) if max_order > 1 else None
    weights = np.zeros_like(incident)
    for order in range(1, max_order + 1):
        emitted = incident * mesh.reflectivities[None, :]
        weights += emitted
        if order < max_order:
            incident = emitted @ transfer
    return weights


def _patch_to_columns(mesh: SurfaceMesh, columns: _Columns, gate: CoverageGate) -> np.ndarray:
    ones = np.ones(len(mesh))
    gain, _, cos_psi = _lambertian_kernel(mesh.centers, mesh.normals, ones, columns.positions, columns.normals)
    gain = gain * columns.areas[None, :]
    if gate in (CoverageGate.FOV, CoverageGate.BOTH):
        gain = np.where(cos_psi >= columns.cos_fov[None, :] - GATE_TOLERANCE, gain, 0.0)
    return gain


def reflection_gains(
    boards: Sequence[TransmitterBoard],
    receivers: Sequence[ReceiverSpec],
    mesh: SurfaceMesh,
    max_order: int,
    gate: CoverageGate = CoverageGate.FOV,
    chunk_size: int = 512,
) -> np.ndarray:
    """
    Diffuse reflection gains from boards to every PD element, orders 1..max_order.

    The LED divergence gate never applies to reflected light; under FOV or
    BOTH gating the PD field of view filters the last patch-to-PD hop.

    Returns:
        (n_boards, n_columns) array, columns ordered receiver by receiver,
        element by element
    """
    if not (1 <= max_order <= MAX_REFLECTION_ORDER):
        raise ValueError(f"max_order must be in [1, {MAX_REFLECTION_ORDER}], got {max_order}")
    columns = _Columns.from_receivers(receivers)
    weights = _reflected_weights(boards, mesh, max_order, chunk_size)

    result = np.empty((len(boards), len(columns.keys)))
    for start in range(0, len(columns.keys), chunk_size):
        stop = min(start + chunk_size, len(columns.keys))
        result[:, start:stop] = weights @ _patch_to_columns(mesh, columns.chunk(start, stop), gate)
    return result


# ---------------------------------------------------------------------------
# Gain matrix
# ---------------------------------------------------------------------------

def _fingerprint(payload: Any) -> str:
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class GainMatrix:
    """Per (board, PD element) DC gains split into LOS and reflected parts"""
    los: np.ndarray
    reflected: np.ndarray
    board_ids: Tuple[int, ...]
    columns: Tuple[Tuple[int, int], ...]
    meta: Dict[str, Any] = field(default_factory=dict)
    _row_index: Dict[int, int] = field(init=False, repr=False, compare=False)
    _col_index: Dict[Tuple[int, int], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.los.shape != self.reflected.shape:
            raise ValueError(f"los {self.los.shape} and reflected {self.reflected.shape} shapes differ")
        object.__setattr__(self, "_row_index", {b: i for i, b in enumerate(self.board_ids)})
        object.__setattr__(self, "_col_index", {k: i for i, k in enumerate(self.columns)})

    def total(self) -> np.ndarray:
        return self.los + self.reflected

    def column_index(self, receiver_id: int, element_id: int = 0) -> int:
        try:
            return self._col_index[(receiver_id, element_id)]
        except KeyError:
            raise ValueError(f"No gain column for receiver {receiver_id}, element {element_id}")

    def row_index(self, board_id: int) -> int:
        try:
            return self._row_index[board_id]
        except KeyError:
            raise ValueError(f"No gain row for board {board_id}")

    def column(self, receiver_id: int, element_id: int = 0) -> np.ndarray:
        """Total gain from every board (row order) to one PD element"""
        j = self.column_index(receiver_id, element_id)
        return self.los[:, j] + self.reflected[:, j]

    def gain(self, board_id: int, receiver_id: int, element_id: int = 0) -> float:
        i = self.row_index(board_id)
        j = self.column_index(receiver_id, element_id)
        return float(self.los[i, j] + self.reflected[i, j])

    def element_count(self, receiver_id: int) -> int:
        return sum(1 for rid, _ in self.columns if rid == receiver_id)

    def to_rows(self) -> List[Tuple[int, int, int, float, float]]:
        """(board_id, receiver_id, element_id, los_gain, reflected_gain) rows"""
        rows = []
        for i, board_id in enumerate(self.board_ids):
            for j, (receiver_id, element_id) in enumerate(self.columns):
                rows.append((board_id, receiver_id, element_id,
                             float(self.los[i, j]), float(self.reflected[i, j])))
        return rows


def compute_gain_matrix(
    boards: Sequence[TransmitterBoard],
    receivers: Sequence[ReceiverSpec],
    room: RoomSpec,
    gate: CoverageGate = CoverageGate.DIVERGENCE,
    mesh: Optional[SurfaceMesh] = None,
    max_order: int = 0,
    chunk_size: int = 512,
) -> GainMatrix:
    """
    LOS (and optionally reflected) gains from every board to every PD element.

    Args:
        boards: Transmitter boards
        receivers: Receivers; each element becomes one column
        room: Room the gains are computed in
        gate: Coverage gate applied to LOS links
        mesh: Surface mesh; reflections are skipped when None or max_order == 0
        max_order: Highest reflection order
        chunk_size: Columns processed per block

    Returns:
        GainMatrix with column index (receiver_id, element_id)
    """
    columns = _Columns.from_receivers(receivers)
    n_cols = len(columns.keys)
    los = np.empty((len(boards), n_cols))
    for start in range(0, n_cols, chunk_size):
        stop = min(start + chunk_size, n_cols)
        los[:, start:stop] = _los_block(boards, columns.chunk(start, stop), gate)

    if mesh is not None and max_order > 0:
        reflected = reflection_gains(boards, receivers, mesh, max_order, gate, chunk_size)
    else:
        reflected = np.zeros_like(los)

    meta = {
        "room_fingerprint": _fingerprint(room.model_dump(mode="json")),
        "boards_fingerprint": _fingerprint([b.model_dump(mode="json") for b in boards]),
        "gate": gate.value,
        "max_order": max_order if mesh is not None else 0,
        "patch_size": mesh.patch_size if mesh is not None else None,
    }
    return GainMatrix(
        los=los,
        reflected=reflected,
        board_ids=tuple(b.id for b in boards),
        columns=columns.keys,
        meta=meta,
    )


def received_power(
    board: TransmitterBoard,
    receiver_id: int,
    gains: GainMatrix,
    element_id: int = 0,
) -> float:
    """Optical power (W) from one board at one PD element: P * (los + reflected)"""
    return board.power * gains.gain(board.id, receiver_id, element_id)


def received_powers(
    boards: Sequence[TransmitterBoard],
    gains: GainMatrix,
    receiver_id: int,
    element_id: int = 0,
) -> np.ndarray:
    """Received power from every board (in `boards` order) at one PD element"""
    column = gains.column(receiver_id, element_id)
    rows = [gains.row_index(b.id) for b in boards]
    return np.array([b.power for b in boards]) * column[rows]


def partition_power(
    boards: Sequence[TransmitterBoard],
    board_ids: Iterable[int],
    gains: GainMatrix,
    receiver_id: int,
    element_id: int = 0,
) -> float:
    """Total power a PD element receives from a set of boards"""
    wanted = set(board_ids)
    return math.fsum(
        received_power(b, receiver_id, gains, element_id) for b in boards if b.id in wanted
    )


def irradiance_at(boards: Sequence[TransmitterBoard], points: np.ndarray) -> np.ndarray:
    """Ungated irradiance (W/m^2) on an upward-facing surface at each point"""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if not boards:
        return np.zeros(len(points))
    pos, ori, orders, _, power = _board_arrays(boards)
    normals = np.tile((0.0, 0.0, 1.0), (len(points), 1))
    gain, _, _ = _lambertian_kernel(pos, ori, orders, points, normals)
    return power @ gain


def floor_irradiance_map(boards: Sequence[TransmitterBoard], room: RoomSpec) -> np.ndarray:
    """
    Irradiance over the floor grid.

    Returns:
        Array shaped (len(ys), len(xs)) indexed [iy, ix]
    """
    xs, ys = room.floor_grid()
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    return irradiance_at(boards, points).reshape(len(ys), len(xs))
