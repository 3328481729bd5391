"""
SIR, SINR and illumination metrics.

Two pipelines are kept apart:
- SIR (bulb studies): LOS gains under the divergence gate, no reflections, no noise.
- SINR (flat cluster studies): LOS plus reflections, electrical-domain noise,
  optional 7-element receiver with maximal-ratio combining.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from simulator.channel import (
    DEFAULT_PATCH_SIZE,
    GainMatrix,
    build_surface_mesh,
    compute_gain_matrix,
    los_gains_to_points,
    received_powers,
)
from simulator.geometry import TransmitterLayout, build_bulb, grid_receivers
from simulator.models import (
    AverageSir,
    BulbDesign,
    CoverageGate,
    EvalProtocol,
    IlluminationStats,
    NoiseModel,
    Partition,
    Point2,
    ReceiverSir,
    ReceiverSpec,
    RoomSpec,
    RoomSweepRow,
    SinrSample,
    SinrScenario,
    SirPolicy,
    SirReport,
    SirStatus,
    ThreeRegionRow,
    TransmitterBoard,
    UNASSIGNED,
)
from simulator.partition import assign_points, board_points
from simulator.rng import stream


logger = logging.getLogger(__name__)

DEFAULT_BIN_WIDTH = 0.25


def to_db(value):
    """10 log10, -inf for non-positive input; works on scalars and arrays"""
    if np.isscalar(value):
        return 10.0 * math.log10(value) if value > 0 else float("-inf")
    arr = np.asarray(value, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(arr > 0, 10.0 * np.log10(np.where(arr > 0, arr, 1.0)), -np.inf)


def from_db(db):
    if np.isscalar(db):
        return 10.0 ** (db / 10.0)
    return np.power(10.0, np.asarray(db, dtype=float) / 10.0)


# ---------------------------------------------------------------------------
# SIR
# ---------------------------------------------------------------------------

def _detected(received: np.ndarray, policy: SirPolicy) -> np.ndarray:
    if policy.sensitivity_w > 0.0:
        return np.where(received >= policy.sensitivity_w, received, 0.0)
    return received


def _signal_interference(received: np.ndarray, owner: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Signal and interference per receiver.

    Args:
        received: (n_receivers, n_boards) detected power
        owner: (n_boards,) index of the receiver each board serves, -1 when idle

    Returns:
        (signal, interference), each (n_receivers,)
    """
    n = received.shape[0]
    signal = np.empty(n)
    interference = np.empty(n)
    for i in range(n):
        row = received[i]
        signal[i] = row[owner == i].sum()
        interference[i] = row[(owner != i) & (owner >= 0)].sum()
    return signal, interference


def _classify(signal: float, interference: float) -> Tuple[float, SirStatus]:
    if signal <= 0.0:
        return 0.0, SirStatus.ZERO_SIGNAL
    if interference <= 0.0:
        return math.inf, SirStatus.INFINITE
    return signal / interference, SirStatus.OK


def _mapped(sir: float, status: SirStatus, policy: SirPolicy) -> float:
    if status == SirStatus.INFINITE:
        return policy.sir_cap
    return sir


def sir_two_receivers(
    partition: Partition,
    gains: GainMatrix,
    boards: Sequence[TransmitterBoard],
    receivers: Sequence[ReceiverSpec],
    policy: Optional[SirPolicy] = None,
) -> SirReport:
    """
    SIR of each receiver: S_ii over the summed power of every other partition.

    Args:
        partition: Board assignment
        gains: LOS gains (divergence gate, no reflections) for the receivers
        boards: Bulb boards
        receivers: Receivers named in the partition
        policy: Supplies the detection threshold

    Returns:
        SirReport keyed by receiver id
    """
    policy = policy or SirPolicy()
    missing = {b.id for b in boards} - set(partition.assignment)
    if missing:
        raise ValueError(f"Partition does not cover boards {sorted(missing)}")

    index = {r.id: i for i, r in enumerate(receivers)}
    owner = np.array([index.get(partition.assignment[b.id], -1)
                      if partition.assignment[b.id] != UNASSIGNED else -1 for b in boards])
    received = np.vstack([received_powers(boards, gains, r.id) for r in receivers])
    signal, interference = _signal_interference(_detected(received, policy), owner)

    per_receiver = {}
    for r, s, i in zip(receivers, signal, interference):
        sir, status = _classify(float(s), float(i))
        per_receiver[r.id] = ReceiverSir(
            receiver_id=r.id,
            signal_power=float(s),
            interference_power=float(i),
            sir=sir,
            status=status,
        )
    return SirReport(per_receiver=per_receiver)


def average_sir(report: SirReport, policy: Optional[SirPolicy] = None) -> AverageSir:
    """
    Arithmetic mean of linear receiver SIRs.

    INFINITE values enter as the policy cap and ZERO_SIGNAL as 0; the worst
    flag present is carried on the result.
    """
    policy = policy or SirPolicy()
    values = [_mapped(v.sir, v.status, policy) for v in report.per_receiver.values()]
    statuses = {v.status for v in report.per_receiver.values()}
    if SirStatus.ZERO_SIGNAL in statuses:
        status = SirStatus.ZERO_SIGNAL
    elif SirStatus.INFINITE in statuses:
        status = SirStatus.INFINITE
    else:
        status = SirStatus.OK
    return AverageSir(value=sum(values) / len(values), status=status)


# ---------------------------------------------------------------------------
# Receiver-pair sampling
# ---------------------------------------------------------------------------

def _floor_points(points: np.ndarray, height: float) -> np.ndarray:
    return np.column_stack([points, np.full(len(points), height)])


def pair_sirs(
    boards: Sequence[TransmitterBoard],
    room: RoomSpec,
    first: np.ndarray,
    second: np.ndarray,
    protocol: EvalProtocol,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Policy-mapped average SIR for many receiver pairs.

    Args:
        boards: Bulb boards
        room: Room the boards live in
        first: (n, 2) positions of receiver 1
        second: (n, 2) positions of receiver 2
        protocol: Gate, SIR policy, PD height and aperture

    Returns:
        (mean_sir (n,), zero_signal (n,) bool)
    """
    first = np.asarray(first, dtype=float).reshape(-1, 2)
    second = np.asarray(second, dtype=float).reshape(-1, 2)
    n = len(first)
    if n == 0:
        return np.zeros(0), np.zeros(0, dtype=bool)

    points = board_points(boards, room)
    power = np.array([b.power for b in boards])
    gains = los_gains_to_points(
        boards,
        _floor_points(np.vstack([first, second]), protocol.receiver_height),
        gate=protocol.gate,
        aperture_radius=protocol.aperture_radius,
    )
    received = _detected(power[:, None] * gains, protocol.sir_policy)

    means = np.empty(n)
    zero = np.zeros(n, dtype=bool)
    for k in range(n):
        owner = assign_points(points, np.array([first[k], second[k]]))
        signal, interference = _signal_interference(received[:, [k, n + k]].T, owner)
        values = []
        for s, i in zip(signal, interference):
            sir, status = _classify(float(s), float(i))
            zero[k] |= status == SirStatus.ZERO_SIGNAL
            values.append(_mapped(sir, status, protocol.sir_policy))
        means[k] = sum(values) / len(values)
    return means, zero


def sample_placements(protocol: EvalProtocol) -> Tuple[np.ndarray, np.ndarray]:
    """Deterministic uniform receiver-pair placements; placement k uses stream (seed, k)"""
    room = protocol.room
    first = np.empty((protocol.n_placements, 2))
    second = np.empty((protocol.n_placements, 2))
    for k in range(protocol.n_placements):
        rng = stream(protocol.seed, k)
        while True:
            xy = rng.uniform(0.0, 1.0, size=4) * (room.width, room.depth, room.width, room.depth)
            if xy[0] != xy[2] or xy[1] != xy[3]:
                break
        first[k] = xy[:2]
        second[k] = xy[2:]
    return first, second


def mean_placement_sir(boards: Sequence[TransmitterBoard], protocol: EvalProtocol) -> Tuple[float, int]:
    """(mean mapped SIR over the protocol placements, number of ZERO_SIGNAL placements)"""
    first, second = sample_placements(protocol)
    means, zero = pair_sirs(boards, protocol.room, first, second, protocol)
    return math.fsum(means) / len(means), int(zero.sum())


def room_size_sweep(
    template: BulbDesign,
    floor_dims: Sequence[float],
    protocol: EvalProtocol,
) -> List[RoomSweepRow]:
    """
    Mean SIR for square floors of each dimension, bulb at the ceiling centre.

    The protocol's room supplies height and reflectivities; placements are
    re-sampled for every floor size from the same seed.
    """
    rows = []
    for dim in floor_dims:
        room = protocol.room.resized(dim, dim)
        boards = build_bulb(template.centered_in(room))
        mean, zero = mean_placement_sir(boards, protocol.model_copy(update={"room": room}))
        logger.info("floor %.1f m: mean SIR %.4f dB", dim, to_db(mean))
        rows.append(RoomSweepRow(floor_dim=dim, mean_sir=mean, zero_signal_placements=zero))
    return rows


def sample_pair(
    room: RoomSpec,
    bins: Tuple[int, int],
    seed: int,
    sample_index: int,
    bin_width: float = DEFAULT_BIN_WIDTH,
    max_attempts: int = 1000,
) -> Optional[Tuple[Point2, Point2]]:
    """
    Receiver pair at centre distances drawn from the two bins.

    The stream is keyed on the sorted bin pair so that swapping the bins
    swaps the returned points. Draws landing outside the room are retried.

    Returns:
        (point in bins[0], point in bins[1]) or None if no draw fit the room
    """
    lo, hi = sorted(bins)
    rng = stream(seed, lo, hi, sample_index)
    cx, cy = room.floor_center
    for _ in range(max_attempts):
        da, ta, db, tb = rng.uniform(0.0, 1.0, size=4)
        ra = (lo + da) * bin_width
        rb = (hi + db) * bin_width
        pa = (cx + ra * math.cos(2.0 * math.pi * ta), cy + ra * math.sin(2.0 * math.pi * ta))
        pb = (cx + rb * math.cos(2.0 * math.pi * tb), cy + rb * math.sin(2.0 * math.pi * tb))
        if room.contains_floor_point(pa, 0.0) and room.contains_floor_point(pb, 0.0) and pa != pb:
            return (pa, pb) if bins[0] == lo else (pb, pa)
    return None


def three_region_surface(
    room: RoomSpec,
    bulb: BulbDesign,
    n_samples: int,
    seed: int,
    bin_width: float = DEFAULT_BIN_WIDTH,
    max_distance: Optional[float] = None,
    protocol: Optional[EvalProtocol] = None,
) -> List[ThreeRegionRow]:
    """
    Mean SIR of a receiver pair binned by both receivers' distance from the floor centre.

    Args:
        room: Room
        bulb: Bulb design, centred on the ceiling
        n_samples: Pairs sampled per (d1, d2) bin
        seed: RNG seed
        bin_width: Distance bin width in meters
        max_distance: Largest distance covered (default: half the shorter floor side)
        protocol: Gate, SIR policy and PD parameters (room and seed are ignored)

    Returns:
        One row per (d1, d2) bin with at least one valid sample; d1, d2 are bin centres
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    protocol = protocol or EvalProtocol(room=room)
    boards = build_bulb(bulb)
    if max_distance is None:
        max_distance = min(room.width, room.depth) / 2.0
    n_bins = max(1, int(math.floor(max_distance / bin_width + 1e-9)))

    rows = []
    for i in range(n_bins):
        for j in range(n_bins):
            pairs = [sample_pair(room, (i, j), seed, k, bin_width) for k in range(n_samples)]
            pairs = [p for p in pairs if p is not None]
            if not pairs:
                logger.debug("bin (%d, %d) has no placements inside the room", i, j)
                continue
            means, _ = pair_sirs(
                boards, room,
                np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]),
                protocol,
            )
            rows.append(ThreeRegionRow(
                d1=(i + 0.5) * bin_width,
                d2=(j + 0.5) * bin_width,
                mean_sir=math.fsum(means) / len(means),
                samples=len(pairs),
            ))
    return rows


def sir_map(
    room: RoomSpec,
    bulb: BulbDesign,
    fixed: Point2,
    protocol: Optional[EvalProtocol] = None,
) -> np.ndarray:
    """
    Policy-mapped SIR of a second receiver at every floor cell, the first held at `fixed`.

    Returns:
        (len(ys), len(xs)) array; NaN where the cell centre equals `fixed`
    """
    protocol = protocol or EvalProtocol(room=room)
    boards = build_bulb(bulb)
    xs, ys = room.floor_grid()
    gx, gy = np.meshgrid(xs, ys)
    cells = np.column_stack([gx.ravel(), gy.ravel()])

    points = board_points(boards, room)
    power = np.array([b.power for b in boards])
    gains = los_gains_to_points(
        boards,
        _floor_points(cells, protocol.receiver_height),
        gate=protocol.gate,
        aperture_radius=protocol.aperture_radius,
    )
    received = _detected(power[:, None] * gains, protocol.sir_policy)

    out = np.full(len(cells), np.nan)
    fixed_arr = np.asarray(fixed, dtype=float)
    for k, cell in enumerate(cells):
        if np.array_equal(cell, fixed_arr):
            continue
        owner = assign_points(points, np.array([fixed_arr, cell]))
        row = received[:, k]
        s = float(row[owner == 1].sum())
        i = float(row[owner == 0].sum())
        sir, status = _classify(s, i)
        out[k] = _mapped(sir, status, protocol.sir_policy)
    return out.reshape(len(ys), len(xs))


# ---------------------------------------------------------------------------
# SINR
# ---------------------------------------------------------------------------

def sinr_linear(signal_w: float, interferers_w: Sequence[float], noise: NoiseModel) -> float:
    """(R P_s)^2 / (shot + thermal + sum_k (R P_k)^2); shot noise sees all received light"""
    R = noise.responsivity
    total = math.fsum([signal_w, *interferers_w])
    denominator = (
        noise.shot_variance(total)
        + noise.thermal_variance
        + math.fsum((R * p) ** 2 for p in interferers_w)
    )
    numerator = (R * signal_w) ** 2
    if denominator <= 0.0:
        return math.inf if numerator > 0 else 0.0
    return numerator / denominator


def sinr_at(
    receiver_id: int,
    serving_set: Iterable[int],
    interfering_sets: Iterable[Union[int, Iterable[int]]],
    boards: Sequence[TransmitterBoard],
    gains: GainMatrix,
    noise: NoiseModel,
    element_id: int = 0,
) -> float:
    """
    SINR (dB) at one PD element.

    Args:
        receiver_id: Receiver whose gain column is used
        serving_set: Boards carrying the wanted stream (summed coherently)
        interfering_sets: Interferers; a group of board ids carries one
            stream and is summed before squaring, a bare id is its own group
        boards: All boards referenced
        gains: Gains including reflections
        noise: Noise model
        element_id: PD element

    Raises:
        ValueError: when a board both serves and interferes
    """
    serving = set(serving_set)
    groups = [
        {g} if isinstance(g, (int, np.integer)) else set(g)
        for g in interfering_sets
    ]
    for group in groups:
        if serving & group:
            raise ValueError(f"Boards {sorted(serving & group)} both serve and interfere")

    powers = dict(zip((b.id for b in boards), received_powers(boards, gains, receiver_id, element_id)))
    signal = math.fsum(powers[b] for b in serving)
    interferers = [math.fsum(powers[b] for b in group) for group in groups]
    return to_db(sinr_linear(signal, interferers, noise))


def combine_optimal_linear(
    per_element: Sequence[Tuple[float, float, float]],
    noise: NoiseModel,
) -> float:
    """
    Maximal-ratio combining: sum of per-branch SINR.

    Args:
        per_element: (signal W, interference W, noise A^2) per branch; the
            interference entry is the root-sum-square of independent interferers
        noise: Supplies the responsivity
    """
    if not per_element:
        raise ValueError("combine_optimal needs at least one branch")
    R = noise.responsivity
    terms = []
    for signal, interference, branch_noise in per_element:
        numerator = (R * signal) ** 2
        denominator = branch_noise + (R * interference) ** 2
        if denominator <= 0.0:
            terms.append(math.inf if numerator > 0 else 0.0)
        else:
            terms.append(numerator / denominator)
    return math.fsum(terms)


def combine_optimal(per_element: Sequence[Tuple[float, float, float]], noise: NoiseModel) -> float:
    """Combined SINR in dB"""
    return to_db(combine_optimal_linear(per_element, noise))


def _membership(boards: Sequence[TransmitterBoard], groups: Sequence[Sequence[int]]) -> np.ndarray:
    index = {b.id: i for i, b in enumerate(boards)}
    member = np.zeros((len(boards), len(groups)))
    for g, group in enumerate(groups):
        for board_id in group:
            member[index[board_id], g] = 1.0
    return member


def _branch_terms(received: np.ndarray, member: np.ndarray, noise: NoiseModel) -> np.ndarray:
    """
    Per-group SINR where every group carries one stream: a group's boards add
    up before squaring, both when it serves and when it interferes.

    Args:
        received: (..., n_boards) received power
        member: (n_boards, n_groups) membership; every board in exactly one group

    Returns:
        (..., n_groups) linear SINR
    """
    R = noise.responsivity
    total = received.sum(axis=-1)
    group_sum = received @ member
    group_square = group_sum ** 2
    interference = np.clip(group_square.sum(axis=-1)[..., None] - group_square, 0.0, None)
    denominator = (
        noise.shot_coefficient * (total[..., None] + noise.ambient_power) * noise.bandwidth
        + noise.thermal_variance
        + R * R * interference
    )
    numerator = (R * group_sum) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denominator > 0.0, numerator / denominator, np.where(numerator > 0, np.inf, 0.0))
    return out


def layout_gains(
    room: RoomSpec,
    layout: TransmitterLayout,
    receivers: Sequence[ReceiverSpec],
    max_order: int = 4,
    patch_size: float = DEFAULT_PATCH_SIZE,
    gate: CoverageGate = CoverageGate.FOV,
) -> GainMatrix:
    mesh = build_surface_mesh(room, patch_size) if max_order > 0 else None
    return compute_gain_matrix(layout.boards, receivers, room, gate=gate, mesh=mesh, max_order=max_order)


def sinr_field(
    layout: TransmitterLayout,
    receivers: Sequence[ReceiverSpec],
    gains: GainMatrix,
    noise: NoiseModel,
) -> Dict[SinrScenario, np.ndarray]:
    """
    SINR (dB) of every receiver under each serving rule.

    S1 serves a user from its best cluster while every other cluster
    interferes as one stream; S2 serves from the best single LED with every
    other LED interfering; S2_combined sums per-element SINR of the
    receiver's elements for the best LED.
    """
    boards = layout.boards
    clusters = [layout.clusters[c] for c in sorted(layout.clusters)]
    cluster_member = _membership(boards, clusters)
    led_member = _membership(boards, [(b.id,) for b in boards])
    power = np.array([b.power for b in boards])
    rows = [gains.row_index(b.id) for b in boards]
    total_gain = gains.total()[rows]

    n_elements = min(len(r.elements) for r in receivers)
    received = np.empty((len(receivers), n_elements, len(boards)))
    for i, receiver in enumerate(receivers):
        for e in range(n_elements):
            received[i, e] = power * total_gain[:, gains.column_index(receiver.id, e)]

    s1 = _branch_terms(received[:, 0], cluster_member, noise).max(axis=-1)
    s2_terms = _branch_terms(received, led_member, noise)
    s2 = s2_terms[:, 0].max(axis=-1)
    combined = s2_terms.sum(axis=1).max(axis=-1)
    return {
        SinrScenario.S1: to_db(s1),
        SinrScenario.S2: to_db(s2),
        SinrScenario.S2_COMBINED: to_db(combined),
    }


def sinr_samples(receivers: Sequence[ReceiverSpec], field: Dict[SinrScenario, np.ndarray]) -> List[SinrSample]:
    return [
        SinrSample(
            position=(r.position[0], r.position[1]),
            per_scenario={s: float(values[i]) for s, values in field.items()},
        )
        for i, r in enumerate(receivers)
    ]


@dataclass(frozen=True, eq=False)
class EmpiricalCdf:
    """Sorted sample values and their cumulative probabilities"""
    values: np.ndarray
    probabilities: np.ndarray

    def quantile(self, q: float) -> float:
        """Smallest value whose cumulative probability reaches q"""
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"quantile must be in [0, 1], got {q}")
        idx = int(np.searchsorted(self.probabilities, q - 1e-12, side="left"))
        return float(self.values[min(idx, len(self.values) - 1)])

    @property
    def median(self) -> float:
        return self.quantile(0.5)

    def rows(self) -> List[Tuple[float, float]]:
        return [(float(v), float(p)) for v, p in zip(self.values, self.probabilities)]


def ecdf(values: Iterable[float]) -> EmpiricalCdf:
    arr = np.sort(np.asarray(list(values), dtype=float))
    if arr.size == 0:
        raise ValueError("ecdf of an empty sample")
    return EmpiricalCdf(values=arr, probabilities=np.arange(1, arr.size + 1) / arr.size)


def sinr_cdf(
    room: RoomSpec,
    layout: TransmitterLayout,
    scenario: SinrScenario,
    noise: NoiseModel,
    fov_deg: float = 40.0,
    aperture_radius: float = 0.0375,
    tilt_deg: float = 40.0,
    max_order: int = 4,
    patch_size: float = DEFAULT_PATCH_SIZE,
    gains: Optional[GainMatrix] = None,
    receivers: Optional[Sequence[ReceiverSpec]] = None,
) -> EmpiricalCdf:
    """
    Empirical CDF of SINR (dB) over the floor grid for one serving rule.

    Gains and receivers may be passed in to share one reflection computation
    between scenarios.
    """
    if receivers is None:
        receivers = grid_receivers(
            room, diversity=True, aperture_radius=aperture_radius, fov_deg=fov_deg, tilt_deg=tilt_deg
        )
    if gains is None:
        gains = layout_gains(room, layout, receivers, max_order, patch_size)
    return ecdf(sinr_field(layout, receivers, gains, noise)[scenario])


# ---------------------------------------------------------------------------
# Illumination
# ---------------------------------------------------------------------------

def illumination_stats(irradiance_map: np.ndarray) -> IlluminationStats:
    """Population mean, standard deviation, min and max over grid cells"""
    arr = np.asarray(irradiance_map, dtype=float)
    if arr.size == 0:
        raise ValueError("illumination_stats of an empty map")
    return IlluminationStats(
        mean=float(arr.mean()),
        std=float(arr.std()),
        min=float(arr.min()),
        max=float(arr.max()),
    )
