"""
Pydantic models for the multi-element VLC simulator.
Defines rooms, bulbs, transmitter boards, receivers, protocol frames and
state, optimizer search spaces, and the result records every module returns.
"""

import math
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


Vec3 = Tuple[float, float, float]
Point2 = Tuple[float, float]

UNIT_TOLERANCE = 1e-9
ELEMENTARY_CHARGE = 1.602176634e-19  # C


def _check_unit(vector: Vec3, name: str) -> Vec3:
    norm = math.sqrt(sum(c * c for c in vector))
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise ValueError(f"{name} must be a unit vector, got norm {norm:.12f}")
    return vector


class CoverageGate(str, Enum):
    """Which angular test decides whether a board covers a photodetector"""
    DIVERGENCE = "divergence"  # emission angle within the LED divergence angle
    FOV = "fov"  # incidence angle within the PD field of view
    BOTH = "both"


class Surface(str, Enum):
    """Room surfaces that take part in diffuse reflections"""
    FLOOR = "floor"
    CEILING = "ceiling"
    WALL_X0 = "wall_x0"  # x = 0
    WALL_X1 = "wall_x1"  # x = width
    WALL_Y0 = "wall_y0"  # y = 0
    WALL_Y1 = "wall_y1"  # y = depth


class ClusterType(str, Enum):
    """Flat ceiling transmitter structures"""
    THREE_LED = "three_led"
    SEVEN_LED = "seven_led"


class Objective(str, Enum):
    """Optimizer objective"""
    SIR_ONLY = "sir_only"
    SIR_OVER_ILLUM_VARIANCE = "sir_over_illum_variance"


class SinrScenario(str, Enum):
    """Serving rules for the SINR distribution study"""
    S1 = "S1"  # all LEDs of a cluster serve the same user
    S2 = "S2"  # every LED serves a different user
    S2_COMBINED = "S2_combined"  # S2 with a 7-PD receiver and optimal combining


class SirStatus(str, Enum):
    OK = "ok"
    INFINITE = "infinite"
    ZERO_SIGNAL = "zero_signal"


class PlacementDistribution(str, Enum):
    UNIFORM = "uniform"


class LeaveMode(str, Enum):
    GRACEFUL = "graceful"  # CLOSE frame over the RF side channel
    UNGRACEFUL = "ungraceful"  # silent departure, detected by N_t missed ACKs


class FrameKind(str, Enum):
    SEARCH = "SEARCH"
    ACK = "ACK"
    CLOSE = "CLOSE"
    DATA = "DATA"


class AssociationState(str, Enum):
    ASSOCIATED = "ASSOCIATED"
    TIMING_OUT = "TIMING_OUT"
    REMOVED = "REMOVED"


class EventKind(str, Enum):
    JOIN = "JOIN"
    ACK = "ACK"
    ASSOCIATE = "ASSOCIATE"
    HANDOVER = "HANDOVER"
    REPARTITION = "REPARTITION"
    CONTENDED = "CONTENDED"
    CLOSE = "CLOSE"
    REMOVED = "REMOVED"
    DROP = "DROP"


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

class RoomSpec(BaseModel):
    """Rectangular room; floor at z=0, ceiling at z=height"""
    model_config = ConfigDict(frozen=True)

    width: float = Field(..., gt=0, description="x-extent in meters")
    depth: float = Field(..., gt=0, description="y-extent in meters")
    height: float = Field(..., gt=0, description="z-extent in meters")
    wall_reflectivity: float = Field(default=0.8, ge=0.0, le=1.0)
    ceiling_reflectivity: float = Field(default=0.8, ge=0.0, le=1.0)
    floor_reflectivity: float = Field(default=0.3, ge=0.0, le=1.0)
    floor_grid_resolution: float = Field(
        default=0.25,
        gt=0,
        description="Meters per floor evaluation cell"
    )

    @model_validator(mode="after")
    def _grid_fits_room(self) -> "RoomSpec":
        if self.floor_grid_resolution > min(self.width, self.depth):
            raise ValueError(
                f"floor_grid_resolution {self.floor_grid_resolution} exceeds "
                f"the smaller floor dimension {min(self.width, self.depth)}"
            )
        return self

    @property
    def floor_center(self) -> Point2:
        return (self.width / 2.0, self.depth / 2.0)

    @property
    def ceiling_center(self) -> Vec3:
        return (self.width / 2.0, self.depth / 2.0, self.height)

    def contains_floor_point(self, point: Point2, tolerance: float = 1e-9) -> bool:
        x, y = point
        return (
            -tolerance <= x <= self.width + tolerance
            and -tolerance <= y <= self.depth + tolerance
        )

    def floor_grid(self):
        """
        Cell-centre coordinates of the floor evaluation grid.

        Returns:
            (xs, ys) 1-D numpy arrays; cells tile the floor exactly
        """
        nx = max(1, int(math.floor(self.width / self.floor_grid_resolution + 1e-9)))
        ny = max(1, int(math.floor(self.depth / self.floor_grid_resolution + 1e-9)))
        xs = (np.arange(nx) + 0.5) * (self.width / nx)
        ys = (np.arange(ny) + 0.5) * (self.depth / ny)
        return xs, ys

    def resized(self, width: float, depth: float) -> "RoomSpec":
        return self.model_copy(update={"width": width, "depth": depth})


class LayerSpec(BaseModel):
    """One ring of boards on the hemispherical bulb"""
    model_config = ConfigDict(frozen=True)

    elevation_deg: float = Field(
        ...,
        gt=0.0,
        le=90.0,
        description="Angle from the downward bulb normal"
    )
    board_count: int = Field(..., ge=1)
    azimuth_offset_deg: float = Field(default=0.0, ge=0.0, lt=360.0)

    @property
    def azimuth_spacing_deg(self) -> float:
        return 360.0 / self.board_count


class BulbDesign(BaseModel):
    """Hemispherical multi-layer bulb"""
    model_config = ConfigDict(frozen=True)

    center: Vec3 = Field(..., description="Hemisphere centre on the ceiling plane")
    radius: float = Field(default=0.4, gt=0)
    layers: Tuple[LayerSpec, ...] = Field(..., min_length=1)
    board_radius: float = Field(default=0.0375, gt=0)
    divergence_angle: float = Field(..., gt=0.0, le=90.0)
    half_intensity_angle: float = Field(..., gt=0.0, lt=90.0)
    power_per_board: float = Field(default=0.02, gt=0, description="Watts")

    @property
    def total_boards(self) -> int:
        return sum(layer.board_count for layer in self.layers)

    @property
    def total_power(self) -> float:
        return self.total_boards * self.power_per_board

    @property
    def boards_per_layer(self) -> Tuple[int, ...]:
        return tuple(layer.board_count for layer in self.layers)

    def with_divergence(self, angle: float, follow_half_intensity: bool = True) -> "BulbDesign":
        update = {"divergence_angle": angle}
        if follow_half_intensity:
            update["half_intensity_angle"] = min(angle, 89.0)
        return self.model_copy(update=update)

    def with_board_counts(self, counts: Tuple[int, ...]) -> "BulbDesign":
        if len(counts) != len(self.layers):
            raise ValueError(
                f"Expected {len(self.layers)} board counts, got {len(counts)}"
            )
        layers = tuple(
            layer.model_copy(update={"board_count": int(n)})
            for layer, n in zip(self.layers, counts)
        )
        return self.model_copy(update={"layers": layers})

    def centered_in(self, room: RoomSpec) -> "BulbDesign":
        return self.model_copy(update={"center": room.ceiling_center})


class TransmitterBoard(BaseModel):
    """A chunk of identically modulated LEDs acting as one directional beam"""
    model_config = ConfigDict(frozen=True)

    id: int = Field(..., ge=0, description="Local ID k carried in SEARCH frames")
    position: Vec3
    orientation: Vec3 = Field(..., description="Unit boresight vector")
    divergence_angle: float = Field(..., gt=0.0, le=90.0)
    half_intensity_angle: float = Field(..., gt=0.0, lt=90.0)
    power: float = Field(..., ge=0.0, description="Watts")
    led_positions: Tuple[Vec3, ...] = Field(default_factory=tuple)
    cluster_id: Optional[int] = Field(
        None,
        description="Bulb layer index, or flat cluster index"
    )

    @field_validator("orientation")
    @classmethod
    def _unit_orientation(cls, v: Vec3) -> Vec3:
        return _check_unit(v, "orientation")


class FlatClusterSpec(BaseModel):
    """Flat multi-LED ceiling transmitter"""
    model_config = ConfigDict(frozen=True)

    cluster_type: ClusterType
    center: Vec3
    tilt_deg: float = Field(default=25.0, ge=0.0, lt=90.0)
    element_spacing: float = Field(default=0.1, ge=0.0)
    per_led_power: float = Field(default=1.0, gt=0)
    half_intensity_deg: float = Field(default=30.0, gt=0.0, lt=90.0)
    divergence_deg: float = Field(default=90.0, gt=0.0, le=90.0)


class PdElement(BaseModel):
    """A single photodetector element"""
    model_config = ConfigDict(frozen=True)

    normal: Vec3 = (0.0, 0.0, 1.0)
    aperture_radius: float = Field(default=0.0375, gt=0)
    fov_deg: float = Field(default=90.0, gt=0.0, le=90.0)

    @field_validator("normal")
    @classmethod
    def _unit_normal(cls, v: Vec3) -> Vec3:
        return _check_unit(v, "normal")

    @property
    def area(self) -> float:
        return math.pi * self.aperture_radius ** 2


class ReceiverSpec(BaseModel):
    """A (possibly multi-element) mobile receiver"""
    model_config = ConfigDict(frozen=True)

    id: int = Field(..., ge=0)
    position: Vec3
    elements: Tuple[PdElement, ...] = Field(..., min_length=1)
    rf_address: str = Field(default="", description="MAC-like address used by the protocol")


# ---------------------------------------------------------------------------
# Partition
# ---------------------------------------------------------------------------

UNASSIGNED = -1


class Partition(BaseModel):
    """Disjoint assignment of bulb boards to receivers"""
    model_config = ConfigDict(frozen=True)

    assignment: Dict[int, int] = Field(..., description="board_id -> receiver_id")
    receiver_positions_snapshot: Dict[int, Point2] = Field(
        ...,
        description="receiver_id -> floor point used to compute the split"
    )

    @model_validator(mode="after")
    def _known_receivers(self) -> "Partition":
        known = set(self.receiver_positions_snapshot)
        for board_id, receiver_id in self.assignment.items():
            if receiver_id != UNASSIGNED and receiver_id not in known:
                raise ValueError(
                    f"Board {board_id} assigned to receiver {receiver_id} "
                    f"absent from the snapshot"
                )
        return self

    def boards_of(self, receiver_id: int) -> FrozenSet[int]:
        return frozenset(b for b, r in self.assignment.items() if r == receiver_id)

    def sizes(self) -> Dict[int, int]:
        return {r: len(self.boards_of(r)) for r in self.receiver_positions_snapshot}


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

class NoiseModel(BaseModel):
    """Receiver noise; SINR is evaluated in the electrical domain"""
    model_config = ConfigDict(frozen=True)

    responsivity: float = Field(default=0.54, ge=0.0, description="A/W")
    bandwidth: float = Field(default=10e6, ge=0.0, description="Hz")
    thermal_variance: float = Field(default=1e-14, ge=0.0, description="A^2")
    ambient_power: float = Field(default=0.0, ge=0.0, description="W")
    shot_coefficient: float = Field(
        default=None,
        ge=0.0,
        description="A^2/(W*Hz); defaults to 2*q*responsivity"
    )

    @model_validator(mode="before")
    @classmethod
    def _default_shot_coefficient(cls, data):
        if isinstance(data, dict) and data.get("shot_coefficient") is None:
            data = dict(data)
            data["shot_coefficient"] = 2.0 * ELEMENTARY_CHARGE * data.get("responsivity", 0.54)
        return data

    def shot_variance(self, total_optical_power: float) -> float:
        return self.shot_coefficient * (total_optical_power + self.ambient_power) * self.bandwidth


class SirPolicy(BaseModel):
    """How flagged SIR values enter Monte-Carlo averages"""
    model_config = ConfigDict(frozen=True)

    sir_cap_db: float = Field(default=30.0, description="Value used for INFINITE SIR")
    sensitivity_w: float = Field(
        default=0.0,
        ge=0.0,
        description="Per-board received power below this is not detected"
    )

    @property
    def sir_cap(self) -> float:
        return 10.0 ** (self.sir_cap_db / 10.0)


class ReceiverSir(BaseModel):
    receiver_id: int
    signal_power: float = Field(..., description="S_ii in watts")
    interference_power: float = Field(..., description="sum of S_ij, j != i, in watts")
    sir: float = Field(..., description="Linear ratio; inf when INFINITE, 0 when ZERO_SIGNAL")
    status: SirStatus

    @property
    def sir_db(self) -> float:
        if self.sir <= 0.0:
            return float("-inf")
        return 10.0 * math.log10(self.sir)


class SirReport(BaseModel):
    """Per-receiver SIR for one placement"""
    per_receiver: Dict[int, ReceiverSir]

    @property
    def per_receiver_sir(self) -> Dict[int, float]:
        return {r: v.sir for r, v in self.per_receiver.items()}

    @property
    def signal_power(self) -> Dict[int, float]:
        return {r: v.signal_power for r, v in self.per_receiver.items()}

    @property
    def interference_power(self) -> Dict[int, float]:
        return {r: v.interference_power for r, v in self.per_receiver.items()}


class AverageSir(BaseModel):
    value: float
    status: SirStatus


class IlluminationStats(BaseModel):
    """Population statistics of a floor irradiance map (W/m^2)"""
    mean: float
    std: float
    min: float
    max: float

    @property
    def variance(self) -> float:
        return self.std ** 2


class SinrSample(BaseModel):
    position: Point2
    per_scenario: Dict[SinrScenario, float] = Field(..., description="dB per serving rule")


class RoomSweepRow(BaseModel):
    floor_dim: float
    mean_sir: float
    zero_signal_placements: int

    @property
    def mean_sir_db(self) -> float:
        return 10.0 * math.log10(self.mean_sir) if self.mean_sir > 0 else float("-inf")


class DivergenceRow(BaseModel):
    angle: float
    mean_sir: float = Field(..., description="Linear SIR averaged over total powers")
    per_power: Dict[float, float] = Field(default_factory=dict)

    @property
    def mean_sir_db(self) -> float:
        return 10.0 * math.log10(self.mean_sir) if self.mean_sir > 0 else float("-inf")


class ThreeRegionRow(BaseModel):
    d1: float
    d2: float
    mean_sir: float
    samples: int

    @property
    def mean_sir_db(self) -> float:
        return 10.0 * math.log10(self.mean_sir) if self.mean_sir > 0 else float("-inf")


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class EvalProtocol(BaseModel):
    """Deterministic receiver-pair placement protocol for design evaluation"""
    model_config = ConfigDict(frozen=True)

    room: RoomSpec
    n_placements: int = Field(default=200, ge=1)
    seed: int = Field(default=0, ge=0)
    distribution: PlacementDistribution = PlacementDistribution.UNIFORM
    gate: CoverageGate = CoverageGate.DIVERGENCE
    sir_policy: SirPolicy = Field(default_factory=SirPolicy)
    strict_coverage: bool = Field(
        default=True,
        description="Any ZERO_SIGNAL placement scores the objective -inf"
    )
    receiver_height: float = Field(default=0.0, ge=0.0)
    aperture_radius: float = Field(default=0.0375, gt=0)


class DesignSpace(BaseModel):
    """Finite bulb design space for exhaustive search"""
    model_config = ConfigDict(frozen=True)

    template: BulbDesign = Field(..., description="Fixes centre, radius and layer elevations")
    boards_per_layer_range: Tuple[Tuple[int, int], ...] = Field(
        ...,
        description="Inclusive (min, max) board count per layer"
    )
    divergence_range: Tuple[float, float, float] = Field(..., description="(min, max, step) degrees")
    power_constraint: float = Field(..., gt=0, description="Total bulb budget in watts")
    per_board_power: float = Field(..., gt=0)
    objective: Objective = Objective.SIR_ONLY
    half_intensity_follows_divergence: bool = True

    @model_validator(mode="after")
    def _check_ranges(self) -> "DesignSpace":
        if len(self.boards_per_layer_range) != len(self.template.layers):
            raise ValueError(
                f"boards_per_layer_range has {len(self.boards_per_layer_range)} "
                f"entries but the template has {len(self.template.layers)} layers"
            )
        for lo, hi in self.boards_per_layer_range:
            if lo < 1 or hi < lo:
                raise ValueError(f"Invalid board count range ({lo}, {hi})")
        lo, hi, step = self.divergence_range
        if step <= 0:
            raise ValueError("divergence step must be positive")
        if not (0 < lo <= hi <= 90):
            raise ValueError(f"Invalid divergence range ({lo}, {hi})")
        return self

    def divergence_values(self) -> List[float]:
        lo, hi, step = self.divergence_range
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [round(lo + i * step, 10) for i in range(count)]

    def with_budget(self, budget: float) -> "DesignSpace":
        return self.model_copy(update={"power_constraint": budget})

    def with_objective(self, objective: Objective) -> "DesignSpace":
        return self.model_copy(update={"objective": objective})


class DesignEvaluation(BaseModel):
    """Outcome of evaluating one bulb design under an EvalProtocol"""
    boards_per_layer: Tuple[int, ...]
    divergence_angle: float
    total_boards: int
    mean_sir: float = Field(..., description="Linear, flagged values mapped by the SIR policy")
    zero_signal_placements: int
    illum_mean: float
    illum_std: float

    @property
    def mean_sir_db(self) -> float:
        return 10.0 * math.log10(self.mean_sir) if self.mean_sir > 0 else float("-inf")

    @property
    def illum_variance(self) -> float:
        return self.illum_std ** 2


class OptimResult(BaseModel):
    best_design: BulbDesign
    best_objective: float
    best_sir: float = Field(..., description="dB")
    illum_std: float
    feasible_count: int
    frontier: List[Tuple[float, float]] = Field(default_factory=list)


class FrontierRow(BaseModel):
    """One budget of the power sweep; the design fields stay empty when nothing fits the budget"""
    budget: float
    feasible: bool = True
    sir_unconstrained_db: Optional[float] = None
    sir_constrained_db: Optional[float] = None
    illum_variance: Optional[float] = None
    objective: Optional[float] = None
    unconstrained_boards: Tuple[int, ...] = ()
    constrained_boards: Tuple[int, ...] = ()
    unconstrained_divergence: Optional[float] = None
    constrained_divergence: Optional[float] = None


# ---------------------------------------------------------------------------
# Protocol
# ---------------------------------------------------------------------------

class ProtocolConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    search_period: float = Field(default=0.1, gt=0, description="Seconds between SEARCH rounds")
    n_t: int = Field(default=3, ge=1, description="Missed-ACK timeout threshold")
    gate: CoverageGate = Field(
        default=CoverageGate.DIVERGENCE,
        description="Coverage gate of the RSSI model"
    )
    aperture_radius: float = Field(default=0.0375, gt=0)
    fov_deg: float = Field(default=90.0, gt=0.0, le=90.0)
    ack_loss_probability: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)
    extra_rounds: int = Field(
        default=0,
        ge=0,
        description="Rounds simulated past the last trace event beyond the timeout horizon"
    )


class Waypoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    time: float = Field(..., ge=0.0, description="Seconds")
    x: float
    y: float


class MobilityTrace(BaseModel):
    model_config = ConfigDict(frozen=True)

    receiver_id: int = Field(..., ge=0)
    rf_address: str
    waypoints: Tuple[Waypoint, ...] = Field(..., min_length=1)
    join_time: float = Field(default=0.0, ge=0.0)
    leave_time: Optional[float] = None
    leave_mode: LeaveMode = LeaveMode.UNGRACEFUL

    @model_validator(mode="after")
    def _check_times(self) -> "MobilityTrace":
        times = [w.time for w in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"Waypoint times of receiver {self.receiver_id} must be strictly increasing")
        if self.leave_time is not None and self.leave_time <= self.join_time:
            raise ValueError(f"Receiver {self.receiver_id} leaves before it joins")
        return self

    def present_at(self, t: float) -> bool:
        if t < self.join_time:
            return False
        return self.leave_time is None or t < self.leave_time


class Frame(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: FrameKind
    led_local_id: Optional[int] = None
    rf_address: Optional[str] = None
    payload_dest: Optional[str] = None

    @model_validator(mode="after")
    def _fields_for_kind(self) -> "Frame":
        if self.kind == FrameKind.SEARCH and self.led_local_id is None:
            raise ValueError("SEARCH frames carry exactly one led_local_id")
        if self.kind == FrameKind.ACK and (self.rf_address is None or self.led_local_id is None):
            raise ValueError("ACK frames carry (rf_address, led_local_id)")
        if self.kind == FrameKind.CLOSE and self.rf_address is None:
            raise ValueError("CLOSE frames carry rf_address")
        if self.kind == FrameKind.DATA and self.payload_dest is None:
            raise ValueError("DATA frames carry payload_dest")
        return self


class LedRatEntry(BaseModel):
    receiver_id: int
    rf_address: str
    boards: FrozenSet[int] = Field(default_factory=frozenset)
    best_board_id: Optional[int] = None
    last_ack_round: int
    state: AssociationState = AssociationState.ASSOCIATED
    estimate: Optional[Point2] = Field(
        None,
        description="Floor position estimate: projection of the ACKed board"
    )


class LedRat(BaseModel):
    """LED-receiver association table, the bulb's mutable protocol state"""
    entries: Dict[str, LedRatEntry] = Field(default_factory=dict)
    round_counter: int = 0

    def active(self) -> List[LedRatEntry]:
        return sorted(
            (e for e in self.entries.values() if e.state != AssociationState.REMOVED),
            key=lambda e: e.receiver_id
        )

    def boards_disjoint(self) -> bool:
        seen = set()
        for entry in self.entries.values():
            if seen & entry.boards:
                return False
            seen |= entry.boards
        return True

    def snapshot(self) -> "LedRat":
        return self.model_copy(deep=True)


class ProtocolEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    time: float
    round: int
    kind: EventKind
    receiver: Optional[int] = None
    board_set: Tuple[int, ...] = Field(default_factory=tuple)
    rf_address: Optional[str] = None


class HandoverStats(BaseModel):
    handovers: Dict[int, int] = Field(default_factory=dict, description="receiver_id -> count")
    mean_association_latency: Optional[float] = Field(None, description="Rounds")
    repartition_count: int = 0


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------

class EvaluationConfig(BaseModel):
    """EvalProtocol minus room and seed, which come from the scenario"""
    n_placements: int = Field(default=200, ge=1)
    gate: CoverageGate = CoverageGate.DIVERGENCE
    sir_policy: SirPolicy = Field(default_factory=SirPolicy)
    strict_coverage: bool = True
    receiver_height: float = Field(default=0.0, ge=0.0)
    aperture_radius: float = Field(default=0.0375, gt=0)


class RoomSweepConfig(BaseModel):
    floor_dims: List[float] = Field(..., min_length=1, description="Square floor sides, meters")

    @field_validator("floor_dims")
    @classmethod
    def _positive(cls, v: List[float]) -> List[float]:
        if any(d <= 0 for d in v):
            raise ValueError("floor dimensions must be positive")
        return v


class DivergenceSweepConfig(BaseModel):
    angles: Tuple[float, float, float] = Field(..., description="(min, max, step) degrees")
    powers: List[float] = Field(..., min_length=1, description="Total bulb powers, watts")
    follow_half_intensity: bool = True

    @model_validator(mode="after")
    def _check(self) -> "DivergenceSweepConfig":
        lo, hi, step = self.angles
        if not (0.0 < lo <= hi < 90.0) or step <= 0:
            raise ValueError(f"angles must satisfy 0 < min <= max < 90 and step > 0, got {self.angles}")
        if any(p <= 0 for p in self.powers):
            raise ValueError("powers must be positive")
        return self

    def angle_values(self) -> List[float]:
        lo, hi, step = self.angles
        n = int(math.floor((hi - lo) / step + 1e-9))
        return [round(lo + i * step, 9) for i in range(n + 1)]


class ThreeRegionConfig(BaseModel):
    n_samples: int = Field(default=50, ge=1, description="Pairs per distance bin")
    bin_width: float = Field(default=0.25, gt=0)
    max_distance: Optional[float] = Field(default=None, gt=0)
    fixed_receiver: Optional[Point2] = Field(
        default=None,
        description="When set, also write the top-view SIR map for a receiver held here"
    )


class OptimizerConfig(BaseModel):
    boards_per_layer_range: Tuple[Tuple[int, int], ...]
    divergence_range: Tuple[float, float, float]
    per_board_power: float = Field(..., gt=0)
    budgets: List[float] = Field(..., min_length=1)
    half_intensity_follows_divergence: bool = True

    @field_validator("budgets")
    @classmethod
    def _ascending(cls, v: List[float]) -> List[float]:
        if any(b <= 0 for b in v) or any(b2 < b1 for b1, b2 in zip(v, v[1:])):
            raise ValueError(f"budgets must be positive and ascending, got {v}")
        return v

    def design_space(self, template: BulbDesign) -> DesignSpace:
        return DesignSpace(
            template=template,
            boards_per_layer_range=self.boards_per_layer_range,
            divergence_range=self.divergence_range,
            power_constraint=self.budgets[-1],
            per_board_power=self.per_board_power,
            half_intensity_follows_divergence=self.half_intensity_follows_divergence,
        )


class ClusterLayoutConfig(BaseModel):
    name: str
    cluster_type: ClusterType
    rows: int = Field(..., ge=1)
    cols: int = Field(..., ge=1)
    tilt_deg: float = Field(default=25.0, ge=0.0, lt=90.0)
    element_spacing: float = Field(default=0.1, ge=0.0)
    per_led_power: float = Field(default=1.0, gt=0)
    half_intensity_deg: float = Field(default=30.0, gt=0.0, lt=90.0)
    divergence_deg: float = Field(default=90.0, gt=0.0, le=90.0)


class SinrConfig(BaseModel):
    layouts: List[ClusterLayoutConfig] = Field(..., min_length=1)
    noise: NoiseModel = Field(default_factory=NoiseModel)
    fov_deg: float = Field(default=40.0, gt=0.0, le=90.0)
    tilt_deg: float = Field(default=40.0, ge=0.0, lt=90.0, description="Tilt of the six outer PDs")
    aperture_radius: float = Field(default=0.0375, gt=0)
    max_order: int = Field(default=4, ge=0, le=4)
    patch_size: float = Field(default=0.25, gt=0)

    @field_validator("layouts")
    @classmethod
    def _unique_names(cls, v: List[ClusterLayoutConfig]) -> List[ClusterLayoutConfig]:
        names = [layout.name for layout in v]
        if len(set(names)) != len(names):
            raise ValueError(f"layout names must be unique, got {names}")
        return v


class ChannelConfig(BaseModel):
    """Receiver positions and gain options for the channel exports"""
    receivers: List[Point2] = Field(
        default_factory=list,
        description="Receiver floor positions; receiver ids follow list order"
    )
    gate: CoverageGate = CoverageGate.DIVERGENCE
    max_order: int = Field(default=0, ge=0, le=4)
    patch_size: float = Field(default=0.25, gt=0)
    receiver_height: float = Field(default=0.0, ge=0.0)
    aperture_radius: float = Field(default=0.0375, gt=0)
    fov_deg: float = Field(default=90.0, gt=0.0, le=90.0)

    @field_validator("receivers")
    @classmethod
    def _distinct(cls, v: List[Point2]) -> List[Point2]:
        if len(set(v)) != len(v):
            raise ValueError(f"receiver positions must be distinct, got {v}")
        return v


class RandomTracesConfig(BaseModel):
    n: int = Field(..., ge=1)
    duration: float = Field(default=5.0, gt=0)
    n_waypoints: int = Field(default=4, ge=1)


class ProtocolSimConfig(BaseModel):
    config: ProtocolConfig = Field(default_factory=ProtocolConfig)
    traces_file: Optional[str] = Field(default=None, description="CSV: receiver_id,time,x,y")
    manifest_file: Optional[str] = Field(default=None, description="YAML join/leave manifest")
    random_traces: Optional[RandomTracesConfig] = None
    data_destinations: List[str] = Field(
        default_factory=list,
        description="rf_addresses to route one DATA frame to after the run"
    )

    @model_validator(mode="after")
    def _one_source(self) -> "ProtocolSimConfig":
        if (self.traces_file is None) == (self.random_traces is None):
            raise ValueError("set exactly one of traces_file or random_traces")
        return self


class ScenarioConfig(BaseModel):
    """One scenario document: shared room/bulb plus a section per subcommand"""
    room: RoomSpec
    bulb: Optional[BulbDesign] = None
    seed: Optional[int] = Field(default=None, ge=0)
    output_dir: Optional[str] = None
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    room_sweep: Optional[RoomSweepConfig] = None
    divergence_sweep: Optional[DivergenceSweepConfig] = None
    three_region: Optional[ThreeRegionConfig] = None
    optimizer: Optional[OptimizerConfig] = None
    sinr: Optional[SinrConfig] = None
    channel: Optional[ChannelConfig] = None
    protocol: Optional[ProtocolSimConfig] = None

    @model_validator(mode="before")
    @classmethod
    def _bulb_defaults_to_ceiling_centre(cls, data):
        if isinstance(data, dict) and isinstance(data.get("bulb"), dict) and "center" not in data["bulb"]:
            room = data.get("room")
            if isinstance(room, dict) and all(k in room for k in ("width", "depth", "height")):
                data = dict(data)
                data["bulb"] = {
                    **data["bulb"],
                    "center": (room["width"] / 2.0, room["depth"] / 2.0, room["height"]),
                }
        return data

    def eval_protocol(self, room: Optional[RoomSpec] = None) -> EvalProtocol:
        return EvalProtocol(
            room=room or self.room,
            seed=self.seed or 0,
            **self.evaluation.model_dump(),
        )
