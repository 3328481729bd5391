"""
Discrete-round simulation of the bulb/receiver association protocol.

Every search period the bulb sends SEARCH frames from all boards; each
receiver ACKs the id of the strongest one over a lossless RF side channel.
The bulb keeps an LED-receiver association table (LED-RAT), re-partitions
its boards whenever an association changes, and drops receivers that send
CLOSE or miss n_t consecutive ACKs.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence

import numpy as np

from simulator.channel import GainMatrix, los_gains_to_points
from simulator.geometry import build_bulb
from simulator.models import (
    AssociationState,
    BulbDesign,
    EventKind,
    Frame,
    FrameKind,
    HandoverStats,
    LeaveMode,
    LedRat,
    LedRatEntry,
    MobilityTrace,
    Point2,
    ProtocolConfig,
    ProtocolEvent,
    ReceiverSpec,
    RoomSpec,
    TransmitterBoard,
    Waypoint,
)
from simulator.partition import board_points, repartition
from simulator.rng import stream


logger = logging.getLogger(__name__)

ROUND_TOLERANCE = 1e-9


@dataclass
class EventLog:
    """Append-only protocol event record"""
    events: List[ProtocolEvent] = field(default_factory=list)

    def append(self, event: ProtocolEvent):
        self.events.append(event)

    def of_kind(self, kind: EventKind) -> List[ProtocolEvent]:
        return [e for e in self.events if e.kind == kind]

    def ordered(self) -> "EventLog":
        """Stable sort by (round, receiver id); bulb-wide events close their round"""
        key = lambda e: (e.round, e.receiver if e.receiver is not None else math.inf)
        return EventLog(events=sorted(self.events, key=key))

    def to_lines(self) -> List[str]:
        return [json.dumps(e.model_dump(mode="json"), sort_keys=True) for e in self.events]

    def __len__(self) -> int:
        return len(self.events)


@dataclass
class SimulationResult:
    log: EventLog
    led_rat: LedRat
    boards: List[TransmitterBoard]
    rounds: int
    snapshots: List[LedRat] = field(default_factory=list)


def rf_address_for(receiver_id: int) -> str:
    """Locally administered MAC-like address derived from a receiver id"""
    return f"02:00:00:00:{receiver_id // 256:02x}:{receiver_id % 256:02x}"


def round_index(t: float, period: float) -> int:
    """First SEARCH round at or after time t"""
    return int(math.ceil(t / period - ROUND_TOLERANCE))


def position_at(trace: MobilityTrace, t: float) -> Point2:
    """Linear interpolation between waypoints, held constant outside them"""
    times = [w.time for w in trace.waypoints]
    xs = [w.x for w in trace.waypoints]
    ys = [w.y for w in trace.waypoints]
    return (float(np.interp(t, times, xs)), float(np.interp(t, times, ys)))


def _strongest(powers: np.ndarray, board_ids: Sequence[int]) -> Optional[int]:
    if powers.size == 0:
        return None
    peak = powers.max()
    if peak <= 0.0:
        return None
    return min(board_ids[i] for i in np.flatnonzero(powers == peak))


def select_strongest(
    receiver: ReceiverSpec,
    boards: Sequence[TransmitterBoard],
    gains: GainMatrix,
    element_id: int = 0,
) -> Optional[int]:
    """
    Id of the board whose SEARCH frame arrives strongest.

    Returns:
        Board id (ties: lower id), or None when nothing is received
    """
    column = gains.column(receiver.id, element_id)
    powers = np.array([b.power * column[gains.row_index(b.id)] for b in boards])
    return _strongest(powers, [b.id for b in boards])


def _validate_traces(traces: Sequence[MobilityTrace], room: RoomSpec):
    addresses = [t.rf_address for t in traces]
    if len(set(addresses)) != len(addresses):
        dupes = sorted({a for a in addresses if addresses.count(a) > 1})
        raise ValueError(f"Duplicate rf_address in traces: {dupes}")
    ids = [t.receiver_id for t in traces]
    if len(set(ids)) != len(ids):
        raise ValueError(f"Duplicate receiver_id in traces: {sorted(ids)}")
    for trace in traces:
        for w in trace.waypoints:
            if not room.contains_floor_point((w.x, w.y)):
                raise ValueError(
                    f"Receiver {trace.receiver_id} waypoint ({w.x}, {w.y}) at t={w.time} is outside the room"
                )


def _horizon(traces: Sequence[MobilityTrace], config: ProtocolConfig) -> int:
    last = 0.0
    for trace in traces:
        last = max(last, trace.join_time, trace.waypoints[-1].time)
        if trace.leave_time is not None:
            last = max(last, trace.leave_time)
    return round_index(last, config.search_period) + config.n_t + 1 + config.extra_rounds


class _Bulb:
    """Bulb-side protocol state machine for one run"""

    def __init__(self, boards: List[TransmitterBoard], room: RoomSpec, config: ProtocolConfig):
        self.boards = boards
        self.room = room
        self.config = config
        self.rat = LedRat()
        self.log = EventLog()
        self._points = board_points(boards, room)
        self._index = {b.id: i for i, b in enumerate(boards)}

    def _event(self, r: int, kind: EventKind, entry_or_trace=None, board_set=()):
        receiver = getattr(entry_or_trace, "receiver_id", None)
        address = getattr(entry_or_trace, "rf_address", None)
        self.log.append(ProtocolEvent(
            time=r * self.config.search_period,
            round=r,
            kind=kind,
            receiver=receiver,
            board_set=tuple(sorted(board_set)),
            rf_address=address,
        ))

    def estimate_of(self, board_id: int) -> Point2:
        x, y = self._points[self._index[board_id]]
        return (float(x), float(y))

    def close(self, r: int, trace: MobilityTrace) -> bool:
        entry = self.rat.entries.get(trace.rf_address)
        if entry is None or entry.state == AssociationState.REMOVED:
            return False
        self._event(r, EventKind.CLOSE, entry)
        self._remove(r, entry)
        return True

    def _remove(self, r: int, entry: LedRatEntry):
        entry.state = AssociationState.REMOVED
        entry.boards = frozenset()
        self._event(r, EventKind.REMOVED, entry)

    def _nearest_free(self, board_id: int, taken: FrozenSet[Point2]) -> Optional[int]:
        """Board whose floor point is closest to board_id's, skipping points already held (ties: lower id)"""
        origin = self._points[self._index[board_id]]
        distance = ((self._points - origin) ** 2).sum(axis=1)
        for _, candidate in sorted(zip(distance, (b.id for b in self.boards))):
            if self.estimate_of(candidate) not in taken:
                return candidate
        return None

    def ack(self, r: int, trace: MobilityTrace, k: int) -> bool:
        """
        Process ACK(rf_address, k); returns True when the association changed.

        When k's floor point is already another receiver's estimate, the
        earlier holder keeps it and this receiver is associated with the free
        board nearest to k instead.
        """
        frame = Frame(kind=FrameKind.ACK, rf_address=trace.rf_address, led_local_id=k)
        self._event(r, EventKind.ACK, trace, (k,))

        entry = self.rat.entries.get(frame.rf_address)
        active = entry is not None and entry.state != AssociationState.REMOVED
        if active and entry.best_board_id == k:
            entry.last_ack_round = r
            entry.state = AssociationState.ASSOCIATED
            return False

        taken = frozenset(
            other.estimate
            for other in self.rat.active()
            if other.rf_address != frame.rf_address
        )
        target = k
        if self.estimate_of(k) in taken:
            target = self._nearest_free(k, taken)
            logger.debug("round %d: ACK of receiver %d for board %d contended, substitute %s",
                         r, trace.receiver_id, k, target)
            self._event(r, EventKind.CONTENDED, trace, (k,) if target is None else (k, target))
            if target is None or (active and entry.best_board_id == target):
                if active:
                    entry.last_ack_round = r
                    entry.state = AssociationState.ASSOCIATED
                return False

        estimate = self.estimate_of(target)
        if active:
            entry.best_board_id = target
            entry.estimate = estimate
            entry.last_ack_round = r
            entry.state = AssociationState.ASSOCIATED
            self._event(r, EventKind.HANDOVER, entry, (target,))
        else:
            entry = LedRatEntry(
                receiver_id=trace.receiver_id,
                rf_address=frame.rf_address,
                best_board_id=target,
                last_ack_round=r,
                estimate=estimate,
            )
            self.rat.entries[frame.rf_address] = entry
            self._event(r, EventKind.ASSOCIATE, entry, (target,))
        return True

    def expire(self, r: int) -> bool:
        changed = False
        for entry in self.rat.active():
            missed = r - entry.last_ack_round
            if missed >= self.config.n_t:
                self._remove(r, entry)
                changed = True
            elif missed >= 1:
                entry.state = AssociationState.TIMING_OUT
        return changed

    def repartition(self, r: int):
        active = self.rat.active()
        if active:
            partition = repartition([(e.receiver_id, e.estimate) for e in active], self.boards, self.room)
            for entry in active:
                entry.boards = partition.boards_of(entry.receiver_id)
        self._event(r, EventKind.REPARTITION)


def run_simulation(
    traces: Sequence[MobilityTrace],
    bulb: BulbDesign,
    room: RoomSpec,
    config: ProtocolConfig,
    record_snapshots: bool = False,
) -> SimulationResult:
    """
    Simulate SEARCH rounds until every trace has ended and timeouts have settled.

    Round r happens at t = r * search_period. Within a round: CLOSE frames
    of graceful leavers are applied first, then ACKs in receiver-id order,
    then timeouts, then at most one re-partition.

    Args:
        traces: One mobility trace per receiver
        bulb: Bulb design
        room: Room
        config: Protocol parameters
        record_snapshots: Keep a copy of the LED-RAT after every round

    Returns:
        SimulationResult with the ordered event log and final LED-RAT

    Raises:
        ValueError: duplicate rf_address or receiver id, or waypoints outside the room
    """
    _validate_traces(traces, room)
    boards = build_bulb(bulb)
    board_ids = [b.id for b in boards]
    power = np.array([b.power for b in boards])
    state = _Bulb(boards, room, config)
    period = config.search_period

    ordered = sorted(traces, key=lambda t: t.receiver_id)
    join_round = {t.receiver_id: round_index(t.join_time, period) for t in ordered}
    leave_round = {
        t.receiver_id: round_index(t.leave_time, period) if t.leave_time is not None else None
        for t in ordered
    }

    def present(trace: MobilityTrace, r: int) -> bool:
        end = leave_round[trace.receiver_id]
        return join_round[trace.receiver_id] <= r and (end is None or r < end)

    n_rounds = _horizon(traces, config)
    snapshots = []
    for r in range(n_rounds):
        changed = False
        t = r * period

        for trace in ordered:
            end = leave_round[trace.receiver_id]
            if trace.leave_mode == LeaveMode.GRACEFUL and end is not None and r >= end:
                changed |= state.close(r, trace)
            if join_round[trace.receiver_id] == r:
                state._event(r, EventKind.JOIN, trace)

        active_traces = [trace for trace in ordered if present(trace, r)]
        if active_traces:
            points = np.array([(*position_at(trace, t), 0.0) for trace in active_traces])
            gains = los_gains_to_points(
                boards, points, gate=config.gate,
                aperture_radius=config.aperture_radius, fov_deg=config.fov_deg,
            )
            for j, trace in enumerate(active_traces):
                k = _strongest(power * gains[:, j], board_ids)
                if k is None:
                    continue
                if config.ack_loss_probability > 0.0:
                    if stream(config.seed, r, trace.receiver_id).random() < config.ack_loss_probability:
                        continue
                changed |= state.ack(r, trace, k)

        changed |= state.expire(r)
        if changed:
            state.repartition(r)

        state.rat.round_counter = r
        if record_snapshots:
            snapshots.append(state.rat.snapshot())

    return SimulationResult(
        log=state.log.ordered(),
        led_rat=state.rat,
        boards=boards,
        rounds=n_rounds,
        snapshots=snapshots,
    )


def handover_stats(log: EventLog) -> HandoverStats:
    """
    Handovers per receiver, mean rounds from join to first association
    (an ACK on the first SEARCH counts as 1), and re-partition count.
    """
    joined: Dict[int, int] = {}
    associated: Dict[int, int] = {}
    handovers: Dict[int, int] = {}
    repartitions = 0

    for event in log.events:
        if event.kind == EventKind.JOIN:
            joined.setdefault(event.receiver, event.round)
            handovers.setdefault(event.receiver, 0)
        elif event.kind == EventKind.ASSOCIATE:
            associated.setdefault(event.receiver, event.round)
        elif event.kind == EventKind.HANDOVER:
            handovers[event.receiver] = handovers.get(event.receiver, 0) + 1
        elif event.kind == EventKind.REPARTITION:
            repartitions += 1

    latencies = [associated[r] - joined[r] + 1 for r in associated if r in joined]
    return HandoverStats(
        handovers=handovers,
        mean_association_latency=(sum(latencies) / len(latencies)) if latencies else None,
        repartition_count=repartitions,
    )


def route_data(
    frame: Frame,
    led_rat: LedRat,
    log: Optional[EventLog] = None,
    time: float = 0.0,
) -> FrozenSet[int]:
    """
    Boards that should carry a DATA frame: reverse lookup of the destination.

    Unknown or removed destinations are dropped: empty set, logged, and a DROP
    event when a log is given.
    """
    if frame.kind != FrameKind.DATA:
        raise ValueError(f"route_data expects a DATA frame, got {frame.kind.value}")
    entry = led_rat.entries.get(frame.payload_dest)
    if entry is not None and entry.state != AssociationState.REMOVED:
        return frozenset(entry.boards)

    logger.info("Dropping DATA frame for %s: no active association", frame.payload_dest)
    if log is not None:
        log.append(ProtocolEvent(
            time=time,
            round=led_rat.round_counter,
            kind=EventKind.DROP,
            receiver=entry.receiver_id if entry is not None else None,
            rf_address=frame.payload_dest,
        ))
    return frozenset()


def generate_random_traces(
    room: RoomSpec,
    n: int,
    seed: int,
    duration: float = 5.0,
    n_waypoints: int = 4,
    margin: float = 0.25,
    first_id: int = 0,
) -> List[MobilityTrace]:
    """Random walks through the room with random join/leave times and leave modes"""
    traces = []
    for i in range(n):
        rid = first_id + i
        rng = stream(seed, rid)
        steps = rng.uniform(0.2, 1.0, size=n_waypoints)
        times = np.cumsum(steps) - steps[0]
        times = times * (duration / times[-1]) if times[-1] > 0 else times
        xs = rng.uniform(margin, room.width - margin, size=n_waypoints)
        ys = rng.uniform(margin, room.depth - margin, size=n_waypoints)
        join = float(rng.uniform(0.0, 0.3 * duration))
        leave = float(rng.uniform(join + 0.2 * duration, duration)) if rng.random() < 0.5 else None
        mode = LeaveMode.GRACEFUL if rng.random() < 0.5 else LeaveMode.UNGRACEFUL
        traces.append(MobilityTrace(
            receiver_id=rid,
            rf_address=rf_address_for(rid),
            waypoints=tuple(Waypoint(time=float(t), x=float(x), y=float(y)) for t, x, y in zip(times, xs, ys)),
            join_time=join,
            leave_time=leave,
            leave_mode=mode,
        ))
    return traces
