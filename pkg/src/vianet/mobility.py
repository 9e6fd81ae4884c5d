"""Agent-based micro-mobility.

Three decision layers per vehicle: trip planning onto the road graph
(strategic), lane selection with a politeness-weighted incentive and safety
veto (tactical), and car following with signal handling (operational).
Non-green signals are perceived as static obstacles at the stop line.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import roadnet
from .errors import CollisionFault, RoutingError
from .roadnet import RoadNetwork, RouteEdge

log = logging.getLogger("vianet.mobility")

NO_LEADER = math.inf

GREEN = "green"
YELLOW = "yellow"
RED = "red"
_PHASE_ORDER = (GREEN, YELLOW, RED)

DEFAULT_VEHICLE_LENGTH = 5.0
DEFAULT_HORIZON = 150.0
DEFAULT_B_EMERGENCY = 9.0


@dataclass(frozen=True)
class IdmParams:
    """Car-following parameters; defaults are the reference-scenario values."""

    a_max: float = 1.4        # maximum acceleration, m/s^2
    b_comfort: float = 2.0    # desired deceleration, m/s^2
    time_gap: float = 1.0     # desired time gap, s
    jam_distance: float = 2.0  # standstill gap, m
    exponent: float = 4.0     # free acceleration exponent

    def __post_init__(self) -> None:
        if min(self.a_max, self.b_comfort, self.time_gap, self.jam_distance) <= 0:
            raise ValueError("IDM parameters must be strictly positive")
        if self.exponent < 1:
            raise ValueError("free acceleration exponent must be >= 1")


@dataclass(frozen=True)
class MobilParams:
    politeness: float = 0.2     # weight of follower disadvantage
    threshold: float = 0.1      # required net incentive, m/s^2
    b_safe: float = 4.0         # max braking imposed on the new follower, m/s^2

    def __post_init__(self) -> None:
        if not 0.0 <= self.politeness <= 1.0:
            raise ValueError("politeness must lie in [0, 1]")
        if self.threshold < 0 or self.b_safe <= 0:
            raise ValueError("invalid lane-change thresholds")


@dataclass(frozen=True)
class DriverProfile:
    """Per-driver variation: desired speed is velocity_factor times the posted limit."""

    velocity_factor: float = 1.0
    idm: IdmParams = field(default_factory=IdmParams)
    mobil: MobilParams = field(default_factory=MobilParams)

    def __post_init__(self) -> None:
        if self.velocity_factor <= 0:
            raise ValueError("velocity factor must be positive")


def idm_acceleration(
    v: float,
    v0: float,
    gap: float,
    closing_speed: float,
    params: IdmParams,
    b_emergency: float = DEFAULT_B_EMERGENCY,
) -> float:
    """Longitudinal acceleration for speed ``v``, desired speed ``v0`` and a
    leader ``gap`` meters ahead approached at ``closing_speed``.

    ``gap = inf`` encodes free driving. The result is clamped below at
    ``-b_emergency`` so tiny gaps cannot produce unbounded braking.
    """
    if v0 <= 0:
        raise ValueError("desired speed must be positive")
    if gap <= 0:
        raise CollisionFault(f"non-positive bumper gap {gap:.3f} m")
    desired_gap = (
        params.jam_distance
        + v * params.time_gap
        + v * closing_speed / (2.0 * math.sqrt(params.a_max * params.b_comfort))
    )
    accel = params.a_max * (1.0 - (v / v0) ** params.exponent - (desired_gap / gap) ** 2)
    return max(accel, -b_emergency)


@dataclass
class TrafficSignal:
    """Fixed-cycle signal: green -> yellow -> red -> green."""

    node_id: int
    phase: str = GREEN
    durations: tuple[float, float, float] = (30.0, 5.0, 25.0)  # (green, yellow, red), s
    phase_clock: float = 0.0

    def __post_init__(self) -> None:
        if self.phase not in _PHASE_ORDER:
            raise ValueError(f"unknown signal phase {self.phase!r}")
        if min(self.durations) <= 0:
            raise ValueError("signal phase durations must be positive")

    def duration_of(self, phase: str) -> float:
        return self.durations[_PHASE_ORDER.index(phase)]


def signal_step(signal: TrafficSignal, dt: float) -> TrafficSignal:
    """Advance the phase clock by dt, consuming any phase boundaries crossed."""
    signal.phase_clock += dt
    while signal.phase_clock >= signal.duration_of(signal.phase):
        signal.phase_clock -= signal.duration_of(signal.phase)
        idx = _PHASE_ORDER.index(signal.phase)
        signal.phase = _PHASE_ORDER[(idx + 1) % 3]
    return signal


@dataclass
class Vehicle:
    """Kinematic state plus the remaining planned trajectory.

    ``offset`` is the front-bumper arc position along the current route edge;
    the approached node is the end node of that edge.
    """

    id: int
    profile: DriverProfile = field(default_factory=DriverProfile)
    length: float = DEFAULT_VEHICLE_LENGTH
    edges: list[RouteEdge] = field(default_factory=list)
    edge_idx: int = 0
    lane: int = 0
    offset: float = 0.0
    v: float = 0.0
    a: float = 0.0
    v0: float = 13.89  # recomputed whenever a route or way is entered
    origin_node: int = 0
    parked: bool = False
    trip_done: bool = False  # waiting at the destination for the next trip to start
    trips_completed: int = 0

    @property
    def edge(self) -> RouteEdge:
        return self.edges[self.edge_idx]

    @property
    def approached_node(self) -> int | None:
        if self.parked or not self.edges:
            return None
        return self.edges[self.edge_idx].b

    @property
    def trip_anchor(self) -> int:
        """Node from which the next trip starts (route end, or spawn node)."""
        return self.edges[-1].b if self.edges else self.origin_node

    def position(self) -> tuple[float, float]:
        if not self.edges:
            return 0.0, 0.0
        e = self.edges[self.edge_idx]
        f = min(max(self.offset / e.length, 0.0), 1.0)
        return e.ax + (e.bx - e.ax) * f, e.ay + (e.by - e.ay) * f

    def assign_route(self, edges: list[RouteEdge]) -> None:
        self.edges = edges
        self.edge_idx = 0
        self.offset = 0.0
        self.lane = min(self.lane, edges[0].lanes - 1) if edges else 0
        self.parked = not edges
        self.trip_done = False
        if edges:
            self.v0 = self.profile.velocity_factor * edges[0].speed_limit


@dataclass
class WorldView:
    """What a vehicle can see: per-edge occupancy, signal phases, node claims.

    ``occupancy`` maps a directed edge (a, b) to vehicles on it sorted by
    offset. ``node_claims`` maps intersection nodes to (holder vehicle id,
    holder way id); a claim held by a vehicle on a different way reads as red.
    """

    occupancy: dict[tuple[int, int], list[tuple[float, "Vehicle"]]]
    signal_phase: Callable[[int], str | None] = lambda node: None
    node_claims: dict[int, tuple[int, int]] = field(default_factory=dict)
    horizon: float = DEFAULT_HORIZON


def _signal_blocks(phase: str | None, v: float, distance: float, idm: IdmParams) -> bool:
    if phase is None or phase == GREEN:
        return False
    if phase == RED:
        return True
    # yellow: stop only when comfortable braking still suffices
    return v * v / (2.0 * distance) <= idm.b_comfort


_MERGE_WINDOW = 60.0  # lane-drop handling engages this close to the boundary


def perceive_leader(vehicle: Vehicle, view: WorldView) -> tuple[float, float]:
    """Nearest obstacle ahead on the trajectory: (bumper gap m, closing speed m/s).

    Considers leading vehicles in the own (continuing) lane and non-green
    signals, which read as static obstacles at the stop line. When the own
    lane ends at an upcoming boundary, traffic in the receiving lane is
    followed as well, and the boundary itself blocks until the merge gap is
    safe. Returns (inf, 0) when nothing lies within the horizon. Gaps are
    bumper-to-bumper; a non-positive gap is a collision.
    """
    if vehicle.parked or vehicle.trip_done or not vehicle.edges:
        return NO_LEADER, 0.0
    edges = vehicle.edges
    base = -vehicle.offset  # arc from own front bumper to the start of edge k
    lane = vehicle.lane
    for k in range(vehicle.edge_idx, len(edges)):
        edge = vehicle.edges[k]
        if base >= view.horizon:
            break
        lane = min(lane, edge.lanes - 1)
        node_distance = base + edge.length

        merge_lane = None
        if (
            k + 1 < len(edges)
            and lane > edges[k + 1].lanes - 1
            and 0.0 < node_distance <= _MERGE_WINDOW
        ):
            merge_lane = edges[k + 1].lanes - 1

        best: tuple[float, float] | None = None
        for off, other in view.occupancy.get((edge.a, edge.b), ()):
            if other is vehicle or (other.lane != lane and other.lane != merge_lane):
                continue
            if k == vehicle.edge_idx and off < vehicle.offset:
                continue
            ahead = base + off
            if ahead > view.horizon:
                break
            if ahead <= 0.0:
                continue
            gap = ahead - other.length
            if other.lane != lane and gap <= 0.0:
                gap = 0.5  # beside a receiving-lane vehicle: brake hard, not a fault
            best = (gap, vehicle.v - other.v)
            break
        if best is not None:
            return best

        if 0.0 < node_distance <= view.horizon:
            claim = view.node_claims.get(edge.b)
            if claim is not None and claim[0] != vehicle.id and claim[1] != edge.way_id:
                return node_distance, vehicle.v
            phase = view.signal_phase(edge.b)
            if _signal_blocks(phase, vehicle.v, node_distance, vehicle.profile.idm):
                return node_distance, vehicle.v
            if merge_lane is not None and k == vehicle.edge_idx and _merge_blocked(
                vehicle, edge, merge_lane, view
            ):
                return node_distance, vehicle.v
        base = node_distance
    return NO_LEADER, 0.0


def _merge_blocked(vehicle: Vehicle, edge: RouteEdge, merge_lane: int, view: WorldView) -> bool:
    """A vehicle beside or closely behind in the receiving lane vetoes the merge."""
    for off, other in view.occupancy.get((edge.a, edge.b), ()):
        if other is vehicle or other.lane != merge_lane:
            continue
        if off >= vehicle.offset:
            continue  # ahead in the receiving lane: already followed as a leader
        gap_behind = vehicle.offset - off - vehicle.length
        if gap_behind < vehicle.profile.idm.jam_distance + 0.5 * other.v:
            return True
    return False


@dataclass(frozen=True)
class SurroundingCar:
    """A neighbor as seen from the deciding vehicle.

    ``rel_pos`` is the neighbor's front bumper relative to the decider's
    (positive = ahead). ``v0`` and ``idm`` matter only for followers, whose
    reactions enter the incentive balance.
    """

    rel_pos: float
    v: float
    length: float = DEFAULT_VEHICLE_LENGTH
    v0: float = 13.89
    idm: IdmParams = field(default_factory=IdmParams)


@dataclass(frozen=True)
class LaneView:
    leader: SurroundingCar | None = None
    follower: SurroundingCar | None = None


def _gap_between(rear_front: float, front_front: float, front_length: float) -> float:
    return front_front - rear_front - front_length


def mobil_decide(
    vehicle: Vehicle,
    current: LaneView,
    target: LaneView,
    params: MobilParams,
    b_emergency: float = DEFAULT_B_EMERGENCY,
) -> bool:
    """True when changing to the target lane is both safe and worthwhile.

    Safety: the prospective new follower must not be forced below -b_safe.
    Incentive: own gain plus politeness-weighted follower balance must exceed
    the threshold. All reactions are evaluated with the following model.
    """

    def accel(v: float, v0: float, idm: IdmParams, own_pos: float,
              leader: SurroundingCar | None) -> float | None:
        if leader is None:
            return idm_acceleration(v, v0, NO_LEADER, 0.0, idm, b_emergency)
        gap = _gap_between(own_pos, leader.rel_pos, leader.length)
        if gap <= 0.0:
            return None
        return idm_acceleration(v, v0, gap, v - leader.v, idm, b_emergency)

    me = vehicle
    a_now = accel(me.v, me.v0, me.profile.idm, 0.0, current.leader)
    a_target = accel(me.v, me.v0, me.profile.idm, 0.0, target.leader)
    if a_now is None or a_target is None:
        return False

    ego_as_leader = SurroundingCar(0.0, me.v, me.length)
    follower_balance = 0.0

    new_follower = target.follower
    if new_follower is not None:
        before = accel(new_follower.v, new_follower.v0, new_follower.idm,
                       new_follower.rel_pos, target.leader)
        after = accel(new_follower.v, new_follower.v0, new_follower.idm,
                      new_follower.rel_pos, ego_as_leader)
        if before is None or after is None or after < -params.b_safe:
            return False
        follower_balance += after - before

    old_follower = current.follower
    if old_follower is not None:
        before = accel(old_follower.v, old_follower.v0, old_follower.idm,
                       old_follower.rel_pos, ego_as_leader)
        after = accel(old_follower.v, old_follower.v0, old_follower.idm,
                      old_follower.rel_pos, current.leader)
        if before is None or after is None:
            return False
        follower_balance += after - before

    incentive = (a_target - a_now) + params.politeness * follower_balance
    return incentive > params.threshold


def step_vehicle(
    vehicle: Vehicle,
    dt: float,
    replan: Callable[[Vehicle], list[RouteEdge] | None] | None = None,
) -> Vehicle:
    """Semi-implicit Euler update: v' = max(0, v + a dt), then move v' dt.

    Edge overflow carries the surplus into the next route edge; the desired
    speed follows the speed limit of the way entered. When the trajectory is
    exhausted mid-step, ``replan`` may supply a follow-up route that the
    remaining distance flows into; otherwise the vehicle halts at the
    destination node with ``trip_done`` set and waits for the strategic layer.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if vehicle.parked or vehicle.trip_done or not vehicle.edges:
        vehicle.v = 0.0
        return vehicle

    v_new = max(0.0, vehicle.v + vehicle.a * dt)
    vehicle.v = v_new
    vehicle.offset += v_new * dt

    while vehicle.offset >= vehicle.edge.length:
        vehicle.offset -= vehicle.edge.length
        previous = vehicle.edge
        vehicle.edge_idx += 1
        if vehicle.edge_idx >= len(vehicle.edges):
            vehicle.trips_completed += 1
            new_edges = replan(vehicle) if replan is not None else None
            if not new_edges:
                vehicle.edge_idx = len(vehicle.edges) - 1
                vehicle.offset = vehicle.edge.length
                vehicle.v = 0.0
                vehicle.trip_done = True
                return vehicle
            vehicle.edges = new_edges
            vehicle.edge_idx = 0
        entered = vehicle.edge
        vehicle.lane = min(vehicle.lane, entered.lanes - 1)
        if entered.way_id != previous.way_id:
            vehicle.v0 = vehicle.profile.velocity_factor * entered.speed_limit
    return vehicle


def plan_trip(
    vehicle: Vehicle,
    network: RoadNetwork,
    rng: np.random.Generator,
    max_attempts: int = 32,
) -> tuple[int, list[int]] | None:
    """Draw a destination uniformly from reachable road nodes and route to it.

    Rejection-samples over all road nodes first; if that keeps failing, falls
    back to an explicit reachability scan. Returns None (vehicle stays parked)
    when nothing is reachable.
    """
    start = vehicle.trip_anchor
    candidates = [n for n in network.road_nodes if n != start]
    if not candidates:
        log.warning("vehicle %d: no trip destinations available from node %d", vehicle.id, start)
        return None
    for _ in range(max_attempts):
        dest = candidates[int(rng.integers(len(candidates)))]
        try:
            return dest, roadnet.route(network, start, dest)
        except RoutingError:
            continue
    reachable = _reachable_from(network, start)
    reachable.discard(start)
    if not reachable:
        log.warning("vehicle %d: parked, no reachable destination from node %d", vehicle.id, start)
        return None
    ordered = sorted(reachable)
    dest = ordered[int(rng.integers(len(ordered)))]
    return dest, roadnet.route(network, start, dest)


def _reachable_from(network: RoadNetwork, start: int) -> set[int]:
    seen = {start}
    frontier = [start]
    while frontier:
        u = frontier.pop()
        for v, _ in network.adjacency.get(u, ()):
            if v not in seen:
                seen.add(v)
                frontier.append(v)
    return seen
