"""Simulation assembly: wires vehicles, signals, radio and sensing onto the
event queue.

Mobility advances through periodic mobility_step events; radio sampling,
trajectory tracing and transmissions are separate event chains, so a host
simulator driving the queue through the managed adapter reproduces the
standalone run exactly. One instance is strictly single-threaded.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

from . import mobility, radio, roadnet, sensing, simkernel
from .errors import ChannelBlocked, CollisionFault, ConfigError
from .mobility import Vehicle, WorldView
from .roadnet import RoadNetwork
from .scenario import Scenario
from .sensing import SnrMap, TransmissionSchedule

log = logging.getLogger("vianet.sim")

_CLAIM_CLEAR_MARGIN = 2.0  # meters past the node before an intersection claim releases


@dataclass
class _TxState:
    schedule: TransmissionSchedule
    last_anchor: float = 0.0          # start time of the previous transmission
    pending_start: float | None = None
    pending_payload: float = 0.0
    pending_snr0: float = 0.0


@dataclass
class _Claim:
    holder: int
    way_id: int
    requests: dict[int, float] = field(default_factory=dict)


class Simulation:
    """One scenario instance: deterministic for a given (scenario, seed).

    Vehicles, signals and a pre-trained SNR map can be injected for scripted
    scenarios; otherwise they are derived from the network and the seeded
    sub-streams (spawn, drivers, trips, sensing).
    """

    def __init__(
        self,
        network: RoadNetwork,
        scenario: Scenario,
        *,
        seed: int | None = None,
        scheme: str | None = None,
        vehicles: list[Vehicle] | None = None,
        signals: dict[int, mobility.TrafficSignal] | None = None,
        snr_map: SnrMap | None = None,
        update_map: bool | None = None,
        replan: bool = True,
        mode: str = simkernel.STANDALONE,
    ) -> None:
        self.network = network
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.scheme = scenario.sensing.scheme if scheme is None else scheme
        self.queue = simkernel.EventQueue(mode=mode)
        self.replan = replan

        mob = scenario.mobility
        self._dt = scenario.dt
        self._step = 0
        self._mobil_every = max(1, round(mob.mobil_period / scenario.dt))
        self._trips_rng = simkernel.substream(self.seed, "trips")
        self._shadow_rng = simkernel.substream(self.seed, "shadowing")

        if vehicles is None:
            vehicles = self._spawn_vehicles()
        self.vehicles = sorted(vehicles, key=lambda v: v.id)

        if signals is None:
            signals = self._build_signals()
        self.signals = signals

        self.stations = sorted(scenario.stations, key=lambda s: s.id)
        self._stations_by_id = {s.id: s for s in self.stations}
        self._attachments: dict[int, radio.Attachment] = {}

        if scenario.sensing.map_file and snr_map is None:
            snr_map, _ = sensing.load_map(scenario.sensing.map_file)
        self.snr_map = snr_map if snr_map is not None else SnrMap(scenario.sensing.cell_size)
        self._update_map = (snr_map is None and not scenario.sensing.map_file) \
            if update_map is None else update_map

        if scenario.sensor_count and not self.stations:
            raise ConfigError("scenario.sensors: sensing requires at least one station")
        sensor_rng = simkernel.substream(self.seed, "sensing")
        candidate_ids = [v.id for v in self.vehicles]
        count = min(scenario.sensor_count, len(candidate_ids))
        picked = sensor_rng.choice(len(candidate_ids), size=count, replace=False) if count else []
        self.sensor_ids = sorted(candidate_ids[i] for i in picked)
        self._tx_states: dict[int, _TxState] = {}

        self.trajectory_rows: list[tuple] = []
        self.link_rows: list[tuple] = []
        self.tx_records: list[sensing.TransmissionRecord] = []
        self.timers: dict[str, float] = {"mobility": 0.0, "radio": 0.0, "sensing": 0.0, "trace": 0.0}
        self._claims: dict[int, _Claim] = {}
        self._node_pos = {nid: n.pos for nid, n in network.nodes.items()}

        self._wire_events()

    # ------------------------------------------------------------------ setup

    def _spawn_vehicles(self) -> list[Vehicle]:
        sc = self.scenario
        spawn_rng = simkernel.substream(self.seed, "spawn")
        drivers_rng = simkernel.substream(self.seed, "drivers")
        nodes = [n for n in self.network.road_nodes if self.network.adjacency[n]]
        if sc.vehicle_count > len(nodes):
            raise ConfigError(
                f"scenario.vehicles: {sc.vehicle_count} vehicles need at most "
                f"{len(nodes)} distinct spawn nodes on this map"
            )
        order = spawn_rng.permutation(len(nodes))
        vehicles = []
        for vid in range(sc.vehicle_count):
            factor = float(drivers_rng.uniform(sc.mobility.v_factor_min, sc.mobility.v_factor_max))
            profile = mobility.DriverProfile(
                velocity_factor=factor, idm=sc.mobility.idm, mobil=sc.mobility.mobil
            )
            vehicle = Vehicle(
                id=vid, profile=profile, length=sc.mobility.vehicle_length,
                origin_node=nodes[order[vid]],
            )
            planned = mobility.plan_trip(vehicle, self.network, self._trips_rng)
            if planned is not None:
                _, path = planned
                vehicle.assign_route(self.network.route_edges(path))
            else:
                vehicle.parked = True
            vehicles.append(vehicle)
        return vehicles

    def _build_signals(self) -> dict[int, mobility.TrafficSignal]:
        mob = self.scenario.mobility
        durations = (mob.signal_green, mob.signal_yellow, mob.signal_red)
        cycle = sum(durations)
        signals = {}
        for nid in sorted(self.network.nodes):
            if self.network.nodes[nid].kind == roadnet.NODE_SIGNAL:
                signal = mobility.TrafficSignal(nid, durations=durations)
                mobility.signal_step(signal, float(nid % int(cycle)))  # deterministic stagger
                signals[nid] = signal
        return signals

    def _wire_events(self) -> None:
        sc = self.scenario
        if self.signals:
            self.queue.schedule(self._dt, simkernel.SIGNAL_STEP, self._on_signal_step)
        if self.stations:
            self.queue.schedule(0.0, simkernel.SAMPLE_SNR, self._on_sample_snr)
        self.queue.schedule(0.0, simkernel.STAT_FLUSH, self._on_trace)
        self.queue.schedule(0.0, simkernel.MOBILITY_STEP, self._on_mobility_step)
        for vid in self.sensor_ids:
            schedule = TransmissionSchedule(scheme=self.scheme, interval=sc.sensing.tx_interval)
            state = _TxState(schedule=schedule)
            self._tx_states[vid] = state
            first = self._choose_next_tx(vid, now=0.0)
            schedule.next_tx = first
            self.queue.schedule(first, simkernel.TX_TRIGGER, lambda v=vid: self._on_tx_fire(v))

    # ------------------------------------------------------------------- run

    def run(self, duration: float | None = None) -> None:
        """Standalone mode: drain the queue up to the scenario duration."""
        self.queue.run_until(self.scenario.duration if duration is None else duration)

    # -------------------------------------------------------------- handlers

    def _on_signal_step(self) -> None:
        for signal in self.signals.values():
            mobility.signal_step(signal, self._dt)
        self.queue.schedule(self.queue.now + self._dt, simkernel.SIGNAL_STEP, self._on_signal_step)

    def _signal_phase(self, node: int) -> str | None:
        signal = self.signals.get(node)
        return signal.phase if signal else None

    def _active_vehicles(self) -> list[Vehicle]:
        return [v for v in self.vehicles if not v.parked and v.edges]

    def _occupancy(self, active: list[Vehicle]) -> dict:
        occ: dict[tuple[int, int], list[tuple[float, Vehicle]]] = {}
        for veh in active:
            e = veh.edge
            occ.setdefault((e.a, e.b), []).append((veh.offset, veh))
        for entries in occ.values():
            entries.sort(key=lambda item: (item[0], item[1].id))
        return occ

    def _update_claims(self, active: list[Vehicle]) -> dict[int, tuple[int, int]]:
        """First-come-first-served claims on unsignalized intersection nodes."""
        now = self.queue.now
        mob = self.scenario.mobility
        approaching: dict[int, tuple[int, int]] = {}
        for veh in active:
            e = veh.edge
            node = e.b
            if node in self.network.intersections and node not in self.signals:
                if e.length - veh.offset <= mob.claim_distance:
                    approaching[veh.id] = (node, e.way_id)

        for node, claim in list(self._claims.items()):
            holder = next((v for v in active if v.id == claim.holder), None)
            released = holder is None
            if not released:
                e = holder.edge
                if e.a == node and holder.offset > holder.length + _CLAIM_CLEAR_MARGIN:
                    released = True  # holder crossed and cleared the box
                elif e.b != node and e.a != node:
                    released = True  # holder diverted elsewhere
            claim.requests = {
                vid: t for vid, t in claim.requests.items()
                if approaching.get(vid, (None,))[0] == node
            }
            if released:
                if claim.requests:
                    vid = min(claim.requests, key=lambda v: (claim.requests[v], v))
                    way = approaching[vid][1]
                    self._claims[node] = _Claim(vid, way, claim.requests)
                else:
                    del self._claims[node]

        for veh in sorted(active, key=lambda v: v.id):
            entry = approaching.get(veh.id)
            if entry is None:
                continue
            node, way = entry
            claim = self._claims.get(node)
            if claim is None:
                self._claims[node] = _Claim(veh.id, way, {veh.id: now})
            else:
                claim.requests.setdefault(veh.id, now)
        return {node: (c.holder, c.way_id) for node, c in self._claims.items()}

    def _on_mobility_step(self) -> None:
        started = time.perf_counter()
        mob = self.scenario.mobility
        active = self._active_vehicles()
        occupancy = self._occupancy(active)
        claims = self._update_claims(active) if mob.intersection_priority else {}
        view = WorldView(occupancy, self._signal_phase, claims, mob.horizon)

        if self._step % self._mobil_every == 0:
            for veh in active:
                self._tactical_lane_change(veh, view)

        for veh in active:
            gap, closing = mobility.perceive_leader(veh, view)
            veh.a = mobility.idm_acceleration(
                veh.v, veh.v0, gap, closing, veh.profile.idm, mob.b_emergency
            )
        replan = self._replan if self.replan else None
        for veh in active:
            mobility.step_vehicle(veh, self._dt, replan)
        self._check_collisions(self._occupancy(self._active_vehicles()))

        self._step += 1
        self.timers["mobility"] += time.perf_counter() - started
        self.queue.schedule(self._step * self._dt, simkernel.MOBILITY_STEP, self._on_mobility_step)

    def _replan(self, vehicle: Vehicle) -> list | None:
        planned = mobility.plan_trip(vehicle, self.network, self._trips_rng)
        if planned is None:
            return None
        _, path = planned
        return self.network.route_edges(path)

    def _check_collisions(self, occupancy: dict) -> None:
        for (a, b), entries in occupancy.items():
            by_lane: dict[int, tuple[float, Vehicle]] = {}
            for off, veh in entries:
                prev = by_lane.get(veh.lane)
                if prev is not None:
                    gap = off - prev[0] - veh.length
                    if gap <= 0.0:
                        raise CollisionFault(
                            f"vehicles {prev[1].id} and {veh.id} overlap on edge "
                            f"({a}, {b}) lane {veh.lane} at t={self.queue.now:.2f}"
                        )
                by_lane[veh.lane] = (off, veh)

    def _neighbor_view(self, vehicle: Vehicle, lane: int, occupancy: dict) -> mobility.LaneView:
        leader = follower = None
        horizon = self.scenario.mobility.horizon
        base = -vehicle.offset
        for k in range(vehicle.edge_idx, len(vehicle.edges)):
            e = vehicle.edges[k]
            if base >= horizon or leader is not None:
                break
            lane_here = min(lane, e.lanes - 1)
            for off, other in occupancy.get((e.a, e.b), ()):
                if other is vehicle or other.lane != lane_here:
                    continue
                rel = base + off
                if rel <= 0.0 or (k == vehicle.edge_idx and off < vehicle.offset):
                    continue
                leader = mobility.SurroundingCar(rel, other.v, other.length,
                                                 other.v0, other.profile.idm)
                break
            base += e.length

        e = vehicle.edge
        behind = [
            (off, other) for off, other in occupancy.get((e.a, e.b), ())
            if other is not vehicle and other.lane == min(lane, e.lanes - 1)
            and off < vehicle.offset
        ]
        if behind:
            off, other = behind[-1]
            follower = mobility.SurroundingCar(off - vehicle.offset, other.v, other.length,
                                               other.v0, other.profile.idm)
        else:
            prev = self.network.prev_edge.get((e.a, e.b))
            if prev is not None:
                prev_edge = self.network.edge_map.get(prev)
                if prev_edge is not None:
                    entries = [
                        (off, other) for off, other in occupancy.get(prev, ())
                        if other.lane == min(lane, prev_edge.lanes - 1)
                    ]
                    if entries:
                        off, other = entries[-1]
                        rel = -(vehicle.offset + (prev_edge.length - off))
                        follower = mobility.SurroundingCar(rel, other.v, other.length,
                                                           other.v0, other.profile.idm)
        return mobility.LaneView(leader, follower)

    def _tactical_lane_change(self, vehicle: Vehicle, view: WorldView) -> None:
        lanes = vehicle.edge.lanes
        if lanes <= 1:
            return
        current = self._neighbor_view(vehicle, vehicle.lane, view.occupancy)
        for target_lane in (vehicle.lane - 1, vehicle.lane + 1):
            if not 0 <= target_lane < lanes:
                continue
            target = self._neighbor_view(vehicle, target_lane, view.occupancy)
            if mobility.mobil_decide(vehicle, current, target, vehicle.profile.mobil,
                                     self.scenario.mobility.b_emergency):
                vehicle.lane = target_lane
                return

    # ----------------------------------------------------------------- radio

    def _rssi_levels(self, pos: tuple[float, float]) -> dict[int, float]:
        cfg = self.scenario.radio
        levels = {}
        for station in self.stations:
            shadow = (
                float(self._shadow_rng.normal(0.0, cfg.shadowing_sigma_db))
                if cfg.shadowing_sigma_db > 0 else 0.0
            )
            levels[station.id] = radio.rssi(pos, station, cfg, shadow)
        return levels

    def _on_sample_snr(self) -> None:
        started = time.perf_counter()
        cfg = self.scenario.radio
        now = self.queue.now
        for veh in self.vehicles:
            pos = veh.position()
            levels = self._rssi_levels(pos)
            attachment = self._attachments.get(veh.id)
            if attachment is None:
                attachment = radio.initial_attachment(veh.id, levels)
            updated = radio.handover_check(attachment, levels, now, cfg)
            flag = int(updated.serving_id != attachment.serving_id)
            self._attachments[veh.id] = updated
            station = self._stations_by_id[updated.serving_id]
            level = levels[updated.serving_id]
            distance = math.hypot(pos[0] - station.pos[0], pos[1] - station.pos[1])
            snr = level - cfg.noise_floor_dbm
            self.link_rows.append((now, veh.id, station.id, distance, level, snr, flag))
            if self._update_map and veh.id in self._tx_states:
                sensing.update_map(self.snr_map, pos, snr)
        self.timers["radio"] += time.perf_counter() - started
        self.queue.schedule(now + cfg.sample_interval_s, simkernel.SAMPLE_SNR, self._on_sample_snr)

    def _serving_snr(self, vehicle: Vehicle) -> float:
        pos = vehicle.position()
        levels = self._rssi_levels(pos)
        attachment = self._attachments.get(vehicle.id)
        if attachment is None:
            attachment = radio.initial_attachment(vehicle.id, levels)
            self._attachments[vehicle.id] = attachment
        return levels[attachment.serving_id] - self.scenario.radio.noise_floor_dbm

    # --------------------------------------------------------------- sensing

    def _choose_next_tx(self, vid: int, now: float) -> float:
        state = self._tx_states[vid]
        vehicle = self.vehicles[self._vehicle_index(vid)]
        toward = vehicle.approached_node
        toward_pos = self._node_pos[toward] if toward is not None else None
        return sensing.next_tx_time(
            state.schedule, self.snr_map, vehicle.position(), toward_pos, vehicle.v, now
        )

    def _vehicle_index(self, vid: int) -> int:
        # vehicle ids are dense and sorted for spawned fleets; fall back to scan
        if vid < len(self.vehicles) and self.vehicles[vid].id == vid:
            return vid
        for i, veh in enumerate(self.vehicles):
            if veh.id == vid:
                return i
        raise KeyError(vid)

    def _on_tx_fire(self, vid: int) -> None:
        started = time.perf_counter()
        sc = self.scenario.sensing
        now = self.queue.now
        state = self._tx_states[vid]
        vehicle = self.vehicles[self._vehicle_index(vid)]
        snr = self._serving_snr(vehicle)
        if state.pending_start is None:
            state.pending_start = now
            state.pending_payload = sc.sensor_rate_bytes * (now - state.last_anchor)
            state.pending_snr0 = snr
            state.last_anchor = now
        try:
            record = sensing.transmit(
                state.pending_payload, snr, sc.channel,
                t_start=state.pending_start,
                lead_delay=now - state.pending_start,
                snr_at_start=state.pending_snr0,
            )
        except ChannelBlocked:
            self.queue.schedule(now + sc.channel.backoff_s, simkernel.TX_TRIGGER,
                                lambda v=vid: self._on_tx_fire(v))
            self.timers["sensing"] += time.perf_counter() - started
            return
        record = replace(record, vehicle_id=vid, scheme=state.schedule.scheme)
        completion = state.pending_start + record.duration_s
        self.queue.schedule(completion, simkernel.TX_TRIGGER,
                            lambda v=vid, r=record: self._on_tx_complete(v, r))
        self.timers["sensing"] += time.perf_counter() - started

    def _on_tx_complete(self, vid: int, record: sensing.TransmissionRecord) -> None:
        started = time.perf_counter()
        now = self.queue.now
        state = self._tx_states[vid]
        self.tx_records.append(record)
        state.pending_start = None
        state.schedule.last_tx = now
        next_tx = self._choose_next_tx(vid, now)
        state.schedule.next_tx = next_tx
        self.queue.schedule(next_tx, simkernel.TX_TRIGGER, lambda v=vid: self._on_tx_fire(v))
        self.timers["sensing"] += time.perf_counter() - started

    # ----------------------------------------------------------------- trace

    def _on_trace(self) -> None:
        started = time.perf_counter()
        now = self.queue.now
        for veh in self.vehicles:
            x, y = veh.position()
            way_id = veh.edges[veh.edge_idx].way_id if veh.edges else -1
            self.trajectory_rows.append((now, veh.id, x, y, veh.v, veh.a, way_id, veh.lane))
        self.timers["trace"] += time.perf_counter() - started
        self.queue.schedule(now + self.scenario.mobility.trace_interval,
                            simkernel.STAT_FLUSH, self._on_trace)

    # ----------------------------------------------------------------- output

    def write_outputs(self, out_dir: str) -> dict[str, str]:
        """Write trajectory/link/transmission CSVs (and the SNR map when built)."""
        import os

        os.makedirs(out_dir, exist_ok=True)
        paths = {}

        paths["trajectory"] = os.path.join(out_dir, "trajectory.csv")
        with open(paths["trajectory"], "w", encoding="utf-8") as fh:
            fh.write("t,vehicle_id,x,y,v,a,way_id,lane\n")
            for t, vid, x, y, v, a, way_id, lane in self.trajectory_rows:
                fh.write(f"{t:.3f},{vid},{x:.3f},{y:.3f},{v:.4f},{a:.4f},{way_id},{lane}\n")

        paths["links"] = os.path.join(out_dir, "links.csv")
        with open(paths["links"], "w", encoding="utf-8") as fh:
            fh.write("t,vehicle_id,station_id,distance,rssi,snr,handover_flag\n")
            for t, vid, sid, d, level, snr, flag in self.link_rows:
                fh.write(f"{t:.3f},{vid},{sid},{d:.3f},{level:.3f},{snr:.3f},{flag}\n")

        paths["transmissions"] = os.path.join(out_dir, "transmissions.csv")
        with open(paths["transmissions"], "w", encoding="utf-8") as fh:
            fh.write("t_start,vehicle_id,scheme,payload_bytes,duration_s,goodput_bps,snr_db\n")
            for rec in self.tx_records:
                fh.write(
                    f"{rec.t:.3f},{rec.vehicle_id},{rec.scheme},{rec.payload_bytes:.3f},"
                    f"{rec.duration_s:.6f},{rec.goodput_bps:.3f},{rec.snr_at_start:.3f}\n"
                )

        if self._update_map and self.sensor_ids:
            paths["snr_map"] = os.path.join(out_dir, "snrmap.csv")
            sensing.save_map(self.snr_map, paths["snr_map"], self.network.projection_origin)
        return paths

    def summary(self) -> dict:
        return {
            "events_dispatched": self.queue.dispatched,
            "event_counts": dict(sorted(self.queue.dispatch_counts.items())),
            "timers_s": {k: round(v, 4) for k, v in self.timers.items()},
            "vehicles": len(self.vehicles),
            "sensors": len(self.sensor_ids),
            "transmissions": len(self.tx_records),
            "trips_completed": sum(v.trips_completed for v in self.vehicles),
        }


def run_managed(sim: Simulation, duration: float) -> None:
    """Drive a simulation the way an embedding host would: one event at a time."""
    queue = sim.queue
    while True:
        t = queue.next_event_time()
        if t is None or t > duration:
            break
        queue.dispatch_next()
    queue.clock.now = max(queue.clock.now, duration)
