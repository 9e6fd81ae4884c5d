"""Minimal cellular layer: log-distance propagation, RSSI/SNR sampling, and
hysteresis-gated handover between omnidirectional base stations."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import NetworkValidationError

C_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class BaseStation:
    id: int
    pos: tuple[float, float]
    tx_power_dbm: float = 46.0
    carrier_hz: float = 1.8e9

    def __post_init__(self) -> None:
        if not math.isfinite(self.tx_power_dbm):
            raise NetworkValidationError(f"station {self.id}: non-finite tx power")
        if self.carrier_hz <= 0:
            raise NetworkValidationError(f"station {self.id}: carrier frequency must be positive")


@dataclass(frozen=True)
class RadioConfig:
    path_loss_exponent: float = 3.5
    ref_distance_m: float = 1.0
    noise_floor_dbm: float = -95.0
    shadowing_sigma_db: float = 0.0   # 0 disables log-normal shadowing
    hysteresis_db: float = 3.0
    ttt_s: float = 1.0                # time-to-trigger for handover
    sample_interval_s: float = 1.0


def reference_loss_db(carrier_hz: float, ref_distance_m: float = 1.0) -> float:
    """Free-space loss at the reference distance."""
    return 20.0 * math.log10(4.0 * math.pi * ref_distance_m * carrier_hz / C_LIGHT)


def path_loss(distance_m: float, carrier_hz: float, cfg: RadioConfig) -> float:
    """Log-distance path loss in dB; distances below the reference clamp to it."""
    d = max(distance_m, cfg.ref_distance_m)
    return reference_loss_db(carrier_hz, cfg.ref_distance_m) + 10.0 * cfg.path_loss_exponent * math.log10(
        d / cfg.ref_distance_m
    )


def rssi(pos: tuple[float, float], station: BaseStation, cfg: RadioConfig,
         shadow_db: float = 0.0) -> float:
    """Received power in dBm at ``pos``; strictly decreasing in distance."""
    d = math.hypot(pos[0] - station.pos[0], pos[1] - station.pos[1])
    return station.tx_power_dbm - path_loss(d, station.carrier_hz, cfg) + shadow_db


@dataclass(frozen=True)
class LinkSample:
    t: float
    vehicle_id: int
    station_id: int
    distance: float
    rssi: float
    snr: float


def sample_link(t: float, vehicle_id: int, pos: tuple[float, float],
                station: BaseStation, cfg: RadioConfig, shadow_db: float = 0.0) -> LinkSample:
    d = math.hypot(pos[0] - station.pos[0], pos[1] - station.pos[1])
    power = station.tx_power_dbm - path_loss(d, station.carrier_hz, cfg) + shadow_db
    return LinkSample(t, vehicle_id, station.id, d, power, power - cfg.noise_floor_dbm)


@dataclass(frozen=True)
class Attachment:
    """Serving-cell state for one vehicle, including the pending A3 candidate."""

    vehicle_id: int
    serving_id: int
    last_handover_t: float = -math.inf
    candidate_id: int | None = None
    candidate_since: float | None = None


def initial_attachment(vehicle_id: int, rssi_by_station: dict[int, float]) -> Attachment:
    """Attach to the strongest station; ties go to the smaller id."""
    serving = min(rssi_by_station, key=lambda sid: (-rssi_by_station[sid], sid))
    return Attachment(vehicle_id, serving)


def handover_check(attachment: Attachment, rssi_by_station: dict[int, float],
                   now: float, cfg: RadioConfig) -> Attachment:
    """A3-style rule: switch once a neighbor beats the serving cell by the
    hysteresis margin continuously for the time-to-trigger. Equal-power
    candidates resolve to the smaller station id."""
    serving_rssi = rssi_by_station[attachment.serving_id]
    best_id: int | None = None
    best_rssi = -math.inf
    for sid in sorted(rssi_by_station):
        if sid == attachment.serving_id:
            continue
        level = rssi_by_station[sid]
        if level > serving_rssi + cfg.hysteresis_db and level > best_rssi:
            best_id, best_rssi = sid, level
    if best_id is None:
        if attachment.candidate_id is None:
            return attachment
        return replace(attachment, candidate_id=None, candidate_since=None)
    since = attachment.candidate_since if attachment.candidate_id == best_id else now
    if now - since >= cfg.ttt_s - 1e-9:
        return Attachment(attachment.vehicle_id, best_id, last_handover_t=now)
    return replace(attachment, candidate_id=best_id, candidate_since=since)
