"""Crowdsensing application: vehicles accumulate a grid map of running-mean
SNR from drive measurements, then schedule uplink transmissions either on a
fixed interval or at the best predicted channel quality inside the window
[t + interval/2, t + 3*interval/2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ChannelBlocked, ConfigError

Cell = tuple[int, int]


@dataclass
class SnrMap:
    """Sparse grid of per-cell (running mean SNR, sample count)."""

    cell_size: float = 25.0
    cells: dict[Cell, list] = field(default_factory=dict)  # cell -> [mean_db, count]

    def mean(self, cell: Cell) -> float | None:
        entry = self.cells.get(cell)
        return entry[0] if entry else None

    def __len__(self) -> int:
        return len(self.cells)


def cell_of(pos: tuple[float, float], cell_size: float) -> Cell:
    """Componentwise floor division; mathematical floor, so negatives round down."""
    return math.floor(pos[0] / cell_size), math.floor(pos[1] / cell_size)


def update_map(snr_map: SnrMap, pos: tuple[float, float], snr_db: float) -> SnrMap:
    """Fold one measurement into its cell's running mean."""
    cell = cell_of(pos, snr_map.cell_size)
    entry = snr_map.cells.get(cell)
    if entry is None:
        snr_map.cells[cell] = [snr_db, 1]
    else:
        mean, count = entry
        entry[0] = mean + (snr_db - mean) / (count + 1)
        entry[1] = count + 1
    return snr_map


def predict_position(pos: tuple[float, float], toward: tuple[float, float],
                     v: float, tau: float) -> tuple[float, float]:
    """Straight-line constant-speed extrapolation toward the approached node.

    Deliberately ignores the path beyond that node, so long horizons may
    overshoot it. A degenerate direction (toward == pos) predicts no motion.
    """
    dx = toward[0] - pos[0]
    dy = toward[1] - pos[1]
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        return pos
    scale = tau * v / norm
    return pos[0] + dx * scale, pos[1] + dy * scale


def predicted_snr(snr_map: SnrMap, pos: tuple[float, float],
                  toward: tuple[float, float] | None, v: float,
                  t_query: float, now: float) -> float | None:
    """Map estimate at the position predicted for ``t_query``; None when the
    predicted cell was never measured."""
    if toward is None:
        toward = pos
    future = predict_position(pos, toward, v, t_query - now)
    return snr_map.mean(cell_of(future, snr_map.cell_size))


PERIODIC = "periodic"
PREDICTIVE = "predictive"
SCHEMES = (PERIODIC, PREDICTIVE)


@dataclass
class TransmissionSchedule:
    scheme: str = PERIODIC
    interval: float = 30.0
    last_tx: float = 0.0
    next_tx: float = 0.0

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme: unknown transmission scheme {self.scheme!r}")
        if self.interval <= 0:
            raise ConfigError("interval: transmission interval must be positive")


def next_tx_time(schedule: TransmissionSchedule, snr_map: SnrMap,
                 pos: tuple[float, float], toward: tuple[float, float] | None,
                 v: float, now: float) -> float:
    """Choose the next transmission time anchored at ``now``.

    Periodic: now + interval. Predictive: the whole-second candidate inside
    [now + interval/2, now + 3*interval/2] with the best predicted SNR;
    unmeasured cells are skipped, ties resolve to the earliest candidate, and
    when every candidate is unknown the periodic time is used.
    """
    if schedule.scheme == PERIODIC:
        return now + schedule.interval
    lo = now + schedule.interval / 2.0
    hi = now + 1.5 * schedule.interval
    best_t: float | None = None
    best_snr = -math.inf
    t_candidate = math.ceil(lo)
    while t_candidate <= hi:
        estimate = predicted_snr(snr_map, pos, toward, v, float(t_candidate), now)
        if estimate is not None and estimate > best_snr:
            best_t, best_snr = float(t_candidate), estimate
        t_candidate += 1
    if best_t is None:
        return now + schedule.interval
    return best_t


@dataclass(frozen=True)
class ChannelConfig:
    """Abstract rate model standing in for the full cellular stack."""

    bandwidth_hz: float = 10e6
    efficiency: float = 0.6
    max_rate_bps: float = 50e6
    min_snr_db: float = -5.0
    backoff_s: float = 1.0


def link_rate(snr_db: float, cfg: ChannelConfig) -> float:
    """Capped efficiency-scaled Shannon rate in bit/s."""
    linear = 10.0 ** (snr_db / 10.0)
    return min(cfg.max_rate_bps, cfg.efficiency * cfg.bandwidth_hz * math.log2(1.0 + linear))


@dataclass(frozen=True)
class TransmissionRecord:
    t: float
    payload_bytes: float
    duration_s: float
    goodput_bps: float
    snr_at_start: float
    vehicle_id: int = -1
    scheme: str = PERIODIC


def transmit(payload_bytes: float, snr_db: float, cfg: ChannelConfig,
             t_start: float = 0.0, lead_delay: float = 0.0,
             snr_at_start: float | None = None) -> TransmissionRecord:
    """Complete one transmission at the given SNR.

    ``lead_delay`` carries backoff time already spent waiting for a usable
    channel; it counts into the duration (and therefore into goodput).
    Raises :class:`ChannelBlocked` below the minimum decodable SNR.
    """
    if payload_bytes <= 0:
        raise ValueError("payload must be positive")
    if snr_db <= cfg.min_snr_db:
        raise ChannelBlocked(f"snr {snr_db:.2f} dB at or below minimum {cfg.min_snr_db:.2f} dB")
    duration = lead_delay + payload_bytes * 8.0 / link_rate(snr_db, cfg)
    return TransmissionRecord(
        t=t_start,
        payload_bytes=payload_bytes,
        duration_s=duration,
        goodput_bps=payload_bytes * 8.0 / duration,
        snr_at_start=snr_db if snr_at_start is None else snr_at_start,
    )


def save_map(snr_map: SnrMap, path: str, origin: tuple[float, float] = (0.0, 0.0)) -> None:
    """Write the trained map: two header lines, then one CSV row per cell."""
    lines = [
        f"cell_size,{snr_map.cell_size!r}",
        f"origin,{origin[0]!r},{origin[1]!r}",
        "i,j,mean_snr,count",
    ]
    for (i, j), (mean, count) in sorted(snr_map.cells.items()):
        lines.append(f"{i},{j},{mean!r},{count}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_map(path: str) -> tuple[SnrMap, tuple[float, float]]:
    with open(path, encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if len(lines) < 3 or not lines[0].startswith("cell_size,") or not lines[1].startswith("origin,"):
        raise ConfigError(f"map_file: {path} is not a valid SNR map file")
    cell_size = float(lines[0].split(",", 1)[1])
    _, lat, lon = lines[1].split(",")
    snr_map = SnrMap(cell_size=cell_size)
    for line in lines[3:]:
        i, j, mean, count = line.split(",")
        snr_map.cells[(int(i), int(j))] = [float(mean), int(count)]
    return snr_map, (float(lat), float(lon))
