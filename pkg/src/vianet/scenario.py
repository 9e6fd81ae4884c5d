"""Scenario configuration: dataclasses plus a strict INI loader.

Unknown sections or keys are hard errors so experiment configs cannot
silently carry typos. The full key reference lives in the README; an
annotated example ships in scenarios/.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .mobility import IdmParams, MobilParams
from .radio import BaseStation, RadioConfig
from .sensing import SCHEMES, ChannelConfig


@dataclass(frozen=True)
class MobilityConfig:
    trace_interval: float = 1.0
    v_factor_min: float = 0.8
    v_factor_max: float = 1.2
    vehicle_length: float = 5.0
    horizon: float = 150.0
    b_emergency: float = 9.0
    mobil_period: float = 1.0          # seconds between lane-change evaluations
    signal_green: float = 30.0
    signal_yellow: float = 5.0
    signal_red: float = 25.0
    claim_distance: float = 30.0       # first-come-first-served intersection window
    intersection_priority: bool = True
    idm: IdmParams = field(default_factory=IdmParams)
    mobil: MobilParams = field(default_factory=MobilParams)


@dataclass(frozen=True)
class SensingConfig:
    cell_size: float = 25.0
    tx_interval: float = 30.0
    scheme: str = "periodic"
    sensor_rate_bytes: float = 20000.0  # sensed bytes per second, accumulated between transmissions
    map_file: str | None = None         # trained map to evaluate against; None = build live
    channel: ChannelConfig = field(default_factory=ChannelConfig)


@dataclass(frozen=True)
class Scenario:
    map_path: str = ""
    duration: float = 300.0
    dt: float = 0.1
    vehicle_count: int = 100
    sensor_count: int = 0
    stations: tuple[BaseStation, ...] = ()
    radio: RadioConfig = field(default_factory=RadioConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    seed: int = 1
    out_dir: str = "out"

    def validated(self) -> "Scenario":
        if self.duration <= 0:
            raise ConfigError("scenario.duration: must be positive")
        if self.dt <= 0:
            raise ConfigError("scenario.dt: must be positive")
        if self.vehicle_count < 0:
            raise ConfigError("scenario.vehicles: must be non-negative")
        if self.sensor_count < 0 or self.sensor_count > self.vehicle_count:
            raise ConfigError("scenario.sensors: must lie in [0, vehicles]")
        if self.seed < 0:
            raise ConfigError("scenario.seed: must be non-negative")
        if self.sensing.scheme not in SCHEMES:
            raise ConfigError(f"sensing.scheme: unknown scheme {self.sensing.scheme!r}")
        if self.mobility.v_factor_min <= 0 or self.mobility.v_factor_max < self.mobility.v_factor_min:
            raise ConfigError("mobility.v_factor_min/max: need 0 < min <= max")
        ids = [s.id for s in self.stations]
        if len(ids) != len(set(ids)):
            raise ConfigError("station ids must be unique")
        return self


_FLOAT, _INT, _STR, _BOOL = "float", "int", "str", "bool"

_SCHEMA: dict[str, dict[str, tuple[str, str]]] = {
    "scenario": {
        "map": (_STR, "map_path"),
        "duration": (_FLOAT, "duration"),
        "dt": (_FLOAT, "dt"),
        "vehicles": (_INT, "vehicle_count"),
        "sensors": (_INT, "sensor_count"),
        "seed": (_INT, "seed"),
        "out": (_STR, "out_dir"),
    },
    "mobility": {
        "trace_interval": (_FLOAT, "trace_interval"),
        "v_factor_min": (_FLOAT, "v_factor_min"),
        "v_factor_max": (_FLOAT, "v_factor_max"),
        "vehicle_length": (_FLOAT, "vehicle_length"),
        "horizon": (_FLOAT, "horizon"),
        "b_emergency": (_FLOAT, "b_emergency"),
        "mobil_period": (_FLOAT, "mobil_period"),
        "signal_green": (_FLOAT, "signal_green"),
        "signal_yellow": (_FLOAT, "signal_yellow"),
        "signal_red": (_FLOAT, "signal_red"),
        "claim_distance": (_FLOAT, "claim_distance"),
        "intersection_priority": (_BOOL, "intersection_priority"),
    },
    "idm": {
        "a_max": (_FLOAT, "a_max"),
        "b_comfort": (_FLOAT, "b_comfort"),
        "time_gap": (_FLOAT, "time_gap"),
        "jam_distance": (_FLOAT, "jam_distance"),
        "exponent": (_FLOAT, "exponent"),
    },
    "mobil": {
        "politeness": (_FLOAT, "politeness"),
        "threshold": (_FLOAT, "threshold"),
        "b_safe": (_FLOAT, "b_safe"),
    },
    "radio": {
        "path_loss_exponent": (_FLOAT, "path_loss_exponent"),
        "ref_distance": (_FLOAT, "ref_distance_m"),
        "noise_floor": (_FLOAT, "noise_floor_dbm"),
        "shadowing_sigma": (_FLOAT, "shadowing_sigma_db"),
        "hysteresis": (_FLOAT, "hysteresis_db"),
        "ttt": (_FLOAT, "ttt_s"),
        "sample_interval": (_FLOAT, "sample_interval_s"),
    },
    "sensing": {
        "cell_size": (_FLOAT, "cell_size"),
        "interval": (_FLOAT, "tx_interval"),
        "scheme": (_STR, "scheme"),
        "sensor_rate": (_FLOAT, "sensor_rate_bytes"),
        "map_file": (_STR, "map_file"),
    },
    "channel": {
        "bandwidth": (_FLOAT, "bandwidth_hz"),
        "efficiency": (_FLOAT, "efficiency"),
        "max_rate": (_FLOAT, "max_rate_bps"),
        "min_snr": (_FLOAT, "min_snr_db"),
        "backoff": (_FLOAT, "backoff_s"),
    },
    "station": {  # any [station:<id>] section
        "x": (_FLOAT, "x"),
        "y": (_FLOAT, "y"),
        "power": (_FLOAT, "tx_power_dbm"),
        "carrier": (_FLOAT, "carrier_hz"),
    },
}


def _convert(section: str, key: str, kind: str, raw: str):
    try:
        if kind == _FLOAT:
            return float(raw)
        if kind == _INT:
            return int(raw)
        if kind == _BOOL:
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {kind}") from exc


def _section_values(parser: configparser.ConfigParser, section: str,
                    schema_key: str) -> dict[str, object]:
    values: dict[str, object] = {}
    schema = _SCHEMA[schema_key]
    for key, raw in parser.items(section):
        if key not in schema:
            raise ConfigError(f"{section}.{key}: unknown key")
        kind, attr = schema[key]
        values[attr] = _convert(section, key, kind, raw)
    return values


def load_scenario(path: str) -> Scenario:
    """Parse and validate a scenario file; raises ConfigError naming the field."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"scenario file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"scenario file {path}: {exc}") from exc

    known_plain = {"scenario", "mobility", "idm", "mobil", "radio", "sensing", "channel"}
    stations: list[BaseStation] = []
    scenario_kw: dict[str, object] = {}
    mobility_kw: dict[str, object] = {}
    idm_kw: dict[str, object] = {}
    mobil_kw: dict[str, object] = {}
    radio_kw: dict[str, object] = {}
    sensing_kw: dict[str, object] = {}
    channel_kw: dict[str, object] = {}

    for section in parser.sections():
        if section.startswith("station:"):
            name = section.split(":", 1)[1]
            try:
                station_id = int(name)
            except ValueError as exc:
                raise ConfigError(f"{section}: station id must be an integer") from exc
            values = _section_values(parser, section, "station")
            if "x" not in values or "y" not in values:
                raise ConfigError(f"{section}: x and y are required")
            stations.append(BaseStation(
                id=station_id,
                pos=(values["x"], values["y"]),
                tx_power_dbm=values.get("tx_power_dbm", 46.0),
                carrier_hz=values.get("carrier_hz", 1.8e9),
            ))
        elif section in known_plain:
            values = _section_values(parser, section, section)
            target = {
                "scenario": scenario_kw, "mobility": mobility_kw, "idm": idm_kw,
                "mobil": mobil_kw, "radio": radio_kw, "sensing": sensing_kw,
                "channel": channel_kw,
            }[section]
            target.update(values)
        else:
            raise ConfigError(f"[{section}]: unknown section")

    try:
        mobility = MobilityConfig(
            idm=IdmParams(**idm_kw), mobil=MobilParams(**mobil_kw), **mobility_kw
        )
        sensing = SensingConfig(channel=ChannelConfig(**channel_kw), **sensing_kw)
        scenario = Scenario(
            stations=tuple(sorted(stations, key=lambda s: s.id)),
            radio=RadioConfig(**radio_kw),
            sensing=sensing,
            mobility=mobility,
            **scenario_kw,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"scenario file {path}: {exc}") from exc
    return scenario.validated()
