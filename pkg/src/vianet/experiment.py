"""Experiment orchestration: network loading, single runs, and the paired
periodic-vs-predictive comparison built on a separately trained SNR map."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from . import roadnet, sensing
from .errors import ConfigError, StaleCacheError
from .roadnet import CACHE_SUFFIX, RoadNetwork
from .scenario import Scenario
from .sensing import PERIODIC, PREDICTIVE, SnrMap
from .sim import Simulation

log = logging.getLogger("vianet.experiment")


def load_network(map_path: str) -> RoadNetwork:
    """Load a network from an OSM file (using a fresh sibling cache when
    present) or directly from a cache file."""
    if map_path.endswith(CACHE_SUFFIX):
        return roadnet.read_cache(map_path)
    with open(map_path, encoding="utf-8") as fh:
        xml_text = fh.read()
    cache_path = map_path + CACHE_SUFFIX
    if os.path.exists(cache_path):
        import hashlib

        source_hash = hashlib.sha256(xml_text.encode()).hexdigest()
        try:
            return roadnet.read_cache(cache_path, source_hash)
        except StaleCacheError:
            log.info("cache %s is stale, re-parsing %s", cache_path, map_path)
    return roadnet.parse_osm(xml_text)


@dataclass(frozen=True)
class SchemeStats:
    scheme: str
    transmissions: int
    mean_duration_s: float
    median_duration_s: float
    p95_duration_s: float
    mean_goodput_bps: float
    median_goodput_bps: float
    p95_goodput_bps: float


def _aggregate(scheme: str, durations: list[float], goodputs: list[float]) -> SchemeStats:
    if not durations:
        nan = float("nan")
        return SchemeStats(scheme, 0, nan, nan, nan, nan, nan, nan)
    d = np.asarray(durations)
    g = np.asarray(goodputs)
    return SchemeStats(
        scheme, len(durations),
        float(d.mean()), float(np.median(d)), float(np.percentile(d, 95)),
        float(g.mean()), float(np.median(g)), float(np.percentile(g, 95)),
    )


def train_snr_map(network: RoadNetwork, scenario: Scenario, training_seed: int) -> SnrMap:
    """Build the network-quality map from a dedicated run with its own seed."""
    sim = Simulation(network, scenario, seed=training_seed, scheme=PERIODIC,
                     snr_map=None, update_map=True)
    sim.run()
    return sim.snr_map


@dataclass
class ComparisonResult:
    per_scheme: dict[str, SchemeStats]
    duration_reduction: float      # 1 - mean(predictive) / mean(periodic)
    training_seed: int
    seeds: tuple[int, ...]
    trained_cells: int

    def table(self) -> str:
        header = (
            f"{'scheme':<12}{'n':>6}{'dur mean':>12}{'dur med':>12}{'dur p95':>12}"
            f"{'gput mean':>14}{'gput med':>14}{'gput p95':>14}"
        )
        lines = [header, "-" * len(header)]
        for scheme in (PERIODIC, PREDICTIVE):
            s = self.per_scheme[scheme]
            lines.append(
                f"{s.scheme:<12}{s.transmissions:>6}"
                f"{s.mean_duration_s:>12.4f}{s.median_duration_s:>12.4f}{s.p95_duration_s:>12.4f}"
                f"{s.mean_goodput_bps:>14.0f}{s.median_goodput_bps:>14.0f}{s.p95_goodput_bps:>14.0f}"
            )
        lines.append(f"mean transmission duration reduction: {self.duration_reduction * 100.0:.1f}%")
        return "\n".join(lines)


def run_comparison(
    scenario: Scenario,
    seeds: list[int],
    training_seed: int,
    network: RoadNetwork | None = None,
    out_dir: str | None = None,
) -> ComparisonResult:
    """Train a map on ``training_seed``, then run paired evaluation runs per
    seed and scheme against the frozen map."""
    if not seeds:
        raise ConfigError("seeds: at least one evaluation seed is required")
    if training_seed in set(seeds):
        raise ConfigError("training_seed: must be disjoint from the evaluation seeds")
    if network is None:
        network = load_network(scenario.map_path)

    trained = train_snr_map(network, scenario, training_seed)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        sensing.save_map(trained, os.path.join(out_dir, "snrmap.csv"),
                         network.projection_origin)

    durations: dict[str, list[float]] = {PERIODIC: [], PREDICTIVE: []}
    goodputs: dict[str, list[float]] = {PERIODIC: [], PREDICTIVE: []}
    for seed in seeds:
        for scheme in (PERIODIC, PREDICTIVE):
            sim = Simulation(network, scenario, seed=seed, scheme=scheme,
                             snr_map=trained, update_map=False)
            sim.run()
            durations[scheme].extend(rec.duration_s for rec in sim.tx_records)
            goodputs[scheme].extend(rec.goodput_bps for rec in sim.tx_records)

    per_scheme = {
        scheme: _aggregate(scheme, durations[scheme], goodputs[scheme])
        for scheme in (PERIODIC, PREDICTIVE)
    }
    mean_periodic = per_scheme[PERIODIC].mean_duration_s
    mean_predictive = per_scheme[PREDICTIVE].mean_duration_s
    reduction = (
        1.0 - mean_predictive / mean_periodic
        if mean_periodic and not math.isnan(mean_periodic) else float("nan")
    )
    result = ComparisonResult(per_scheme, reduction, training_seed, tuple(seeds),
                              trained_cells=len(trained))
    if out_dir:
        _write_comparison_csv(os.path.join(out_dir, "comparison.csv"), result)
    return result


def _write_comparison_csv(path: str, result: ComparisonResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "scheme", "transmissions",
            "mean_duration_s", "median_duration_s", "p95_duration_s",
            "mean_goodput_bps", "median_goodput_bps", "p95_goodput_bps",
        ])
        for scheme in (PERIODIC, PREDICTIVE):
            s = result.per_scheme[scheme]
            writer.writerow([
                s.scheme, s.transmissions,
                f"{s.mean_duration_s:.6f}", f"{s.median_duration_s:.6f}",
                f"{s.p95_duration_s:.6f}",
                f"{s.mean_goodput_bps:.3f}", f"{s.median_goodput_bps:.3f}",
                f"{s.p95_goodput_bps:.3f}",
            ])
        writer.writerow(["duration_reduction", f"{result.duration_reduction:.6f}"])


def spacetime_rows(trace_path: str, vehicle_ids: list[int] | None = None
                   ) -> list[tuple[float, int, float]]:
    """Project a trajectory trace onto cumulative arc length per vehicle.

    Returns (t, vehicle_id, arc_m) rows ordered by vehicle then time; the arc
    length is the distance actually driven since the vehicle's first sample.
    """
    wanted = set(vehicle_ids) if vehicle_ids else None
    tracks: dict[int, list[tuple[float, float, float]]] = {}
    with open(trace_path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            vid = int(row["vehicle_id"])
            if wanted is not None and vid not in wanted:
                continue
            tracks.setdefault(vid, []).append((float(row["t"]), float(row["x"]), float(row["y"])))
    rows: list[tuple[float, int, float]] = []
    for vid in sorted(tracks):
        samples = sorted(tracks[vid])
        arc = 0.0
        prev_x, prev_y = samples[0][1], samples[0][2]
        for t, x, y in samples:
            arc += math.hypot(x - prev_x, y - prev_y)
            prev_x, prev_y = x, y
            rows.append((t, vid, arc))
    return rows
