"""Command line interface.

Subcommands: convert, simulate, compare, export-svg, spacetime.
Set VIANET_LOG (DEBUG/INFO/WARNING/...) to control log verbosity.
Exit codes: 0 success, 1 validation problem, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import time
from dataclasses import replace

from . import experiment, roadnet
from .errors import ConfigError, NetworkValidationError, OsmParseError, VianetError
from .scenario import load_scenario
from .sim import Simulation

log = logging.getLogger("vianet.cli")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _setup_logging() -> None:
    level = os.environ.get("VIANET_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_id_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"cannot parse id list {text!r}: {exc}") from exc


def cmd_convert(args: argparse.Namespace) -> int:
    with open(args.osm, encoding="utf-8") as fh:
        xml_text = fh.read()
    source_hash = hashlib.sha256(xml_text.encode()).hexdigest()
    cache_path = args.osm + roadnet.CACHE_SUFFIX
    if os.path.exists(cache_path):
        try:
            roadnet.read_cache(cache_path, source_hash)
            print(f"{cache_path}: up to date")
            return EXIT_OK
        except VianetError:
            pass
    network = roadnet.parse_osm(xml_text)
    roadnet.write_cache(network, cache_path)
    print(f"{cache_path}: {len(network.nodes)} nodes, {len(network.ways)} ways, "
          f"{len(network.intersections)} intersections")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed).validated()
    if args.out is not None:
        scenario = replace(scenario, out_dir=args.out)
    network = experiment.load_network(scenario.map_path)
    started = time.perf_counter()
    sim = Simulation(network, scenario)
    sim.run()
    wall = time.perf_counter() - started
    paths = sim.write_outputs(scenario.out_dir)
    info = sim.summary()
    print(f"simulated {scenario.duration:.1f} s in {wall:.2f} s wall clock")
    print(f"events dispatched: {info['events_dispatched']} {info['event_counts']}")
    timers = info["timers_s"]
    print("subsystem time [s]: " + ", ".join(f"{k}={timers[k]:.3f}" for k in sorted(timers)))
    print(f"trips completed: {info['trips_completed']}, transmissions: {info['transmissions']}")
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    out_dir = args.out if args.out is not None else scenario.out_dir
    seeds = _parse_id_list(args.seeds)
    result = experiment.run_comparison(scenario, seeds, args.training_seed, out_dir=out_dir)
    print(result.table())
    print(f"trained map cells: {result.trained_cells}")
    print(f"outputs in {out_dir}")
    return EXIT_OK


def cmd_export_svg(args: argparse.Namespace) -> int:
    network = experiment.load_network(args.map)
    roadnet.export_svg(network, args.out)
    print(f"{args.out}: {len(network.ways)} ways drawn")
    return EXIT_OK


def cmd_spacetime(args: argparse.Namespace) -> int:
    vehicle_ids = _parse_id_list(args.vehicles) if args.vehicles else None
    rows = experiment.spacetime_rows(args.trace, vehicle_ids)
    out_path = args.out or "spacetime.csv"
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("t,vehicle_id,arc_m\n")
        for t, vid, arc in rows:
            fh.write(f"{t:.3f},{vid},{arc:.3f}\n")
    print(f"{out_path}: {len(rows)} rows")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vianet",
                                     description="vehicular mobility + cellular link simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="parse an OSM file and write its sibling cache")
    p.add_argument("osm")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("simulate", help="run one scenario and write trace CSVs")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="train a map, then compare transmission schemes")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seeds", required=True, help="comma-separated evaluation seeds")
    p.add_argument("--training-seed", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-svg", help="render a map (OSM or cache) to SVG")
    p.add_argument("map")
    p.add_argument("out")
    p.set_defaults(func=cmd_export_svg)

    p = sub.add_parser("spacetime", help="project a trajectory trace onto arc length")
    p.add_argument("trace")
    p.add_argument("--vehicles", default=None, help="comma-separated vehicle ids (default: all)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_spacetime)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, NetworkValidationError, OsmParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except VianetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # pragma: no cover - unexpected failure path
        log.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
