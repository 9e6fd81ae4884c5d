#!/usr/bin/env python3
"""Regenerate the bundled map fixtures (deterministic, no RNG).

data/reference.osm  - 34x34 urban grid, mixed speed limits, signals, buildings
data/corridor.osm   - two long parallel roads with sparse connectors, used by
                      the transmission-scheme comparison scenario

Node coordinates are chosen so the equirectangular projection of each map is
the metric layout written below (bounds center = projected origin).
"""

from __future__ import annotations

import math
import os

R_PER_DEG = 6_371_000.0 * math.pi / 180.0  # meters per degree latitude

BASE_LAT = 50.0
BASE_LON = 8.0


def meters_to_latlon(x: float, y: float, center_lat: float) -> tuple[float, float]:
    lat = center_lat + y / R_PER_DEG
    lon = BASE_LON + x / (R_PER_DEG * math.cos(math.radians(center_lat)))
    return lat, lon


class OsmWriter:
    def __init__(self) -> None:
        self.nodes: list[str] = []
        self.ways: list[str] = []
        self.bounds = (0.0, 0.0, 0.0, 0.0)

    def set_bounds(self, minlat, minlon, maxlat, maxlon) -> None:
        self.bounds = (minlat, minlon, maxlat, maxlon)

    def add_node(self, nid: int, lat: float, lon: float, tags: dict | None = None) -> None:
        if tags:
            tag_xml = "".join(f'<tag k="{k}" v="{v}"/>' for k, v in tags.items())
            self.nodes.append(f'<node id="{nid}" lat="{lat:.8f}" lon="{lon:.8f}">{tag_xml}</node>')
        else:
            self.nodes.append(f'<node id="{nid}" lat="{lat:.8f}" lon="{lon:.8f}"/>')

    def add_way(self, wid: int, refs: list[int], tags: dict) -> None:
        nd_xml = "".join(f'<nd ref="{r}"/>' for r in refs)
        tag_xml = "".join(f'<tag k="{k}" v="{v}"/>' for k, v in tags.items())
        self.ways.append(f'<way id="{wid}">{nd_xml}{tag_xml}</way>')

    def write(self, path: str) -> None:
        minlat, minlon, maxlat, maxlon = self.bounds
        lines = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            '<osm version="0.6" generator="make_maps">',
            f'<bounds minlat="{minlat:.8f}" minlon="{minlon:.8f}" '
            f'maxlat="{maxlat:.8f}" maxlon="{maxlon:.8f}"/>',
            *self.nodes,
            *self.ways,
            "</osm>",
        ]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def make_reference(path: str) -> None:
    n = 34
    spacing = 80.0
    half = (n - 1) * spacing / 2.0
    center_lat = BASE_LAT

    def node_id(i: int, j: int) -> int:
        return 1000 + j * n + i

    writer = OsmWriter()
    extent = half + spacing  # bounds slightly beyond the outermost nodes
    minlat, minlon = meters_to_latlon(-extent, -extent, center_lat)
    maxlat, maxlon = meters_to_latlon(extent, extent, center_lat)
    writer.set_bounds(minlat, minlon, maxlat, maxlon)

    speeds = (30, 50, 50, 70)
    for j in range(n):
        for i in range(n):
            x = i * spacing - half
            y = j * spacing - half
            lat, lon = meters_to_latlon(x, y, center_lat)
            tags = None
            interior = 0 < i < n - 1 and 0 < j < n - 1
            if interior and (3 * i + 5 * j) % 17 == 0:
                tags = {"highway": "traffic_signals"}
            writer.add_node(node_id(i, j), lat, lon, tags)

    thirds = ((0, 11), (11, 22), (22, n - 1))
    wid = 5000
    for j in range(n):
        for k, (lo, hi) in enumerate(thirds):
            refs = [node_id(i, j) for i in range(lo, hi + 1)]
            tags = {"highway": "residential", "maxspeed": str(speeds[(j + k) % 4])}
            if j % 8 == 3:
                tags["highway"] = "secondary"
                tags["lanes"] = "4"
            if j == 10:
                tags["oneway"] = "yes"
            writer.add_way(wid, refs, tags)
            wid += 1
    for i in range(n):
        for k, (lo, hi) in enumerate(thirds):
            refs = [node_id(i, j) for j in range(lo, hi + 1)]
            tags = {"highway": "residential", "maxspeed": str(speeds[(i + 2 * k) % 4])}
            if i == 17:
                tags["highway"] = "secondary"
                tags["lanes"] = "4"
            writer.add_way(wid, refs, tags)
            wid += 1

    bid = 200000
    wid = 30000
    for bj in range(n - 1):
        for bi in range(n - 1):
            if (5 * bi + 3 * bj) % 41 != 0:
                continue
            cx = bi * spacing - half + spacing / 2.0
            cy = bj * spacing - half + spacing / 2.0
            corners = [(-15, -15), (15, -15), (15, 15), (-15, 15)]
            refs = []
            for dx, dy in corners:
                lat, lon = meters_to_latlon(cx + dx, cy + dy, center_lat)
                writer.add_node(bid, lat, lon)
                refs.append(bid)
                bid += 1
            refs.append(refs[0])
            writer.add_way(wid, refs, {"building": "yes"})
            wid += 1

    poi = 300000
    for k in range(3):
        lat, lon = meters_to_latlon(-half + 40 + 900 * k, -half + 40, center_lat)
        writer.add_node(poi + k, lat, lon, {"amenity": "fuel"})
    writer.write(path)


def make_corridor(path: str) -> None:
    center_lat = BASE_LAT
    writer = OsmWriter()
    minlat, minlon = meters_to_latlon(-2100.0, -300.0, center_lat)
    maxlat, maxlon = meters_to_latlon(2100.0, 300.0, center_lat)
    writer.set_bounds(minlat, minlon, maxlat, maxlon)

    step = 100.0
    count = 41  # x = -2000 .. 2000
    for i in range(count):
        x = -2000.0 + i * step
        lat, lon = meters_to_latlon(x, -200.0, center_lat)
        writer.add_node(100 + i, lat, lon)
        lat, lon = meters_to_latlon(x, 200.0, center_lat)
        writer.add_node(200 + i, lat, lon)

    mid = 1000
    connector_cols = (0, 10, 20, 30, 40)
    for k, i in enumerate(connector_cols):
        x = -2000.0 + i * step
        for m, y in enumerate((-100.0, 0.0, 100.0)):
            lat, lon = meters_to_latlon(x, y, center_lat)
            writer.add_node(mid + 10 * k + m, lat, lon)

    writer.add_way(400, [100 + i for i in range(0, 21)], {"highway": "primary", "maxspeed": "50"})
    writer.add_way(401, [100 + i for i in range(20, count)], {"highway": "primary", "maxspeed": "50"})
    writer.add_way(402, [200 + i for i in range(0, 21)], {"highway": "primary", "maxspeed": "50"})
    writer.add_way(403, [200 + i for i in range(20, count)], {"highway": "primary", "maxspeed": "50"})
    for k, i in enumerate(connector_cols):
        refs = [100 + i, mid + 10 * k, mid + 10 * k + 1, mid + 10 * k + 2, 200 + i]
        writer.add_way(410 + k, refs, {"highway": "residential", "maxspeed": "50"})
    writer.write(path)


def main() -> None:
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    data_dir = os.path.join(root, "data")
    os.makedirs(data_dir, exist_ok=True)
    make_reference(os.path.join(data_dir, "reference.osm"))
    make_corridor(os.path.join(data_dir, "corridor.osm"))
    print(f"wrote {data_dir}/reference.osm and {data_dir}/corridor.osm")


if __name__ == "__main__":
    main()
