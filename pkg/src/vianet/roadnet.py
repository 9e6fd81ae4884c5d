"""Road network model: OSM XML import, local projection, routing, caching, SVG export.

Networks are immutable after construction and safe to share read-only.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from .errors import NetworkValidationError, OsmParseError, RoutingError, StaleCacheError

log = logging.getLogger("vianet.roadnet")

EARTH_RADIUS_M = 6_371_000.0
_DEG = math.pi / 180.0

DEFAULT_SPEED_KMH = 50.0
DEFAULT_SPEED_MS = DEFAULT_SPEED_KMH / 3.6

CACHE_FORMAT = "roadnet-cache"
CACHE_VERSION = 1
CACHE_SUFFIX = ".cache.json"

NODE_PLAIN = "plain"
NODE_SIGNAL = "signal"
NODE_POI = "poi"
_NODE_KINDS = (NODE_PLAIN, NODE_SIGNAL, NODE_POI)


def project(lat: float, lon: float, origin: tuple[float, float]) -> tuple[float, float]:
    """Equirectangular projection to local meters; the origin maps to (0, 0)."""
    lat0, lon0 = origin
    x = EARTH_RADIUS_M * (lon - lon0) * _DEG * math.cos(lat0 * _DEG)
    y = EARTH_RADIUS_M * (lat - lat0) * _DEG
    return x, y


def unproject(x: float, y: float, origin: tuple[float, float]) -> tuple[float, float]:
    """Inverse of :func:`project`; used when building synthetic networks from metric coordinates."""
    lat0, lon0 = origin
    lat = lat0 + y / (EARTH_RADIUS_M * _DEG)
    lon = lon0 + x / (EARTH_RADIUS_M * _DEG * math.cos(lat0 * _DEG))
    return lat, lon


@dataclass(frozen=True)
class GeoNode:
    """Point primitive: a street vertex, traffic signal, or tagged place."""

    id: int
    lat: float
    lon: float
    pos: tuple[float, float]
    kind: str = NODE_PLAIN

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise NetworkValidationError(f"node {self.id}: latitude {self.lat} out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise NetworkValidationError(f"node {self.id}: longitude {self.lon} out of range")
        if self.kind not in _NODE_KINDS:
            raise NetworkValidationError(f"node {self.id}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Way:
    """Ordered node list describing one road section or a building outline."""

    id: int
    node_ids: tuple[int, ...]
    lanes_forward: int = 1
    lanes_backward: int = 1
    speed_limit: float = DEFAULT_SPEED_MS
    is_road: bool = False
    is_building: bool = False

    def __post_init__(self) -> None:
        if len(self.node_ids) < 2:
            raise NetworkValidationError(f"way {self.id}: needs at least two nodes")
        if self.lanes_forward < 1 or self.lanes_backward < 0:
            raise NetworkValidationError(f"way {self.id}: invalid lane counts")
        if self.speed_limit <= 0:
            raise NetworkValidationError(f"way {self.id}: speed limit must be positive")
        if self.is_road and self.is_building:
            raise NetworkValidationError(f"way {self.id}: cannot be both road and building")

    @property
    def oneway(self) -> bool:
        return self.lanes_backward == 0


@dataclass(frozen=True)
class RouteEdge:
    """One directed road segment as seen by a vehicle driving it."""

    a: int
    b: int
    ax: float
    ay: float
    bx: float
    by: float
    length: float
    way_id: int
    seg_index: int
    lanes: int
    speed_limit: float


class RoadNetwork:
    """Nodes, ways, derived intersections, and the routable directed graph."""

    def __init__(
        self,
        nodes: dict[int, GeoNode],
        ways: dict[int, Way],
        projection_origin: tuple[float, float],
        source_hash: str = "",
        relations: dict[int, tuple] | None = None,
    ) -> None:
        self.nodes = dict(nodes)
        self.ways = dict(ways)
        self.projection_origin = (float(projection_origin[0]), float(projection_origin[1]))
        self.source_hash = source_hash
        self.relations = dict(relations or {})
        self._derive()

    def _derive(self) -> None:
        for way in self.ways.values():
            for ref in way.node_ids:
                if ref not in self.nodes:
                    raise NetworkValidationError(f"way {way.id}: dangling node reference {ref}")

        ways_per_node: dict[int, int] = {}
        for way in self.ways.values():
            if not way.is_road:
                continue
            for ref in set(way.node_ids):
                ways_per_node[ref] = ways_per_node.get(ref, 0) + 1
        self.intersections: frozenset[int] = frozenset(
            n for n, count in ways_per_node.items() if count >= 2
        )

        adjacency: dict[int, list[tuple[int, float]]] = {}
        edge_map: dict[tuple[int, int], RouteEdge] = {}
        for way in self.ways.values():
            if not way.is_road:
                continue
            refs = way.node_ids
            for i in range(len(refs) - 1):
                a, b = refs[i], refs[i + 1]
                pa, pb = self.nodes[a].pos, self.nodes[b].pos
                length = math.hypot(pb[0] - pa[0], pb[1] - pa[1])
                if length <= 0.0:
                    raise NetworkValidationError(
                        f"way {way.id}: zero-length segment between nodes {a} and {b}"
                    )
                edge_map[(a, b)] = RouteEdge(
                    a, b, pa[0], pa[1], pb[0], pb[1], length, way.id, i,
                    way.lanes_forward, way.speed_limit,
                )
                adjacency.setdefault(a, []).append((b, length))
                adjacency.setdefault(b, [])
                if not way.oneway:
                    edge_map[(b, a)] = RouteEdge(
                        b, a, pb[0], pb[1], pa[0], pa[1], length, way.id, i,
                        way.lanes_backward, way.speed_limit,
                    )
                    adjacency[b].append((a, length))

        self.adjacency: dict[int, tuple[tuple[int, float], ...]] = {
            n: tuple(sorted(nbrs)) for n, nbrs in adjacency.items()
        }
        prev_edge: dict[tuple[int, int], tuple[int, int]] = {}
        for way in self.ways.values():
            if not way.is_road:
                continue
            refs = way.node_ids
            for i in range(1, len(refs) - 1):
                prev_edge[(refs[i], refs[i + 1])] = (refs[i - 1], refs[i])
                if not way.oneway:
                    prev_edge[(refs[i], refs[i - 1])] = (refs[i + 1], refs[i])
        self.prev_edge = prev_edge
        reverse: dict[int, list[tuple[int, float]]] = {n: [] for n in adjacency}
        for a, nbrs in adjacency.items():
            for b, w in nbrs:
                reverse[b].append((a, w))
        self._reverse_adjacency = {n: tuple(sorted(nbrs)) for n, nbrs in reverse.items()}
        self.edge_map = edge_map
        self.road_nodes: tuple[int, ...] = tuple(sorted(self.adjacency))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RoadNetwork):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.ways == other.ways
            and self.projection_origin == other.projection_origin
            and self.intersections == other.intersections
            and self.relations == other.relations
        )

    def bounding_box(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) over all node positions; zeros when empty."""
        if not self.nodes:
            return 0.0, 0.0, 0.0, 0.0
        xs = [n.pos[0] for n in self.nodes.values()]
        ys = [n.pos[1] for n in self.nodes.values()]
        return min(xs), min(ys), max(xs), max(ys)

    def route_edges(self, node_path: list[int]) -> list[RouteEdge]:
        """Resolve a node path into its directed segment sequence."""
        edges = []
        for a, b in zip(node_path, node_path[1:]):
            edge = self.edge_map.get((a, b))
            if edge is None:
                raise RoutingError(f"no road segment between nodes {a} and {b}")
            edges.append(edge)
        return edges


def _dijkstra_to(network: RoadNetwork, target: int, stop_at: int) -> dict[int, float]:
    """Settled shortest distances *to* ``target``, expanded until ``stop_at`` settles."""
    import heapq

    dist: dict[int, float] = {}
    heap: list[tuple[float, int]] = [(0.0, target)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in dist:
            continue
        dist[u] = d
        if u == stop_at:
            break
        for v, w in network._reverse_adjacency.get(u, ()):
            if v not in dist:
                heapq.heappush(heap, (d + w, v))
    return dist


def route(network: RoadNetwork, from_node: int, to_node: int) -> list[int]:
    """Shortest path by metric length; equal-length alternatives resolve to the
    path with the smaller node id at the first divergence."""
    for node in (from_node, to_node):
        if node not in network.adjacency:
            raise RoutingError(f"node {node} is not on a road")
    if from_node == to_node:
        return [from_node]

    dist = _dijkstra_to(network, to_node, from_node)
    if from_node not in dist:
        raise RoutingError(f"node {to_node} is unreachable from node {from_node}")

    path = [from_node]
    u = from_node
    limit = len(network.nodes) + 1
    while u != to_node:
        du = dist[u]
        chosen = None
        for v, w in network.adjacency[u]:
            dv = dist.get(v)
            if dv is None:
                continue
            if abs(du - (w + dv)) <= 1e-9 * max(1.0, du):
                chosen = v  # neighbors sorted by id: first hit is the tie-break winner
                break
        if chosen is None or len(path) > limit:
            raise RoutingError(f"inconsistent shortest-path walk at node {u}")
        path.append(chosen)
        u = chosen
    return path


def _parse_speed_limit(value: str | None) -> float:
    """Tag value in km/h (or '... mph') to m/s; unparseable values fall back to the default."""
    if value is None:
        return DEFAULT_SPEED_MS
    text = value.strip().lower()
    factor = 1.0
    if text.endswith("mph"):
        text = text[:-3].strip()
        factor = 1.609344
    elif text.endswith("km/h"):
        text = text[:-4].strip()
    try:
        kmh = float(text) * factor
    except ValueError:
        return DEFAULT_SPEED_MS
    if kmh <= 0:
        return DEFAULT_SPEED_MS
    return kmh / 3.6


def _lane_counts(tags: dict[str, str]) -> tuple[int, int]:
    oneway = tags.get("oneway", "").strip().lower() in ("yes", "true", "1", "-1")
    try:
        total = int(float(tags["lanes"]))
    except (KeyError, ValueError):
        total = 0
    if oneway:
        return max(1, total), 0
    if total >= 2:
        return (total + 1) // 2, total // 2
    return 1, 1


def parse_osm(xml_text: str) -> RoadNetwork:
    """Build a network from an OSM XML document.

    Ways carrying a ``highway`` tag become roads, ``building`` ways become
    filled outlines, anything else is kept as inert geometry. Missing
    attributes default to one lane per direction, 50 km/h, bidirectional.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise OsmParseError(f"malformed OSM XML at line {line}, column {col}: {exc.msg}") from exc

    bounds = root.find("bounds")
    raw_nodes = []
    for el in root.iter("node"):
        tags = {t.get("k"): t.get("v") for t in el.findall("tag")}
        raw_nodes.append((int(el.get("id")), float(el.get("lat")), float(el.get("lon")), tags))

    if bounds is not None:
        origin = (
            (float(bounds.get("minlat")) + float(bounds.get("maxlat"))) / 2.0,
            (float(bounds.get("minlon")) + float(bounds.get("maxlon"))) / 2.0,
        )
    elif raw_nodes:
        origin = (raw_nodes[0][1], raw_nodes[0][2])
    else:
        origin = (0.0, 0.0)

    nodes: dict[int, GeoNode] = {}
    for nid, lat, lon, tags in raw_nodes:
        if nid in nodes:
            raise NetworkValidationError(f"duplicate node id {nid}")
        if tags.get("highway") == "traffic_signals":
            kind = NODE_SIGNAL
        elif tags:
            kind = NODE_POI
        else:
            kind = NODE_PLAIN
        nodes[nid] = GeoNode(nid, lat, lon, project(lat, lon, origin), kind)

    ways: dict[int, Way] = {}
    for el in root.iter("way"):
        wid = int(el.get("id"))
        tags = {t.get("k"): t.get("v") for t in el.findall("tag")}
        refs: list[int] = []
        for nd in el.findall("nd"):
            ref = int(nd.get("ref"))
            if not refs or refs[-1] != ref:  # collapse duplicate consecutive refs
                refs.append(ref)
        for ref in refs:
            if ref not in nodes:
                raise NetworkValidationError(f"way {wid}: dangling node reference {ref}")
        if len(refs) < 2:
            log.debug("dropping degenerate way %d", wid)
            continue
        if tags.get("oneway", "").strip() == "-1":
            refs.reverse()
        is_road = "highway" in tags
        is_building = "building" in tags and not is_road
        lanes_fwd, lanes_bwd = _lane_counts(tags) if is_road else (1, 1)
        ways[wid] = Way(
            wid,
            tuple(refs),
            lanes_forward=lanes_fwd,
            lanes_backward=lanes_bwd,
            speed_limit=_parse_speed_limit(tags.get("maxspeed")) if is_road else DEFAULT_SPEED_MS,
            is_road=is_road,
            is_building=is_building,
        )

    relations: dict[int, tuple] = {}
    for el in root.iter("relation"):
        rid = int(el.get("id"))
        members = tuple(
            (m.get("type"), int(m.get("ref")), m.get("role") or "")
            for m in el.findall("member")
        )
        relations[rid] = members

    source_hash = hashlib.sha256(xml_text.encode()).hexdigest()
    return RoadNetwork(nodes, ways, origin, source_hash=source_hash, relations=relations)


def write_cache(network: RoadNetwork, path: str) -> None:
    """Serialize to the versioned cache document (canonical JSON, byte-stable)."""
    doc = {
        "format": CACHE_FORMAT,
        "format_version": CACHE_VERSION,
        "source_hash": network.source_hash,
        "projection_origin": list(network.projection_origin),
        "nodes": [
            [n.id, n.lat, n.lon, n.pos[0], n.pos[1], n.kind]
            for n in sorted(network.nodes.values(), key=lambda n: n.id)
        ],
        "ways": [
            [w.id, list(w.node_ids), w.lanes_forward, w.lanes_backward,
             w.speed_limit, int(w.is_road), int(w.is_building)]
            for w in sorted(network.ways.values(), key=lambda w: w.id)
        ],
        "relations": [
            [rid, [list(m) for m in members]]
            for rid, members in sorted(network.relations.items())
        ],
        "intersections": sorted(network.intersections),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def read_cache(path: str, source_hash: str | None = None) -> RoadNetwork:
    """Load a cache document; stored projected coordinates are used as-is.

    Raises :class:`StaleCacheError` on a format/version mismatch or, when
    ``source_hash`` is given, on a mismatch against the current source file.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CACHE_FORMAT or doc.get("format_version") != CACHE_VERSION:
        raise StaleCacheError(
            f"{path}: cache format {doc.get('format')!r} v{doc.get('format_version')!r} "
            f"does not match {CACHE_FORMAT!r} v{CACHE_VERSION}; re-parse the source"
        )
    if source_hash is not None and doc.get("source_hash") != source_hash:
        raise StaleCacheError(f"{path}: cache is stale (source file changed); re-parse the source")

    nodes = {
        int(nid): GeoNode(int(nid), lat, lon, (x, y), kind)
        for nid, lat, lon, x, y, kind in doc["nodes"]
    }
    ways = {
        int(wid): Way(int(wid), tuple(refs), lf, lb, speed, bool(road), bool(building))
        for wid, refs, lf, lb, speed, road, building in doc["ways"]
    }
    relations = {
        int(rid): tuple((t, int(ref), role) for t, ref, role in members)
        for rid, members in doc.get("relations", [])
    }
    network = RoadNetwork(
        nodes, ways, tuple(doc["projection_origin"]),
        source_hash=doc.get("source_hash", ""), relations=relations,
    )
    if sorted(network.intersections) != list(doc["intersections"]):
        raise StaleCacheError(f"{path}: cached intersection list is inconsistent with its ways")
    return network


@dataclass(frozen=True)
class SvgOptions:
    road_color: str = "#4a4a4a"
    road_width_per_lane: float = 2.0
    building_fill: str = "#bfae94"
    signal_color: str = "#d03030"
    signal_radius: float = 3.0
    background: str = "#f5f3ee"


def export_svg(network: RoadNetwork, path: str, options: SvgOptions | None = None) -> None:
    """Write an SVG 1.1 drawing: one polyline per road way (stroke scales with
    lane count), filled building polygons, circle markers on signal nodes."""
    opt = options or SvgOptions()
    min_x, min_y, max_x, max_y = network.bounding_box()
    width = max(max_x - min_x, 1.0)
    height = max(max_y - min_y, 1.0)
    margin_x = 0.05 * width
    margin_y = 0.05 * height

    def point(node_id: int) -> str:
        x, y = network.nodes[node_id].pos
        return f"{x - min_x + margin_x:.2f},{max_y - y + margin_y:.2f}"

    view_w = width + 2 * margin_x
    view_h = height + 2 * margin_y
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="0 0 {view_w:.2f} {view_h:.2f}">',
        f'<rect x="0" y="0" width="{view_w:.2f}" height="{view_h:.2f}" fill="{opt.background}"/>',
    ]
    for way in sorted(network.ways.values(), key=lambda w: w.id):
        points = " ".join(point(n) for n in way.node_ids)
        if way.is_building:
            parts.append(f'<polygon points="{points}" fill="{opt.building_fill}" stroke="none"/>')
        elif way.is_road:
            stroke = opt.road_width_per_lane * (way.lanes_forward + way.lanes_backward)
            parts.append(
                f'<polyline points="{points}" fill="none" stroke="{opt.road_color}" '
                f'stroke-width="{stroke:.2f}" stroke-linecap="round"/>'
            )
    for node in sorted(network.nodes.values(), key=lambda n: n.id):
        if node.kind == NODE_SIGNAL:
            x, y = node.pos
            parts.append(
                f'<circle cx="{x - min_x + margin_x:.2f}" cy="{max_y - y + margin_y:.2f}" '
                f'r="{opt.signal_radius}" fill="{opt.signal_color}"/>'
            )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
