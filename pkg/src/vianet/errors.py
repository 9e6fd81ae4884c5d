"""Exception hierarchy shared across the package."""


class VianetError(Exception):
    """Base class for all package errors."""


class OsmParseError(VianetError):
    """Malformed OSM XML input."""


class NetworkValidationError(VianetError):
    """Structurally invalid road network (dangling refs, bad attributes)."""


class RoutingError(VianetError):
    """No route exists between the requested nodes."""


class StaleCacheError(VianetError):
    """Cache file has a wrong format version or a mismatching source hash."""


class SchedulingError(VianetError):
    """Event queue contract violation (past-time scheduling, bad kind)."""


class SimulationError(VianetError):
    """A dispatched event handler failed; carries the event context."""


class CollisionFault(VianetError):
    """Bumper gap became non-positive; the scenario violated the no-collision invariant."""


class ChannelBlocked(VianetError):
    """SNR below the minimum decodable level; transmission must back off."""


class ConfigError(VianetError):
    """Invalid scenario configuration; message names the offending field."""
