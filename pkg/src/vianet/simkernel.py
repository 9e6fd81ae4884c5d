"""Deterministic discrete-event core.

The queue either runs its own loop (standalone) or is driven one event at a
time by a host simulator through :func:`next_event_time` / :func:`dispatch_next`.
The kernel never sleeps and never owns a thread; interleaving host events with
kernel events in global time order is equivalent to the standalone loop.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SchedulingError, SimulationError

MOBILITY_STEP = "mobility_step"
SIGNAL_STEP = "signal_step"
TX_TRIGGER = "tx_trigger"
SAMPLE_SNR = "sample_snr"
STAT_FLUSH = "stat_flush"
CUSTOM = "custom"
EVENT_KINDS = frozenset({MOBILITY_STEP, SIGNAL_STEP, TX_TRIGGER, SAMPLE_SNR, STAT_FLUSH, CUSTOM})

STANDALONE = "standalone"
MANAGED = "managed"


@dataclass
class Event:
    fire_time: float
    sequence: int
    kind: str
    callback: Callable[[], None]
    cancelled: bool = False


@dataclass
class Clock:
    now: float = 0.0
    mode: str = STANDALONE


class EventQueue:
    """Events ordered by (fire_time, scheduling sequence); the clock never runs backward."""

    def __init__(self, start: float = 0.0, mode: str = STANDALONE) -> None:
        self.clock = Clock(start, mode)
        self._heap: list[tuple[float, int, Event]] = []
        self._sequence = 0
        self.dispatched = 0
        self.dispatch_counts: dict[str, int] = {}

    @property
    def now(self) -> float:
        return self.clock.now

    def __len__(self) -> int:
        return sum(1 for _, _, ev in self._heap if not ev.cancelled)

    def schedule(self, fire_time: float, kind: str, callback: Callable[[], None]) -> Event:
        if kind not in EVENT_KINDS:
            raise SchedulingError(f"unknown event kind {kind!r}")
        if not math.isfinite(fire_time) or fire_time < self.clock.now - 1e-12:
            raise SchedulingError(
                f"cannot schedule {kind} at t={fire_time} before current time t={self.clock.now}"
            )
        event = Event(fire_time, self._sequence, kind, callback)
        self._sequence += 1
        heapq.heappush(self._heap, (event.fire_time, event.sequence, event))
        return event

    def cancel(self, event: Event) -> None:
        event.cancelled = True

    def _drop_cancelled(self) -> None:
        while self._heap and self._heap[0][2].cancelled:
            heapq.heappop(self._heap)

    def next_event_time(self) -> float | None:
        """Host-facing peek; None when drained."""
        self._drop_cancelled()
        return self._heap[0][0] if self._heap else None

    def dispatch_next(self) -> Event:
        """Pop and run exactly one event, advancing the clock to its fire time."""
        self._drop_cancelled()
        if not self._heap:
            raise SchedulingError("dispatch_next on an empty queue")
        _, _, event = heapq.heappop(self._heap)
        if event.fire_time < self.clock.now - 1e-12:
            raise SchedulingError(
                f"out-of-order dispatch: event at t={event.fire_time} "
                f"behind clock t={self.clock.now}"
            )
        self.clock.now = max(self.clock.now, event.fire_time)
        try:
            event.callback()
        except SimulationError:
            raise
        except Exception as exc:
            raise SimulationError(
                f"handler for {event.kind} event at t={event.fire_time} failed: {exc}"
            ) from exc
        self.dispatched += 1
        self.dispatch_counts[event.kind] = self.dispatch_counts.get(event.kind, 0) + 1
        return event

    def run_until(self, t_end: float) -> None:
        """Standalone loop: dispatch everything due up to and including t_end."""
        while True:
            t = self.next_event_time()
            if t is None or t > t_end:
                break
            self.dispatch_next()
        self.clock.now = max(self.clock.now, t_end)


def substream(seed: int, label: str) -> np.random.Generator:
    """Independent generator derived from the scenario seed and a stable label.

    The label is digested so stream identity is insensitive to module call
    order and to Python hash randomization.
    """
    digest = int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([int(seed), digest]))
