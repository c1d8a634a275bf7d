"""Virtual clock and deterministic event queue.

Events at equal timestamps are ordered by (admission sequence, node id,
insertion counter), which makes the simulation a total order.
"""

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Any, Optional


class VirtualClock:
    """Simulated milliseconds; advances only when the event loop says so."""

    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def advance_to(self, t: float) -> float:
        if t < self._now:
            raise ValueError(f"cannot move the clock back from {self._now} to {t}")
        self._now = t
        return self._now


class ScaledClock(VirtualClock):
    """Virtual clock that sleeps ``scale`` wall seconds per simulated ms."""

    def __init__(self, scale: float, start: float = 0.0):
        super().__init__(start)
        self.scale = scale

    def advance_to(self, t: float) -> float:
        delta = t - self.now()
        if delta > 0 and self.scale > 0:
            time.sleep(delta * self.scale)
        return super().advance_to(t)


@dataclass(order=True)
class Event:
    time: float
    admission: int
    node: int
    seq: int
    kind: str = field(compare=False)
    payload: Any = field(compare=False, default=None)


class EventQueue:
    def __init__(self) -> None:
        self._heap: list[Event] = []
        self._counter = itertools.count()

    def push(self, time: float, kind: str, payload: Any = None, admission: int = 0, node: int = 0) -> Event:
        event = Event(time, admission, node, next(self._counter), kind, payload)
        heapq.heappush(self._heap, event)
        return event

    def pop(self) -> Optional[Event]:
        return heapq.heappop(self._heap) if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)

    def pending(self) -> list[Event]:
        return sorted(self._heap)
