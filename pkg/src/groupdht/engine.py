"""Single-threaded discrete-event scheduler and named RNG substreams.

One simulated second is one churn cycle.  Events fire in ``(fire_at, seq)``
order, where ``seq`` is assigned at scheduling time, so equal-time events run
in the order they were scheduled.
"""
from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Mapping

from .errors import PastDeadline


class EventKind(Enum):
    MAINTENANCE_TICK = "MaintenanceTick"
    SIZE_CHECK = "SizeCheck"
    RELOCATION_ROUND = "RelocationRound"
    CHURN_MOMENT = "ChurnMoment"
    PHASE_BOUNDARY = "SimulationPhaseBoundary"
    STABILIZATION_TICK = "StabilizationTick"
    SAMPLE = "Sample"
    PEER_JOIN = "PeerJoin"


@dataclass(eq=False)
class Event:
    fire_at: float
    seq: int
    kind: EventKind
    data: Any = None
    cancelled: bool = False


Handler = Callable[[Event], None]


class Scheduler:
    def __init__(self, start: float = 0.0) -> None:
        self.now = start
        self._heap: list[tuple[float, int, Event]] = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, fire_at: float, kind: EventKind, data: Any = None) -> Event:
        if fire_at < self.now:
            raise PastDeadline(f"cannot schedule at {fire_at} < now {self.now}")
        event = Event(fire_at, self._seq, kind, data)
        self._seq += 1
        heapq.heappush(self._heap, (fire_at, event.seq, event))
        return event

    def schedule_in(self, delay: float, kind: EventKind, data: Any = None) -> Event:
        return self.schedule(self.now + delay, kind, data)

    @staticmethod
    def cancel(event: Event) -> None:
        event.cancelled = True

    def peek_time(self) -> float | None:
        while self._heap and self._heap[0][2].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def run_until(
        self,
        handlers: Mapping[EventKind, Handler],
        until: float | None = None,
        stop: Callable[[], bool] | None = None,
    ) -> int:
        """Process events until the queue drains, the next event lies past
        ``until`` (inclusive bound), or ``stop()`` turns true after an event.

        Returns the number of events processed.
        """
        processed = 0
        heap = self._heap
        pop = heapq.heappop
        while heap:
            fire_at, _, event = heap[0]
            if event.cancelled:
                pop(heap)
                continue
            if until is not None and fire_at > until:
                break
            pop(heap)
            self.now = fire_at
            handlers[event.kind](event)
            processed += 1
            if stop is not None and stop():
                break
        return processed


def _derive_seed(root_seed: int, label: str) -> int:
    payload = f"{root_seed & (2**64 - 1)}/{label}".encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


class RngStream(random.Random):
    """A ``random.Random`` keyed by ``(root_seed, label)``."""

    def __new__(cls, root_seed: int, label: str) -> RngStream:
        return super().__new__(cls)

    def __init__(self, root_seed: int, label: str) -> None:
        self.root_seed = root_seed
        self.label = label
        super().__init__(_derive_seed(root_seed, label))


def rng_substream(root_seed: int, label: str) -> RngStream:
    return RngStream(root_seed, label)
