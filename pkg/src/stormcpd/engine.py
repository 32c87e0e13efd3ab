"""Deterministic discrete-event engine.

A time-ordered priority queue of events, a simulation clock, and a registry
of logical processes (client, balancer, device handlers, ...) that react to
events and schedule new ones.  Single-threaded by contract: the engine owns
all simulation state.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import SchedulingInPast

SimTime = float
ProcessId = str

Handler = Callable[["Engine", "Event"], None]


@dataclass(order=True)
class Event:
    """A unit of work in the simulation queue.

    Ordered by (fire_at, seq); seq is a global insertion counter, so
    simultaneous events fire FIFO and replay is deterministic.
    """

    fire_at: SimTime
    seq: int
    target: ProcessId = field(compare=False)
    payload: Any = field(compare=False, default=None)
    cancelled: bool = field(compare=False, default=False)


class Engine:
    """Event loop: pops events in (fire_at, seq) order and dispatches them
    to registered process handlers, advancing the clock as it goes."""

    def __init__(self) -> None:
        self._queue: list[Event] = []
        self._clock: SimTime = 0.0
        self._seq = 0
        self._handlers: dict[ProcessId, Handler] = {}
        # conservation counters: scheduled == fired + cancelled + remaining
        self.n_scheduled = 0
        self.n_fired = 0
        self.n_cancelled = 0

    # -- process registry --

    def register(self, pid: ProcessId, handler: Handler) -> None:
        if pid in self._handlers:
            raise ValueError(f"process id {pid!r} already registered")
        self._handlers[pid] = handler

    # -- clock and queue --

    def now(self) -> SimTime:
        return self._clock

    def schedule(self, fire_at: SimTime, target: ProcessId, payload: Any = None) -> Event:
        """Insert an event; seq is assigned from the global counter."""
        if fire_at < self._clock:
            raise SchedulingInPast(
                f"cannot schedule at t={fire_at} before clock t={self._clock}"
            )
        ev = Event(fire_at=fire_at, seq=self._seq, target=target, payload=payload)
        self._seq += 1
        self.n_scheduled += 1
        heapq.heappush(self._queue, ev)
        return ev

    def schedule_in(self, delay: SimTime, target: ProcessId, payload: Any = None) -> Event:
        return self.schedule(self._clock + delay, target, payload)

    def cancel(self, ev: Event) -> None:
        """Tombstone an event; it is skipped lazily at pop time."""
        if not ev.cancelled:
            ev.cancelled = True
            self.n_cancelled += 1

    def pending(self) -> int:
        """Number of live (non-cancelled) events still queued."""
        return sum(1 for ev in self._queue if not ev.cancelled)

    def run_until(self, t_end: SimTime) -> int:
        """Process all events with fire_at <= t_end; returns the count.

        The clock ends at t_end even when the queue drains early or holds
        only later events.
        """
        if t_end < self._clock:
            raise SchedulingInPast(
                f"cannot run to t={t_end} before clock t={self._clock}"
            )
        fired = 0
        while self._queue and self._queue[0].fire_at <= t_end:
            ev = heapq.heappop(self._queue)
            if ev.cancelled:
                continue
            self._clock = ev.fire_at
            self.n_fired += 1
            fired += 1
            self._handlers[ev.target](self, ev)
        self._clock = t_end
        return fired

    def run(self) -> int:
        """Drain the queue completely; clock ends at the last fire time."""
        fired = 0
        while self._queue:
            ev = heapq.heappop(self._queue)
            if ev.cancelled:
                continue
            self._clock = ev.fire_at
            self.n_fired += 1
            fired += 1
            self._handlers[ev.target](self, ev)
        return fired
