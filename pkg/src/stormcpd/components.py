"""Runtime resource servers driven by the event engine.

Links and controllers are work-conserving shared servers: every active
transfer/job progresses simultaneously at a per-job rate that depends on
the current job count, and completion events are rescheduled whenever the
rate changes (arrival, departure, degradation flip).  Storage devices are
FIFO block servers: each submitted file is split into blocks, and a
request's next block only re-enters the queue after its previous one
finished, so concurrent requests interleave at block granularity.
"""

from __future__ import annotations

from collections import deque
from typing import Callable, Optional

from .engine import Engine
from .resources import Node
from .telemetry import StatsRecorder


class _Job:
    __slots__ = ("remaining", "on_done", "on_abort", "event")

    def __init__(self, remaining, on_done, on_abort):
        self.remaining = remaining
        self.on_done = on_done
        self.on_abort = on_abort
        self.event = None


class SharedServer:
    """Base for processor-sharing resources (links, controller CPUs)."""

    def __init__(self, engine: Engine, node: Node):
        self.engine = engine
        self.node = node
        self.pid = f"{node.kind}:{node.id}"
        self.jobs: dict[int, _Job] = {}
        self._next_id = 0
        self._last_sync = 0.0
        self._cur_rate = 0.0
        engine.register(self.pid, self._on_event)

    def _rate(self, k: int) -> float:
        raise NotImplementedError

    def _record_span(self, t0: float, t1: float, k: int) -> None:
        """Telemetry hook for an elapsed span with k active jobs."""

    def add_job(self, work: float, on_done: Callable, on_abort: Callable) -> int:
        self._sync()
        job_id = self._next_id
        self._next_id += 1
        self.jobs[job_id] = _Job(max(0.0, work), on_done, on_abort)
        self._reschedule()
        return job_id

    def abort_all(self) -> None:
        self._sync()
        victims = list(self.jobs.values())
        self.jobs.clear()
        self._cur_rate = 0.0
        for job in victims:
            if job.event is not None:
                self.engine.cancel(job.event)
            job.on_abort()

    def rate_changed(self) -> None:
        """Re-split capacity after a degradation flip or restoration."""
        self._sync()
        self._reschedule()

    def _sync(self) -> None:
        """Advance all jobs at the rate that held since the last sync."""
        now = self.engine.now()
        elapsed = now - self._last_sync
        if elapsed > 0 and self.jobs:
            self._record_span(self._last_sync, now, len(self.jobs))
            for job in self.jobs.values():
                job.remaining = max(0.0, job.remaining - self._cur_rate * elapsed)
        self._last_sync = now

    def _reschedule(self) -> None:
        now = self.engine.now()
        k = len(self.jobs)
        self._cur_rate = self._rate(k) if k else 0.0
        for job_id, job in self.jobs.items():
            if job.event is not None:
                self.engine.cancel(job.event)
            job.event = self.engine.schedule(
                now + job.remaining / self._cur_rate, self.pid, job_id
            )

    def _on_event(self, engine: Engine, ev) -> None:
        job_id = ev.payload
        job = self.jobs.get(job_id)
        if job is None or job.event is not ev:
            return
        self._sync()
        del self.jobs[job_id]
        self._reschedule()
        job.on_done()


class LinkServer(SharedServer):
    """Fair-sharing link: k concurrent flows each see bandwidth/k."""

    def _rate(self, k: int) -> float:
        return self.node.link.bandwidth * self.node.degradation / k


class CpuServer(SharedServer):
    """Controller CPU: each job gets at most one core; beyond that,
    processor sharing at a cores/jobs fraction."""

    def __init__(self, engine: Engine, node: Node, recorder: Optional[StatsRecorder] = None):
        super().__init__(engine, node)
        self.recorder = recorder

    def _rate(self, k: int) -> float:
        spec = self.node.cpu
        return spec.core_speed * self.node.degradation * min(1.0, spec.cores / k)

    def _record_span(self, t0: float, t1: float, k: int) -> None:
        if self.recorder is not None:
            frac = min(k, self.node.cpu.cores) / self.node.cpu.cores
            self.recorder.add_cpu_busy(self.node.id, t0, t1, frac)


class _DiskJob:
    __slots__ = ("blocks", "op", "on_done", "on_abort")

    def __init__(self, blocks, op, on_done, on_abort):
        self.blocks = deque(blocks)
        self.op = op
        self.on_done = on_done
        self.on_abort = on_abort


class Disk:
    """FIFO block server for one storage device.

    Submitting a file enqueues its first block; each completed block
    re-enqueues the job's next one at the tail, interleaving concurrent
    requests.  The in-flight block is resynced on degradation changes so
    transfer spans stay exact for telemetry.
    """

    def __init__(self, engine: Engine, node: Node, recorder: Optional[StatsRecorder] = None):
        self.engine = engine
        self.node = node
        self.recorder = recorder
        self.pid = f"storage:{node.id}"
        self.queue: deque[_DiskJob] = deque()
        # insertion-ordered so abort notification order is deterministic
        self.jobs: dict[_DiskJob, None] = {}
        self.current: Optional[_DiskJob] = None
        self.cur_remaining = 0.0
        self.cur_speed = 0.0
        self.cur_started = 0.0
        self.cur_event = None
        self.reserved_gb = 0.0  # capacity held by admitted, unfinished writes
        engine.register(self.pid, self._on_event)

    def _speed(self, op: str) -> float:
        spec = self.node.storage
        raw = spec.write_speed if op == "write" else spec.read_speed
        return raw * self.node.degradation

    def submit(self, blocks: list[float], op: str, on_done: Callable, on_abort: Callable) -> None:
        job = _DiskJob(blocks, op, on_done, on_abort)
        self.jobs[job] = None
        self.queue.append(job)
        if self.current is None:
            self._start_next()

    def _start_next(self) -> None:
        if not self.queue:
            self.current = None
            self.cur_event = None
            return
        job = self.queue.popleft()
        now = self.engine.now()
        self.current = job
        self.cur_remaining = job.blocks[0]
        self.cur_speed = self._speed(job.op)
        self.cur_started = now
        self.cur_event = self.engine.schedule(
            now + self.cur_remaining / self.cur_speed, self.pid, None
        )

    def _close_span(self) -> float:
        """Credit progress of the in-flight block up to now; returns MB moved."""
        now = self.engine.now()
        moved = min(self.cur_speed * (now - self.cur_started), self.cur_remaining)
        if self.recorder is not None and moved > 0 and now > self.cur_started:
            self.recorder.add_disk_span(self.node.id, self.cur_started, now, moved)
        return moved

    def rate_changed(self) -> None:
        if self.current is None:
            return
        now = self.engine.now()
        moved = self._close_span()
        self.cur_remaining = max(0.0, self.cur_remaining - moved)
        self.cur_started = now
        self.cur_speed = self._speed(self.current.op)
        self.engine.cancel(self.cur_event)
        self.cur_event = self.engine.schedule(
            now + self.cur_remaining / self.cur_speed, self.pid, None
        )

    def abort_all(self) -> None:
        if self.current is not None:
            self._close_span()
            self.engine.cancel(self.cur_event)
        victims = list(self.jobs)
        self.jobs.clear()
        self.queue.clear()
        self.current = None
        self.cur_event = None
        for job in victims:
            job.on_abort()

    def _on_event(self, engine: Engine, ev) -> None:
        if ev is not self.cur_event or self.current is None:
            return
        job = self.current
        # the span since the last (re)start moved exactly the leftover part
        if self.recorder is not None and self.cur_remaining > 0:
            self.recorder.add_disk_span(
                self.node.id, self.cur_started, engine.now(), self.cur_remaining
            )
        job.blocks.popleft()
        if job.blocks:
            self.queue.append(job)
            self._start_next()
        else:
            self.jobs.pop(job, None)
            self._start_next()
            job.on_done()
