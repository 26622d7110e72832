"""Deterministic discrete-event kernel: event clock, device and link FIFO
queues, and the compute-time model.

Devices serve whole job units (a request's contiguous run of same-site compute
steps) one at a time in ready order, so an earlier request finishes its run
before a later one starts. Links serve transmissions the same way; a broadcast
occupies every destination link for its duration. The loop is single-threaded
and fully deterministic: ties are broken by event insertion order.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Any

EVENT_KINDS = ("request_arrival", "step_ready", "compute_done", "transmit_done")


@dataclass
class Event:
    time: float
    kind: str
    payload: Any = None
    seq: int = -1  # assigned by the queue; monotone tiebreaker

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


class EventQueue:
    """Stable priority queue over (time, insertion sequence)."""

    def __init__(self):
        self._heap: list[tuple[float, int, Event]] = []
        self._counter = itertools.count()
        self.clock = 0.0

    def schedule(self, event: Event) -> Event:
        if event.time < self.clock:
            raise ValueError(
                f"cannot schedule an event at t={event.time} before the clock t={self.clock}"
            )
        event.seq = next(self._counter)
        heapq.heappush(self._heap, (event.time, event.seq, event))
        return event

    def next_event(self) -> Event | None:
        """Pop the next event, or None as the end-of-simulation signal."""
        if not self._heap:
            return None
        time, _, event = heapq.heappop(self._heap)
        self.clock = time
        return event

    def __len__(self) -> int:
        return len(self._heap)


@dataclass(frozen=True)
class DeviceSpec:
    id: str
    device_class: str  # "UE" or "ES"
    compute_rate: float  # abstract work units per second

    def __post_init__(self):
        if self.device_class not in ("UE", "ES"):
            raise ValueError(f"unknown device class {self.device_class!r}")
        if self.compute_rate <= 0:
            raise ValueError("compute_rate must be positive")


@dataclass(frozen=True)
class WorkModel:
    """Abstract compute cost per action, in work units.

    Partial operations (partial_generate, partial_sketch) are billed the base
    action cost scaled by the step's share of the work; stitch is billed as a
    merge.
    """

    infer_cost: float = 300_000.0
    generate_cost: float = 2_000_000.0
    decode_cost: float = 50_000.0
    sketch_cost: float = 80_000.0
    complete_cost: float = 30_000.0
    merge_cost: float = 10_000.0
    split_cost: float = 2_000.0
    select_cost: float = 5_000.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative")

    def cost(self, action: str, fraction: float = 1.0) -> float:
        base = {
            "infer": self.infer_cost,
            "generate": self.generate_cost,
            "partial_generate": self.generate_cost,
            "decode": self.decode_cost,
            "sketch": self.sketch_cost,
            "partial_sketch": self.sketch_cost,
            "complete": self.complete_cost,
            "merge": self.merge_cost,
            "stitch": self.merge_cost,
            "split": self.split_cost,
            "select": self.select_cost,
        }
        if action not in base:
            raise ValueError(f"no cost defined for action {action!r}")
        return base[action] * fraction


def compute_time(action: str, work_model: WorkModel, device: DeviceSpec,
                 fraction: float = 1.0) -> float:
    """Seconds a device spends on one action: cost / compute_rate."""
    return work_model.cost(action, fraction) / device.compute_rate


@dataclass
class SimJob:
    """A schedulable unit: one device visit or one transmission.

    ``resources`` is every resource the job occupies for its whole duration
    (one device, or every destination link of a broadcast). The job starts
    when all dependencies are done, its release time has passed, it heads all
    its resource queues, and those resources are idle.
    """

    job_id: int
    resources: tuple[str, ...]
    duration: float
    deps: tuple[int, ...] = ()
    release_time: float = 0.0
    kind: str = "compute"  # or "transmit"
    tag: Any = None

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("job duration must be non-negative")
        if not self.resources:
            raise ValueError("job needs at least one resource")


@dataclass
class JobTiming:
    ready: float
    start: float
    end: float


def run_jobs(jobs: list[SimJob]) -> dict[int, JobTiming]:
    """Execute a job DAG on FIFO resources; returns per-job timings.

    Deterministic: jobs become ready in event order, queues are FIFO over
    ready events, and ties follow job submission order.
    """
    by_id = {job.job_id: job for job in jobs}
    if len(by_id) != len(jobs):
        raise ValueError("duplicate job ids")
    dependents: dict[int, list[int]] = {j.job_id: [] for j in jobs}
    pending: dict[int, int] = {}
    for job in jobs:
        pending[job.job_id] = len(job.deps)
        for dep in job.deps:
            if dep not in by_id:
                raise ValueError(f"job {job.job_id} depends on unknown job {dep}")
            dependents[dep].append(job.job_id)

    queues: dict[str, list[int]] = {}
    busy: dict[str, int | None] = {}
    for job in jobs:
        for res in job.resources:
            queues.setdefault(res, [])
            busy.setdefault(res, None)

    timings: dict[int, JobTiming] = {}
    events = EventQueue()

    for job in jobs:
        if pending[job.job_id] == 0:
            events.schedule(Event(job.release_time, "step_ready", job.job_id))

    def try_start(resource: str, now: float) -> None:
        # FIFO with head-of-line blocking: only the queue head may start, and a
        # multi-resource job (broadcast) starts only when it heads every queue
        queue = queues[resource]
        if busy[resource] is not None or not queue:
            return
        job_id = queue[0]
        job = by_id[job_id]
        if any(busy[r] is not None or queues[r][0] != job_id for r in job.resources):
            return
        for r in job.resources:
            queues[r].pop(0)
            busy[r] = job_id
        timings[job_id].start = now
        timings[job_id].end = now + job.duration
        done_kind = "transmit_done" if job.kind == "transmit" else "compute_done"
        events.schedule(Event(now + job.duration, done_kind, job_id))

    while True:
        event = events.next_event()
        if event is None:
            break
        now = event.time
        if event.kind == "step_ready":
            job = by_id[event.payload]
            timings[job.job_id] = JobTiming(ready=now, start=-1.0, end=-1.0)
            for res in job.resources:
                queues[res].append(job.job_id)
            try_start(job.resources[0], now)
        else:  # compute_done / transmit_done
            job = by_id[event.payload]
            for res in job.resources:
                busy[res] = None
            for dep_id in dependents[job.job_id]:
                pending[dep_id] -= 1
                if pending[dep_id] == 0:
                    ready_at = max(now, by_id[dep_id].release_time)
                    events.schedule(Event(ready_at, "step_ready", dep_id))
            for res in job.resources:
                try_start(res, now)

    unfinished = [j for j in jobs if j.job_id not in timings or timings[j.job_id].start < 0]
    if unfinished:
        raise RuntimeError(
            f"{len(unfinished)} jobs never ran (unsatisfiable dependencies?): "
            f"{[j.job_id for j in unfinished][:5]}"
        )
    return timings
