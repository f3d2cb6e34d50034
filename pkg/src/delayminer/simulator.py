"""Discrete-event simulation of BPMN-lite models.

Cases arrive per the model's inter-arrival process and flow as tokens from
start to end. Tasks queue as work items until a pool resource is both idle
and inside its working calendar; dispatch is first-in-first-out by enablement
time (ties by case id, then task label) and picks the longest-idle qualified
resource (ties by label). Task processing consumes working time only, so
execution pauses over off-duty periods and the emitted log never shows work
progressing outside a calendar. Timer events hold tokens for a sampled
wall-clock duration without consuming any resource. Exclusive splits sample
a branch; parallel splits fork and their joins synchronize per case.

All event times are integer seconds and every random draw flows through one
seeded PCG64 generator consumed in deterministic event order, so a given
(model, config) pair reproduces the same log on any platform.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, replace

import numpy as np

from .bps_model import END, START, BpsModel
from .distribution import sample
from .errors import SimulationError
from .log_io import ActivityInstance, ActivityInstanceLog

# 2021-11-01 was a Monday; 08:00 UTC keeps default runs inside office hours.
DEFAULT_START_INSTANT = 1635753600


@dataclass(frozen=True)
class SimulationConfig:
    num_traces: int
    seed: int = 0
    start_instant: int = DEFAULT_START_INSTANT

    def __post_init__(self):
        if self.num_traces < 1:
            raise ValueError("num_traces must be at least 1")


@dataclass(frozen=True)
class TimerDraw:
    """One sampled timer delay, recorded when timer tracing is enabled."""

    trace_id: str
    activity: str
    attribution: str
    delay: int


@dataclass(frozen=True)
class SimulationResult:
    log: ActivityInstanceLog
    timer_draws: tuple[TimerDraw, ...] = ()


@dataclass
class WorkItem:
    case: int
    task: str
    enablement: int
    state: str = "enabled"  # enabled -> in_progress -> done
    resource: str | None = None


class _Resource:
    __slots__ = ("label", "calendar", "busy", "idle_since")

    def __init__(self, label, calendar, idle_since):
        self.label = label
        self.calendar = calendar
        self.busy = False
        self.idle_since = idle_since


class _Engine:
    def __init__(self, model: BpsModel, cfg: SimulationConfig,
                 trace_timers: bool, max_events: int | None):
        self.model = model
        self.cfg = cfg
        self.rng = np.random.Generator(np.random.PCG64(cfg.seed))
        self.trace_timers = trace_timers
        self.succ = {}
        self.in_degree = {}
        for s, t in model.flows:
            self.succ.setdefault(s, []).append(t)
            self.in_degree[t] = self.in_degree.get(t, 0) + 1
        for targets in self.succ.values():
            targets.sort()
        self.resources: dict[str, _Resource] = {}
        self.pool_members: dict[str, list[str]] = {}
        for pool_id, pool in model.pools.items():
            members = []
            for label in sorted(pool.resources):
                if label not in self.resources:
                    self.resources[label] = _Resource(
                        label, pool.calendar.with_resource(label), cfg.start_instant
                    )
                members.append(label)
            self.pool_members[pool_id] = members
        self.queue: list[tuple[int, int, tuple]] = []
        self.seq = itertools.count()
        self.waiting: list[WorkItem] = []
        self.join_arrivals: dict[tuple[int, str], int] = {}
        self.completed_cases = 0
        self.instances: list[ActivityInstance] = []
        self.timer_draws: list[TimerDraw] = []
        self.next_wake: int | None = None
        self.dispatch_needed = False
        self.id_width = max(4, len(str(cfg.num_traces - 1)))
        if max_events is None:
            size = len(model.tasks) + len(model.gateways) + len(model.timers) + 2
            max_events = 200 * cfg.num_traces * size + 10_000
        self.max_events = max_events
        self.events_processed = 0

    def trace_id(self, case: int) -> str:
        return f"{case:0{self.id_width}d}"

    def push(self, time: int, event: tuple) -> None:
        heapq.heappush(self.queue, (time, next(self.seq), event))

    def run(self) -> SimulationResult:
        self.push(self._first_arrival_time(), ("arrival", 0))
        while self.queue:
            now = self.queue[0][0]
            while self.queue and self.queue[0][0] == now:
                self.events_processed += 1
                if self.events_processed > self.max_events:
                    raise SimulationError(
                        f"event budget of {self.max_events} exceeded; "
                        f"the model may loop without terminating"
                    )
                _, _, event = heapq.heappop(self.queue)
                self._handle(event, now)
            if self.next_wake is not None and self.next_wake <= now:
                self.next_wake = None
                self.dispatch_needed = True
            if self.dispatch_needed:
                self.dispatch_needed = False
                self._dispatch(now)
        if self.completed_cases < self.cfg.num_traces:
            self._raise_deadlock()
        return SimulationResult(
            log=ActivityInstanceLog(tuple(self.instances)),
            timer_draws=tuple(self.timer_draws),
        )

    def _raise_deadlock(self):
        stuck_joins = sorted({node for (_, node) in self.join_arrivals})
        if stuck_joins:
            raise SimulationError(
                f"simulation deadlocked: parallel join(s) {stuck_joins} never "
                f"collected all incoming tokens"
            )
        stuck_tasks = sorted({item.task for item in self.waiting})
        raise SimulationError(
            f"simulation stalled with work items pending at {stuck_tasks}"
        )

    def _first_arrival_time(self) -> int:
        cal = self.model.arrivals.calendar
        if cal is not None:
            return cal.next_working_instant(self.cfg.start_instant)
        return self.cfg.start_instant

    def _handle(self, event: tuple, now: int) -> None:
        kind = event[0]
        if kind == "arrival":
            case = event[1]
            if case + 1 < self.cfg.num_traces:
                gap = int(round(sample(self.model.arrivals.interarrival, self.rng)))
                cal = self.model.arrivals.calendar
                if cal is not None:
                    nxt = cal.advance_working(cal.next_working_instant(now), gap)
                else:
                    nxt = now + gap
                self.push(nxt, ("arrival", case + 1))
            self._route(case, self.succ[START][0], now)
        elif kind == "token":
            self._route(event[1], event[2], now)
        elif kind == "complete":
            _, item, start = event
            item.state = "done"
            res = self.resources[item.resource]
            res.busy = False
            res.idle_since = now
            self.dispatch_needed = True
            self.instances.append(
                ActivityInstance(
                    trace_id=self.trace_id(item.case), activity=item.task,
                    start=start, end=now, resource=item.resource,
                )
            )
            self._route(item.case, self.succ[item.task][0], now)

    def _route(self, case: int, node: str, now: int) -> None:
        """Move a token through instantaneous nodes until it parks or forks."""
        while True:
            if node == END:
                self.completed_cases += 1
                return
            if node in self.model.tasks:
                self.waiting.append(WorkItem(case=case, task=node, enablement=now))
                self.dispatch_needed = True
                return
            if node in self.model.timers:
                spec = self.model.timers[node]
                delay = int(round(sample(spec.duration, self.rng)))
                if self.trace_timers:
                    self.timer_draws.append(
                        TimerDraw(
                            trace_id=self.trace_id(case),
                            activity=spec.attached_to[0],
                            attribution=spec.attached_to[1],
                            delay=delay,
                        )
                    )
                self.push(now + delay, ("token", case, self.succ[node][0]))
                return
            gw = self.model.gateways[node]
            if gw.direction == "split":
                if gw.kind == "exclusive":
                    node = self._sample_branch(node)
                    continue
                for branch in self.succ[node]:
                    self._route(case, branch, now)
                return
            if gw.kind == "parallel":
                key = (case, node)
                seen = self.join_arrivals.get(key, 0) + 1
                if seen < self.in_degree[node]:
                    self.join_arrivals[key] = seen
                    return
                self.join_arrivals.pop(key, None)
            node = self.succ[node][0]

    def _sample_branch(self, node: str) -> str:
        probs = self.model.gateways[node].branch_probs
        targets = self.succ[node]
        u = self.rng.random()
        cumulative = 0.0
        for target in targets:
            cumulative += probs[target]
            if u < cumulative:
                return target
        return targets[-1]

    def _dispatch(self, now: int) -> None:
        if not self.waiting:
            return
        order = sorted(
            self.waiting, key=lambda w: (w.enablement, w.case, w.task)
        )
        for item in order:
            pool_id = self.model.tasks[item.task].pool
            candidates = [
                self.resources[label]
                for label in self.pool_members[pool_id]
                if not self.resources[label].busy
                and self.resources[label].calendar.is_working(now)
            ]
            if not candidates:
                continue
            res = min(candidates, key=lambda r: (r.idle_since, r.label))
            res.busy = True
            item.state = "in_progress"
            item.resource = res.label
            self.waiting.remove(item)
            duration = int(round(sample(self.model.tasks[item.task].duration, self.rng)))
            end = res.calendar.advance_working(now, duration)
            self.push(end, ("complete", item, now))
        self._schedule_wake(now)

    def _schedule_wake(self, now: int) -> None:
        """Arrange a retry when queued work is only blocked by off-duty resources."""
        if not self.waiting:
            return
        wake = None
        for item in self.waiting:
            pool_id = self.model.tasks[item.task].pool
            for label in self.pool_members[pool_id]:
                res = self.resources[label]
                if res.busy:
                    continue
                instant = res.calendar.next_working_instant(now)
                if wake is None or instant < wake:
                    wake = instant
        if wake is None:
            return
        if self.next_wake is None or wake < self.next_wake:
            self.next_wake = wake
            self.push(wake, ("wake",))


def simulate_traced(model: BpsModel, cfg: SimulationConfig,
                    trace_timers: bool = True,
                    max_events: int | None = None) -> SimulationResult:
    """Simulate and also return the sampled delay of every timer firing."""
    return _Engine(model, cfg, trace_timers, max_events).run()


def simulate(model: BpsModel, cfg: SimulationConfig,
             max_events: int | None = None) -> ActivityInstanceLog:
    """Simulate ``cfg.num_traces`` cases and return the emitted log."""
    return _Engine(model, cfg, False, max_events).run().log


def simulate_many(model: BpsModel, cfg: SimulationConfig,
                  runs: int) -> list[ActivityInstanceLog]:
    """Independent runs with derived seeds seed, seed+1, ... seed+runs-1."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    return [
        simulate(model, replace(cfg, seed=cfg.seed + k))
        for k in range(runs)
    ]
