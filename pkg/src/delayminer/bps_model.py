"""BPMN-lite simulation models: JSON schema, validation, timer injection.

A model is a block-structured graph over the reserved nodes ``start`` and
``end``, tasks (identified by activity label), gateways, and timer events.
Gateways are exclusive or parallel splits/joins; structured loops are
expressed as an exclusive join (loop header) plus an exclusive split with a
back edge to that header. Pools group resources and carry their working
calendar; arrivals define the case inter-arrival process.

The on-disk format is JSON with a ``schema_version`` field; see
``model_to_json`` for the exact shape. Loading validates all structural
invariants and rejects graphs that are not block-structured.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .calendars import ResourceCalendar, calendar_from_json, calendar_to_json
from .delay_discovery import ActivityDelays, DelayReport
from .distribution import (
    DurationDistribution,
    distribution_from_json,
    distribution_to_json,
    fit_distribution,
)
from .errors import ModelValidationError, SchemaError

SCHEMA_VERSION = 1
START = "start"
END = "end"

DEFAULT_GAMMA_MAX = 10.0


@dataclass(frozen=True)
class TaskSpec:
    duration: DurationDistribution
    pool: str


@dataclass(frozen=True)
class GatewaySpec:
    kind: str       # "exclusive" | "parallel"
    direction: str  # "split" | "join"
    branch_probs: dict[str, float] | None = None


@dataclass(frozen=True)
class TimerSpec:
    duration: DurationDistribution
    attached_to: tuple[str, str]  # (activity label, "ex_post" | "ex_ante")


@dataclass(frozen=True)
class PoolSpec:
    resources: tuple[str, ...]
    calendar: ResourceCalendar


@dataclass(frozen=True)
class ArrivalSpec:
    interarrival: DurationDistribution
    calendar: ResourceCalendar | None = None


@dataclass(frozen=True)
class ScaleVector:
    """Per-activity multipliers applied to discovered delays before injection."""

    factors: dict[str, float] = field(default_factory=dict)
    gamma_max: float = DEFAULT_GAMMA_MAX

    def __post_init__(self):
        for activity, factor in self.factors.items():
            if factor < 0:
                raise ValueError(f"negative scale factor for {activity!r}: {factor}")
            if factor > self.gamma_max:
                raise ValueError(
                    f"scale factor for {activity!r} exceeds {self.gamma_max}: {factor}"
                )

    def factor(self, activity: str) -> float:
        return self.factors.get(activity, 1.0)


@dataclass(frozen=True)
class BpsModel:
    tasks: dict[str, TaskSpec]
    pools: dict[str, PoolSpec]
    arrivals: ArrivalSpec
    flows: tuple[tuple[str, str], ...]
    gateways: dict[str, GatewaySpec] = field(default_factory=dict)
    timers: dict[str, TimerSpec] = field(default_factory=dict)

    def __post_init__(self):
        # Flows are an edge set; canonical sorted order makes equality and
        # serialization structural.
        object.__setattr__(self, "flows", tuple(sorted(tuple(f) for f in self.flows)))
        _validate(self)

    def successors(self, node: str) -> list[str]:
        return sorted(t for s, t in self.flows if s == node)

    def predecessors(self, node: str) -> list[str]:
        return sorted(s for s, t in self.flows if t == node)

    def node_kind(self, node: str) -> str:
        if node == START or node == END:
            return node
        if node in self.tasks:
            return "task"
        if node in self.timers:
            return "timer"
        if node in self.gateways:
            return "gateway"
        raise KeyError(node)

    def resource_calendars(self) -> dict[str, ResourceCalendar]:
        """Calendar of every pooled resource, keyed by resource label."""
        out = {}
        for pool in self.pools.values():
            for resource in pool.resources:
                out[resource] = pool.calendar.with_resource(resource)
        return out


def _validate(model: BpsModel) -> None:
    nodes = {START, END}
    for group_name, group in (
        ("tasks", model.tasks), ("gateways", model.gateways), ("timers", model.timers),
    ):
        for node_id in group:
            if node_id in nodes:
                raise ModelValidationError(f"{group_name}.{node_id}: duplicate node id")
            nodes.add(node_id)

    succ: dict[str, list[str]] = {n: [] for n in nodes}
    pred: dict[str, list[str]] = {n: [] for n in nodes}
    for s, t in model.flows:
        if s not in nodes:
            raise ModelValidationError(f"flows: unknown source node {s!r}")
        if t not in nodes:
            raise ModelValidationError(f"flows: unknown target node {t!r}")
        succ[s].append(t)
        pred[t].append(s)
    for n in succ:
        succ[n].sort()
        pred[n].sort()

    _check_degrees(model, succ, pred)
    _check_pools_and_probs(model, succ)
    _check_block_structure(model, succ, pred)


def _check_degrees(model, succ, pred) -> None:
    def expect(node, n_in, n_out, label):
        if n_in is not None and len(pred[node]) != n_in:
            raise ModelValidationError(
                f"{label}: expected {n_in} incoming flow(s), found {len(pred[node])}"
            )
        if n_out is not None and len(succ[node]) != n_out:
            raise ModelValidationError(
                f"{label}: expected {n_out} outgoing flow(s), found {len(succ[node])}"
            )

    expect(START, 0, 1, "start")
    expect(END, 1, 0, "end")
    for name in model.tasks:
        expect(name, 1, 1, f"tasks.{name}")
    for name in model.timers:
        expect(name, 1, 1, f"timers.{name}")
    for name, gw in model.gateways.items():
        if gw.kind not in ("exclusive", "parallel"):
            raise ModelValidationError(f"gateways.{name}: unknown kind {gw.kind!r}")
        if gw.direction == "split":
            expect(name, 1, None, f"gateways.{name}")
            if len(succ[name]) < 2:
                raise ModelValidationError(
                    f"gateways.{name}: a split needs at least 2 outgoing flows"
                )
        elif gw.direction == "join":
            expect(name, None, 1, f"gateways.{name}")
            if len(pred[name]) < 2:
                raise ModelValidationError(
                    f"gateways.{name}: a join needs at least 2 incoming flows"
                )
        else:
            raise ModelValidationError(
                f"gateways.{name}: unknown direction {gw.direction!r}"
            )


def _check_pools_and_probs(model, succ) -> None:
    for name, task in model.tasks.items():
        if task.pool not in model.pools:
            raise ModelValidationError(f"tasks.{name}: unknown pool {task.pool!r}")
    for name, pool in model.pools.items():
        if not pool.resources:
            raise ModelValidationError(f"pools.{name}: empty resource set")
        if not pool.calendar.week_intervals:
            raise ModelValidationError(f"pools.{name}: calendar has no working slots")
    for name, timer in model.timers.items():
        activity, attribution = timer.attached_to
        if activity not in model.tasks:
            raise ModelValidationError(
                f"timers.{name}: attached to unknown activity {activity!r}"
            )
        if attribution not in ("ex_post", "ex_ante"):
            raise ModelValidationError(
                f"timers.{name}: unknown attribution {attribution!r}"
            )
    for name, gw in model.gateways.items():
        if gw.kind == "exclusive" and gw.direction == "split":
            probs = gw.branch_probs or {}
            if set(probs) != set(succ[name]):
                raise ModelValidationError(
                    f"gateways.{name}: branch_probs must cover successors "
                    f"{succ[name]}, got {sorted(probs)}"
                )
            if any(p < 0 for p in probs.values()):
                raise ModelValidationError(f"gateways.{name}: negative branch probability")
            total = sum(probs.values())
            if abs(total - 1.0) > 1e-9:
                raise ModelValidationError(
                    f"gateways.{name}: branch probabilities sum to {total}, expected 1"
                )
        elif gw.branch_probs:
            raise ModelValidationError(
                f"gateways.{name}: branch_probs only apply to exclusive splits"
            )


def _find_back_edges(succ) -> set[tuple[str, str]]:
    """Edges closing a cycle, via iterative DFS from start."""
    back = set()
    color = {}  # node -> "active" | "done"
    stack = [(START, iter(succ[START]))]
    color[START] = "active"
    while stack:
        node, it = stack[-1]
        advanced = False
        for nxt in it:
            state = color.get(nxt)
            if state == "active":
                back.add((node, nxt))
            elif state is None:
                color[nxt] = "active"
                stack.append((nxt, iter(succ[nxt])))
                advanced = True
                break
        if not advanced:
            color[node] = "done"
            stack.pop()
    return back


def _check_block_structure(model, succ, pred) -> None:
    """Reject graphs that are not block-structured (matched gateway pairs)."""
    back_edges = _find_back_edges(succ)
    loop_headers = {t for _, t in back_edges}
    loop_exits = {s for s, _ in back_edges}

    reachable = set(_bfs(START, succ))
    all_nodes = set(succ)
    if reachable != all_nodes:
        missing = sorted(all_nodes - reachable)
        raise ModelValidationError(f"nodes unreachable from start: {missing}")
    co_reachable = set(_bfs(END, pred))
    if co_reachable != all_nodes:
        stuck = sorted(all_nodes - co_reachable)
        raise ModelValidationError(f"end not reachable from: {stuck}")

    for node in loop_headers:
        gw = model.gateways.get(node)
        if gw is None or gw.kind != "exclusive" or gw.direction != "join":
            raise ModelValidationError(
                f"{node}: loop entry must be an exclusive join gateway"
            )
        if len(pred[node]) != 2:
            raise ModelValidationError(
                f"gateways.{node}: loop entry must have exactly 2 incoming flows"
            )
    for node in loop_exits:
        gw = model.gateways.get(node)
        if gw is None or gw.kind != "exclusive" or gw.direction != "split":
            raise ModelValidationError(
                f"{node}: loop exit must be an exclusive split gateway"
            )
        if len(succ[node]) != 2:
            raise ModelValidationError(
                f"gateways.{node}: loop exit must have exactly 2 outgoing flows"
            )

    budget = 10 * (len(all_nodes) + 1) * (len(all_nodes) + 1)

    def walk(node: str, inside_branch: bool, loop_stack: list[str]) -> str:
        nonlocal budget
        while True:
            budget -= 1
            if budget < 0:
                raise ModelValidationError("model is not block-structured")
            if node == END:
                if inside_branch:
                    raise ModelValidationError(
                        "a gateway branch reaches end without a matching join"
                    )
                return node
            kind = model.node_kind(node)
            if kind in ("task", "timer", "start"):
                node = succ[node][0]
                continue
            gw = model.gateways[node]
            if gw.direction == "split":
                if node in loop_exits:
                    back_targets = [t for t in succ[node] if (node, t) in back_edges]
                    if len(back_targets) != 1:
                        raise ModelValidationError(
                            f"gateways.{node}: loop exit needs exactly one back edge"
                        )
                    if not loop_stack or loop_stack[-1] != back_targets[0]:
                        raise ModelValidationError(
                            f"gateways.{node}: loop back edge does not close the "
                            f"innermost open loop"
                        )
                    loop_stack.pop()
                    node = next(t for t in succ[node] if (node, t) not in back_edges)
                    continue
                joins = {walk(branch, True, loop_stack) for branch in succ[node]}
                if len(joins) != 1:
                    raise ModelValidationError(
                        f"gateways.{node}: branches close at different joins {sorted(joins)}"
                    )
                join = joins.pop()
                join_gw = model.gateways[join]
                if join_gw.kind != gw.kind:
                    raise ModelValidationError(
                        f"gateways.{node}: {gw.kind} split closed by {join_gw.kind} "
                        f"join {join}"
                    )
                if len(pred[join]) != len(succ[node]):
                    raise ModelValidationError(
                        f"gateways.{join}: joins {len(pred[join])} flows but its "
                        f"split {node} opens {len(succ[node])}"
                    )
                node = succ[join][0]
                continue
            # A join: either a loop header (pass through) or it closes a branch.
            if node in loop_headers:
                loop_stack.append(node)
                node = succ[node][0]
                continue
            if not inside_branch:
                raise ModelValidationError(
                    f"gateways.{node}: join without a matching open split"
                )
            return node

    walk(START, False, [])


def _bfs(origin, edges) -> list[str]:
    seen = [origin]
    seen_set = {origin}
    i = 0
    while i < len(seen):
        for nxt in edges[seen[i]]:
            if nxt not in seen_set:
                seen_set.add(nxt)
                seen.append(nxt)
        i += 1
    return seen


def inject_timers(model: BpsModel, report: DelayReport) -> BpsModel:
    """Splice one timer per reported activity onto its task-adjacent flow.

    Ex-ante timers land on the task's sole incoming flow, ex-post timers on
    its sole outgoing flow. An existing timer for the same activity and
    attribution is replaced, so injection is idempotent.
    """
    flows = list(model.flows)
    gateways = dict(model.gateways)
    timers = dict(model.timers)
    attribution = report.attribution
    for activity in sorted(report.activities):
        if activity not in model.tasks:
            raise ModelValidationError(
                f"delay report names unknown activity {activity!r}"
            )
        for timer_id, spec in list(timers.items()):
            if spec.attached_to == (activity, attribution):
                _splice_out(flows, gateways, timer_id)
                del timers[timer_id]
        timer_id = _timer_id(activity, attribution)
        if attribution == "ex_ante":
            adjacent = [(s, t) for s, t in flows if t == activity]
        else:
            adjacent = [(s, t) for s, t in flows if s == activity]
        if len(adjacent) != 1:
            raise ModelValidationError(
                f"tasks.{activity}: expected one adjacent flow for timer "
                f"injection, found {len(adjacent)}"
            )
        s, t = adjacent[0]
        flows.remove((s, t))
        flows.extend([(s, timer_id), (timer_id, t)])
        _rename_branch(gateways, s, t, timer_id)
        timers[timer_id] = TimerSpec(
            duration=report.activities[activity].distribution,
            attached_to=(activity, attribution),
        )
    return replace(model, flows=tuple(flows), gateways=gateways, timers=timers)


def _timer_id(activity: str, attribution: str) -> str:
    side = "before" if attribution == "ex_ante" else "after"
    return f"delay-{side}-{activity}"


def _rename_branch(gateways: dict, source: str, old: str, new: str) -> None:
    """Keep an exclusive split's branch probabilities keyed by its successors."""
    gw = gateways.get(source)
    if gw is not None and gw.branch_probs and old in gw.branch_probs:
        probs = dict(gw.branch_probs)
        probs[new] = probs.pop(old)
        gateways[source] = replace(gw, branch_probs=probs)


def _splice_out(flows: list[tuple[str, str]], gateways: dict, node: str) -> None:
    incoming = [(s, t) for s, t in flows if t == node]
    outgoing = [(s, t) for s, t in flows if s == node]
    if len(incoming) != 1 or len(outgoing) != 1:
        raise ModelValidationError(f"cannot splice out {node!r}: not a pass-through node")
    flows.remove(incoming[0])
    flows.remove(outgoing[0])
    flows.append((incoming[0][0], outgoing[0][1]))
    _rename_branch(gateways, incoming[0][0], node, outgoing[0][1])


def strip_timers(model: BpsModel) -> BpsModel:
    """Remove every timer event, reconnecting the flows around each."""
    flows = list(model.flows)
    gateways = dict(model.gateways)
    for timer_id in model.timers:
        _splice_out(flows, gateways, timer_id)
    return replace(model, flows=tuple(flows), gateways=gateways, timers={})


def scale_report(report: DelayReport, gamma: ScaleVector) -> DelayReport:
    """Multiply each activity's delays by its scale factor and refit.

    Activities missing from the scale vector keep factor 1. Activities whose
    scaled positive-delay share no longer exceeds the report's outlier
    threshold are dropped, mirroring the discovery-time filter.
    """
    activities = {}
    for activity, entry in report.activities.items():
        if not entry.delays:
            raise ValueError(
                f"report entry for {activity!r} has no raw delays; cannot scale"
            )
        factor = gamma.factor(activity)
        scaled = tuple(factor * d for d in entry.delays)
        positive_ratio = sum(1 for d in scaled if d > 0) / len(scaled)
        if positive_ratio <= report.outlier_threshold:
            continue
        activities[activity] = ActivityDelays(
            delays=scaled, distribution=fit_distribution(scaled)
        )
    return replace(report, activities=activities)


def model_to_json(model: BpsModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "arrivals": {
            "interarrival": distribution_to_json(model.arrivals.interarrival),
            "calendar": (
                calendar_to_json(model.arrivals.calendar)
                if model.arrivals.calendar else None
            ),
        },
        "tasks": {
            name: {
                "duration": distribution_to_json(spec.duration),
                "pool": spec.pool,
            }
            for name, spec in sorted(model.tasks.items())
        },
        "gateways": {
            name: {
                "kind": spec.kind,
                "direction": spec.direction,
                **(
                    {"branch_probs": dict(sorted(spec.branch_probs.items()))}
                    if spec.branch_probs is not None else {}
                ),
            }
            for name, spec in sorted(model.gateways.items())
        },
        "timers": {
            name: {
                "duration": distribution_to_json(spec.duration),
                "attached_to": {
                    "activity": spec.attached_to[0],
                    "attribution": spec.attached_to[1],
                },
            }
            for name, spec in sorted(model.timers.items())
        },
        "flows": sorted([s, t] for s, t in model.flows),
        "pools": {
            name: {
                "resources": sorted(spec.resources),
                "calendar": calendar_to_json(spec.calendar),
            }
            for name, spec in sorted(model.pools.items())
        },
    }


def _get(data, key, path):
    try:
        return data[key]
    except (KeyError, TypeError, IndexError):
        raise SchemaError(f"model JSON: missing or malformed {path}") from None


def model_from_json(data: dict) -> BpsModel:
    version = _get(data, "schema_version", "schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}")
    arrivals_raw = _get(data, "arrivals", "arrivals")
    arrivals = ArrivalSpec(
        interarrival=distribution_from_json(
            _get(arrivals_raw, "interarrival", "arrivals.interarrival")
        ),
        calendar=(
            calendar_from_json(arrivals_raw["calendar"])
            if arrivals_raw.get("calendar") else None
        ),
    )
    tasks = {}
    for name, raw in _get(data, "tasks", "tasks").items():
        tasks[name] = TaskSpec(
            duration=distribution_from_json(_get(raw, "duration", f"tasks.{name}.duration")),
            pool=_get(raw, "pool", f"tasks.{name}.pool"),
        )
    gateways = {}
    for name, raw in data.get("gateways", {}).items():
        gateways[name] = GatewaySpec(
            kind=_get(raw, "kind", f"gateways.{name}.kind"),
            direction=_get(raw, "direction", f"gateways.{name}.direction"),
            branch_probs=(
                {k: float(v) for k, v in raw["branch_probs"].items()}
                if "branch_probs" in raw else None
            ),
        )
    timers = {}
    for name, raw in data.get("timers", {}).items():
        attached = _get(raw, "attached_to", f"timers.{name}.attached_to")
        timers[name] = TimerSpec(
            duration=distribution_from_json(_get(raw, "duration", f"timers.{name}.duration")),
            attached_to=(
                _get(attached, "activity", f"timers.{name}.attached_to.activity"),
                _get(attached, "attribution", f"timers.{name}.attached_to.attribution"),
            ),
        )
    pools = {}
    for name, raw in _get(data, "pools", "pools").items():
        pools[name] = PoolSpec(
            resources=tuple(_get(raw, "resources", f"pools.{name}.resources")),
            calendar=calendar_from_json(_get(raw, "calendar", f"pools.{name}.calendar")),
        )
    flows = tuple(
        (flow[0], flow[1]) for flow in _get(data, "flows", "flows")
    )
    return BpsModel(
        tasks=tasks, pools=pools, arrivals=arrivals,
        flows=flows, gateways=gateways, timers=timers,
    )


def load_model(path) -> BpsModel:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return model_from_json(data)


def save_model(model: BpsModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, indent=2, sort_keys=True)
        fh.write("\n")
