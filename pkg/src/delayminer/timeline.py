"""Concurrency discovery and causally consecutive instance pairs.

Two activities are considered concurrent when, across the traces where both
occur, the fraction of co-occurrences with at least one overlapping instance
pair reaches a threshold. The causal predecessor of an instance is then the
latest-ending, non-overlapping, non-concurrent prior instance of its trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .log_io import ActivityInstance, ActivityInstanceLog

DEFAULT_CONCURRENCY_THRESHOLD = 0.75


def intervals_overlap(s1: int, e1: int, s2: int, e2: int) -> bool:
    """True when the two intervals share a positive-length stretch of time."""
    return s1 < e2 and s2 < e1


@dataclass(frozen=True)
class ConcurrencyRelation:
    """Symmetric set of activity pairs declared concurrent."""

    pairs: frozenset[tuple[str, str]] = field(default_factory=frozenset)
    threshold: float = DEFAULT_CONCURRENCY_THRESHOLD

    def __post_init__(self):
        closed = set()
        for a, b in self.pairs:
            if a == b:
                raise ValueError(f"activity {a!r} cannot be concurrent with itself")
            closed.add((a, b))
            closed.add((b, a))
        object.__setattr__(self, "pairs", frozenset(closed))

    def are_concurrent(self, a: str, b: str) -> bool:
        return (a, b) in self.pairs


@dataclass(frozen=True)
class CausalPairSet:
    """Causally consecutive (source, target) pairs plus predecessor-less orphans."""

    pairs: tuple[tuple[ActivityInstance, ActivityInstance], ...]
    orphans: tuple[ActivityInstance, ...]


def discover_concurrency(log: ActivityInstanceLog, zeta: float) -> ConcurrencyRelation:
    """Declare concurrent every activity pair whose overlap ratio reaches zeta.

    The ratio is counted per trace co-occurrence: a trace containing both
    activities counts once, and counts as overlapping when any instance of one
    overlaps any instance of the other within that trace.
    """
    if not 0.0 <= zeta <= 1.0:
        raise ValueError(f"zeta must be within [0, 1], got {zeta}")
    co_occurrences: dict[tuple[str, str], int] = {}
    overlapping: dict[tuple[str, str], int] = {}
    for trace in log.traces().values():
        by_activity: dict[str, list[ActivityInstance]] = {}
        for inst in trace:
            by_activity.setdefault(inst.activity, []).append(inst)
        labels = sorted(by_activity)
        for i, a in enumerate(labels):
            for b in labels[i + 1:]:
                key = (a, b)
                co_occurrences[key] = co_occurrences.get(key, 0) + 1
                if any(
                    intervals_overlap(x.start, x.end, y.start, y.end)
                    for x in by_activity[a]
                    for y in by_activity[b]
                ):
                    overlapping[key] = overlapping.get(key, 0) + 1
    concurrent = {
        key
        for key, total in co_occurrences.items()
        if overlapping.get(key, 0) / total >= zeta
    }
    return ConcurrencyRelation(pairs=frozenset(concurrent), threshold=zeta)


def causal_pairs(log: ActivityInstanceLog, rel: ConcurrencyRelation) -> CausalPairSet:
    """Compute the causal predecessor of every instance of the log.

    A predecessor of a target is any same-trace instance ending at or before
    the target's start whose activity is not concurrent with the target's; the
    causal predecessor is the one with the maximum end time. Ties break by
    lexicographic activity label, then log order. Instances with no
    predecessor (trace heads, or everything prior concurrent/overlapping)
    are reported as orphans.
    """
    pairs = []
    orphans = []
    for trace in log.traces().values():
        # One shared scan order per trace: candidates sorted so the first
        # admissible hit is the causal predecessor under the tie-break rule.
        order = sorted(
            range(len(trace)),
            key=lambda i: (-trace[i].end, trace[i].activity, i),
        )
        for t_idx, target in enumerate(trace):
            source = None
            for c_idx in order:
                cand = trace[c_idx]
                if c_idx == t_idx or cand.end > target.start:
                    continue
                if rel.are_concurrent(cand.activity, target.activity):
                    continue
                source = cand
                break
            if source is None:
                orphans.append(target)
            else:
                pairs.append((source, target))
    return CausalPairSet(pairs=tuple(pairs), orphans=tuple(orphans))
