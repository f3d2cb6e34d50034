"""Estimation of extraneous delays for causally consecutive instance pairs.

Three estimators are provided. The naive one measures from the latest instant
the target's resource demonstrably became available (end of its previous work
item or of its previous off-duty period) to the recorded start. The
eclipse-aware one scans the whole waiting window for stretches in which the
resource was simultaneously idle and on duty, and spans from the first to the
last such evidence, so delays partially hidden behind other work or off-duty
periods are still recovered. The extrapolated variant widens that span halfway
towards the window bounds to correct the expected truncation error.

Delays are grouped per activity, attributed either to the target activity
(ex ante) or to the enabling activity (ex post), and activities whose share
of positive delays does not exceed the outlier threshold are dropped.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

from .calendars import (
    NonWorkingIntervals,
    ResourceCalendar,
    complement_intervals,
    merge_intervals,
    non_working_intervals,
)
from .distribution import (
    DurationDistribution,
    distribution_from_json,
    distribution_to_json,
    fit_distribution,
)
from .errors import SchemaError
from .log_io import ActivityInstance, ActivityInstanceLog
from .metrics import summarize
from .timeline import (
    DEFAULT_CONCURRENCY_THRESHOLD,
    CausalPairSet,
    causal_pairs,
    discover_concurrency,
)

ESTIMATORS = ("naive", "eclipse_aware", "eclipse_aware_extrapolated")
ATTRIBUTIONS = ("ex_post", "ex_ante")

# Default minimum availability-interval duration: 5 minutes for real logs.
DEFAULT_MIN_GAP = 300.0
DEFAULT_OUTLIER_THRESHOLD = 0.05


@dataclass(frozen=True)
class DelayConfig:
    """Knobs of the delay discovery step."""

    estimator: str = "eclipse_aware_extrapolated"
    min_gap: float = DEFAULT_MIN_GAP
    outlier_threshold: float = DEFAULT_OUTLIER_THRESHOLD
    attribution: str = "ex_ante"

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise SchemaError(
                f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}"
            )
        if self.attribution not in ATTRIBUTIONS:
            raise SchemaError(
                f"attribution must be one of {ATTRIBUTIONS}, got {self.attribution!r}"
            )
        if self.min_gap < 0:
            raise SchemaError("min_gap must be non-negative")
        if not 0.0 <= self.outlier_threshold <= 1.0:
            raise SchemaError("outlier_threshold must be within [0, 1]")


@dataclass(frozen=True)
class PairDelay:
    """Waiting-time decomposition of one causally consecutive pair."""

    source: ActivityInstance
    target: ActivityInstance
    waiting: int
    extraneous: float
    first_available: int | None = None
    last_available: int | None = None


@dataclass(frozen=True)
class DelayMultiset:
    """All extraneous delays attributed to one activity."""

    activity: str
    delays: tuple[float, ...]

    @property
    def positive_ratio(self) -> float:
        if not self.delays:
            return 0.0
        return sum(1 for d in self.delays if d > 0) / len(self.delays)


class _ResourceView:
    """Per-resource evidence index: sorted busy intervals and off-duty intervals."""

    def __init__(self, instances: list[ActivityInstance], nw: NonWorkingIntervals):
        self.instance_ends = sorted(i.end for i in instances)
        self.busy = merge_intervals((i.start, i.end) for i in instances)
        self._busy_starts = [a for a, _ in self.busy]
        self.nw = list(nw.intervals)
        self._nw_starts = [a for a, _ in self.nw]
        self.nw_ends = sorted(b for _, b in self.nw)

    @staticmethod
    def _clip(intervals, starts, lo: int, hi: int):
        """Positive-length pieces of sorted disjoint intervals inside [lo, hi]."""
        idx = max(bisect_left(starts, lo) - 1, 0)
        out = []
        for a, b in intervals[idx:]:
            if a >= hi:
                break
            a, b = max(a, lo), min(b, hi)
            if b > a:
                out.append((a, b))
        return out

    def blocked_within(self, lo: int, hi: int) -> list[tuple[int, int]]:
        return merge_intervals(
            self._clip(self.busy, self._busy_starts, lo, hi)
            + self._clip(self.nw, self._nw_starts, lo, hi)
        )


class _DelayEngine:
    """Shared-index evaluator of all three estimators over one log."""

    def __init__(self, log: ActivityInstanceLog,
                 nw_by_resource: dict[str, NonWorkingIntervals]):
        span = log.span
        self.span_start = span[0] if span else 0
        by_resource: dict[str, list[ActivityInstance]] = {}
        for inst in log:
            by_resource.setdefault(inst.resource, []).append(inst)
        self.views = {}
        for resource, instances in by_resource.items():
            nw = nw_by_resource.get(resource)
            if nw is None:
                raise KeyError(f"no non-working intervals for resource {resource!r}")
            self.views[resource] = _ResourceView(instances, nw)

    def availability_time(self, target: ActivityInstance) -> int:
        view = self.views[target.resource]
        best = None
        idx = bisect_right(view.instance_ends, target.start)
        if idx:
            best = view.instance_ends[idx - 1]
        idx = bisect_right(view.nw_ends, target.start)
        if idx:
            end = view.nw_ends[idx - 1]
            best = end if best is None else max(best, end)
        return self.span_start if best is None else best

    def free_intervals(self, source: ActivityInstance, target: ActivityInstance,
                       min_gap: float) -> list[tuple[int, int]]:
        lo, hi = source.end, target.start
        if hi <= lo:
            return []
        view = self.views[target.resource]
        gaps = complement_intervals(view.blocked_within(lo, hi), (lo, hi))
        return [(a, b) for a, b in gaps if b - a >= min_gap]

    def naive(self, source: ActivityInstance, target: ActivityInstance) -> PairDelay:
        earliest = max(self.availability_time(target), source.end)
        return PairDelay(
            source=source, target=target,
            waiting=target.start - source.end,
            extraneous=target.start - earliest,
        )

    def eclipse(self, source: ActivityInstance, target: ActivityInstance,
                min_gap: float) -> PairDelay:
        intervals = self.free_intervals(source, target, min_gap)
        waiting = target.start - source.end
        if not intervals:
            return PairDelay(source=source, target=target, waiting=waiting, extraneous=0.0)
        fat = intervals[0][0]
        lat = intervals[-1][1]
        return PairDelay(
            source=source, target=target, waiting=waiting,
            extraneous=lat - fat, first_available=fat, last_available=lat,
        )

    def extrapolated(self, source: ActivityInstance, target: ActivityInstance,
                     min_gap: float) -> PairDelay:
        base = self.eclipse(source, target, min_gap)
        if base.first_available is None:
            return base
        fat = base.first_available - (base.first_available - source.end) / 2
        lat = base.last_available + (target.start - base.last_available) / 2
        return PairDelay(
            source=source, target=target, waiting=base.waiting,
            extraneous=lat - fat,
            first_available=base.first_available,
            last_available=base.last_available,
        )

    def estimate(self, source, target, estimator: str, min_gap: float) -> PairDelay:
        if estimator == "naive":
            return self.naive(source, target)
        if estimator == "eclipse_aware":
            return self.eclipse(source, target, min_gap)
        return self.extrapolated(source, target, min_gap)


def _single_resource_engine(log: ActivityInstanceLog,
                            nw: NonWorkingIntervals) -> _DelayEngine:
    relevant = ActivityInstanceLog(
        tuple(i for i in log if i.resource == nw.resource)
    )
    engine = _DelayEngine.__new__(_DelayEngine)
    span = log.span
    engine.span_start = span[0] if span else 0
    engine.views = {nw.resource: _ResourceView(list(relevant), nw)}
    return engine


def resource_availability_time(target: ActivityInstance, log: ActivityInstanceLog,
                               nw: NonWorkingIntervals) -> int:
    """Latest evidence that the target's resource became available before its start.

    The maximum of (a) end times of same-resource instances ending at or
    before the target's start and (b) ends of the resource's off-duty
    intervals at or before that start; the log span start when no evidence
    exists at all.
    """
    return _single_resource_engine(log, nw).availability_time(target)


def naive_delay(pair, log: ActivityInstanceLog, nw: NonWorkingIntervals) -> PairDelay:
    """Delay from the target's earliest possible start to its recorded start."""
    source, target = pair
    return _single_resource_engine(log, nw).naive(source, target)


def availability_intervals(pair, log: ActivityInstanceLog, nw: NonWorkingIntervals,
                           min_gap: float) -> list[tuple[int, int]]:
    """Maximal idle-and-on-duty stretches of the waiting window, >= min_gap long."""
    source, target = pair
    return _single_resource_engine(log, nw).free_intervals(source, target, min_gap)


def eclipse_delay(pair, log: ActivityInstanceLog, nw: NonWorkingIntervals,
                  min_gap: float) -> PairDelay:
    """Delay spanning the first to the last availability evidence in the window."""
    source, target = pair
    return _single_resource_engine(log, nw).eclipse(source, target, min_gap)


def extrapolated_delay(pair, log: ActivityInstanceLog, nw: NonWorkingIntervals,
                       min_gap: float) -> PairDelay:
    """Eclipse-aware delay widened halfway towards the waiting-window bounds."""
    source, target = pair
    return _single_resource_engine(log, nw).extrapolated(source, target, min_gap)


def estimate_pair_delays(
    log: ActivityInstanceLog,
    calendars: dict[str, ResourceCalendar],
    config: DelayConfig,
    pairs: CausalPairSet,
) -> list[PairDelay]:
    """Run the configured estimator over every causal pair with shared indexes."""
    span = log.span
    if span is None:
        return []
    nw_by_resource = {}
    for resource in log.resources():
        cal = calendars.get(resource)
        if cal is None:
            raise KeyError(f"no calendar for resource {resource!r}")
        nw_by_resource[resource] = non_working_intervals(cal, span)
    engine = _DelayEngine(log, nw_by_resource)
    return [
        engine.estimate(source, target, config.estimator, config.min_gap)
        for source, target in pairs.pairs
    ]


def group_delays(pair_delays, attribution: str,
                 outlier_threshold: float) -> list[DelayMultiset]:
    """Group delays per activity and drop activities with too few positive delays.

    Ex-ante attribution keys a delay by the target activity, ex-post by the
    source activity. Surviving multisets keep their zero entries so that the
    fitted distribution reflects how often no delay occurred.
    """
    if attribution not in ATTRIBUTIONS:
        raise SchemaError(f"unknown attribution {attribution!r}")
    grouped: dict[str, list[float]] = {}
    for pd in pair_delays:
        key = pd.target.activity if attribution == "ex_ante" else pd.source.activity
        grouped.setdefault(key, []).append(pd.extraneous)
    multisets = [
        DelayMultiset(activity=activity, delays=tuple(delays))
        for activity, delays in sorted(grouped.items())
    ]
    return [m for m in multisets if m.positive_ratio > outlier_threshold]


@dataclass(frozen=True)
class ActivityDelays:
    """One activity's delay multiset and the distribution fitted to it."""

    delays: tuple[float, ...]
    distribution: DurationDistribution


@dataclass(frozen=True)
class DelayReport:
    """Per-activity extraneous delays discovered under one configuration."""

    estimator: str
    attribution: str
    min_gap: float
    outlier_threshold: float
    activities: dict[str, ActivityDelays] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not self.activities

    def mean_delays(self) -> dict[str, float]:
        return {
            activity: sum(entry.delays) / len(entry.delays)
            for activity, entry in self.activities.items()
        }

    def to_json(self, emit_raw: bool = False) -> dict:
        payload = {
            "estimator": self.estimator,
            "attribution": self.attribution,
            "min_gap": self.min_gap,
            "outlier_threshold": self.outlier_threshold,
            "activities": {},
        }
        for activity in sorted(self.activities):
            entry = self.activities[activity]
            positive = sum(1 for d in entry.delays if d > 0)
            record = {
                "count": len(entry.delays),
                "positive_ratio": positive / len(entry.delays),
                "summary": summarize(entry.delays),
                "distribution": distribution_to_json(entry.distribution),
            }
            if emit_raw:
                record["delays"] = list(entry.delays)
            payload["activities"][activity] = record
        return payload

    @classmethod
    def from_json(cls, data: dict) -> "DelayReport":
        try:
            activities = {}
            for activity, record in data["activities"].items():
                activities[activity] = ActivityDelays(
                    delays=tuple(record.get("delays", ())),
                    distribution=distribution_from_json(record["distribution"]),
                )
            return cls(
                estimator=data["estimator"],
                attribution=data["attribution"],
                min_gap=float(data["min_gap"]),
                outlier_threshold=float(data["outlier_threshold"]),
                activities=activities,
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed delay report JSON: {exc}") from None


def discover_delay_report(
    log: ActivityInstanceLog,
    calendars: dict[str, ResourceCalendar],
    config: DelayConfig,
    concurrency_threshold: float = DEFAULT_CONCURRENCY_THRESHOLD,
    pairs: CausalPairSet | None = None,
) -> DelayReport:
    """End-to-end discovery: causal pairs, per-pair delays, grouping, fitting."""
    if pairs is None:
        relation = discover_concurrency(log, concurrency_threshold)
        pairs = causal_pairs(log, relation)
    pair_delays = estimate_pair_delays(log, calendars, config, pairs)
    multisets = group_delays(pair_delays, config.attribution, config.outlier_threshold)
    activities = {
        m.activity: ActivityDelays(
            delays=m.delays, distribution=fit_distribution(m.delays)
        )
        for m in multisets
    }
    return DelayReport(
        estimator=config.estimator,
        attribution=config.attribution,
        min_gap=config.min_gap,
        outlier_threshold=config.outlier_threshold,
        activities=activities,
    )
