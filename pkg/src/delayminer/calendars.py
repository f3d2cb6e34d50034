"""Weekly resource working calendars and absolute non-working intervals.

Calendars are weekly: a set of (weekday, start-of-day, end-of-day) working
slots. All absolute arithmetic is done in UTC epoch seconds; working slots
are half-open [from, to) so a resource is off duty at the exact end of a
slot. Non-working intervals are the complement of working time, clipped to
a span and reported as closed [a, b] pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SchemaError
from .log_io import ActivityInstanceLog

SECONDS_PER_DAY = 86400
SECONDS_PER_WEEK = 7 * SECONDS_PER_DAY
# 1970-01-01 was a Thursday; shift so week-seconds count from Monday 00:00.
_EPOCH_TO_MONDAY = 3 * SECONDS_PER_DAY

WEEKDAY_NAMES = (
    "MONDAY", "TUESDAY", "WEDNESDAY", "THURSDAY", "FRIDAY", "SATURDAY", "SUNDAY",
)


def merge_intervals(intervals) -> list[tuple[int, int]]:
    """Sort and maximally merge intervals, coalescing touching ones.

    Zero-length inputs are dropped.
    """
    cleaned = sorted((a, b) for a, b in intervals if b > a)
    merged: list[tuple[int, int]] = []
    for a, b in cleaned:
        if merged and a <= merged[-1][1]:
            if b > merged[-1][1]:
                merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    return merged


def complement_intervals(intervals, span: tuple[int, int]) -> list[tuple[int, int]]:
    """Gaps of `span` not covered by `intervals` (which must be merged/sorted)."""
    gaps = []
    cursor = span[0]
    for a, b in intervals:
        a = max(a, span[0])
        b = min(b, span[1])
        if b <= a:
            continue
        if a > cursor:
            gaps.append((cursor, a))
        cursor = max(cursor, b)
    if cursor < span[1]:
        gaps.append((cursor, span[1]))
    return gaps


def seconds_of_week(ts: int) -> int:
    """Seconds elapsed since the most recent Monday 00:00 UTC."""
    return (ts + _EPOCH_TO_MONDAY) % SECONDS_PER_WEEK


@dataclass(frozen=True)
class CalendarSlot:
    """One weekly working slot; weekday 0 is Monday, bounds in seconds of day."""

    weekday: int
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.weekday <= 6:
            raise SchemaError(f"weekday out of range: {self.weekday}")
        if not (0 <= self.start < self.end <= SECONDS_PER_DAY):
            raise SchemaError(
                f"slot bounds must satisfy 0 <= start < end <= 86400, "
                f"got [{self.start}, {self.end}]"
            )


class ResourceCalendar:
    """Weekly working calendar of one resource (or of a whole pool)."""

    def __init__(self, resource: str, slots) -> None:
        self.resource = resource
        self.slots = tuple(sorted(set(slots), key=lambda s: (s.weekday, s.start, s.end)))
        # Week-relative working intervals, merged maximally (also across
        # midnight where consecutive days join up, e.g. a 24/7 calendar).
        weekly = [
            (s.weekday * SECONDS_PER_DAY + s.start, s.weekday * SECONDS_PER_DAY + s.end)
            for s in self.slots
        ]
        self._week_intervals = tuple(merge_intervals(weekly))

    def __repr__(self) -> str:
        return f"ResourceCalendar({self.resource!r}, {len(self.slots)} slots)"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ResourceCalendar)
            and self.resource == other.resource
            and self._week_intervals == other._week_intervals
        )

    def __hash__(self) -> int:
        return hash((self.resource, self._week_intervals))

    @classmethod
    def always_available(cls, resource: str) -> "ResourceCalendar":
        return cls(resource, [CalendarSlot(d, 0, SECONDS_PER_DAY) for d in range(7)])

    def with_resource(self, resource: str) -> "ResourceCalendar":
        return ResourceCalendar(resource, self.slots)

    @property
    def week_intervals(self) -> tuple[tuple[int, int], ...]:
        return self._week_intervals

    def is_working(self, ts: int) -> bool:
        """True when ts falls inside a working slot (slots are [from, to))."""
        sow = seconds_of_week(ts)
        return any(a <= sow < b for a, b in self._week_intervals)

    def next_working_instant(self, ts: int) -> int:
        """Smallest working instant >= ts; raises on an empty calendar."""
        if not self._week_intervals:
            raise SchemaError(f"calendar of {self.resource!r} has no working slots")
        sow = seconds_of_week(ts)
        for a, b in self._week_intervals:
            if sow < b:
                return ts + max(a - sow, 0)
        # Past the last slot of this week: jump to the first slot of the next.
        return ts + (SECONDS_PER_WEEK - sow) + self._week_intervals[0][0]

    def working_intervals(self, span: tuple[int, int]) -> list[tuple[int, int]]:
        """Absolute working intervals intersected with [span.start, span.end]."""
        start, end = span
        if end <= start or not self._week_intervals:
            return []
        out = []
        week_origin = start - seconds_of_week(start)
        while week_origin < end:
            for a, b in self._week_intervals:
                lo = max(week_origin + a, start)
                hi = min(week_origin + b, end)
                if hi > lo:
                    out.append((lo, hi))
            week_origin += SECONDS_PER_WEEK
        return merge_intervals(out)

    def advance_working(self, ts: int, duration: int) -> int:
        """Instant at which `duration` seconds of working time after ts have elapsed.

        Off-duty stretches do not count towards the duration, so work started
        at ts pauses over non-working periods and resumes at the next slot.
        """
        if duration < 0:
            raise ValueError("duration must be non-negative")
        remaining = duration
        pos = ts
        while True:
            pos = self.next_working_instant(pos)
            sow = seconds_of_week(pos)
            slot_end = next(b for a, b in self._week_intervals if a <= sow < b)
            available = slot_end - sow
            if remaining <= available:
                return pos + remaining
            remaining -= available
            pos += available


@dataclass(frozen=True)
class NonWorkingIntervals:
    """Absolute off-duty intervals of one resource within a log span."""

    resource: str
    intervals: tuple[tuple[int, int], ...]


def non_working_intervals(cal: ResourceCalendar, span: tuple[int, int]) -> NonWorkingIntervals:
    """Complement of the calendar's working time within span, merged maximally."""
    if span[0] > span[1]:
        raise ValueError(f"invalid span {span}")
    working = cal.working_intervals(span)
    return NonWorkingIntervals(
        resource=cal.resource,
        intervals=tuple(complement_intervals(working, span)),
    )


def discover_calendars(
    log: ActivityInstanceLog,
    granularity: int = 3600,
    support: float = 0.1,
    confidence: float = 0.6,
) -> dict[str, ResourceCalendar]:
    """Estimate weekly working calendars from observed activity timestamps.

    Each start and end timestamp of a resource counts as one interaction in
    its weekly slot of the given granularity. A slot enters the calendar when
    (a) the fraction of the resource's observed weeks that hit the slot is at
    least `confidence`, and (b) the slot's total interaction count is at least
    `support` times the resource's busiest slot count.
    """
    if granularity <= 0 or SECONDS_PER_DAY % granularity != 0:
        raise ValueError(f"granularity must divide 86400, got {granularity}")
    counts: dict[str, dict[int, int]] = {}
    slot_weeks: dict[str, dict[int, set[int]]] = {}
    weeks_seen: dict[str, set[int]] = {}
    for inst in log:
        for ts in (inst.start, inst.end):
            week = (ts + _EPOCH_TO_MONDAY) // SECONDS_PER_WEEK
            slot = seconds_of_week(ts) // granularity
            counts.setdefault(inst.resource, {}).setdefault(slot, 0)
            counts[inst.resource][slot] += 1
            slot_weeks.setdefault(inst.resource, {}).setdefault(slot, set()).add(week)
            weeks_seen.setdefault(inst.resource, set()).add(week)
    calendars = {}
    for resource in sorted(counts):
        max_count = max(counts[resource].values())
        n_weeks = len(weeks_seen[resource])
        slots = []
        for slot, count in counts[resource].items():
            week_fraction = len(slot_weeks[resource][slot]) / n_weeks
            if week_fraction >= confidence and count >= support * max_count:
                offset = slot * granularity
                slots.append(
                    CalendarSlot(
                        weekday=offset // SECONDS_PER_DAY,
                        start=offset % SECONDS_PER_DAY,
                        end=offset % SECONDS_PER_DAY + granularity,
                    )
                )
        calendars[resource] = ResourceCalendar(resource, slots)
    return calendars


def _parse_time_of_day(text: str) -> int:
    parts = text.split(":")
    if len(parts) != 3:
        raise SchemaError(f"time of day must be HH:MM:SS, got {text!r}")
    h, m, s = (int(p) for p in parts)
    value = h * 3600 + m * 60 + s
    if not 0 <= value <= SECONDS_PER_DAY:
        raise SchemaError(f"time of day out of range: {text!r}")
    return value


def _format_time_of_day(value: int) -> str:
    return f"{value // 3600:02d}:{value % 3600 // 60:02d}:{value % 60:02d}"


def calendar_to_json(cal: ResourceCalendar) -> dict:
    return {
        "resource": cal.resource,
        "slots": [
            {
                "weekday": WEEKDAY_NAMES[s.weekday],
                "from": _format_time_of_day(s.start),
                "to": _format_time_of_day(s.end),
            }
            for s in cal.slots
        ],
    }


def calendar_from_json(data: dict) -> ResourceCalendar:
    try:
        resource = data["resource"]
        raw_slots = data["slots"]
    except (KeyError, TypeError):
        raise SchemaError("calendar JSON needs 'resource' and 'slots'") from None
    slots = []
    for entry in raw_slots:
        try:
            weekday = WEEKDAY_NAMES.index(entry["weekday"].upper())
        except ValueError:
            raise SchemaError(f"unknown weekday {entry['weekday']!r}") from None
        start = _parse_time_of_day(entry["from"])
        end = _parse_time_of_day(entry["to"])
        if end == 0:
            end = SECONDS_PER_DAY
        slots.append(CalendarSlot(weekday, start, end))
    return ResourceCalendar(resource, slots)
