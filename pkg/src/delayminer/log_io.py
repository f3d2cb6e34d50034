"""Activity-instance log model plus CSV reading and writing.

A log row is one executed activity: trace id, activity label, start and end
timestamps, and the resource that performed it. Timestamps are stored as
integer seconds since the Unix epoch, UTC; sub-second input is truncated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .errors import LogValidationError, SchemaError

# Canonical CSV header for activity-instance logs.
CANONICAL_COLUMNS = {
    "trace_id": "case_id",
    "activity": "activity",
    "start": "start_time",
    "end": "end_time",
    "resource": "resource",
}

# Canonical header for event-per-row logs consumed by collapse_events.
EVENT_COLUMNS = {
    "trace_id": "case_id",
    "activity": "activity",
    "lifecycle": "lifecycle",
    "timestamp": "timestamp",
    "resource": "resource",
}


def parse_timestamp(text: str) -> int:
    """Parse an ISO-8601 timestamp into integer epoch seconds, UTC.

    Naive timestamps are interpreted as UTC. Fractional seconds are truncated.
    """
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise ValueError(f"not an ISO-8601 timestamp: {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(ts: int) -> str:
    """Render epoch seconds as an ISO-8601 UTC string, e.g. 2021-11-03T08:00:00Z."""
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class ActivityInstance:
    """One execution of an activity within a trace."""

    trace_id: str
    activity: str
    start: int
    end: int
    resource: str

    def __post_init__(self):
        if self.start > self.end:
            raise LogValidationError(
                f"instance of {self.activity!r} in trace {self.trace_id!r} "
                f"starts after it ends ({self.start} > {self.end})"
            )
        if not self.activity:
            raise LogValidationError(f"empty activity label in trace {self.trace_id!r}")
        if not self.resource:
            raise LogValidationError(
                f"empty resource for {self.activity!r} in trace {self.trace_id!r}"
            )

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ActivityInstanceLog:
    """An ordered collection of activity instances."""

    instances: tuple[ActivityInstance, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    @property
    def span(self) -> tuple[int, int] | None:
        """Interval from the earliest start to the latest end, None when empty."""
        if not self.instances:
            return None
        return (
            min(i.start for i in self.instances),
            max(i.end for i in self.instances),
        )

    def traces(self) -> dict[str, list[ActivityInstance]]:
        """Instances grouped by trace id, preserving log order within each trace."""
        grouped: dict[str, list[ActivityInstance]] = {}
        for inst in self.instances:
            grouped.setdefault(inst.trace_id, []).append(inst)
        return grouped

    def activities(self) -> set[str]:
        return {i.activity for i in self.instances}

    def resources(self) -> set[str]:
        return {i.resource for i in self.instances}


def _resolve_columns(header: list[str], mapping: dict[str, str] | None,
                     defaults: dict[str, str]) -> dict[str, int]:
    """Map logical field names to column indices, raising on missing columns."""
    names = dict(defaults)
    if mapping:
        unknown = set(mapping) - set(defaults)
        if unknown:
            raise SchemaError(f"unknown column-map keys: {sorted(unknown)}")
        names.update(mapping)
    indices = {}
    for fieldname, column in names.items():
        try:
            indices[fieldname] = header.index(column)
        except ValueError:
            raise SchemaError(
                f"missing column {column!r} (for {fieldname}); header is {header}"
            ) from None
    return indices


def parse_log(path, mapping: dict[str, str] | None = None) -> ActivityInstanceLog:
    """Read an activity-instance CSV into a log, preserving row order.

    `mapping` renames the canonical columns for foreign headers, keyed by
    logical name (trace_id, activity, start, end, resource).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a CSV header") from None
        cols = _resolve_columns(header, mapping, CANONICAL_COLUMNS)
        instances = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                start = parse_timestamp(row[cols["start"]])
                end = parse_timestamp(row[cols["end"]])
                instances.append(
                    ActivityInstance(
                        trace_id=row[cols["trace_id"]],
                        activity=row[cols["activity"]],
                        start=start,
                        end=end,
                        resource=row[cols["resource"]],
                    )
                )
            except ValueError as exc:
                raise LogValidationError(f"{path}:{lineno}: {exc}") from None
            except IndexError:
                raise LogValidationError(
                    f"{path}:{lineno}: row has {len(row)} fields, expected "
                    f"at least {max(cols.values()) + 1}"
                ) from None
    return ActivityInstanceLog(tuple(instances))


def collapse_events(path, mapping: dict[str, str] | None = None) -> ActivityInstanceLog:
    """Pair start/complete rows of an event-per-row log into activity instances.

    Events pair within the same (trace, activity, resource) key; interleaved
    pairs resolve FIFO (first start matches first complete). Unmatched events
    are an error listing the orphans.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a CSV header") from None
        cols = _resolve_columns(header, mapping, EVENT_COLUMNS)
        open_starts: dict[tuple[str, str, str], list[int]] = {}
        orphan_completes: list[str] = []
        instances = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                key = (row[cols["trace_id"]], row[cols["activity"]], row[cols["resource"]])
                lifecycle = row[cols["lifecycle"]].strip().lower()
                ts = parse_timestamp(row[cols["timestamp"]])
            except ValueError as exc:
                raise LogValidationError(f"{path}:{lineno}: {exc}") from None
            except IndexError:
                raise LogValidationError(
                    f"{path}:{lineno}: row has {len(row)} fields, expected "
                    f"at least {max(cols.values()) + 1}"
                ) from None
            if lifecycle == "start":
                open_starts.setdefault(key, []).append(ts)
            elif lifecycle == "complete":
                pending = open_starts.get(key)
                if not pending:
                    orphan_completes.append(f"complete of {key} at line {lineno}")
                    continue
                start = pending.pop(0)
                instances.append(
                    ActivityInstance(
                        trace_id=key[0], activity=key[1],
                        start=start, end=ts, resource=key[2],
                    )
                )
            else:
                raise LogValidationError(
                    f"{path}:{lineno}: lifecycle must be start or complete, got {lifecycle!r}"
                )
    orphan_starts = [
        f"start of {key} at t={ts}" for key, pending in open_starts.items() for ts in pending
    ]
    orphans = orphan_starts + orphan_completes
    if orphans:
        raise LogValidationError(
            "unmatched lifecycle events: " + "; ".join(sorted(orphans))
        )
    return ActivityInstanceLog(tuple(instances))


def write_log(log: ActivityInstanceLog, path) -> None:
    """Write a log as canonical CSV; parse_log(write_log(L)) reproduces L."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [CANONICAL_COLUMNS[k] for k in ("trace_id", "activity", "start", "end", "resource")]
        )
        for inst in log:
            writer.writerow([
                inst.trace_id,
                inst.activity,
                format_timestamp(inst.start),
                format_timestamp(inst.end),
                inst.resource,
            ])
