"""Distance and accuracy measures between event logs and delay reports.

The relative-event-distribution distance bins every start/end event by its
offset from the start of its trace (one-hour bins) and compares the two
histograms with the 1-D earth mover's distance. Histograms are normalized to
unit mass before comparison, so values are comparable only within a dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .log_io import ActivityInstanceLog

DEFAULT_BIN_WIDTH = 3600


@dataclass(frozen=True)
class EventHistogram:
    bins: tuple[float, ...]
    bin_width: int = DEFAULT_BIN_WIDTH

    def __post_init__(self):
        if any(b < 0 for b in self.bins):
            raise ValueError("histogram masses must be non-negative")

    @property
    def total(self) -> float:
        return float(sum(self.bins))


@dataclass(frozen=True)
class CycleTimeStats:
    min: float
    q1: float
    median: float
    mean: float
    q3: float
    max: float

    def as_dict(self) -> dict[str, float]:
        return {
            "min": self.min, "q1": self.q1, "median": self.median,
            "mean": self.mean, "q3": self.q3, "max": self.max,
        }


def smape(forecast, actual) -> float:
    """Symmetric mean absolute percentage error on the 0-2 convention.

    A term with forecast = actual = 0 counts as 0 error.
    """
    if len(forecast) != len(actual):
        raise ValueError(
            f"length mismatch: {len(forecast)} forecasts vs {len(actual)} actuals"
        )
    if not forecast:
        raise ValueError("smape needs at least one value pair")
    total = 0.0
    for f, a in zip(forecast, actual):
        denom = abs(f) + abs(a)
        if denom > 0:
            total += 2.0 * abs(f - a) / denom
    return total / len(forecast)


def summarize(values) -> dict[str, float]:
    """Min/q1/median/mean/q3/max with linearly interpolated quartiles."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("cannot summarize an empty collection")
    q1, median, q3 = np.percentile(arr, [25, 50, 75])
    return {
        "min": float(arr.min()),
        "q1": float(q1),
        "median": float(median),
        "mean": float(arr.mean()),
        "q3": float(q3),
        "max": float(arr.max()),
    }


def histogram_from_offsets(offsets, bin_width: int = DEFAULT_BIN_WIDTH) -> EventHistogram:
    """Bin non-negative second offsets into contiguous fixed-width bins from 0."""
    offsets = list(offsets)
    if not offsets:
        raise ValueError("cannot build a histogram from zero events")
    indices = [int(o // bin_width) for o in offsets]
    bins = [0.0] * (max(indices) + 1)
    for idx in indices:
        bins[idx] += 1.0
    return EventHistogram(bins=tuple(bins), bin_width=bin_width)


def emd_1d(h1: EventHistogram, h2: EventHistogram) -> float:
    """Earth mover's distance between unit-normalized histograms, in bin units."""
    if h1.bin_width != h2.bin_width:
        raise ValueError(
            f"bin widths differ: {h1.bin_width} vs {h2.bin_width}"
        )
    if h1.total <= 0 or h2.total <= 0:
        raise ValueError("histograms must carry positive mass")
    size = max(len(h1.bins), len(h2.bins))
    a = np.zeros(size)
    b = np.zeros(size)
    a[: len(h1.bins)] = h1.bins
    b[: len(h2.bins)] = h2.bins
    a /= a.sum()
    b /= b.sum()
    return float(np.abs(np.cumsum(a - b)).sum())


def _relative_offsets(log: ActivityInstanceLog) -> list[int]:
    offsets = []
    for trace in log.traces().values():
        origin = min(inst.start for inst in trace)
        for inst in trace:
            offsets.append(inst.start - origin)
            offsets.append(inst.end - origin)
    return offsets


def red_distance(sim: ActivityInstanceLog, ref: ActivityInstanceLog,
                 bin_width: int = DEFAULT_BIN_WIDTH) -> float:
    """Distance between the trace-relative event distributions of two logs."""
    if not len(sim) or not len(ref):
        raise ValueError("red_distance needs two non-empty logs")
    return emd_1d(
        histogram_from_offsets(_relative_offsets(sim), bin_width),
        histogram_from_offsets(_relative_offsets(ref), bin_width),
    )


def cycle_time_stats(log: ActivityInstanceLog) -> CycleTimeStats:
    """Summary statistics of per-trace cycle times (latest end minus earliest start)."""
    if not len(log):
        raise ValueError("cannot compute cycle times of an empty log")
    cycle_times = [
        max(i.end for i in trace) - min(i.start for i in trace)
        for trace in log.traces().values()
    ]
    return CycleTimeStats(**summarize(cycle_times))


def timer_rediscovery_score(
    injected: dict[str, float], discovered: dict[str, float]
) -> dict[str, float]:
    """Precision/recall of re-discovered timer activities plus mean-delay SMAPE.

    A discovered activity present among the injected ones is a true positive.
    The SMAPE compares mean delays over the union of activities, substituting
    zero for the missing side. Two empty sets score perfect by convention.
    """
    injected_keys = set(injected)
    discovered_keys = set(discovered)
    tp = len(injected_keys & discovered_keys)
    fp = len(discovered_keys - injected_keys)
    fn = len(injected_keys - discovered_keys)
    precision = tp / (tp + fp) if (tp + fp) else 1.0
    recall = tp / (tp + fn) if (tp + fn) else 1.0
    keys = sorted(injected_keys | discovered_keys)
    if keys:
        error = smape(
            [discovered.get(k, 0.0) for k in keys],
            [injected.get(k, 0.0) for k in keys],
        )
    else:
        error = 0.0
    return {"precision": precision, "recall": recall, "smape": error}


def confidence_interval(values) -> tuple[float, float]:
    """Mean and 95% normal-approximation half-width of a sample."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("no values")
    if arr.size == 1:
        return float(arr[0]), 0.0
    half = 1.96 * float(arr.std(ddof=1)) / float(np.sqrt(arr.size))
    return float(arr.mean()), half
