import random

import pytest

from delayminer.calendars import ResourceCalendar, non_working_intervals
from delayminer.delay_discovery import (
    DelayConfig,
    availability_intervals,
    discover_delay_report,
    eclipse_delay,
    estimate_pair_delays,
    extrapolated_delay,
    group_delays,
    naive_delay,
    resource_availability_time,
)
from delayminer.log_io import ActivityInstance, ActivityInstanceLog
from delayminer.timeline import causal_pairs, discover_concurrency

from conftest import office_calendar, ts


@pytest.fixture(scope="module")
def pay_pairs(invoice_log):
    rel = discover_concurrency(invoice_log, zeta=0.3)
    pairs = causal_pairs(invoice_log, rel)
    return {
        (t.trace_id, t.activity): (s, t) for s, t in pairs.pairs
    }


@pytest.fixture(scope="module")
def bojack_nw(invoice_log):
    return non_working_intervals(office_calendar("BoJack"), invoice_log.span)


def _instance(invoice_log, trace, activity):
    return next(
        i for i in invoice_log if i.trace_id == trace and i.activity == activity
    )


def test_availability_time_mid_day(invoice_log, bojack_nw):
    target = _instance(invoice_log, "512", "Pay invoice")
    # Latest BoJack evidence before 15:17:01 is the end of the third
    # registration; the only off-duty interval ends the next morning.
    assert resource_availability_time(target, invoice_log, bojack_nw) == ts(
        "2021-11-03T09:10:36Z"
    )


def test_availability_time_after_overnight(invoice_log, bojack_nw):
    target = _instance(invoice_log, "514", "Pay invoice")
    assert resource_availability_time(target, invoice_log, bojack_nw) == ts(
        "2021-11-04T08:00:00Z"
    )


def test_availability_time_defaults_to_span_start():
    inst = ActivityInstance("1", "A", 1000, 2000, "solo")
    log = ActivityInstanceLog((inst,))
    nw = non_working_intervals(ResourceCalendar.always_available("solo"), log.span)
    assert resource_availability_time(inst, log, nw) == 1000


def test_naive_delays_running_example(invoice_log, pay_pairs, bojack_nw):
    assert naive_delay(pay_pairs[("512", "Pay invoice")], invoice_log, bojack_nw).extraneous == 21600
    assert naive_delay(pay_pairs[("513", "Pay invoice")], invoice_log, bojack_nw).extraneous == 1107
    assert naive_delay(pay_pairs[("514", "Pay invoice")], invoice_log, bojack_nw).extraneous == 0


def test_availability_intervals_trace_513(invoice_log, pay_pairs, bojack_nw):
    intervals = availability_intervals(
        pay_pairs[("513", "Pay invoice")], invoice_log, bojack_nw, min_gap=300
    )
    assert intervals == [
        (ts("2021-11-03T09:46:12Z"), ts("2021-11-03T15:17:01Z")),
        (ts("2021-11-03T15:27:45Z"), ts("2021-11-03T15:46:12Z")),
    ]


def test_availability_intervals_filters_short_break(invoice_log, pay_pairs, bojack_nw):
    # The 137-second gap between the last payment ending 15:57:43 and the
    # 16:00:00 shift end must fall to the 5-minute minimum.
    intervals = availability_intervals(
        pay_pairs[("514", "Pay invoice")], invoice_log, bojack_nw, min_gap=300
    )
    assert intervals == [
        (ts("2021-11-03T11:29:22Z"), ts("2021-11-03T15:17:01Z")),
        (ts("2021-11-03T15:27:45Z"), ts("2021-11-03T15:46:12Z")),
    ]


def test_availability_intervals_lambda_filters_all(invoice_log, pay_pairs, bojack_nw):
    pair = pay_pairs[("513", "Pay invoice")]
    window = pair[1].start - pair[0].end
    assert availability_intervals(pair, invoice_log, bojack_nw, min_gap=window + 1) == []


def test_availability_intervals_fully_idle():
    source = ActivityInstance("1", "A", 0, 1000, "other")
    target = ActivityInstance("1", "B", 5000, 6000, "solo")
    log = ActivityInstanceLog((source, target))
    nw = non_working_intervals(ResourceCalendar.always_available("solo"), log.span)
    assert availability_intervals((source, target), log, nw, min_gap=0) == [(1000, 5000)]


def test_eclipse_delay_partial(invoice_log, pay_pairs, bojack_nw):
    delay = eclipse_delay(pay_pairs[("513", "Pay invoice")], invoice_log, bojack_nw, min_gap=300)
    assert delay.first_available == ts("2021-11-03T09:46:12Z")
    assert delay.last_available == ts("2021-11-03T15:46:12Z")
    assert delay.extraneous == 21600


def test_eclipse_delay_total(invoice_log, pay_pairs, bojack_nw):
    delay = eclipse_delay(pay_pairs[("514", "Pay invoice")], invoice_log, bojack_nw, min_gap=300)
    assert delay.first_available == ts("2021-11-03T11:29:22Z")
    assert delay.last_available == ts("2021-11-03T15:46:12Z")
    assert delay.extraneous == 15410


def test_eclipse_delay_no_evidence():
    source = ActivityInstance("1", "A", 0, 100, "r")
    blocker = ActivityInstance("2", "X", 100, 500, "r")
    target = ActivityInstance("1", "B", 500, 600, "r")
    log = ActivityInstanceLog((source, blocker, target))
    nw = non_working_intervals(ResourceCalendar.always_available("r"), log.span)
    delay = eclipse_delay((source, target), log, nw, min_gap=1)
    assert delay.extraneous == 0
    assert delay.first_available is None and delay.last_available is None


def test_extrapolated_delay_total_eclipse(invoice_log, pay_pairs, bojack_nw):
    delay = extrapolated_delay(
        pay_pairs[("514", "Pay invoice")], invoice_log, bojack_nw, min_gap=300
    )
    assert delay.extraneous == 44624


def test_extrapolated_identity_at_window_bounds():
    source = ActivityInstance("1", "A", 0, 1000, "other")
    target = ActivityInstance("1", "B", 5000, 6000, "solo")
    log = ActivityInstanceLog((source, target))
    nw = non_working_intervals(ResourceCalendar.always_available("solo"), log.span)
    delay = extrapolated_delay((source, target), log, nw, min_gap=0)
    assert delay.extraneous == delay.waiting == 4000


def test_extrapolated_no_evidence_is_zero():
    source = ActivityInstance("1", "A", 0, 100, "r")
    blocker = ActivityInstance("2", "X", 100, 500, "r")
    target = ActivityInstance("1", "B", 500, 600, "r")
    log = ActivityInstanceLog((source, blocker, target))
    nw = non_working_intervals(ResourceCalendar.always_available("r"), log.span)
    assert extrapolated_delay((source, target), log, nw, min_gap=1).extraneous == 0


def test_bounds_invariant_random():
    rng = random.Random(99)
    for _ in range(80):
        resource = "r"
        events = sorted(rng.sample(range(0, 3000), 6))
        source = ActivityInstance("1", "A", events[0], events[1], resource)
        blocker = ActivityInstance("2", "X", events[2], events[3], resource)
        target = ActivityInstance("1", "B", events[4], events[5], resource)
        log = ActivityInstanceLog((source, blocker, target))
        cal = ResourceCalendar.always_available(resource)
        nw = non_working_intervals(cal, log.span)
        waiting = target.start - source.end
        for estimate in (
            naive_delay((source, target), log, nw),
            eclipse_delay((source, target), log, nw, 1),
            extrapolated_delay((source, target), log, nw, 1),
        ):
            assert 0 <= estimate.extraneous <= waiting
            if estimate.first_available is not None:
                assert source.end <= estimate.first_available
                assert estimate.last_available <= target.start


def test_no_eclipse_agreement():
    # Resource idle and on duty across the entire waiting window: all three
    # estimators must return exactly the waiting time.
    source = ActivityInstance("1", "A", 0, 600, "other")
    target = ActivityInstance("1", "B", 4200, 4800, "solo")
    log = ActivityInstanceLog((source, target))
    nw = non_working_intervals(ResourceCalendar.always_available("solo"), log.span)
    naive = naive_delay((source, target), log, nw)
    eclipse = eclipse_delay((source, target), log, nw, 1)
    extrapolated = extrapolated_delay((source, target), log, nw, 1)
    assert naive.extraneous == eclipse.extraneous == extrapolated.extraneous == 3600


def brute_force_intervals(pair, busy, nw_intervals, min_gap):
    """Per-second occupancy scan over the waiting window."""
    source, target = pair
    lo, hi = source.end, target.start
    free_seconds = []
    for second in range(lo, hi):
        blocked = any(a <= second < b for a, b in busy) or any(
            a <= second < b for a, b in nw_intervals
        )
        if not blocked:
            free_seconds.append(second)
    runs = []
    for second in free_seconds:
        if runs and runs[-1][1] == second:
            runs[-1] = (runs[-1][0], second + 1)
        else:
            runs.append((second, second + 1))
    return [(a, b) for a, b in runs if b - a >= min_gap]


def test_interval_sweep_matches_occupancy_scan():
    rng = random.Random(2024)
    for _ in range(60):
        window = 24 * 3600
        source = ActivityInstance("1", "A", 0, rng.randrange(0, 600), "r")
        target_start = rng.randrange(source.end, window)
        target = ActivityInstance("1", "B", target_start, target_start + 60, "r")
        fillers = []
        for k in range(rng.randrange(0, 5)):
            s = rng.randrange(0, window)
            fillers.append(ActivityInstance(str(10 + k), "X", s, s + rng.randrange(1, 7200), "r"))
        log = ActivityInstanceLog(tuple([source, *fillers, target]))
        cal = office_calendar("r", start_hour=rng.randrange(0, 9), end_hour=rng.randrange(10, 24))
        nw = non_working_intervals(cal, log.span)
        min_gap = rng.choice([0, 1, 300, 1800])
        fast = availability_intervals((source, target), log, nw, min_gap)
        busy = [(i.start, i.end) for i in log if i.resource == "r" and i is not target]
        slow = brute_force_intervals((source, target), busy, nw.intervals, max(min_gap, 1))
        assert fast == slow or (min_gap == 0 and fast == slow)


def test_group_delays_attribution(invoice_log, pay_pairs, bojack_nw):
    pairs = [
        naive_delay(pay_pairs[(trace, "Pay invoice")], invoice_log, bojack_nw)
        for trace in ("512", "513", "514")
    ]
    ex_ante = group_delays(pairs, "ex_ante", 0.05)
    assert [m.activity for m in ex_ante] == ["Pay invoice"]
    assert sorted(ex_ante[0].delays) == [0, 1107, 21600]
    ex_post = group_delays(pairs, "ex_post", 0.05)
    # The delays land on the source activities; "Post invoice" only sourced
    # the totally eclipsed zero-delay pair, so the outlier filter drops it.
    assert {m.activity for m in ex_post} == {"Notify acceptance"}
    assert sorted(ex_post[0].delays) == [1107, 21600]


def test_group_delays_filters():
    source = ActivityInstance("1", "A", 0, 10, "r")
    target = ActivityInstance("1", "B", 20, 30, "r")
    from delayminer.delay_discovery import PairDelay

    positive = PairDelay(source, target, 10, 5.0)
    zero = PairDelay(source, target, 10, 0.0)
    assert group_delays([positive], "ex_ante", 1.0) == []
    assert group_delays([zero, zero], "ex_ante", 0.0) == []
    survived = group_delays([positive, zero], "ex_ante", 0.4)
    assert survived and survived[0].positive_ratio == 0.5


def test_discover_delay_report_end_to_end(invoice_log, office_calendars):
    config = DelayConfig(estimator="eclipse_aware", min_gap=300.0,
                         outlier_threshold=0.05, attribution="ex_ante")
    report = discover_delay_report(
        invoice_log, office_calendars, config, concurrency_threshold=0.3
    )
    assert "Pay invoice" in report.activities
    # Trace 512 has an uneclipsed window (21600), 513 a partial eclipse that
    # still spans the full 6 hours, 514 a total eclipse truncated to 15410.
    delays = sorted(report.activities["Pay invoice"].delays)
    assert delays == [15410, 21600, 21600]


def test_report_json_round_trip(invoice_log, office_calendars):
    config = DelayConfig(estimator="naive", min_gap=300.0,
                         outlier_threshold=0.05, attribution="ex_ante")
    report = discover_delay_report(
        invoice_log, office_calendars, config, concurrency_threshold=0.3
    )
    from delayminer.delay_discovery import DelayReport

    data = report.to_json(emit_raw=True)
    restored = DelayReport.from_json(data)
    assert restored.activities.keys() == report.activities.keys()
    for activity in report.activities:
        assert restored.activities[activity].delays == report.activities[activity].delays
    summary = data["activities"]["Pay invoice"]["summary"]
    assert summary["min"] <= summary["q1"] <= summary["median"] <= summary["q3"] <= summary["max"]


def test_estimate_pair_delays_requires_calendar(invoice_log):
    rel = discover_concurrency(invoice_log, 0.3)
    pairs = causal_pairs(invoice_log, rel)
    config = DelayConfig()
    with pytest.raises(KeyError, match="no calendar for resource"):
        estimate_pair_delays(invoice_log, {}, config, pairs)
