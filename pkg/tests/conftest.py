from pathlib import Path

import pytest

from delayminer.bps_model import (
    ArrivalSpec,
    BpsModel,
    GatewaySpec,
    PoolSpec,
    TaskSpec,
    TimerSpec,
)
from delayminer.calendars import CalendarSlot, ResourceCalendar
from delayminer.distribution import DurationDistribution
from delayminer.log_io import parse_log, parse_timestamp

DATA_DIR = Path(__file__).parent / "data"


def ts(text: str) -> int:
    return parse_timestamp(text)


def office_calendar(label: str, start_hour: int = 8, end_hour: int = 16) -> ResourceCalendar:
    return ResourceCalendar(
        label,
        [CalendarSlot(day, start_hour * 3600, end_hour * 3600) for day in range(7)],
    )


def dist(family: str, **params) -> DurationDistribution:
    return DurationDistribution(family, params)


@pytest.fixture(scope="session")
def invoice_log():
    return parse_log(DATA_DIR / "running_example.csv")


@pytest.fixture(scope="session")
def office_calendars(invoice_log):
    return {r: office_calendar(r) for r in invoice_log.resources()}


def invoice_model(with_timer: bool = True) -> BpsModel:
    """The running-example process: register, then post and notify in
    parallel, then pay, optionally with a 6-hour timer before payment."""
    cal = office_calendar("pool")
    flows = [
        ("start", "Register invoice"),
        ("Register invoice", "fork"),
        ("fork", "Post invoice"),
        ("fork", "Notify acceptance"),
        ("Post invoice", "merge"),
        ("Notify acceptance", "merge"),
        ("Pay invoice", "end"),
    ]
    timers = {}
    if with_timer:
        flows += [("merge", "payment-delay"), ("payment-delay", "Pay invoice")]
        timers["payment-delay"] = TimerSpec(
            duration=dist("fixed", value=21600.0),
            attached_to=("Pay invoice", "ex_ante"),
        )
    else:
        flows += [("merge", "Pay invoice")]
    return BpsModel(
        tasks={
            "Register invoice": TaskSpec(dist("uniform", low=500.0, high=1900.0), "clerks"),
            "Post invoice": TaskSpec(dist("uniform", low=1600.0, high=2000.0), "posting"),
            "Notify acceptance": TaskSpec(dist("uniform", low=1000.0, high=2900.0), "notify"),
            "Pay invoice": TaskSpec(dist("uniform", low=600.0, high=700.0), "clerks"),
        },
        gateways={
            "fork": GatewaySpec("parallel", "split"),
            "merge": GatewaySpec("parallel", "join"),
        },
        timers=timers,
        flows=flows,
        pools={
            "clerks": PoolSpec(("BoJack",), cal),
            "posting": PoolSpec(("Sarah", "Todd"), cal),
            "notify": PoolSpec(("Carolyn",), cal),
        },
        arrivals=ArrivalSpec(interarrival=dist("exponential", mean=1800.0)),
    )


@pytest.fixture
def timed_invoice_model():
    return invoice_model(with_timer=True)


@pytest.fixture
def untimed_invoice_model():
    return invoice_model(with_timer=False)
