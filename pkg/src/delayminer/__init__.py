"""Extraneous-delay discovery and simulation-model enhancement toolkit."""

from .bps_model import (
    BpsModel,
    ScaleVector,
    inject_timers,
    load_model,
    save_model,
    scale_report,
    strip_timers,
)
from .calendars import (
    CalendarSlot,
    NonWorkingIntervals,
    ResourceCalendar,
    discover_calendars,
    non_working_intervals,
)
from .delay_discovery import (
    DelayConfig,
    DelayMultiset,
    DelayReport,
    PairDelay,
    availability_intervals,
    discover_delay_report,
    eclipse_delay,
    extrapolated_delay,
    group_delays,
    naive_delay,
    resource_availability_time,
)
from .distribution import DurationDistribution, fit_distribution, sample
from .errors import (
    DelayMinerError,
    LogValidationError,
    ModelValidationError,
    OptimizationError,
    SchemaError,
    SimulationError,
)
from .harness import calendars_for_log, rediscovery_harness
from .log_io import (
    ActivityInstance,
    ActivityInstanceLog,
    collapse_events,
    parse_log,
    write_log,
)
from .metrics import (
    CycleTimeStats,
    EventHistogram,
    cycle_time_stats,
    emd_1d,
    red_distance,
    smape,
    timer_rediscovery_score,
)
from .optimizer import TpeConfig, TrialHistory, optimize, split_log
from .simulator import (
    SimulationConfig,
    SimulationResult,
    TimerDraw,
    simulate,
    simulate_many,
    simulate_traced,
)
from .timeline import CausalPairSet, ConcurrencyRelation, causal_pairs, discover_concurrency

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
