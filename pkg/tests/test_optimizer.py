import math

import numpy as np
import pytest

from delayminer.bps_model import strip_timers
from delayminer.delay_discovery import DelayConfig
from delayminer.log_io import ActivityInstance, ActivityInstanceLog
from delayminer.optimizer import (
    TpeConfig,
    TrialHistory,
    _ParzenMixture,
    optimize,
    split_log,
)
from delayminer.simulator import SimulationConfig, simulate

from conftest import ts
from models import ONE_TIMER, claims_model, request_model


def _log_of(n):
    return ActivityInstanceLog(tuple(
        ActivityInstance(str(k), "A", k * 10, k * 10 + 5, "r") for k in range(n)
    ))


def test_split_even_count():
    train, val = split_log(_log_of(10))
    assert len(train) == 5 and len(val) == 5


def test_split_odd_count_extra_goes_to_validation():
    train, val = split_log(_log_of(11))
    assert len(train) == 5 and len(val) == 6


def test_split_orders_by_end_time(invoice_log):
    train, val = split_log(invoice_log)
    assert len(train) == 6 and len(val) == 6
    # The training half ends with the sixth end-ordered instance.
    assert max(i.end for i in train) == ts("2021-11-03T09:35:50Z")
    assert max(i.end for i in train) <= min(i.end for i in val)
    # Traces may be cut across the halves (strict split).
    assert set(train.traces()) & set(val.traces())


def test_split_empty_rejected():
    with pytest.raises(ValueError):
        split_log(ActivityInstanceLog(()))


def test_tpe_config_validation():
    with pytest.raises(ValueError):
        TpeConfig(iterations=5, startup_trials=10)
    with pytest.raises(ValueError):
        TpeConfig(good_quantile=1.0)
    with pytest.raises(ValueError):
        TpeConfig(gamma_max=0.0)


def test_parzen_mixture_bounds():
    rng = np.random.Generator(np.random.PCG64(0))
    mix = _ParzenMixture(np.array([1.0, 2.0, 9.5]), hi=10.0)
    draws = mix.draw(rng, 500)
    assert draws.min() >= 0.0 and draws.max() <= 10.0
    densities = mix.log_density(np.linspace(0, 10, 50))
    assert np.isfinite(densities).all()


def test_trial_history_json_handles_failures():
    from delayminer.bps_model import ScaleVector

    history = TrialHistory(trials=[
        (ScaleVector({"A": 1.0}), 0.5),
        (ScaleVector({"A": 2.0}), math.inf),
    ])
    data = history.to_json()
    assert data["best"] == 0
    assert data["trials"][1]["objective"] is None


def test_optimize_empty_report_returns_baseline():
    model = claims_model()
    log = simulate(model, SimulationConfig(num_traces=60, seed=3))
    cfg = TpeConfig(iterations=5, startup_trials=2, seed=1)
    delay_cfg = DelayConfig(estimator="eclipse_aware_extrapolated", min_gap=1.0)
    result, history = optimize(model, log, delay_cfg, cfg,
                               calendars=model.resource_calendars())
    assert result == model
    objectives = {obj for _, obj in history.trials}
    assert len(history.trials) == 5
    assert len(objectives) == 1


def test_optimize_no_regression_and_determinism():
    truth = request_model(ONE_TIMER)
    log = simulate(truth, SimulationConfig(num_traces=200, seed=7))
    baseline = strip_timers(truth)
    delay_cfg = DelayConfig(estimator="eclipse_aware_extrapolated", min_gap=1.0)
    cfg = TpeConfig(iterations=12, startup_trials=4, seed=21)
    first_model, first = optimize(baseline, log, delay_cfg, cfg,
                                  calendars=baseline.resource_calendars())
    objectives = [obj for _, obj in first.trials]
    assert first.trials[0][0].factors == {"Make decision": 1.0}
    assert objectives[first.best] <= objectives[0]
    assert all(math.isfinite(o) for o in objectives)
    second_model, second = optimize(baseline, log, delay_cfg, cfg,
                                    calendars=baseline.resource_calendars())
    assert [obj for _, obj in second.trials] == objectives
    assert second_model == first_model


def test_optimize_pure_random_when_no_tpe_phase():
    truth = request_model(ONE_TIMER)
    log = simulate(truth, SimulationConfig(num_traces=120, seed=9))
    baseline = strip_timers(truth)
    delay_cfg = DelayConfig(estimator="naive", min_gap=1.0)
    cfg = TpeConfig(iterations=4, startup_trials=4, seed=2)
    _, history = optimize(baseline, log, delay_cfg, cfg,
                          calendars=baseline.resource_calendars())
    assert len(history.trials) == 4
    factors = [vec.factors["Make decision"] for vec, _ in history.trials]
    assert factors[0] == 1.0
    assert all(0.0 <= f <= cfg.gamma_max for f in factors)


def test_optimize_requires_two_instances():
    model = claims_model()
    tiny = ActivityInstanceLog((
        ActivityInstance("1", "Receive claim", 0, 10, "Ada"),
    ))
    with pytest.raises(ValueError):
        optimize(model, tiny, DelayConfig(), TpeConfig(iterations=1, startup_trials=1))
