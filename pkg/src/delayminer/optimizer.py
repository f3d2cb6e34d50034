"""Tuning of per-activity delay scale factors with a tree-structured Parzen
estimator.

The input log is split in half by instance end time: delays are discovered on
the first half and every candidate scale vector is scored by simulating the
enhanced model and measuring the relative-event-distribution distance against
the second half. Trial zero always evaluates the unscaled factors, so the
returned model is never worse than the direct enhancement on the validation
objective. After a uniform startup phase, proposals come from per-dimension
Parzen density ratios: trials are split into a good and a bad set at a
quantile of the objective, candidates are drawn from the good set's density,
and the candidate maximizing good-over-bad density wins. Kernels are
Gaussians truncated to [0, gamma_max].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr, ndtri

from .bps_model import BpsModel, ScaleVector, inject_timers, scale_report
from .calendars import ResourceCalendar, discover_calendars
from .delay_discovery import DelayConfig, discover_delay_report
from .errors import OptimizationError, SimulationError
from .log_io import ActivityInstanceLog
from .metrics import red_distance
from .simulator import SimulationConfig, simulate
from .timeline import DEFAULT_CONCURRENCY_THRESHOLD


@dataclass(frozen=True)
class TpeConfig:
    iterations: int = 100
    gamma_max: float = 10.0
    startup_trials: int = 10
    good_quantile: float = 0.25
    candidates_per_step: int = 24
    seed: int = 0
    runs_per_eval: int = 1

    def __post_init__(self):
        if not self.iterations >= self.startup_trials >= 1:
            raise ValueError("need iterations >= startup_trials >= 1")
        if not 0.0 < self.good_quantile < 1.0:
            raise ValueError("good_quantile must be strictly between 0 and 1")
        if self.gamma_max <= 0:
            raise ValueError("gamma_max must be positive")
        if self.candidates_per_step < 1 or self.runs_per_eval < 1:
            raise ValueError("candidates_per_step and runs_per_eval must be >= 1")


@dataclass
class TrialHistory:
    trials: list[tuple[ScaleVector, float]] = field(default_factory=list)

    @property
    def best(self) -> int:
        if not self.trials:
            raise ValueError("no trials recorded")
        objectives = [obj for _, obj in self.trials]
        return objectives.index(min(objectives))

    def to_json(self) -> dict:
        return {
            "trials": [
                {
                    "gamma": dict(sorted(vec.factors.items())),
                    "objective": obj if math.isfinite(obj) else None,
                }
                for vec, obj in self.trials
            ],
            "best": self.best,
        }


def split_log(log: ActivityInstanceLog) -> tuple[ActivityInstanceLog, ActivityInstanceLog]:
    """Halve a log by instance end time; the odd instance goes to validation.

    The split is strict: traces may be cut across the boundary, keeping the
    resource occupancy seen by the training half truthful.
    """
    if not len(log):
        raise ValueError("cannot split an empty log")
    ordered = sorted(
        range(len(log.instances)),
        key=lambda i: (
            log.instances[i].end, log.instances[i].start,
            log.instances[i].trace_id, log.instances[i].activity, i,
        ),
    )
    cut = len(ordered) // 2
    train = tuple(log.instances[i] for i in sorted(ordered[:cut]))
    validation = tuple(log.instances[i] for i in sorted(ordered[cut:]))
    return ActivityInstanceLog(train), ActivityInstanceLog(validation)


def _default_calendars(log: ActivityInstanceLog, model: BpsModel) -> dict[str, ResourceCalendar]:
    calendars = discover_calendars(log)
    calendars.update(model.resource_calendars())
    return calendars


class _ParzenMixture:
    """Equal-weight truncated-Gaussian mixture over [0, hi], with a wide prior."""

    def __init__(self, points: np.ndarray, hi: float):
        bandwidth = max(
            1.06 * float(points.std()) * len(points) ** -0.2,
            hi / 20.0,
        )
        self.mus = np.append(points, hi / 2.0)
        self.sigmas = np.append(np.full(len(points), bandwidth), hi)
        self.hi = hi
        self._alpha = ndtr((0.0 - self.mus) / self.sigmas)
        self._beta = ndtr((hi - self.mus) / self.sigmas)

    def log_density(self, xs: np.ndarray) -> np.ndarray:
        z = (xs[:, None] - self.mus[None, :]) / self.sigmas[None, :]
        log_components = (
            -0.5 * z * z
            - np.log(self.sigmas[None, :])
            - 0.5 * math.log(2 * math.pi)
            - np.log(self._beta - self._alpha)[None, :]
        )
        peak = log_components.max(axis=1, keepdims=True)
        return (
            peak.squeeze(1)
            + np.log(np.exp(log_components - peak).sum(axis=1))
            - math.log(len(self.mus))
        )

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        idx = rng.integers(0, len(self.mus), size=count)
        u = rng.uniform(self._alpha[idx], self._beta[idx])
        values = self.mus[idx] + self.sigmas[idx] * ndtri(u)
        return np.clip(values, 0.0, self.hi)


def _tpe_propose(history: TrialHistory, activities: list[str],
                 cfg: TpeConfig, rng: np.random.Generator) -> dict[str, float]:
    n = len(history.trials)
    order = sorted(range(n), key=lambda i: (history.trials[i][1], i))
    n_good = max(1, math.ceil(cfg.good_quantile * n))
    good_idx = order[:n_good]
    bad_idx = order[n_good:] or good_idx
    factors = {}
    for activity in activities:
        good = np.array([history.trials[i][0].factor(activity) for i in good_idx])
        bad = np.array([history.trials[i][0].factor(activity) for i in bad_idx])
        good_mix = _ParzenMixture(good, cfg.gamma_max)
        bad_mix = _ParzenMixture(bad, cfg.gamma_max)
        candidates = good_mix.draw(rng, cfg.candidates_per_step)
        scores = good_mix.log_density(candidates) - bad_mix.log_density(candidates)
        factors[activity] = float(candidates[int(np.argmax(scores))])
    return factors


def optimize(
    model: BpsModel,
    log: ActivityInstanceLog,
    delay_cfg: DelayConfig,
    cfg: TpeConfig,
    calendars: dict[str, ResourceCalendar] | None = None,
    concurrency_threshold: float = DEFAULT_CONCURRENCY_THRESHOLD,
) -> tuple[BpsModel, TrialHistory]:
    """Search the scale vector minimizing validation distance; never regresses
    below the unscaled enhancement it evaluates as trial zero."""
    if len(log) < 2:
        raise ValueError("optimization needs a log with at least 2 instances")
    train, validation = split_log(log)
    if calendars is None:
        calendars = _default_calendars(log, model)
    base_report = discover_delay_report(
        train, calendars, delay_cfg, concurrency_threshold=concurrency_threshold
    )
    val_span = validation.span
    sim_template = SimulationConfig(
        num_traces=max(1, len(validation.traces())),
        seed=0,
        start_instant=val_span[0],
    )

    def evaluate(candidate: BpsModel, trial: int) -> float:
        distances = []
        for j in range(cfg.runs_per_eval):
            run_seed = cfg.seed + 1 + trial * cfg.runs_per_eval + j
            sim_log = simulate(candidate, replace(sim_template, seed=run_seed))
            distances.append(red_distance(sim_log, validation))
        return float(np.mean(distances))

    history = TrialHistory()
    if base_report.is_empty():
        objective = evaluate(model, 0)
        history.trials = [(ScaleVector({}, cfg.gamma_max), objective)] * cfg.iterations
        return model, history

    activities = sorted(base_report.activities)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))

    def build(vec: ScaleVector) -> BpsModel:
        return inject_timers(model, scale_report(base_report, vec))

    for trial in range(cfg.iterations):
        if trial == 0:
            factors = {a: 1.0 for a in activities}
        elif trial < cfg.startup_trials:
            factors = {
                a: float(rng.uniform(0.0, cfg.gamma_max)) for a in activities
            }
        else:
            factors = _tpe_propose(history, activities, cfg, rng)
        vec = ScaleVector(factors, cfg.gamma_max)
        try:
            objective = evaluate(build(vec), trial)
        except SimulationError:
            objective = math.inf
        history.trials.append((vec, objective))

    if not math.isfinite(min(obj for _, obj in history.trials)):
        raise OptimizationError("every optimization trial failed to simulate")
    best_vec = history.trials[history.best][0]
    return build(best_vec), history
