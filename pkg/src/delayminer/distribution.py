"""Parametric duration distributions: fitting by KS selection, seeded sampling.

Candidate families are fixed, uniform, normal, exponential, log-normal, and
gamma. Parameters come from closed-form moment/maximum-likelihood estimates;
the family with the smallest one-sample Kolmogorov-Smirnov statistic against
the data wins. Samples are truncated below at zero since durations cannot be
negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import SchemaError

FAMILIES = ("fixed", "uniform", "normal", "exponential", "log_normal", "gamma")

# A later (more complex) candidate must beat the current best KS statistic by
# this margin to win, so near-ties resolve to the simpler family and refitting
# samples of a fitted distribution recovers the same family.
KS_PREFERENCE_MARGIN = 0.01


@dataclass(frozen=True)
class DurationDistribution:
    family: str
    params: dict[str, float]
    clip: tuple[float, float] | None = None  # observed [min, max] of the fit data

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SchemaError(f"unknown distribution family {self.family!r}")
        expected = _PARAM_NAMES[self.family]
        if set(self.params) != set(expected):
            raise SchemaError(
                f"{self.family} needs params {expected}, got {sorted(self.params)}"
            )

    @property
    def mean(self) -> float:
        p = self.params
        if self.family == "fixed":
            return p["value"]
        if self.family == "uniform":
            return (p["low"] + p["high"]) / 2
        if self.family == "normal":
            return p["mean"]
        if self.family == "exponential":
            return p["mean"]
        if self.family == "log_normal":
            return math.exp(p["mu"] + p["sigma"] ** 2 / 2)
        return p["shape"] * p["scale"]  # gamma


_PARAM_NAMES = {
    "fixed": ("value",),
    "uniform": ("low", "high"),
    "normal": ("mean", "std"),
    "exponential": ("mean",),
    "log_normal": ("mu", "sigma"),
    "gamma": ("shape", "scale"),
}


def fixed(value: float) -> DurationDistribution:
    return DurationDistribution("fixed", {"value": float(value)}, clip=(value, value))


def _ks_statistic(values: np.ndarray, cdf) -> float:
    """One-sample KS statistic of sorted data against a CDF callable."""
    n = len(values)
    cdf_values = cdf(values)
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(0, n) / n
    return float(np.maximum(ecdf_hi - cdf_values, cdf_values - ecdf_lo).max())


def _candidates(values: np.ndarray) -> list[DurationDistribution]:
    """Closed-form fits, ordered from fewest parameters to most."""
    mean = float(values.mean())
    std = float(values.std())
    cands = []
    if mean > 0:
        cands.append(DurationDistribution("exponential", {"mean": mean}))
    cands += [
        DurationDistribution("uniform", {"low": float(values.min()), "high": float(values.max())}),
        DurationDistribution("normal", {"mean": mean, "std": std}),
    ]
    if values.min() > 0:
        logs = np.log(values)
        sigma = float(logs.std())
        if sigma > 0:
            cands.append(DurationDistribution("log_normal", {"mu": float(logs.mean()), "sigma": sigma}))
        var = float(values.var())
        if var > 0:
            cands.append(
                DurationDistribution("gamma", {"shape": mean ** 2 / var, "scale": var / mean})
            )
    return cands


def _frozen(dist: DurationDistribution):
    p = dist.params
    if dist.family == "uniform":
        return stats.uniform(loc=p["low"], scale=p["high"] - p["low"])
    if dist.family == "normal":
        return stats.norm(loc=p["mean"], scale=p["std"])
    if dist.family == "exponential":
        return stats.expon(scale=p["mean"])
    if dist.family == "log_normal":
        return stats.lognorm(s=p["sigma"], scale=math.exp(p["mu"]))
    if dist.family == "gamma":
        return stats.gamma(a=p["shape"], scale=p["scale"])
    raise ValueError(dist.family)


def fit_distribution(delays) -> DurationDistribution:
    """Fit the best of the candidate families to a non-empty multiset of seconds."""
    values = np.asarray(sorted(delays), dtype=float)
    if values.size == 0:
        raise ValueError("cannot fit a distribution to an empty multiset")
    clip = (float(values[0]), float(values[-1]))
    if values[0] == values[-1]:
        return DurationDistribution("fixed", {"value": float(values[0])}, clip=clip)
    best = None
    best_ks = math.inf
    for cand in _candidates(values):
        ks = _ks_statistic(values, _frozen(cand).cdf)
        if ks < best_ks - KS_PREFERENCE_MARGIN:
            best, best_ks = cand, ks
    return DurationDistribution(best.family, best.params, clip=clip)


def sample(dist: DurationDistribution, rng: np.random.Generator) -> float:
    """Draw one non-negative sample; the fixed family returns its value exactly."""
    p = dist.params
    if dist.family == "fixed":
        return p["value"]
    if dist.family == "uniform":
        value = rng.uniform(p["low"], p["high"])
    elif dist.family == "normal":
        value = rng.normal(p["mean"], p["std"])
    elif dist.family == "exponential":
        value = rng.exponential(p["mean"])
    elif dist.family == "log_normal":
        value = rng.lognormal(p["mu"], p["sigma"])
    else:
        value = rng.gamma(p["shape"], p["scale"])
    return max(0.0, float(value))


def distribution_to_json(dist: DurationDistribution) -> dict:
    data = {"family": dist.family, "params": dict(dist.params)}
    if dist.clip is not None:
        data["clip"] = list(dist.clip)
    return data


def distribution_from_json(data: dict) -> DurationDistribution:
    try:
        family = data["family"]
        params = {k: float(v) for k, v in data["params"].items()}
    except (KeyError, TypeError, AttributeError):
        raise SchemaError(f"malformed distribution JSON: {data!r}") from None
    clip = tuple(float(v) for v in data["clip"]) if "clip" in data else None
    return DurationDistribution(family, params, clip=clip)
