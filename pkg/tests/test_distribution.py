import numpy as np
import pytest

from delayminer.distribution import (
    DurationDistribution,
    distribution_from_json,
    distribution_to_json,
    fit_distribution,
    sample,
)
from delayminer.errors import SchemaError


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


def test_fit_zero_variance_is_fixed():
    dist = fit_distribution([3600, 3600, 3600])
    assert dist.family == "fixed"
    assert dist.params == {"value": 3600.0}


def test_fit_empty_rejected():
    with pytest.raises(ValueError):
        fit_distribution([])


def test_fit_recovers_exponential():
    draws = rng(42).exponential(600.0, size=10_000)
    dist = fit_distribution(draws)
    assert dist.family == "exponential"
    assert dist.params["mean"] == pytest.approx(600.0, rel=0.05)


def test_fit_recovers_normal():
    draws = rng(7).normal(5000.0, 250.0, size=10_000)
    dist = fit_distribution(draws)
    assert dist.family == "normal"
    assert dist.params["mean"] == pytest.approx(5000.0, rel=0.02)


def test_fit_recovers_uniform():
    draws = rng(11).uniform(100.0, 900.0, size=10_000)
    assert fit_distribution(draws).family == "uniform"


def test_fit_recovers_log_normal():
    draws = rng(13).lognormal(6.0, 0.8, size=10_000)
    dist = fit_distribution(draws)
    assert dist.family == "log_normal"
    assert dist.params["mu"] == pytest.approx(6.0, abs=0.05)


def test_fit_mean_with_zeros():
    dist = fit_distribution([0.0, 0.0, 7200.0])
    assert dist.mean == pytest.approx(2400.0, rel=0.1)


def test_sample_fixed_exact():
    dist = DurationDistribution("fixed", {"value": 900.0})
    assert sample(dist, rng(1)) == 900.0
    assert sample(dist, rng(999)) == 900.0


def test_sample_mean_law_of_large_numbers():
    dist = DurationDistribution("exponential", {"mean": 600.0})
    generator = rng(5)
    values = [sample(dist, generator) for _ in range(100_000)]
    assert np.mean(values) == pytest.approx(600.0, rel=0.02)


def test_sample_truncated_at_zero():
    dist = DurationDistribution("normal", {"mean": 100.0, "std": 50.0})
    generator = rng(3)
    values = [sample(dist, generator) for _ in range(5000)]
    assert min(values) >= 0.0


def test_sample_seed_determinism():
    dist = DurationDistribution("gamma", {"shape": 2.0, "scale": 300.0})
    first = [sample(dist, rng(17)) for _ in range(0, 1)]
    second = [sample(dist, rng(17)) for _ in range(0, 1)]
    assert first == second
    stream_a = [sample(dist, g) for g in [rng(4)] for _ in range(10)]
    stream_b = [sample(dist, g) for g in [rng(4)] for _ in range(10)]
    assert stream_a == stream_b


def test_refit_stability():
    for base in (
        DurationDistribution("exponential", {"mean": 450.0}),
        DurationDistribution("normal", {"mean": 9000.0, "std": 400.0}),
    ):
        generator = rng(23)
        draws = [sample(base, generator) for _ in range(20_000)]
        assert fit_distribution(draws).family == base.family


def test_json_round_trip():
    dist = fit_distribution([10.0, 20.0, 30.0, 15.0])
    data = distribution_to_json(dist)
    assert distribution_from_json(data) == dist
    minimal = distribution_from_json({"family": "exponential", "params": {"mean": 600.0}})
    assert minimal.family == "exponential" and minimal.clip is None


def test_invalid_family_and_params():
    with pytest.raises(SchemaError):
        DurationDistribution("weibull", {"k": 1.0})
    with pytest.raises(SchemaError):
        DurationDistribution("fixed", {"low": 1.0})
