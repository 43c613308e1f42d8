import numpy as np
import pytest
from scipy import stats

from noahsim.workload import (Event, ScenarioConfig, expected_event_count, format_trace,
                              generate_arrivals, read_trace, sawtooth_rate, sawtooth_workload,
                              sync_penalty_execution, write_trace)


def test_sawtooth_shape():
    assert sawtooth_rate(20, 80) == 80
    assert sawtooth_rate(0.5, 80) == 4
    assert sawtooth_rate(25, 80) == 0
    assert sawtooth_rate(0, 80) == 0
    with pytest.raises(ValueError):
        sawtooth_rate(-1, 80)


def test_zero_rate_gives_no_events():
    assert generate_arrivals(0, lambda t: 0.0, 1, 100.0) == []


def test_constant_rate_mean_gap():
    ev = generate_arrivals(3, lambda t: 8.0, 11, 10_000.0)
    gaps = np.diff([e.arrival for e in ev])
    assert np.mean(gaps) == pytest.approx(1 / 8, rel=0.01)
    assert [e.seq for e in ev] == list(range(len(ev)))
    assert all(np.diff([e.arrival for e in ev]) >= 0)


def test_expected_total_and_empirical_count():
    cfg = ScenarioConfig(lambda_max=80)
    assert expected_event_count(cfg) == pytest.approx(8400)
    counts = [len(sawtooth_workload(ScenarioConfig(lambda_max=80, seed=s))) for s in range(3)]
    assert all(abs(n - 8400) / 8400 < 0.03 for n in counts)


def test_segment_counts_are_poisson():
    rate = 6.0
    counts = []
    for seed in range(1000):
        ev = generate_arrivals(0, lambda t: rate, seed, 1.0)
        counts.append(len(ev))
    counts = np.array(counts)
    top = 14
    observed = [np.sum(counts == k) for k in range(top)] + [np.sum(counts >= top)]
    pmf = [stats.poisson.pmf(k, rate) for k in range(top)]
    expected = np.array(pmf + [1 - sum(pmf)]) * len(counts)
    _, p = stats.chisquare(observed, expected)
    assert p > 0.01


def test_same_seed_same_trace_bytes(tmp_path):
    a = format_trace(sawtooth_workload(ScenarioConfig(lambda_max=20, seed=4)))
    b = format_trace(sawtooth_workload(ScenarioConfig(lambda_max=20, seed=4)))
    c = format_trace(sawtooth_workload(ScenarioConfig(lambda_max=20, seed=5)))
    assert a == b != c


def test_trace_roundtrip(tmp_path):
    events = sawtooth_workload(ScenarioConfig(lambda_max=5, seed=2))
    path = write_trace(events, tmp_path / "w.csv")
    assert read_trace(path) == events
    assert path.read_text().splitlines()[0] == "class,seq,arrival,demand"


def test_events_order_by_time_then_class():
    assert sorted([Event(1.0, 2, 0), Event(1.0, 1, 5), Event(0.5, 9, 0)])[0].cls == 9
    assert sorted([Event(1.0, 2, 0), Event(1.0, 1, 5)])[0].cls == 1


def test_sync_penalty():
    assert sync_penalty_execution(0.2, 0.1, 1.0) == 0.2
    assert sync_penalty_execution(0.2, 0.1, 0.5) == pytest.approx(0.225)
    assert sync_penalty_execution(0.2, 0.0, 0.3) == 0.2
    with pytest.raises(ValueError):
        sync_penalty_execution(0.2, 0.1, 1.5)


def test_scenario_validation():
    from noahsim.errors import ConfigurationError
    with pytest.raises(ConfigurationError):
        ScenarioConfig(num_workers=0)
    with pytest.raises(ConfigurationError):
        ScenarioConfig(lambda_max=-1)
