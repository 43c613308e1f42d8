import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from noahsim.errors import StabilityError
from noahsim.queueing import (RateEstimate, RateEstimator, erlang_c, erlang_c_direct,
                              estimate_allocations, mmc_mean_response)


def erlang_c_factorial(c, a):
    # plain textbook form, exact enough for small c
    rho = a / c
    top = a ** c / math.factorial(c) / (1 - rho)
    return top / (sum(a ** j / math.factorial(j) for j in range(c)) + top)


def test_single_server_equals_utilisation():
    assert erlang_c(1, 0.8) == 0.8


def test_four_servers_against_summation():
    assert erlang_c(4, 3.2) == pytest.approx(0.59643247, abs=1e-8)
    assert erlang_c(4, 3.2) == pytest.approx(erlang_c_factorial(4, 3.2), rel=1e-12)


def test_no_load_never_waits():
    assert erlang_c(7, 0.0) == 0.0


def test_unstable_load_is_rejected():
    with pytest.raises(StabilityError):
        erlang_c(3, 3.0)
    with pytest.raises(StabilityError):
        mmc_mean_response(10.0, 5.0, 2)


def test_mean_response_examples():
    assert mmc_mean_response(8, 10, 1) == pytest.approx(0.5, abs=1e-12)
    assert mmc_mean_response(32, 10, 4) == pytest.approx(0.1746, abs=5e-5)
    assert mmc_mean_response(1e-9, 10, 3) == pytest.approx(0.1, abs=1e-9)


@pytest.mark.parametrize("c", [1, 2, 5, 13, 30, 64])
def test_recurrence_matches_summation(c):
    for a in np.linspace(0.01, min(c, 60) - 0.01, 40):
        x, y = erlang_c(c, float(a)), erlang_c_direct(c, float(a))
        assert abs(x - y) / y < 1e-12


@given(c=st.integers(1, 40), a=st.floats(0.01, 39.0), da=st.floats(0.001, 1.0))
def test_monotone_in_load_and_servers(c, a, da):
    if a + da >= c:
        return
    assert erlang_c(c, a + da) >= erlang_c(c, a)
    assert erlang_c(c + 1, a) <= erlang_c(c, a)


def linear_scan(lam, mu, alpha):
    c = 1
    while True:
        if lam < c * mu and erlang_c_factorial(c, lam / mu) / (c * mu - lam) < alpha:
            return c
        c += 1


@pytest.mark.parametrize("alpha", [1e-2, 1e-4])
@pytest.mark.parametrize("lam", [1, 5, 10, 20, 40])
def test_allocations_match_linear_scan(lam, alpha):
    c, sat = estimate_allocations(RateEstimate(0, lam, 5.0, 0.0, 10), alpha)
    assert c == linear_scan(lam, 5.0, alpha)
    assert not sat


def test_allocation_table_at_mu_five():
    got = {lam: estimate_allocations(RateEstimate(0, lam, 5.0, 0.0, 10), 1e-2)[0]
           for lam in (1, 5, 10, 20, 40, 80)}
    assert got == {1: 2, 5: 3, 10: 5, 20: 7, 40: 12, 80: 21}


def test_allocations_bootstrap_and_cap():
    assert estimate_allocations(RateEstimate(0, 0.0, 0.0), 1e-4) == (1, False)
    c, sat = estimate_allocations(RateEstimate(0, 1000.0, 5.0, 0.0, 10), 1e-4, cap=160)
    assert (c, sat) == (160, True)


@given(lam=st.floats(0.1, 79.9), dl=st.floats(0.0, 5.0))
def test_allocations_monotone(lam, dl):
    est = lambda x: RateEstimate(0, x, 5.0, 0.0, 10)
    for alpha in (1e-2, 1e-3, 1e-4, 1e-5):
        assert estimate_allocations(est(lam + dl), alpha)[0] >= estimate_allocations(est(lam), alpha)[0]
    cs = [estimate_allocations(est(lam), a)[0] for a in (1e-2, 1e-3, 1e-4, 1e-5)]
    assert cs == sorted(cs)


def test_estimator_measures_rates_in_window():
    est = RateEstimator(0, window=10.0, prior_mu=5.0)
    assert est.estimate(0.0).mu_hat == 5.0
    for i in range(11):
        est.add_arrival(i * 0.5)
    for t in (1.0, 2.0):
        est.add_execution(t, 0.25)
    e = est.estimate(5.0)
    assert e.lambda_hat == pytest.approx(2.0)
    assert e.mu_hat == pytest.approx(4.0)
    assert e.sample_count == 10
    # arrivals stop: the open gap lowers the rate, then the window empties
    assert est.estimate(10.0).lambda_hat == pytest.approx(1.0)
    late = est.estimate(30.0)
    assert late.lambda_hat == 0.0 and late.mu_hat == 5.0
