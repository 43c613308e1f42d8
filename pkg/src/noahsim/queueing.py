"""Erlang-C, M/M/c response times and the per-class allocation estimator."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .errors import StabilityError


def erlang_b(c: int, a: float) -> float:
    """Blocking probability of M/M/c/c via the stable recurrence."""
    b = 1.0
    for j in range(1, c + 1):
        b = a * b / (j + a * b)
    return b


def erlang_c(c: int, a: float) -> float:
    """Probability that an arrival waits in M/M/c with offered load ``a`` erlangs."""
    if c < 1 or int(c) != c:
        raise ValueError("c must be a positive integer")
    if a < 0:
        raise ValueError("offered load must be >= 0")
    if a >= c:
        raise StabilityError(f"offered load {a} >= servers {c}")
    if a == 0:
        return 0.0
    if c == 1:
        return a
    b = erlang_b(int(c), a)
    return b / (1.0 - (a / c) * (1.0 - b))


def erlang_c_direct(c: int, a: float) -> float:
    """Textbook summation form; used as an independent check of :func:`erlang_c`."""
    if a >= c:
        raise StabilityError(f"offered load {a} >= servers {c}")
    rho = a / c
    # log-space terms keep factorials representable for large c
    log_terms = [j * math.log(a) - math.lgamma(j + 1) for j in range(c)] if a > 0 else [0.0]
    top = c * math.log(a) - math.lgamma(c + 1) - math.log1p(-rho) if a > 0 else -math.inf
    m = max(max(log_terms), top)
    s = sum(math.exp(t - m) for t in log_terms)
    last = math.exp(top - m)
    return last / (s + last)


def mmc_mean_wait(lam: float, mu: float, c: int) -> float:
    if lam >= c * mu:
        raise StabilityError(f"lambda {lam} >= c*mu {c * mu}")
    return erlang_c(c, lam / mu) / (c * mu - lam)


def mmc_mean_response(lam: float, mu: float, c: int) -> float:
    """Mean sojourn of M/M/c (also M/M/c-PS): waiting plus ``1/mu``."""
    return mmc_mean_wait(lam, mu, c) + 1.0 / mu


@dataclass
class RateEstimate:
    class_id: int
    lambda_hat: float
    mu_hat: float
    mean_setup: float = 0.0
    sample_count: int = 0


def estimate_allocations(est: RateEstimate, alpha: float, cap: int | None = None,
                         bootstrap: int = 1) -> tuple[int, bool]:
    """Smallest server count keeping the M/M/c mean wait under ``alpha``.

    Returns ``(c_k, saturated)``; ``saturated`` is set when the cap bound the
    answer.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if est.sample_count < 1 or est.lambda_hat <= 0 or est.mu_hat <= 0:
        return (bootstrap if cap is None else min(bootstrap, cap)), False
    lam, mu = est.lambda_hat, est.mu_hat
    a = lam / mu
    c = max(1, int(math.floor(a)) + 1)
    while True:
        if cap is not None and c >= cap:
            ok = lam < cap * mu and erlang_c(cap, a) / (cap * mu - lam) < alpha
            return cap, not ok
        if erlang_c(c, a) / (c * mu - lam) < alpha:
            return c, False
        c += 1


class RateEstimator:
    """Sliding-window arrival and service rate measurement for one class.

    The arrival rate is ``(n-1)`` gaps over the time from the first arrival in
    the window until now; the service rate is ``n / sum(B)`` over executions that
    completed in the window (execution time only).
    """

    def __init__(self, class_id: int, window: float = 10.0, prior_mu: float | None = None):
        self.class_id = class_id
        self.window = window
        self.prior_mu = prior_mu
        self.arrivals: deque[float] = deque()
        self.executions: deque[tuple[float, float]] = deque()
        self._exec_sum = 0.0
        self.setups: list[float] = []
        self.total_arrivals = 0

    def add_arrival(self, t: float) -> None:
        self.arrivals.append(t)
        self.total_arrivals += 1

    def add_execution(self, t: float, b: float) -> None:
        self.executions.append((t, b))
        self._exec_sum += b

    def add_setup(self, i: float) -> None:
        self.setups.append(i)

    def _trim(self, now: float) -> None:
        lo = now - self.window
        while self.arrivals and self.arrivals[0] < lo:
            self.arrivals.popleft()
        while self.executions and self.executions[0][0] < lo:
            self._exec_sum -= self.executions.popleft()[1]
        if not self.executions:
            self._exec_sum = 0.0

    def estimate(self, now: float) -> RateEstimate:
        self._trim(now)
        n = len(self.arrivals)
        # the open gap since the last arrival counts, so silence lowers the rate
        span = now - self.arrivals[0] if n else 0.0
        lam = (n - 1) / span if n >= 2 and span > 0 else 0.0
        if self.executions and self._exec_sum > 0:
            mu = len(self.executions) / self._exec_sum
        else:
            mu = self.prior_mu or 0.0
        setup = sum(self.setups) / len(self.setups) if self.setups else 0.0
        return RateEstimate(self.class_id, lam, mu, setup, n - 1 if n >= 2 else 0)
