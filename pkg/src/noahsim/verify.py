"""Verification suites: the PS engine against M/M/1 and M/M/c, and analytic oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .engine import Cpu, Simulation
from .queueing import erlang_c, erlang_c_direct, mmc_mean_response
from .schedulers.noncoop import GameState, best_reply, play_game


@dataclass
class VerifyResult:
    name: str
    expected: float
    mean: float
    ci: tuple[float, float]
    replications: int
    passed: bool

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.name}: expected {self.expected:.6g}, observed {self.mean:.6g}, "
                f"interval [{self.ci[0]:.6g}, {self.ci[1]:.6g}] over {self.replications} runs")


def ps_replication(lam: float, mu: float, cores: int, n: int, seed: int, rep: int) -> float:
    """Mean sojourn of ``n`` Poisson arrivals with exponential work on a PS CPU."""
    rng = np.random.default_rng([seed, rep])
    gaps = rng.exponential(1.0 / lam, n)
    work = rng.exponential(1.0 / mu, n)
    sim = Simulation(seed)
    cpu = Cpu(sim, cores)
    arrivals = np.cumsum(gaps)
    total = [0.0]

    def done(ex):
        total[0] += ex.finished_at - ex.started_at

    def arrive(i):
        cpu.submit(float(work[i]), done)
        if i + 1 < n:
            sim.at(float(arrivals[i + 1]), arrive, i + 1)

    sim.at(float(arrivals[0]), arrive, 0)
    sim.run()
    return total[0] / n


def t_interval(samples, confidence: float = 0.95) -> tuple[float, float]:
    x = np.asarray(samples, dtype=float)
    lo, hi = stats.t.interval(confidence, len(x) - 1, loc=x.mean(), scale=stats.sem(x))
    return float(lo), float(hi)


def verify_ps(lam: float, mu: float, cores: int, replications: int = 100, n: int = 10_000,
              seed: int = 0, name: str | None = None) -> VerifyResult:
    means = [ps_replication(lam, mu, cores, n, seed, r) for r in range(replications)]
    expected = mmc_mean_response(lam, mu, cores)
    lo, hi = t_interval(means)
    return VerifyResult(name or f"M/M/{cores} lambda={lam:g} mu={mu:g}", expected,
                        float(np.mean(means)), (lo, hi), replications, lo <= expected <= hi)


def verify_mm1(replications: int = 100, n: int = 10_000, seed: int = 0) -> VerifyResult:
    return verify_ps(8.0, 10.0, 1, replications, n, seed, "M/M/1 lambda=8 mu=10")


def verify_mmc(replications: int = 100, n: int = 10_000, seed: int = 0) -> VerifyResult:
    return verify_ps(32.0, 10.0, 4, replications, n, seed, "M/M/4 lambda=32 mu=10")


def erlang_grid_error(max_c: int = 64, max_a: float = 60.0, steps: int = 121) -> float:
    """Largest relative gap between the recurrence and direct summation on a stable grid."""
    worst = 0.0
    for c in range(1, max_c + 1):
        for a in np.linspace(0.0, max_a, steps)[1:]:
            if a >= c:
                break
            x, y = erlang_c(c, float(a)), erlang_c_direct(c, float(a))
            worst = max(worst, abs(x - y) / y)
    return worst


def verify_erlang(max_c: int = 64, max_a: float = 60.0, tol: float = 1e-12) -> VerifyResult:
    err = erlang_grid_error(max_c, max_a)
    single = all(erlang_c(1, r) == r for r in np.linspace(0.0, 0.99, 100))
    return VerifyResult("Erlang-C recurrence vs summation", 0.0, err, (0.0, tol), 1,
                        err < tol and single)


def reply_by_multiplier(phi: float, residual, iters: int = 200) -> list[float]:
    """Best reply from the stationarity condition, bisecting on the multiplier.

    At an interior optimum ``r / (r - s*phi)**2`` is equal across used
    machines, so ``s_i(nu) = max(0, (r_i - sqrt(r_i / nu)) / phi)``.
    """
    r = np.asarray(residual, dtype=float)
    pos = r > 0

    def share(nu):
        x = np.zeros_like(r)
        x[pos] = np.maximum(0.0, (r[pos] - np.sqrt(r[pos] / nu)) / phi)
        return x

    lo, hi = 1e-300, 1.0
    while share(hi).sum() < 1.0:
        hi *= 2.0
    for _ in range(iters):
        mid = math.sqrt(lo * hi) if hi / lo > 4 else 0.5 * (lo + hi)
        if share(mid).sum() < 1.0:
            lo = mid
        else:
            hi = mid
    x = share(hi)
    return (x / x.sum()).tolist()


def reply_by_ternary(phi: float, r1: float, r2: float, iters: int = 200) -> float:
    """Fraction on machine 1 minimising the two-machine response directly."""
    def cost(s):
        a, b = s * phi, (1 - s) * phi
        if a >= r1 or b >= r2:
            return math.inf
        return s / (r1 - a) + (1 - s) / (r2 - b)

    lo, hi = max(0.0, 1.0 - r2 / phi), min(1.0, r1 / phi)  # both queues stay stable
    for _ in range(iters):
        m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if cost(m1) <= cost(m2):
            hi = m2
        else:
            lo = m1
    return 0.5 * (lo + hi)


def best_reply_error(trials: int = 1000, seed: int = 0) -> float:
    """Largest fraction gap between water-filling and the two numerical oracles."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 6))
        r = rng.uniform(0.5, 20.0, n)
        phi = float(rng.uniform(0.05, 0.95) * r.sum())
        got = best_reply(phi, r.tolist())
        worst = max(worst, max(abs(a - b) for a, b in zip(got, reply_by_multiplier(phi, r))))
        if n == 2:
            worst = max(worst, abs(got[0] - reply_by_ternary(phi, float(r[0]), float(r[1]))))
    return worst


def homogeneous_rounds(trials: int = 200, seed: int = 0) -> int:
    """Most rounds any homogeneous game needed to settle on uniform fractions.

    Players start with nothing assigned and join through their first reply.
    """
    rng = np.random.default_rng(seed)
    worst = 0
    for _ in range(trials):
        machines = int(rng.integers(2, 11))
        players = int(rng.integers(1, 11))
        mu = [float(rng.uniform(1.0, 100.0))] * machines
        phi = (rng.dirichlet(np.ones(players)) * rng.uniform(0.05, 0.95) * sum(mu)).tolist()
        empty = [[0.0] * machines for _ in range(players)]
        state = play_game(GameState(phi, mu, epsilon=1e-9, s=empty))
        uniform = all(abs(x - 1.0 / machines) < 1e-9 for row in state.s for x in row)
        worst = max(worst, state.rounds if state.converged and uniform else 10**9)
    return worst


def verify_oracles(trials: int = 1000, seed: int = 0, tol: float = 1e-6) -> list[VerifyResult]:
    err = best_reply_error(trials, seed)
    rounds = homogeneous_rounds(seed=seed)
    return [VerifyResult("best reply vs numerical minimisation", 0.0, err, (0.0, tol), trials,
                         err < tol),
            VerifyResult("homogeneous game rounds", 2.0, float(rounds), (1.0, 2.0), 200,
                         rounds <= 2)]


SUITES = {"mm1": verify_mm1, "mmc": verify_mmc, "erlang": verify_erlang, "oracles": verify_oracles}


def run_suites(names, replications: int = 100, n: int = 10_000, seed: int = 0) -> list[VerifyResult]:
    out = []
    for name in names:
        fn = SUITES[name]
        if name == "erlang":
            out.append(fn())
        elif name == "oracles":
            out.extend(fn(seed=seed))
        else:
            out.append(fn(replications, n, seed))
    return out


def relative_error(x: float, y: float) -> float:
    return abs(x - y) / max(abs(y), math.ulp(1.0))
