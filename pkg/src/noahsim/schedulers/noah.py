"""NOAH: estimated allocations, virtual placement, autonomous worker queues."""

from __future__ import annotations

import math
from collections import deque

from ..errors import InvariantViolation
from ..queueing import estimate_allocations
from .base import Controller, Invoker, WorkerState


class AllocationMap:
    """Virtual allocations ``alloc[k][w]``; nothing is reserved on the worker."""

    def __init__(self, workers: list, z_C: int):
        self.workers = list(workers)
        self.z_C = z_C
        self.alloc: dict[int, dict] = {}

    def of(self, k: int) -> dict:
        return self.alloc.setdefault(k, {w: 0 for w in self.workers})

    def total(self, k: int) -> int:
        return sum(self.alloc.get(k, {}).values())

    def used(self, w) -> int:
        return sum(row[w] for row in self.alloc.values())

    def fractions(self, k: int) -> dict:
        row = self.alloc.get(k, {})
        t = sum(row.values())
        return {w: (n / t if t else 0.0) for w, n in row.items()}

    def copy(self) -> "AllocationMap":
        m = AllocationMap(self.workers, self.z_C)
        m.alloc = {k: dict(row) for k, row in self.alloc.items()}
        return m

    def check(self, targets: dict | None = None) -> None:
        for w in self.workers:
            if self.used(w) > self.z_C:
                raise InvariantViolation(f"worker {w!r} holds {self.used(w)} > z_C={self.z_C}")
        for k, row in self.alloc.items():
            if any(n < 0 for n in row.values()):
                raise InvariantViolation(f"negative allocation for class {k}")
            if targets is not None and k in targets and sum(row.values()) != targets[k]:
                raise InvariantViolation(f"class {k} holds {sum(row.values())} != {targets[k]}")

    def workers_used(self) -> int:
        return sum(1 for w in self.workers if self.used(w) > 0)


def cap_targets(targets: dict[int, int], capacity: int) -> tuple[dict[int, int], bool]:
    """Scale targets down to ``capacity`` by largest remainder, keeping at least one each."""
    total = sum(targets.values())
    if total <= capacity:
        return dict(targets), False
    keys = sorted(targets)
    share = {k: targets[k] * capacity / total for k in keys}
    out = {k: max(1 if targets[k] > 0 else 0, int(math.floor(share[k]))) for k in keys}
    left = capacity - sum(out.values())
    for k in sorted(keys, key=lambda k: (-(share[k] - math.floor(share[k])), k)):
        if left <= 0:
            break
        out[k] += 1
        left -= 1
    while sum(out.values()) > capacity:
        k = max(keys, key=lambda k: (out[k], -k))
        out[k] -= 1
    return out, True


def place_allocations(targets: dict[int, int], current: AllocationMap) -> AllocationMap:
    """Move ``current`` towards ``targets``: scale-ins first, then colocating scale-outs."""
    m = current.copy()
    workers = m.workers
    for k in sorted(targets):
        row = m.of(k)
        excess = sum(row.values()) - targets[k]
        while excess > 0:
            # fewest allocations first; the later worker on ties
            w = min((w for w in workers if row[w] > 0),
                    key=lambda w: (row[w], -workers.index(w)))
            row[w] -= 1
            excess -= 1
    free = {w: m.z_C - m.used(w) for w in workers}
    for k in sorted(targets):
        row = m.of(k)
        need = targets[k] - sum(row.values())
        while need > 0:
            held = [w for w in workers if row[w] > 0 and free[w] > 0]
            if held:
                w = max(held, key=lambda w: (row[w], -workers.index(w)))
            else:
                w = next((w for w in workers if free[w] > 0), None)
                if w is None:
                    raise InvariantViolation("no virtual capacity left for placement")
            take = min(need, free[w])
            row[w] += take
            free[w] -= take
            need -= take
    return m


def drain_time(queued: int, serving: int, mu_hat: float) -> float:
    """Expected time until all ``queued`` events have started on ``serving`` instances."""
    if queued <= 0:
        return 0.0
    if serving <= 0 or mu_hat <= 0:
        return math.inf
    return queued / (serving * mu_hat)


def worker_try_schedule(has_idle: bool, active: int, z_N: int, queued: int, serving: int,
                        mu_hat: float, mean_setup: float, strict: bool = False) -> str:
    """Decide what a worker does with the head event of a class queue.

    With ``strict`` the concurrency limit also gates reuse of idle instances.
    """
    if strict and active >= z_N:
        return "leave-queued"
    if has_idle:
        return "run-on-idle"
    if active >= z_N:
        return "leave-queued"
    if drain_time(queued, serving, mu_hat) < mean_setup:
        return "leave-queued"
    return "launch-instance"


def noah_dispatch(k: int, alloc: AllocationMap, in_flight_cls: dict, free_worker=None):
    """Worker for a class-``k`` event: a reported free instance, else the lowest active ratio."""
    if free_worker is not None:
        return free_worker
    row = alloc.alloc.get(k, {})
    best, best_ratio = None, math.inf
    for w in alloc.workers:
        n = row.get(w, 0)
        if n <= 0:
            continue
        ratio = in_flight_cls.get(w, 0) / n
        if ratio < best_ratio:
            best, best_ratio = w, ratio
    return best


class NoahInvoker(Invoker):
    """Per-class FCFS queues; launches an instance only when waiting looks slower."""

    def __init__(self, platform, worker, z_N, z_C):
        super().__init__(platform, worker, z_N, z_C)
        self.queues: dict[int, deque] = {}
        self.decisions = {"run-on-idle": 0, "leave-queued": 0, "launch-instance": 0}

    def queued(self) -> int:
        return sum(len(q) for q in self.queues.values())

    def state(self) -> WorkerState:
        st = super().state()
        st.queues = {k: len(q) for k, q in self.queues.items() if q}
        return st

    def receive(self, rec) -> None:
        rec.received = self.sim.now
        self.queues.setdefault(rec.cls, deque()).append(rec)
        self.try_schedule(rec.cls)

    def serving(self, k: int) -> int:
        return sum(1 for i in self.pool if i.cls == k and i.state in ("busy", "starting"))

    def try_schedule(self, k: int) -> bool:
        q = self.queues.get(k)
        if not q:
            return False
        inst = self.find_free(k)
        est = self.controller.estimators[k].estimate(self.sim.now)
        action = worker_try_schedule(inst is not None, self.active_count(), self.z_N, len(q),
                                     self.serving(k), est.mu_hat, est.mean_setup,
                                     self.controller.strict_concurrency)
        if action == "launch-instance" and len(self.pool) >= self.z_C:
            victim = self.lru_victim()
            if victim is None or (self.controller.evict_only_absent and self.serving(k) > 0):
                action = "leave-queued"
        self.decisions[action] += 1
        if action == "leave-queued":
            return False
        rec = q.popleft()
        if action == "run-on-idle":
            self.run_on(inst, rec)
            return True
        churn = len(self.pool) >= self.z_C
        if churn:
            self.platform.evict(victim, "churn")
        self.launch(rec, churn)
        return True

    def longest_queue(self) -> int | None:
        best = None
        for k, q in self.queues.items():
            if q and (best is None or len(q) > len(self.queues[best])):
                best = k
        return best

    def on_setup(self, inst, duration: float) -> None:
        if self.controller.setup_basis == "instance":
            super().on_setup(inst, duration)

    def on_complete(self, inst, rec) -> None:
        k = inst.cls
        if self.controller.setup_basis == "event":
            self.controller.estimators[k].add_setup(rec.I)
        if self.queues.get(k):
            self.try_schedule(k)
        else:
            j = self.longest_queue()
            if j is not None:
                self.try_schedule(j)
        if inst.state == "idle":
            self.platform.pause(inst)
            if not self.queues.get(k):
                self.controller.report_free(k, self.worker)


class NoahController(Controller):
    name = "noah"

    def __init__(self, platform, invokers, alpha: float = 1e-4, z_C: int = 32,
                 setup_basis: str = "event", strict_concurrency: bool = False,
                 evict_only_absent: bool = False,
                 check_invariants: bool = True, **kw):
        super().__init__(platform, invokers, **kw)
        self.alpha = {k: (spec.alpha if spec.alpha is not None else alpha)
                      for k, spec in platform.classes.items()}
        self.z_C = z_C
        if setup_basis not in ("event", "instance"):
            raise ValueError("setup_basis must be 'event' or 'instance'")
        self.setup_basis = setup_basis
        self.strict_concurrency = strict_concurrency
        self.evict_only_absent = evict_only_absent
        self.alloc = AllocationMap(self.workers, z_C)
        self.targets: dict[int, int] = {}
        self.saturated = False
        self.reports: dict[int, deque] = {k: deque() for k in platform.classes}
        self.check_invariants = check_invariants
        self.ticks = 0
        self.max_workers_used = 0

    def start(self) -> None:
        self.periodic(self.rebalance)

    def rebalance(self) -> None:
        now = self.sim.now
        targets = {}
        for k, est in self.estimators.items():
            c, _ = estimate_allocations(est.estimate(now), self.alpha[k], cap=self.z_C * len(self.workers))
            targets[k] = c
        targets, self.saturated = cap_targets(targets, self.z_C * len(self.workers))
        self.alloc = place_allocations(targets, self.alloc)
        self.targets = targets
        if self.check_invariants:
            self.alloc.check(targets)
        self.ticks += 1
        self.max_workers_used = max(self.max_workers_used, self.alloc.workers_used())

    def report_free(self, k: int, w) -> None:
        self.reports[k].append(w)

    def _free_worker(self, k: int):
        q = self.reports[k]
        while q:
            w = q.popleft()
            if any(i.cls == k and i.state in ("idle", "paused") for i in self.invokers[w].pool):
                return w
        return None

    def select(self, rec):
        if not self.targets:
            self.rebalance()
        w = noah_dispatch(rec.cls, self.alloc, self.in_flight_cls[rec.cls], self._free_worker(rec.cls))
        if w is None:
            raise InvariantViolation(f"class {rec.cls} has no allocation")
        return w
