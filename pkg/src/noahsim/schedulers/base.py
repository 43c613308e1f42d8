"""Controller and invoker plumbing shared by every scheduling approach."""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from ..errors import InvariantViolation
from ..metrics import SojournRecord
from ..queueing import RateEstimator

if TYPE_CHECKING:
    from ..platform import Instance, Platform


@dataclass
class WorkerState:
    """Scheduler-visible load of one worker."""

    worker_id: object
    z_N: int
    z_C: int
    active: int = 0  # N_w(t)
    pooled: int = 0  # C_w(t)
    queues: dict = field(default_factory=dict)  # class -> queued count
    queue_total: int = 0  # L_w(t)

    @property
    def load(self) -> int:
        return self.queue_total + self.active


class Invoker:
    """Worker-side instance pool.  Subclasses decide the queueing discipline."""

    def __init__(self, platform: "Platform", worker, z_N: int, z_C: int):
        self.platform = platform
        self.sim = platform.sim
        self.worker = worker
        self.z_N = z_N
        self.z_C = z_C
        self.pool: list["Instance"] = []
        self.controller = None
        self.created = 0

    # -- pool helpers

    def active_count(self) -> int:
        return sum(1 for i in self.pool if i.state in ("busy", "starting"))

    def find_free(self, cls: int) -> "Instance | None":
        """Idle instance of ``cls``, else the most recently used paused one."""
        best = None
        for inst in self.pool:
            if inst.cls != cls:
                continue
            if inst.state == "idle":
                return inst
            if inst.state == "paused" and (best is None or inst.last_used > best.last_used):
                best = inst
        return best

    def lru_victim(self, exclude_cls: int | None = None) -> "Instance | None":
        victim = None
        for inst in self.pool:
            if inst.state != "paused" or inst.cls == exclude_cls:
                continue
            if victim is None or inst.last_used < victim.last_used:
                victim = inst
        return victim

    def instance_gone(self, inst: "Instance", reason: str) -> None:
        try:
            self.pool.remove(inst)
        except ValueError:
            pass

    def launch(self, rec: SojournRecord, churn: bool) -> "Instance":
        rec.dequeued = self.sim.now
        rec.churn = churn
        inst = self.platform.create_instance(rec.cls, self.worker, lambda i: self._ready(i, rec),
                                             churn=churn)
        self.pool.append(inst)
        self.created += 1
        return inst

    def _ready(self, inst: "Instance", rec: SojournRecord) -> None:
        self.on_setup(inst, inst.record.ready_at - inst.record.created_at)
        self.platform.invoke(inst, rec, self._finished)

    def run_on(self, inst: "Instance", rec: SojournRecord) -> None:
        rec.dequeued = self.sim.now
        self.platform.invoke(inst, rec, self._finished)

    def _finished(self, inst: "Instance", rec: SojournRecord) -> None:
        self.controller.completed(rec)
        self.on_complete(inst, rec)

    def on_setup(self, inst: "Instance", duration: float) -> None:
        self.controller.estimators[inst.cls].add_setup(duration)

    # -- interface

    def receive(self, rec: SojournRecord) -> None:
        raise NotImplementedError

    def on_complete(self, inst: "Instance", rec: SojournRecord) -> None:
        raise NotImplementedError

    def queued(self) -> int:
        raise NotImplementedError

    def state(self) -> WorkerState:
        return WorkerState(self.worker, self.z_N, self.z_C, self.active_count(), len(self.pool),
                           {}, self.queued())


class FcfsInvoker(Invoker):
    """Single FCFS queue; concurrency and pool share one (oversubscribed) limit."""

    def __init__(self, platform, worker, z_N, z_C):
        super().__init__(platform, worker, z_N, z_C)
        self.queue: deque[SojournRecord] = deque()
        self._active = 0

    def queued(self) -> int:
        return len(self.queue)

    def receive(self, rec: SojournRecord) -> None:
        rec.received = self.sim.now
        self.queue.append(rec)
        self.step()

    def step(self) -> list[SojournRecord]:
        """Dequeue in FCFS order while the concurrency limit allows."""
        processed = []
        queue = self.queue
        while queue and self._active < self.z_N:
            rec = queue[0]
            inst = self.find_free(rec.cls)
            if inst is not None:
                queue.popleft()
                self._active += 1
                self.run_on(inst, rec)
            else:
                churn = False
                if len(self.pool) >= self.z_C:
                    victim = self.lru_victim()
                    if victim is None:
                        break
                    self.platform.evict(victim, "churn")
                    churn = True
                queue.popleft()
                self._active += 1
                self.launch(rec, churn)
            processed.append(rec)
        for inst in self.pool:
            if inst.state == "idle":
                self.platform.pause(inst)
        return processed

    def on_complete(self, inst, rec) -> None:
        self._active -= 1
        self.step()


class Controller:
    """Dispatches arriving events to invokers and tracks in-flight load."""

    name = "controller"

    def __init__(self, platform: "Platform", invokers: dict, message_delay: float = 0.0,
                 window: float = 10.0, tick: float = 0.1):
        self.platform = platform
        self.sim = platform.sim
        self.invokers = invokers
        self.workers = list(invokers)
        for inv in invokers.values():
            inv.controller = self
        self.message_delay = message_delay
        self.window = window
        self.tick_period = tick
        self.in_flight = {w: 0 for w in self.workers}
        self.in_flight_cls: dict = defaultdict(lambda: {w: 0 for w in self.workers})
        self.dispatched: dict = defaultdict(int)
        self.completed_count = 0
        self.total = 0
        self.records: list[SojournRecord] = []
        self.estimators: dict[int, RateEstimator] = {}
        for k, spec in platform.classes.items():
            self.estimators[k] = RateEstimator(k, window, prior_mu=1.0 / spec.demand if spec.demand else None)

    def expect(self, n: int) -> None:
        self.total = n

    @property
    def finished(self) -> bool:
        return self.completed_count >= self.total

    def start(self) -> None:
        """Hook for periodic work; called once before the run starts."""

    def arrive(self, rec: SojournRecord) -> None:
        self.estimators[rec.cls].add_arrival(self.sim.now)
        w = self.select(rec)
        if w not in self.in_flight:
            raise InvariantViolation(f"{self.name} selected unknown worker {w!r}")
        self.dispatched[(rec.cls, rec.seq)] += 1
        self.in_flight[w] += 1
        self.in_flight_cls[rec.cls][w] += 1
        rec.worker = w
        rec.dispatch_delay = self.message_delay
        self.records.append(rec)
        inv = self.invokers[w]
        if self.message_delay > 0:
            self.sim.schedule(self.message_delay, inv.receive, rec)
        else:
            inv.receive(rec)

    def completed(self, rec: SojournRecord) -> None:
        w = rec.worker
        self.in_flight[w] -= 1
        self.in_flight_cls[rec.cls][w] -= 1
        self.completed_count += 1
        self.estimators[rec.cls].add_execution(self.sim.now, rec.B)
        self.on_completed(rec)

    def on_completed(self, rec: SojournRecord) -> None:
        pass

    def select(self, rec: SojournRecord):
        raise NotImplementedError

    def loads(self) -> list[int]:
        return [self.in_flight[w] for w in self.workers]

    def periodic(self, fn) -> None:
        """Run ``fn`` every tick period while events are outstanding."""
        def loop():
            if self.finished:
                return
            fn()
            self.sim.schedule(self.tick_period, loop)
        self.sim.schedule(0.0, loop)
