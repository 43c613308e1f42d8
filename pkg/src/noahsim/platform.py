"""Serverless platform operation on top of the engine.

Named data items are replicated between locations (workers and the image /
code repository).  A replication reads at the source, writes at the target
and runs a transfer timer for the link class; it completes with the last of
the three.  Instances are created from a class's code item: dependencies are
replicated and read once, the container-creation work is executed, and a
function-init timer runs alongside the code replication.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

from .engine import Allocation, Engine, Node
from .errors import (AllocationImpossibleError, ConfigurationError, DataMissingError,
                     EvictionError, InstanceCreationError, InvariantViolation)
from .metrics import InstanceRecord, SojournRecord
from .workload import sync_penalty_execution

REPOSITORY = "repository"


@dataclass
class PlatformDelays:
    container_create: float = 0.482  # extra CPU work on instance creation
    function_init: float = 0.300  # timer alongside code replication
    cold_cache_init: float = 0.0  # first pull of a code item from the repository
    resume: float = 0.0086
    warm_start: tuple[float, float] = (0.001, 0.020)
    idle_timeout: float = 300.0
    worker_setup: float = 0.0  # t_W

    def __post_init__(self):
        lo, hi = self.warm_start
        values = (self.container_create, self.function_init, self.cold_cache_init, self.resume,
                  lo, hi, self.idle_timeout, self.worker_setup)
        if min(values) < 0 or hi < lo:
            raise ConfigurationError("platform delays must be non-negative")


@dataclass
class DataItem:
    name: str
    size: float
    dependencies: list[str] = field(default_factory=list)
    init_extra_work: float = 0.0
    init_extra_delay: float = 0.0
    replicas: dict = field(default_factory=dict)  # location -> Allocation
    pulled: bool = False  # has left the repository at least once


@dataclass
class ClassSpec:
    """Catalog entry for one function class."""

    class_id: int
    name: str
    demand: float = 0.200
    code_size: float = 1.0
    dependencies: tuple[str, ...] = ("image", "runtime")
    footprint: float = 430.0
    beta: float = 0.0
    alpha: float | None = None

    @property
    def code_item(self) -> str:
        return f"code:{self.name}"


def node_of(location):
    return location[0] if isinstance(location, tuple) else location


class DataLayer:
    """Replicated named data over the nodes of an :class:`Engine`."""

    def __init__(self, engine: Engine, memory_speed: float, network_speed: float,
                 disk_speed: float, cold_cache_init: float = 0.0):
        self.engine = engine
        self.items: dict[str, DataItem] = {}
        self.memory_speed = memory_speed
        self.network_speed = network_speed
        self.disk_speed = disk_speed
        self.cold_cache_init = cold_cache_init
        self._inflight: dict = {}
        self.transfers = 0

    def add_item(self, item: DataItem, at=()) -> DataItem:
        if item.name in self.items:
            raise ConfigurationError(f"duplicate data item {item.name!r}")
        self.items[item.name] = item
        for loc in at:
            self.place(item, loc)
        return item

    def item(self, name: str) -> DataItem:
        try:
            return self.items[name]
        except KeyError:
            raise DataMissingError(f"unknown data item {name!r}") from None

    def place(self, item: DataItem, location) -> Allocation:
        """Register a replica without simulating a transfer (initial placement)."""
        if location in item.replicas:
            return item.replicas[location]
        mem = self.engine.node(node_of(location)).memory
        alloc = mem.allocate(item.size, tag=item.name)
        self._register(item, location, alloc)
        return alloc

    def _register(self, item: DataItem, location, alloc: Allocation) -> None:
        item.replicas[location] = alloc

        def drop(a, item=item, location=location):
            if item.replicas.get(location) is a:
                del item.replicas[location]
        alloc.memory.subscribe(alloc, drop)

    def replica(self, name: str, location) -> Allocation | None:
        return self.item(name).replicas.get(location)

    def link_speed(self, source, target) -> float:
        s, t = node_of(source), node_of(target)
        if s == REPOSITORY or t == REPOSITORY:
            return self.disk_speed
        if s == t:
            return self.memory_speed
        return self.network_speed

    def choose_source(self, item: DataItem, target, exclude=()):
        candidates = [loc for loc in item.replicas if loc != target and loc not in exclude]
        if not candidates:
            return None
        tnode = node_of(target)

        def rank(loc):
            n = node_of(loc)
            cls = 0 if n == tnode else (2 if n == REPOSITORY else 1)
            return (cls, str(loc))
        return min(candidates, key=rank)

    def replicate(self, name: str, target, on_done: Callable[[float], None],
                  on_error: Callable[[Exception], None] | None = None) -> None:
        """Copy ``name`` to ``target``; ``on_done(duration)`` fires once it is registered."""
        item = self.item(name)
        sim = self.engine.sim
        if target in item.replicas:
            sim.schedule(0.0, on_done, 0.0)
            return
        key = (name, target)
        waiters = self._inflight.get(key)
        if waiters is not None:
            waiters.append((on_done, on_error))
            return
        self._inflight[key] = [(on_done, on_error)]
        self._attempt(item, target, sim.now, set())

    def _finish(self, item: DataItem, target, result, failed: bool) -> None:
        waiters = self._inflight.pop((item.name, target), [])
        for on_done, on_error in waiters:
            if not failed:
                on_done(result)
            elif on_error is not None:
                on_error(result)
            else:
                raise result

    def _attempt(self, item: DataItem, target, started: float, tried: set) -> None:
        sim = self.engine.sim
        source = self.choose_source(item, target, tried)
        if source is None:
            self._finish(item, target, DataMissingError(f"no replica of {item.name!r}"), True)
            return
        src_alloc = item.replicas[source]
        tnode = self.engine.node(node_of(target))
        try:
            dst_alloc = tnode.memory.allocate(item.size, tag=item.name)
        except AllocationImpossibleError as exc:
            self._finish(item, target, exc, True)
            return
        if src_alloc is not None and not src_alloc.live:
            tnode.memory.free(dst_alloc)
            tried.add(source)
            self._attempt(item, target, started, tried)
            return
        state = {"left": 3, "dead": False}

        def leg_done(_=None):
            if state["dead"]:
                return
            state["left"] -= 1
            if state["left"] == 0:
                if not dst_alloc.live:
                    self._finish(item, target, EvictionError(dst_alloc.id), True)
                    return
                self._register(item, target, dst_alloc)
                self.transfers += 1
                self._finish(item, target, sim.now - started, False)

        def source_failed(exc):
            if state["dead"]:
                return
            state["dead"] = True
            tnode.memory.free(dst_alloc)
            tried.add(source)
            self._attempt(item, target, started, tried)

        def target_failed(exc):
            if state["dead"]:
                return
            state["dead"] = True
            self._finish(item, target, exc, True)

        speed = self.link_speed(source, target)
        delay = item.size / speed
        if node_of(source) == REPOSITORY and not item.pulled:
            delay += self.cold_cache_init
        item.pulled = True
        snode = self.engine.node(node_of(source))
        snode.memory.read(src_alloc, item.size, leg_done, source_failed)
        tnode.memory.write(dst_alloc, item.size, leg_done, target_failed)
        sim.schedule(delay, leg_done)


class Instance:
    """A function instance (container) bound to one worker."""

    __slots__ = ("id", "cls", "worker", "state", "record", "context", "deps", "event",
                 "paused_at", "platform", "_evict_cb", "requested_at")

    def __init__(self, id_, cls, worker, platform):
        self.id = id_
        self.cls = cls
        self.worker = worker
        self.state = "cold"
        self.platform = platform
        self.record = InstanceRecord(id_, cls, worker, platform.engine.now)
        self.context: Allocation | None = None
        self.deps: list[Allocation] = []
        self.event: SojournRecord | None = None
        self.paused_at: float | None = None
        self.requested_at = platform.engine.now
        self._evict_cb = self._on_allocation_evicted

    def _on_allocation_evicted(self, alloc) -> None:
        self.platform._lost_allocation(self, alloc)

    @property
    def last_used(self) -> float:
        r = self.record
        return r.last_finished_at if r.last_finished_at is not None else (r.ready_at or r.created_at)

    def __repr__(self):
        return f"Instance({self.id}, cls={self.cls}, worker={self.worker!r}, {self.state})"


_TRANSITIONS = {
    "cold": {"starting"},
    "starting": {"idle"},
    "idle": {"busy", "paused"},
    "busy": {"idle"},
    "paused": {"idle"},
}


class Platform:
    """Instances and invocations over an engine plus data layer."""

    def __init__(self, engine: Engine, data: DataLayer, delays: PlatformDelays,
                 classes: dict[int, ClassSpec], workers: list):
        self.engine = engine
        self.sim = engine.sim
        self.data = data
        self.delays = delays
        self.classes = classes
        self.workers = list(workers)
        self.instances: dict[int, Instance] = {}
        self.instance_log: list[InstanceRecord] = []
        self._ids = itertools.count(1)
        self._warm_rng = self.sim.rng("warm-start")
        self.phi: Callable[[int, object], float] | None = None
        self.on_instance_evicted: Callable[[Instance, str], None] | None = None
        for w in self.workers:
            engine.node(w)

    # -- lifecycle

    def _set_state(self, inst: Instance, new: str) -> None:
        if new != "evicted" and new not in _TRANSITIONS.get(inst.state, ()):
            raise InvariantViolation(f"illegal transition {inst.state} -> {new} for {inst!r}")
        inst.state = new

    def create_instance(self, cls: int, worker, on_ready: Callable[[Instance], None],
                        churn: bool = False) -> Instance:
        """Start a new instance of ``cls`` on ``worker``; ``on_ready`` fires when it is idle."""
        spec = self.classes[cls]
        node: Node = self.engine.node(worker)
        inst = Instance(next(self._ids), cls, worker, self)
        inst.record.churn = churn
        try:
            inst.context = node.memory.allocate(spec.footprint, [inst._evict_cb], tag=f"ctx:{inst.id}")
        except AllocationImpossibleError as exc:
            raise InstanceCreationError(str(exc)) from exc
        self.instances[inst.id] = inst
        self.instance_log.append(inst.record)
        self._set_state(inst, "starting")
        code = self.data.item(spec.code_item)
        d = self.delays

        def fail(exc):
            raise InvariantViolation(f"instance {inst.id} setup failed: {exc}") from exc

        def join(n, then):
            left = [n]

            def leg(_=None):
                left[0] -= 1
                if left[0] == 0:
                    then()
            return leg

        def read_all(names, then):
            if not names:
                self.sim.schedule(0.0, then)
                return
            leg = join(len(names), then)
            for name in names:
                alloc = self.data.replica(name, worker)
                if alloc is None:
                    fail(DataMissingError(f"{name} vanished from {worker}"))
                node.memory.subscribe(alloc, inst._evict_cb)
                inst.deps.append(alloc)
                node.memory.read(alloc, alloc.size, leg, fail)

        def ready():
            if inst.state == "evicted":
                return
            inst.record.ready_at = self.sim.now
            self._set_state(inst, "idle")
            on_ready(inst)

        def init_phase():
            if inst.state == "evicted":
                return
            leg = join(2, lambda: read_all([code.name], ready))
            self.data.replicate(code.name, worker, leg, fail)
            self.sim.schedule(d.function_init + code.init_extra_delay, leg)

        def create_phase():
            if inst.state == "evicted":
                return
            work = d.container_create + code.init_extra_work
            read_all(list(code.dependencies),
                     lambda: node.cpu.submit(work, lambda ex: init_phase(), owner=inst.id,
                                             kind="compute"))

        deps = list(code.dependencies)
        if deps:
            leg = join(len(deps), create_phase)
            for name in deps:
                self.data.replicate(name, worker, leg, fail)
        else:
            self.sim.schedule(0.0, create_phase)
        return inst

    def invoke(self, inst: Instance, rec: SojournRecord, on_done: Callable[[Instance, SojournRecord], None]) -> None:
        """Run ``rec``'s event on ``inst``.  ``rec.dequeued`` must already be set."""
        if inst.state not in ("idle", "paused"):
            raise InvariantViolation(f"invoke on {inst!r}")
        resumed = inst.state == "paused"
        if resumed:
            self._set_state(inst, "idle")
        self._set_state(inst, "busy")
        inst.event = rec
        rec.instance = inst.id
        rec.worker = inst.worker
        self.engine.node(inst.worker).memory.touch(inst.context)
        setup = self.delays.resume if resumed else 0.0
        lo, hi = self.delays.warm_start
        warm = lo + (hi - lo) * self._warm_rng.random() if hi > lo else lo
        spec = self.classes[inst.cls]
        demand = rec.demand
        if spec.beta > 0 and self.phi is not None:
            demand = sync_penalty_execution(demand, spec.beta, self.phi(inst.cls, inst.worker))
        cpu = self.engine.node(inst.worker).cpu

        def start_exec():
            rec.setup_end = self.sim.now
            self.sim.schedule(warm, cpu.submit, demand, finished, inst.id, "compute")

        def finished(ex):
            if inst.state == "evicted":
                return
            rec.completion = self.sim.now
            r = inst.record
            r.busy_time += rec.B
            r.events_served += 1
            r.last_finished_at = self.sim.now
            inst.event = None
            self._set_state(inst, "idle")
            on_done(inst, rec)

        if setup > 0:
            self.sim.schedule(setup, start_exec)
        else:
            start_exec()

    def pause(self, inst: Instance) -> None:
        if inst.state == "idle":
            self._set_state(inst, "paused")
            inst.paused_at = self.sim.now

    def evict(self, inst: Instance, reason: str = "timeout") -> None:
        if inst.state == "evicted":
            return
        if inst.state in ("busy", "starting"):
            raise InvariantViolation(f"cannot evict {inst!r} ({reason})")
        self._release(inst, reason)

    def _release(self, inst: Instance, reason: str) -> None:
        inst.state = "evicted"
        inst.record.evicted_at = self.sim.now
        mem = self.engine.node(inst.worker).memory
        for alloc in inst.deps:
            mem.unsubscribe(alloc, inst._evict_cb)
        if inst.context is not None and inst.context.live:
            mem.free(inst.context)
        del self.instances[inst.id]
        if self.on_instance_evicted is not None:
            self.on_instance_evicted(inst, reason)

    def _lost_allocation(self, inst: Instance, alloc) -> None:
        if inst.state == "evicted":
            return
        if inst.state in ("busy", "starting"):
            raise InvariantViolation(
                f"allocation {alloc.id} evicted under {inst!r}: execution failed")
        self._release(inst, "memory")

    def sweep(self, now: float | None = None) -> list[Instance]:
        """Evict paused instances idle for longer than the timeout."""
        now = self.sim.now if now is None else now
        expired = [i for i in self.instances.values()
                   if i.state == "paused" and now - i.last_used > self.delays.idle_timeout]
        for inst in expired:
            self._release(inst, "timeout")
        return expired

    def worker_instances(self, worker) -> list[Instance]:
        return [i for i in self.instances.values() if i.worker == worker]
