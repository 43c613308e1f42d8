"""Discrete-event core and the worker processing model.

The clock is a plain heap of ``(time, seq, callback, args)`` entries; ties are
broken by the insertion sequence so identical inputs replay identically.

Worker CPUs implement work-conserving processor sharing over ``n`` cores:
with ``m`` active executions each one progresses at ``min(1, n/m)``.  Instead
of stepping time, every CPU keeps a virtual service clock ``v`` that advances
at the per-execution rate.  An execution started at ``v0`` with demand ``d``
finishes when ``v`` reaches ``v0 + d``, so an arrival or departure only has to
re-derive the wall time of the earliest virtual finish.

Memory is a capacitated LRU store of allocations.  Reads and writes are CPU
executions at ``size / speed`` seconds of work; a write preempts in-service
reads on its allocation, writes are served FCFS, and reads wait behind every
queued write.
"""

from __future__ import annotations

import heapq
import itertools
import zlib
from collections import OrderedDict, deque
from typing import Callable, Iterable

import numpy as np

from .errors import AllocationImpossibleError, ConfigurationError, EvictionError

# Work-seconds below which an execution counts as finished.
FINISH_EPS = 1e-9


class Simulation:
    """Event clock with deterministic tie-breaking and named RNG streams."""

    def __init__(self, seed: int = 0):
        self.now = 0.0
        self.seed = int(seed)
        self._queue: list = []
        self._seq = itertools.count()
        self.processed = 0

    def at(self, time: float, fn: Callable, *args) -> None:
        if time < self.now:
            raise ValueError(f"cannot schedule in the past ({time} < {self.now})")
        heapq.heappush(self._queue, (time, next(self._seq), fn, args))

    def schedule(self, delay: float, fn: Callable, *args) -> None:
        if delay < 0:
            raise ValueError("negative delay")
        heapq.heappush(self._queue, (self.now + delay, next(self._seq), fn, args))

    def peek(self) -> float | None:
        return self._queue[0][0] if self._queue else None

    def run(self, until: float | None = None, stop: Callable[[], bool] | None = None) -> None:
        queue = self._queue
        pop = heapq.heappop
        while queue:
            if until is not None and queue[0][0] > until:
                self.now = until
                return
            t, _, fn, args = pop(queue)
            self.now = t
            self.processed += 1
            fn(*args)
            if stop is not None and stop():
                return
        if until is not None and until > self.now:
            self.now = until

    def rng(self, name: str) -> np.random.Generator:
        """Independent stream keyed by ``(seed, name)``."""
        return np.random.default_rng([self.seed, zlib.crc32(name.encode())])


class Execution:
    """A single-threaded piece of CPU work running on one :class:`Cpu`."""

    __slots__ = ("demand", "owner", "kind", "started_at", "finished_at", "on_done",
                 "cpu", "finish_v", "active", "seq")

    def __init__(self, demand, owner, kind, on_done):
        self.demand = demand
        self.owner = owner
        self.kind = kind
        self.on_done = on_done
        self.started_at = None
        self.finished_at = None
        self.cpu = None
        self.finish_v = 0.0
        self.active = False
        self.seq = 0

    def remaining(self) -> float:
        if not self.active:
            return 0.0 if self.finished_at is not None else self.demand
        cpu = self.cpu
        v = cpu.v + (cpu.sim.now - cpu.last) * cpu.rate if cpu.m else cpu.v
        return max(0.0, self.finish_v - v)

    def __repr__(self):
        return f"Execution({self.kind}, demand={self.demand:.6g}, owner={self.owner!r})"


class Cpu:
    """Processor-sharing CPU with ``cores`` virtual cores."""

    def __init__(self, sim: Simulation, cores: int, name: str = "cpu"):
        if cores < 1:
            raise ConfigurationError("a CPU needs at least one core")
        self.sim = sim
        self.cores = int(cores)
        self.name = name
        self.v = 0.0
        self.last = 0.0
        self.rate = 1.0
        self.m = 0
        self._heap: list = []
        self._token = 0
        self._seq = itertools.count()
        # integral of the total service rate min(n, m) over time
        self.delivered = 0.0
        self.completed_work = 0.0

    def _advance(self) -> None:
        now = self.sim.now
        dt = now - self.last
        if dt > 0.0 and self.m:
            self.v += dt * self.rate
            self.delivered += dt * self.rate * self.m
        self.last = now

    def _reschedule(self) -> None:
        m = self.m
        self.rate = 1.0 if m <= self.cores else self.cores / m
        heap = self._heap
        while heap and not heap[0][2].active:
            heapq.heappop(heap)
        self._token += 1
        if heap:
            fv = heap[0][0]
            delay = (fv - self.v) / self.rate
            self.sim.at(self.sim.now + (delay if delay > 0.0 else 0.0), self._complete, self._token)

    def submit(self, demand: float, on_done: Callable | None = None, owner=None,
               kind: str = "compute") -> Execution:
        if demand < 0:
            raise ValueError("negative demand")
        ex = Execution(demand, owner, kind, on_done)
        self.start(ex, demand)
        return ex

    def start(self, ex: Execution, demand: float) -> None:
        """(Re)start ``ex`` with ``demand`` work-seconds left."""
        self._advance()
        if ex.started_at is None:
            ex.started_at = self.sim.now
        ex.cpu = self
        ex.active = True
        ex.demand = demand
        ex.finish_v = self.v + demand
        ex.seq = next(self._seq)
        heapq.heappush(self._heap, (ex.finish_v, ex.seq, ex))
        self.m += 1
        self._reschedule()

    def remove(self, ex: Execution) -> float:
        """Take ``ex`` off the CPU without completing it; returns remaining work."""
        if not ex.active:
            return 0.0
        self._advance()
        remaining = max(0.0, ex.finish_v - self.v)
        ex.active = False
        self.m -= 1
        self.completed_work += ex.demand - remaining
        ex.demand = remaining
        self._reschedule()
        return remaining

    def _complete(self, token: int) -> None:
        if token != self._token:
            return
        self._advance()
        heap = self._heap
        done = []
        limit = self.v + FINISH_EPS
        while heap:
            fv, _, ex = heap[0]
            if not ex.active:
                heapq.heappop(heap)
                continue
            if done and fv > limit:
                break
            heapq.heappop(heap)
            ex.active = False
            ex.finished_at = self.sim.now
            self.completed_work += ex.demand
            done.append(ex)
        self.m -= len(done)
        self._reschedule()
        for ex in done:
            if ex.on_done is not None:
                ex.on_done(ex)

    def active_executions(self) -> list[Execution]:
        return sorted((e for _, _, e in self._heap if e.active), key=lambda e: e.seq)

    def service_rate(self) -> float:
        """Total service rate currently delivered, ``min(n, m)``."""
        return self.rate * self.m


# ---------------------------------------------------------------- memory


class MemOp:
    __slots__ = ("kind", "alloc", "nbytes", "on_done", "on_error", "execution", "remaining",
                 "issued_at", "finished_at")

    def __init__(self, kind, alloc, nbytes, on_done, on_error, now):
        self.kind = kind
        self.alloc = alloc
        self.nbytes = nbytes
        self.on_done = on_done
        self.on_error = on_error
        self.execution = None
        self.remaining = None
        self.issued_at = now
        self.finished_at = None


class Allocation:
    __slots__ = ("id", "size", "memory", "readers", "pending_reads", "write_queue", "writing",
                 "subscribers", "live", "tag")

    def __init__(self, id_, size, memory, tag=None):
        self.id = id_
        self.size = size
        self.memory = memory
        self.readers: list[MemOp] = []
        self.pending_reads: list[MemOp] = []
        self.write_queue: deque[MemOp] = deque()
        self.writing: MemOp | None = None
        self.subscribers: list[Callable] = []
        self.live = True
        self.tag = tag

    def __repr__(self):
        return f"Allocation({self.id}, size={self.size}, tag={self.tag!r})"


class Memory:
    """LRU memory whose reads and writes execute on the owning CPU.

    Sizes and ``speed`` just need consistent units (the scenario uses MB and
    MB/s).  Allocation never blocks: least recently used allocations are
    evicted until the new one fits, and their subscribers are told once.
    """

    def __init__(self, sim: Simulation, cpu: Cpu, capacity: float, speed: float, name: str = "mem"):
        if capacity <= 0 or speed <= 0:
            raise ConfigurationError("memory capacity and speed must be positive")
        self.sim = sim
        self.cpu = cpu
        self.capacity = capacity
        self.speed = speed
        self.name = name
        self.used = 0.0
        self.allocs: OrderedDict[int, Allocation] = OrderedDict()
        self.evictions: list[int] = []
        self._ids = itertools.count(1)

    # -- bookkeeping

    def lru_order(self) -> list[int]:
        return list(self.allocs)

    def touch(self, alloc: Allocation) -> None:
        if alloc.live:
            self.allocs.move_to_end(alloc.id)

    def subscribe(self, alloc: Allocation, callback: Callable[[Allocation], None]) -> None:
        alloc.subscribers.append(callback)

    def unsubscribe(self, alloc: Allocation, callback) -> None:
        try:
            alloc.subscribers.remove(callback)
        except ValueError:
            pass

    def allocate(self, size: float, subscribers: Iterable[Callable] = (), tag=None) -> Allocation:
        if size < 0:
            raise ValueError("negative allocation size")
        if size > self.capacity:
            raise AllocationImpossibleError(
                f"{self.name}: {size} exceeds capacity {self.capacity}")
        while self.used + size > self.capacity + 1e-9:
            _, victim = next(iter(self.allocs.items()))
            self.evict(victim)
        alloc = Allocation(next(self._ids), size, self, tag)
        alloc.subscribers.extend(subscribers)
        self.allocs[alloc.id] = alloc
        self.used += size
        return alloc

    def evict(self, alloc: Allocation) -> None:
        """Evict ``alloc``: abort its in-flight operations and notify subscribers."""
        if not alloc.live:
            return
        self._drop(alloc)
        self.evictions.append(alloc.id)
        err = EvictionError(alloc.id)
        self._abort_ops(alloc, err)
        subscribers, alloc.subscribers = alloc.subscribers, []
        for cb in subscribers:
            cb(alloc)

    def free(self, alloc: Allocation) -> None:
        """Voluntary release; subscribers are not notified."""
        if not alloc.live:
            return
        self._drop(alloc)
        alloc.subscribers = []
        self._abort_ops(alloc, EvictionError(alloc.id, f"allocation {alloc.id} was freed"))

    def _drop(self, alloc: Allocation) -> None:
        alloc.live = False
        del self.allocs[alloc.id]
        self.used -= alloc.size

    def _abort_ops(self, alloc: Allocation, err: EvictionError) -> None:
        ops = list(alloc.readers) + list(alloc.pending_reads) + list(alloc.write_queue)
        if alloc.writing is not None:
            ops.insert(0, alloc.writing)
        alloc.readers.clear()
        alloc.pending_reads.clear()
        alloc.write_queue.clear()
        alloc.writing = None
        for op in ops:
            if op.execution is not None and op.execution.active:
                self.cpu.remove(op.execution)
        for op in ops:
            if op.on_error is None:
                raise err
            op.on_error(err)

    # -- access

    def write(self, alloc: Allocation | None, nbytes: float, on_done: Callable | None = None,
              on_error: Callable | None = None, tag=None) -> MemOp:
        if alloc is None:
            alloc = self.allocate(nbytes, tag=tag)
        if not alloc.live:
            raise EvictionError(alloc.id)
        if nbytes > self.capacity:
            raise AllocationImpossibleError(f"write of {nbytes} exceeds capacity")
        self.touch(alloc)
        op = MemOp("memory-write", alloc, nbytes, on_done, on_error, self.sim.now)
        if nbytes == 0:
            self.sim.schedule(0.0, self._finish, op)
            return op
        alloc.write_queue.append(op)
        if alloc.writing is None:
            self._preempt_reads(alloc)
            self._next_write(alloc)
        return op

    def read(self, alloc: Allocation, nbytes: float, on_done: Callable | None = None,
             on_error: Callable | None = None) -> MemOp:
        if not alloc.live:
            raise EvictionError(alloc.id)
        self.touch(alloc)
        op = MemOp("memory-read", alloc, nbytes, on_done, on_error, self.sim.now)
        op.remaining = nbytes / self.speed
        if alloc.writing is not None or alloc.write_queue:
            alloc.pending_reads.append(op)
        else:
            self._start_read(op)
        return op

    def _start_read(self, op: MemOp) -> None:
        op.alloc.readers.append(op)
        op.execution = self.cpu.submit(op.remaining, lambda ex, op=op: self._read_done(op),
                                       owner=op.alloc.id, kind="memory-read")

    def _read_done(self, op: MemOp) -> None:
        op.alloc.readers.remove(op)
        self._finish(op)

    def _preempt_reads(self, alloc: Allocation) -> None:
        if not alloc.readers:
            return
        preempted = []
        for op in alloc.readers:
            op.remaining = self.cpu.remove(op.execution)
            op.execution = None
            preempted.append(op)
        alloc.readers.clear()
        alloc.pending_reads[:0] = preempted

    def _next_write(self, alloc: Allocation) -> None:
        if not alloc.write_queue:
            alloc.writing = None
            pending, alloc.pending_reads = alloc.pending_reads, []
            for op in pending:
                self._start_read(op)
            return
        op = alloc.write_queue.popleft()
        alloc.writing = op
        op.execution = self.cpu.submit(op.nbytes / self.speed,
                                       lambda ex, op=op: self._write_done(op),
                                       owner=alloc.id, kind="memory-write")

    def _write_done(self, op: MemOp) -> None:
        alloc = op.alloc
        alloc.writing = None
        self._next_write(alloc)
        self._finish(op)

    def _finish(self, op: MemOp) -> None:
        op.finished_at = self.sim.now
        if op.on_done is not None:
            op.on_done(op)


class Node:
    """A capacitated host: one PS CPU plus one LRU memory."""

    def __init__(self, sim: Simulation, name, cores: int, memory: float, speed: float):
        self.sim = sim
        self.name = name
        self.cpu = Cpu(sim, cores, f"{name}.cpu")
        self.memory = Memory(sim, self.cpu, memory, speed, f"{name}.mem")

    def __repr__(self):
        return f"Node({self.name!r}, cores={self.cpu.cores})"


class Engine:
    """Simulation clock plus the registry of nodes it drives."""

    def __init__(self, seed: int = 0):
        self.sim = Simulation(seed)
        self.nodes: dict = {}

    def add_node(self, name, cores: int, memory: float, speed: float) -> Node:
        if name in self.nodes:
            raise ConfigurationError(f"duplicate node {name!r}")
        node = Node(self.sim, name, cores, memory, speed)
        self.nodes[name] = node
        return node

    def node(self, name) -> Node:
        try:
            return self.nodes[name]
        except KeyError:
            raise ConfigurationError(f"unknown worker {name!r}") from None

    def submit_execution(self, worker, demand: float, kind: str = "compute",
                         on_done: Callable | None = None, owner=None) -> Execution:
        return self.node(worker).cpu.submit(demand, on_done, owner=owner if owner is not None else worker,
                                            kind=kind)

    def mem_allocate(self, worker, size: float, subscribers=(), tag=None) -> Allocation:
        return self.node(worker).memory.allocate(size, subscribers, tag=tag)

    def mem_write(self, worker, alloc: Allocation | None, nbytes: float, on_done=None, on_error=None):
        return self.node(worker).memory.write(alloc, nbytes, on_done, on_error)

    def mem_read(self, worker, alloc: Allocation, nbytes: float, on_done=None, on_error=None):
        return self.node(worker).memory.read(alloc, nbytes, on_done, on_error)

    @property
    def now(self) -> float:
        return self.sim.now

    def run(self, until=None, stop=None) -> None:
        self.sim.run(until=until, stop=stop)
