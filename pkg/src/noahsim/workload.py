"""Workload generation: seeded Poisson arrivals and the sawtooth ramp."""

from __future__ import annotations

import csv
import io
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import ConfigurationError

TRACE_COLUMNS = ("class", "seq", "arrival", "demand")


@dataclass(frozen=True, order=True)
class Event:
    """One invocation request of function class ``cls``."""

    arrival: float
    cls: int
    seq: int
    demand: float = 0.2
    params: tuple = field(default=(), compare=False)

    @property
    def key(self) -> tuple[int, int]:
        return (self.cls, self.seq)


@dataclass
class ScenarioConfig:
    num_workers: int = 10
    cores: int = 16
    memory: float = 48_000.0  # MB
    num_classes: int = 10
    ramp: float = 20.0  # T, seconds
    lambda_max: float = 80.0  # per class, events/s at the peak
    memory_speed: float = 12_800.0  # MB/s
    disk_speed: float = 711.0
    network_speed: float = 1_135.0
    demand: float = 0.200  # ideal execution time p
    seed: int = 0

    def __post_init__(self):
        for name in ("num_workers", "cores", "num_classes"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.lambda_max < 0:
            raise ConfigurationError("lambda_max must be >= 0")
        if self.ramp <= 0:
            raise ConfigurationError("ramp must be > 0")
        if min(self.memory, self.memory_speed, self.disk_speed, self.network_speed) <= 0:
            raise ConfigurationError("memory size and speeds must be positive")
        if self.demand < 0:
            raise ConfigurationError("demand must be >= 0")


def sawtooth_rate(t: float, Lambda: float, T: float = 20.0) -> float:
    """Per-class arrival rate of the ramp: ``ceil(t)/T * Lambda`` up to ``T``, then 0."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t > T:
        return 0.0
    return math.ceil(t) / T * Lambda


def _quantize(t: float) -> float:
    # the exact value a reader of the 12-decimal trace gets back
    return float(f"{t:.12f}")


def class_rng(seed: int, cls: int, stream: str = "arrivals") -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(f"{stream}:{cls}".encode())])


def generate_arrivals(cls: int, rate_fn: Callable[[float], float], seed: int, horizon: float,
                      demand: float | Callable[[np.random.Generator], float] = 0.2) -> list[Event]:
    """Inhomogeneous Poisson arrivals for one class.

    ``rate_fn`` is treated as constant on each unit segment ``(s, s+1]`` and
    sampled at the segment's right end.  Each segment draws a Poisson count
    and places that many uniform points, which is exact for a piecewise
    constant rate.
    """
    rng = class_rng(seed, cls)
    demand_rng = class_rng(seed, cls, "demand")
    times: list[float] = []
    n_seg = int(math.ceil(horizon))
    for s in range(n_seg):
        hi = min(s + 1.0, horizon)
        rate = rate_fn(hi)
        if rate <= 0:
            continue
        width = hi - s
        n = rng.poisson(rate * width)
        if n:
            times.extend(np.sort(s + width * rng.random(n)).tolist())
    events = []
    for i, t in enumerate(times):
        d = demand(demand_rng) if callable(demand) else demand
        events.append(Event(_quantize(t), cls, i, d))
    return events


def sawtooth_workload(cfg: ScenarioConfig) -> list[Event]:
    """All classes' events for the ramp scenario, ordered by (time, class, seq)."""
    rate = lambda t: sawtooth_rate(t, cfg.lambda_max, cfg.ramp)
    events: list[Event] = []
    for k in range(cfg.num_classes):
        events.extend(generate_arrivals(k, rate, cfg.seed, cfg.ramp, cfg.demand))
    events.sort()
    return events


def expected_event_count(cfg: ScenarioConfig) -> float:
    return cfg.num_classes * sum(sawtooth_rate(s, cfg.lambda_max, cfg.ramp)
                                 for s in range(1, int(math.ceil(cfg.ramp)) + 1))


def sync_penalty_execution(p: float, beta_k: float, phi_kw: float) -> float:
    """Execution time with the synchronisation penalty ``p + beta*phi*(1-phi)``."""
    if not 0.0 <= phi_kw <= 1.0:
        raise ValueError("phi must lie in [0, 1]")
    if beta_k < 0:
        raise ValueError("beta must be >= 0")
    return p + beta_k * phi_kw * (1.0 - phi_kw)


# ------------------------------------------------------------ trace files


def format_trace(events: Iterable[Event]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for e in sorted(events):
        w.writerow((e.cls, e.seq, f"{e.arrival:.12f}", f"{e.demand:.12f}"))
    return buf.getvalue()


def write_trace(events: Iterable[Event], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_trace(events))
    return path


def read_trace(path: str | Path) -> list[Event]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ConfigurationError(f"{path}: expected columns {TRACE_COLUMNS}")
        events = [Event(float(r["arrival"]), int(r["class"]), int(r["seq"]), float(r["demand"]))
                  for r in reader]
    events.sort()
    return events
