"""Sojourn accounting and post-hoc objective evaluation over finished traces."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import SimulationError

EVENT_COLUMNS = ("k", "i", "arrival", "W", "I", "B", "S", "worker", "instance", "churn")
SUMMARY_COLUMNS = ("scheduler", "lambda_max", "seed", "events", "avg_response", "workers_covered",
                   "total_instances", "utilization", "C1", "C2", "E")


class IncompleteTraceError(SimulationError):
    pass


@dataclass
class SojournRecord:
    """Lineage of one event through the platform.

    Worker-side timestamps: ``received`` (message delivered), ``dequeued``
    (waiting ends), ``setup_end`` (instance ready) and ``completion``.
    """

    cls: int
    seq: int
    arrival: float
    demand: float = 0.2
    dispatch_delay: float = 0.0
    worker: object = None
    instance: int | None = None
    received: float | None = None
    dequeued: float | None = None
    setup_end: float | None = None
    completion: float | None = None
    churn: bool = False

    @property
    def W(self) -> float:
        return self.dequeued - self.received

    @property
    def I(self) -> float:  # noqa: E743
        return self.setup_end - self.dequeued

    @property
    def B(self) -> float:
        return self.completion - self.setup_end

    @property
    def S(self) -> float:
        return self.completion - self.received

    @property
    def done(self) -> bool:
        return self.completion is not None


@dataclass
class InstanceRecord:
    id: int
    cls: int
    worker: object
    created_at: float
    ready_at: float | None = None
    last_finished_at: float | None = None
    evicted_at: float | None = None
    busy_time: float = 0.0
    events_served: int = 0
    churn: bool = False


@dataclass
class ObjectiveResult:
    C1: float
    C2: float
    P: int
    C: float
    E: float
    t_W: float = 0.0


@dataclass
class ExperimentSummary:
    scheduler: str
    lambda_max: float
    seed: int
    events: int
    avg_response: float
    workers_covered: int
    total_instances: int
    utilization: float
    objectives: ObjectiveResult = field(default_factory=lambda: ObjectiveResult(0, 0, 0, 0, 0))
    churned_instances: int = 0

    def row(self) -> dict:
        o = self.objectives
        return {"scheduler": self.scheduler, "lambda_max": self.lambda_max, "seed": self.seed,
                "events": self.events, "avg_response": self.avg_response,
                "workers_covered": self.workers_covered, "total_instances": self.total_instances,
                "utilization": self.utilization, "C1": o.C1, "C2": o.C2, "E": o.E}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objectives"] = asdict(self.objectives)
        return d


def _check_complete(trace: Sequence[SojournRecord]) -> None:
    for r in trace:
        if not r.done:
            raise IncompleteTraceError(f"event ({r.cls}, {r.seq}) has not completed")


def eval_instance_objectives(trace: Sequence[SojournRecord]) -> tuple[float, float]:
    """Resource time per instance (first assigned arrival to last completion) and summed sojourn."""
    _check_complete(trace)
    first: dict = {}
    last: dict = {}
    c2 = 0.0
    for r in trace:
        c2 += r.S
        start, end = r.arrival, r.completion
        key = r.instance
        if key not in first or start < first[key]:
            first[key] = start
        if key not in last or end > last[key]:
            last[key] = end
    c1 = sum(last[k] - first[k] for k in first)
    return c1, c2


def worker_active_windows(trace: Sequence[SojournRecord]) -> dict:
    """Per worker: first and last instant with at least one instance processing."""
    win: dict = {}
    for r in trace:
        lo, hi = r.dequeued, r.completion
        if r.worker in win:
            a, b = win[r.worker]
            win[r.worker] = (min(a, lo), max(b, hi))
        else:
            win[r.worker] = (lo, hi)
    return win


def eval_worker_objectives(trace: Sequence[SojournRecord], instance_map: Mapping | None = None,
                           t_W: float = 0.0) -> tuple[float, float]:
    """Worker-level cost: each used worker's active span plus its setup ``t_W``."""
    _check_complete(trace)
    if instance_map is not None:
        for r in trace:
            if r.instance not in instance_map:
                raise SimulationError(f"instance {r.instance} missing from instance map")
            if instance_map[r.instance] != r.worker:
                raise SimulationError(f"instance {r.instance} mapped to two workers")
    windows = worker_active_windows(trace)
    c1 = sum(hi - lo + t_W for lo, hi in windows.values())
    c2 = sum(r.S for r in trace)
    return c1, c2


def efficiency(trace: Sequence[SojournRecord], t_W: float = 0.0) -> ObjectiveResult:
    c1, c2 = eval_worker_objectives(trace, t_W=t_W)
    p = len(trace)
    return ObjectiveResult(C1=c1, C2=c2, P=p, C=c1, E=(p / c1 if c1 > 0 else 0.0), t_W=t_W)


def instance_utilization(instances: Iterable[InstanceRecord]) -> float:
    busy = 0.0
    span = 0.0
    for inst in instances:
        if inst.events_served == 0 or inst.last_finished_at is None:
            continue
        busy += inst.busy_time
        span += inst.last_finished_at - inst.created_at
    return busy / span if span > 0 else 0.0


def summarize(trace: Sequence[SojournRecord], instances: Sequence[InstanceRecord],
              scheduler: str = "", lambda_max: float = 0.0, seed: int = 0,
              t_W: float = 0.0) -> ExperimentSummary:
    _check_complete(trace)
    n = len(trace)
    avg = sum(r.S for r in trace) / n if n else 0.0
    covered = len({r.worker for r in trace})
    objectives = efficiency(trace, t_W) if n else ObjectiveResult(0.0, 0.0, 0, 0.0, 0.0, t_W)
    return ExperimentSummary(
        scheduler=scheduler, lambda_max=lambda_max, seed=seed, events=n, avg_response=avg,
        workers_covered=covered, total_instances=len(instances),
        utilization=instance_utilization(instances), objectives=objectives,
        churned_instances=sum(1 for i in instances if i.churn))


# ------------------------------------------------------------------ files


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else str(x)
    return str(x)


def format_events(trace: Iterable[SojournRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENT_COLUMNS)
    for r in sorted(trace, key=lambda r: (r.arrival, r.cls, r.seq)):
        w.writerow((r.cls, r.seq, f"{r.arrival:.12f}", _fmt(r.W), _fmt(r.I), _fmt(r.B), _fmt(r.S),
                    r.worker, r.instance, int(r.churn)))
    return buf.getvalue()


def write_events(trace: Iterable[SojournRecord], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(format_events(trace))
    return path


def write_summaries(rows: Iterable[dict], path: str | Path) -> Path:
    path = Path(path)
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n",
                           extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})
    return path


def read_summaries(path: str | Path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            d = dict(row)
            for k in ("lambda_max", "avg_response", "utilization", "C1", "C2", "E"):
                d[k] = float(d[k])
            for k in ("seed", "events", "workers_covered", "total_instances"):
                d[k] = int(d[k])
            out.append(d)
    return out


def group_by(rows: Iterable[dict], *keys: str) -> dict:
    groups = defaultdict(list)
    for row in rows:
        groups[tuple(row[k] for k in keys)].append(row)
    return dict(groups)
