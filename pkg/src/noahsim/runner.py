"""Assemble engine, platform and scheduler for one scenario and run it to drainage."""

from __future__ import annotations

from dataclasses import dataclass

from .config import RunConfig
from .engine import Engine
from .errors import InvariantViolation
from .metrics import ExperimentSummary, InstanceRecord, SojournRecord, summarize
from .platform import REPOSITORY, ClassSpec, DataItem, DataLayer, Platform
from .schedulers import (BinpackController, Controller, FcfsInvoker, NoahController, NoahInvoker,
                         NoncoopController, OpenWhiskController)
from .workload import Event, sawtooth_workload

# The repository node only serves reads; it should never be the bottleneck.
REPOSITORY_CORES = 1024
REPOSITORY_MEMORY = 1e12
SWEEP_PERIOD = 60.0


@dataclass
class RunResult:
    config: RunConfig
    seed: int
    records: list[SojournRecord]
    instances: list[InstanceRecord]
    summary: ExperimentSummary
    controller: Controller
    engine: Engine


def scheduler_label(cfg: RunConfig) -> str:
    return f"noah:{cfg.alpha:g}" if cfg.scheduler == "noah" else cfg.scheduler


def build(cfg: RunConfig, seed: int):
    sc = cfg.scenario
    engine = Engine(seed)
    workers = list(range(sc.num_workers))
    for w in workers:
        engine.add_node(w, sc.cores, sc.memory, sc.memory_speed)
    engine.add_node(REPOSITORY, REPOSITORY_CORES, REPOSITORY_MEMORY, sc.disk_speed)
    data = DataLayer(engine, sc.memory_speed, sc.network_speed, sc.disk_speed,
                     cfg.delays.cold_cache_init)
    data.add_item(DataItem("image", cfg.image_size), at=[REPOSITORY])
    data.add_item(DataItem("runtime", cfg.runtime_size), at=[REPOSITORY])
    classes = {}
    for k in range(sc.num_classes):
        spec = ClassSpec(k, f"action{k}", demand=sc.demand, code_size=cfg.code_size,
                         footprint=cfg.footprint)
        classes[k] = spec
        data.add_item(DataItem(spec.code_item, cfg.code_size, list(spec.dependencies)),
                      at=[REPOSITORY])
    platform = Platform(engine, data, cfg.delays, classes, workers)
    name = cfg.scheduler
    kw = dict(message_delay=cfg.message_size / sc.network_speed, window=cfg.window, tick=cfg.tick)
    if name == "noah":
        invokers = {w: NoahInvoker(platform, w, sc.cores, cfg.noah_pool) for w in workers}
        ctl = NoahController(platform, invokers, alpha=cfg.alpha, z_C=cfg.noah_pool,
                             setup_basis=cfg.noah_setup,
                             strict_concurrency=cfg.noah_strict,
                             evict_only_absent=cfg.noah_evict_absent, **kw)
    else:
        limit = cfg.oversubscription * sc.cores
        invokers = {w: FcfsInvoker(platform, w, limit, limit) for w in workers}
        if name == "openwhisk":
            ctl = OpenWhiskController(platform, invokers, busy_alpha=cfg.busy_alpha, **kw)
        elif name == "noncoop":
            ctl = NoncoopController(platform, invokers, cores=sc.cores, epsilon=cfg.epsilon, **kw)
        else:
            policy = {"first-fit": "FF", "next-fit": "NF", "best-fit": "BF"}[name]
            ctl = BinpackController(platform, invokers, policy=policy, z_N=sc.cores, **kw)
    platform.on_instance_evicted = lambda inst, reason: invokers[inst.worker].instance_gone(inst, reason)
    return engine, platform, ctl


def run_scenario(cfg: RunConfig, seed: int | None = None,
                 events: list[Event] | None = None) -> RunResult:
    """Simulate ``events`` (default: the sawtooth workload for ``seed``) until all complete."""
    seed = cfg.scenario.seed if seed is None else seed
    if events is None:
        events = sawtooth_workload(cfg.with_(**{"scenario.seed": seed}).scenario)
    engine, platform, ctl = build(cfg, seed)
    sim = engine.sim
    ctl.expect(len(events))
    for e in events:
        sim.at(e.arrival, ctl.arrive, SojournRecord(e.cls, e.seq, e.arrival, e.demand))
    ctl.start()

    def sweep():
        if ctl.finished:
            return
        platform.sweep()
        sim.schedule(SWEEP_PERIOD, sweep)
    sim.schedule(SWEEP_PERIOD, sweep)

    last = events[-1].arrival if events else 0.0
    if events:
        engine.run(until=last + cfg.drain_limit, stop=lambda: ctl.finished)
    if not ctl.finished:
        raise InvariantViolation(f"{ctl.completed_count}/{ctl.total} events completed "
                                 f"{cfg.drain_limit}s after the last arrival")
    for key, n in ctl.dispatched.items():
        if n != 1:
            raise InvariantViolation(f"event {key} dispatched {n} times")
    records = ctl.records
    summary = summarize(records, platform.instance_log, scheduler_label(cfg),
                        cfg.scenario.lambda_max, seed, cfg.delays.worker_setup)
    return RunResult(cfg, seed, records, platform.instance_log, summary, ctl, engine)


# ------------------------------------------------------------------ sweeps

SWEEP_LAMBDAS = (1, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60, 65, 70, 75, 80)
SWEEP_LABELS = ("openwhisk", "first-fit", "next-fit", "best-fit", "noncoop", "noah:0.01",
                "noah:0.0001")


def config_for(label: str, base: RunConfig) -> RunConfig:
    """``"noah:0.01"`` selects NOAH with that alpha; other labels are scheduler names."""
    name, _, arg = label.partition(":")
    changes: dict = {"scheduler": name}
    if arg:
        if name != "noah":
            raise ValueError(f"only noah takes a parameter: {label!r}")
        changes["alpha"] = float(arg)
    return base.with_(**changes)


def _one(args):
    base, label, lam, seed = args
    cfg = config_for(label, base).with_(**{"scenario.lambda_max": lam})
    row = run_scenario(cfg, seed=seed).summary.row()
    row["scheduler"] = label
    return row


def sweep(base: RunConfig, labels=SWEEP_LABELS, lambdas=SWEEP_LAMBDAS, seeds=range(5),
          jobs: int = 1) -> list[dict]:
    """Summary rows for every (label, lambda, seed); order is independent of ``jobs``."""
    tasks = [(base, label, lam, seed) for label in labels for lam in lambdas for seed in seeds]
    if jobs <= 1:
        return [_one(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_one, tasks, chunksize=4))
