"""Run configuration: JSON documents with a schema version and strict keys."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .platform import PlatformDelays
from .schedulers import SCHEDULERS
from .workload import ScenarioConfig

SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    scheduler: str = "noah"
    alpha: float = 1e-4  # NOAH waiting-time target, global default for every class
    busy_alpha: int = 16  # OpenWhisk load level step
    epsilon: float = 1e-4  # noncoop convergence threshold
    tick: float = 0.1  # NOAH rebalance and noncoop game period
    window: float = 10.0  # rate estimation window
    oversubscription: int = 2  # OpenWhisk-style invokers run up to this many per core
    noah_pool: int = 24  # NOAH z_C per worker
    noah_strict: bool = False  # concurrency limit also gates idle-instance reuse
    noah_evict_absent: bool = False  # churn only for classes with nothing running here
    noah_setup: str = "event"  # average setup over served events or over instance starts
    message_size: float = 0.001  # MB per dispatch message
    code_size: float = 1.0  # MB per class
    image_size: float = 290.0
    runtime_size: float = 140.0
    footprint: float = 430.0  # MB held by each instance context
    delays: PlatformDelays = field(default_factory=PlatformDelays)
    replications: int = 1
    drain_limit: float = 3600.0  # give up this long after the last arrival

    def __post_init__(self):
        if self.scheduler not in SCHEDULERS:
            raise ConfigurationError(f"unknown scheduler {self.scheduler!r}; "
                                     f"choose from {', '.join(SCHEDULERS)}")
        if self.alpha <= 0 or self.epsilon <= 0 or self.tick <= 0 or self.window <= 0:
            raise ConfigurationError("alpha, epsilon, tick and window must be > 0")
        if self.busy_alpha < 1 or self.oversubscription < 1 or self.noah_pool < 1:
            raise ConfigurationError("busy_alpha, oversubscription and noah_pool must be >= 1")
        if self.noah_setup not in ("event", "instance"):
            raise ConfigurationError("noah_setup must be 'event' or 'instance'")
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")
        if min(self.message_size, self.code_size, self.image_size, self.runtime_size,
               self.footprint) < 0:
            raise ConfigurationError("sizes must be >= 0")

    def with_(self, **changes) -> "RunConfig":
        scen = {k[len("scenario."):]: changes.pop(k) for k in list(changes) if k.startswith("scenario.")}
        cfg = dataclasses.replace(self, **changes)
        if scen:
            cfg = dataclasses.replace(cfg, scenario=dataclasses.replace(cfg.scenario, **scen))
        return cfg

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["delays"]["warm_start"] = list(self.delays.warm_start)
        return {"schema_version": SCHEMA_VERSION, **d}


def _build(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    version = data.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    if "scenario" in data:
        data["scenario"] = _build(ScenarioConfig, data["scenario"], "scenario")
    if "delays" in data:
        delays = dict(data["delays"])
        if "warm_start" in delays:
            delays["warm_start"] = tuple(delays["warm_start"])
        data["delays"] = _build(PlatformDelays, delays, "delays")
    return _build(RunConfig, data, "config")


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return config_from_dict(data)
