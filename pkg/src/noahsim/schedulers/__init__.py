"""Scheduler families and the name registry used by the runner."""

from .base import Controller, FcfsInvoker, Invoker, WorkerState
from .binpack import BinpackController, binpack_select
from .noah import (AllocationMap, NoahController, NoahInvoker, cap_targets, drain_time,
                   noah_dispatch, place_allocations, worker_try_schedule)
from .noncoop import GameState, NoncoopController, best_reply, play_game, player_response
from .openwhisk import OpenWhiskController, function_hash, ow_select_host, step_sizes

SCHEDULERS = ("openwhisk", "first-fit", "next-fit", "best-fit", "noncoop", "noah")

__all__ = [
    "SCHEDULERS", "AllocationMap", "BinpackController", "Controller", "FcfsInvoker", "GameState",
    "Invoker", "NoahController", "NoahInvoker", "NoncoopController", "OpenWhiskController",
    "WorkerState", "best_reply", "binpack_select", "cap_targets", "drain_time", "function_hash",
    "noah_dispatch", "ow_select_host", "place_allocations", "play_game", "player_response",
    "step_sizes", "worker_try_schedule",
]
