"""Online bin-packing dispatch: first, next and best fit with a capacity factor."""

from __future__ import annotations

from .base import Controller

POLICIES = ("FF", "NF", "BF")


def binpack_select(policy: str, loads: list[int], z_N: int, cursor: int = 0) -> tuple[int, int]:
    """Return ``(index, a)`` for the worker chosen under the smallest factor ``a``.

    ``loads`` holds ``L_w + N_w`` per worker.  A worker fits at factor ``a``
    when its load is below ``a * z_N``.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    n = len(loads)
    if n == 0:
        raise ValueError("no workers")
    a = min(loads) // z_N + 1
    cap = a * z_N
    if policy == "FF":
        idx = next(i for i in range(n) if loads[i] < cap)
    elif policy == "NF":
        idx = next(j for j in ((cursor + i) % n for i in range(n)) if loads[j] < cap)
    else:
        idx = min((i for i in range(n) if loads[i] < cap), key=lambda i: (cap - loads[i], i))
    return idx, a


class BinpackController(Controller):
    def __init__(self, platform, invokers, policy: str = "FF", z_N: int = 16, **kw):
        super().__init__(platform, invokers, **kw)
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        self.policy = policy
        self.z_N = z_N
        self.cursor = 0
        self.name = {"FF": "first-fit", "NF": "next-fit", "BF": "best-fit"}[policy]
        self.factors: list[int] = []

    def select(self, rec):
        idx, a = binpack_select(self.policy, self.loads(), self.z_N, self.cursor)
        if self.policy == "NF":
            self.cursor = idx
        self.factors.append(a)
        return self.workers[idx]
