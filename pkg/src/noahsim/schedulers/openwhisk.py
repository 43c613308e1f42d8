"""Hash-based first-fit host selection in the style of the OpenWhisk balancer."""

from __future__ import annotations

import math
import zlib

from .base import Controller


def function_hash(name: str) -> int:
    return zlib.crc32(name.encode())


def step_sizes(n: int) -> list[int]:
    """Integers in ``[1, n]`` coprime to ``n``; each generates the full probe cycle."""
    return [g for g in range(1, n + 1) if math.gcd(g, n) == 1]


def ow_select_host(h: int, sites: list, loads: list[int], busy_alpha: int = 16, rng=None):
    """Probe ``sites`` from the home index in hash-chosen steps at rising load levels."""
    n = len(sites)
    if n == 0:
        raise ValueError("no sites")
    steps = step_sizes(n)
    g = steps[h % len(steps)]
    home = h % n
    for level in (busy_alpha, 2 * busy_alpha, 3 * busy_alpha):
        for k in range(n):
            idx = (home + k * g) % n
            if loads[idx] < level:
                return sites[idx]
    if rng is None:
        raise ValueError("every site is saturated and no rng was given")
    return sites[int(rng.integers(n))]


class OpenWhiskController(Controller):
    name = "openwhisk"

    def __init__(self, platform, invokers, busy_alpha: int = 16, **kw):
        super().__init__(platform, invokers, **kw)
        self.busy_alpha = busy_alpha
        self.hashes = {k: function_hash(spec.name) for k, spec in platform.classes.items()}
        self._rng = self.sim.rng("openwhisk-random-site")

    def select(self, rec):
        return ow_select_host(self.hashes[rec.cls], self.workers, self.loads(), self.busy_alpha,
                              self._rng)
