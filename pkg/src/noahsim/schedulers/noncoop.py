"""Noncooperative load balancing: classes are players splitting their rate over workers."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from ..errors import SaturationError
from .base import Controller


def best_reply(phi: float, residual: list[float]) -> list[float]:
    """Fractions minimising a player's M/M/1 mean response over machines.

    ``residual[i]`` is the service rate left at machine ``i`` after the
    other players.  Water-filling: use the fastest machines first and drop
    the slowest while any assignment would go negative.
    """
    n = len(residual)
    if n == 0:
        raise ValueError("no machines")
    usable = [i for i in range(n) if residual[i] > 0]
    if phi <= 0:
        total = sum(residual[i] for i in usable)
        out = [0.0] * n
        for i in usable:
            out[i] = residual[i] / total
        return out
    if phi >= sum(residual[i] for i in usable):
        raise SaturationError(f"rate {phi} exceeds residual capacity")
    order = sorted(usable, key=lambda i: -residual[i])
    for c in range(len(order), 0, -1):
        top = order[:c]
        s_mu = sum(residual[i] for i in top)
        if s_mu <= phi:
            continue
        t = (s_mu - phi) / sum(math.sqrt(residual[i]) for i in top)
        fr = [(residual[i] - math.sqrt(residual[i]) * t) / phi for i in top]
        if min(fr) >= 0:
            out = [0.0] * n
            for i, f in zip(top, fr):
                out[i] = max(f, 0.0)
            norm = sum(out)
            return [x / norm for x in out]
    raise AssertionError("water-filling found no feasible prefix")


def player_response(j: int, s: list[list[float]], phi: list[float], mu: list[float]) -> float:
    """Mean response of player ``j`` given everyone's fractions."""
    total = 0.0
    for i, m in enumerate(mu):
        if s[j][i] <= 0:
            continue
        load = sum(s[k][i] * phi[k] for k in range(len(phi)))
        if load >= m:
            return math.inf
        total += s[j][i] / (m - load)
    return total


@dataclass
class GameState:
    phi: list[float]
    mu: list[float]
    epsilon: float = 1e-4
    s: list[list[float]] = field(default_factory=list)
    rounds: int = 0
    converged: bool = False

    def __post_init__(self):
        if not self.s:
            total = sum(self.mu)
            self.s = [[m / total for m in self.mu] for _ in self.phi]


def play_game(state: GameState, max_rounds: int = 10_000) -> GameState:
    """Round-robin best replies until no player's response moves by ``epsilon``."""
    phi, mu = state.phi, state.mu
    if sum(phi) >= sum(mu):
        raise SaturationError("aggregate rate exceeds aggregate capacity")
    m, n = len(phi), len(mu)
    s = state.s
    load = [sum(s[k][i] * phi[k] for k in range(m)) for i in range(n)]
    prev = [player_response(j, s, phi, mu) for j in range(m)]
    state.converged = False
    while state.rounds < max_rounds:
        state.rounds += 1
        for j in range(m):
            if phi[j] <= 0:
                continue
            residual = [mu[i] - (load[i] - s[j][i] * phi[j]) for i in range(n)]
            new = best_reply(phi[j], residual)
            for i in range(n):
                load[i] += (new[i] - s[j][i]) * phi[j]
            s[j] = new
        cur = [player_response(j, s, phi, mu) for j in range(m)]
        delta = max((abs(a - b) for a, b in zip(cur, prev) if math.isfinite(a) and math.isfinite(b)),
                    default=0.0)
        prev = cur
        if delta < state.epsilon:
            state.converged = True
            break
    return state


class NoncoopController(Controller):
    """Replays the game every tick on measured rates and dispatches by weighted draw."""

    name = "noncoop"

    def __init__(self, platform, invokers, cores: int = 16, epsilon: float = 1e-4,
                 headroom: float = 0.999, **kw):
        super().__init__(platform, invokers, **kw)
        self.cores = cores
        self.epsilon = epsilon
        self.headroom = headroom
        demand = min(spec.demand for spec in platform.classes.values()) or 1.0
        self.prior_mu = cores / demand
        self.worker_exec = {w: deque() for w in self.workers}
        self.fractions: dict[int, list[float]] = {}
        self.games: list[GameState] = []
        self._rng = {k: self.sim.rng(f"noncoop:{k}") for k in platform.classes}

    def start(self) -> None:
        self.periodic(self.play)

    def on_completed(self, rec) -> None:
        self.worker_exec[rec.worker].append((self.sim.now, rec.B))

    def machine_rates(self) -> list[float]:
        lo = self.sim.now - self.window
        rates = []
        for w in self.workers:
            q = self.worker_exec[w]
            while q and q[0][0] < lo:
                q.popleft()
            busy = sum(b for _, b in q)
            rates.append(self.cores * len(q) / busy if q and busy > 0 else self.prior_mu)
        return rates

    def play(self) -> None:
        now = self.sim.now
        classes = sorted(self.estimators)
        phi = [self.estimators[k].estimate(now).lambda_hat for k in classes]
        mu = self.machine_rates()
        total = sum(phi)
        if total <= 0:
            return
        cap = self.headroom * sum(mu)
        if total >= cap:
            phi = [p * cap / total for p in phi]
        state = play_game(GameState(phi, mu, self.epsilon))
        self.games.append(state)
        for k, row in zip(classes, state.s):
            if phi[classes.index(k)] > 0:
                self.fractions[k] = row

    def select(self, rec):
        row = self.fractions.get(rec.cls)
        rng = self._rng[rec.cls]
        if row is None:
            mu = self.machine_rates()
            total = sum(mu)
            row = [m / total for m in mu]
        return self.workers[int(rng.choice(len(self.workers), p=row))]
