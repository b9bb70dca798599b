"""Online accept/reject deciders for guaranteed-class demands.

Every decider exposes ``decide(demand, topo, residual, load)`` where
``residual`` is the per-link residual capacity the controller believes in and
``load`` is the guaranteed load it has admitted so far. A decider mutates only
its own pricing state, never the network view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .netmodel import TOL, Topology, k_shortest_paths, path_fits


@dataclass(frozen=True)
class AdmissionDecision:
    accepted: bool
    path: tuple | None
    algorithm: str
    score: float = 0.0  # path length (primal-dual) or price (agrawal)


@dataclass
class AdmissionParams:
    k_paths: int = 8
    mu: float | None = None     # None: 4 * n * B_max
    theta: float | None = None  # None: n
    theta_util: float = 1.0
    gamma: float = 0.05
    rho_target: object = None   # scalar, per-link array, or None for 1/expected-active-flows
    price_floor: float = 1e-6
    price_init: float | None = None  # None: price_floor


class CandidateCache:
    """Hop-count k-shortest simple paths per (src, dst), computed once."""

    def __init__(self, topo: Topology, k: int):
        self.topo = topo
        self.k = k
        self._paths: dict = {}

    def __call__(self, src: int, dst: int) -> list:
        key = (src, dst)
        if key not in self._paths:
            self._paths[key] = k_shortest_paths(self.topo, src, dst, self.k)
        return self._paths[key]


class Decider:
    name = "base"

    def __init__(self, topo: Topology, params: AdmissionParams | None = None, candidates=None):
        self.topo = topo
        self.params = params or AdmissionParams()
        self.candidates = candidates or CandidateCache(topo, self.params.k_paths)
        self.requests_seen = 0

    def decide(self, demand, topo, residual, load) -> AdmissionDecision:
        self.requests_seen += 1
        return self._decide(demand, residual, np.asarray(load, dtype=float))

    def _decide(self, demand, residual, load):
        raise NotImplementedError

    def _reject(self, score=0.0):
        return AdmissionDecision(False, None, self.name, score)

    def _accept(self, path, score=0.0):
        return AdmissionDecision(True, tuple(path), self.name, score)


class Greedy(Decider):
    """Accept on the first capacity-feasible candidate, hop-count order."""

    name = "greedy"

    def _decide(self, demand, residual, load):
        for path in self.candidates(demand.src, demand.dst):
            if path_fits(residual, path, demand.bw):
                return self._accept(path)
        return self._reject()


class Threshold(Decider):
    """Greedy with a utilization cap: no used link may exceed ``theta_util``."""

    name = "threshold"

    def _decide(self, demand, residual, load):
        cap = self.topo.capacities
        limit = self.params.theta_util
        for path in self.candidates(demand.src, demand.dst):
            if not path_fits(residual, path, demand.bw):
                continue
            if all((load[e] + demand.bw) / cap[e] <= limit + TOL for e in path):
                return self._accept(path)
        return self._reject()


class PrimalDual(Decider):
    """Exponential link pricing in guaranteed utilization.

    Link length is ``mu ** (load / capacity) - 1``. The cheapest feasible
    candidate (lengths within 1e-9 count as equal, keeping hop order) is
    accepted iff its total length is at most ``theta``.
    """

    name = "primal_dual"

    def __init__(self, topo, params=None, candidates=None, b_max: float = 1.0):
        super().__init__(topo, params, candidates)
        p = self.params
        self.mu = p.mu if p.mu is not None else 4.0 * topo.n * b_max
        self.theta = p.theta if p.theta is not None else float(topo.n)
        if not self.mu > 1:
            raise ValueError(f"mu must exceed 1, got {self.mu}")
        self._cap = topo.capacities
        self._log_mu = math.log(self.mu)

    def lengths(self, load) -> np.ndarray:
        return np.expm1(self._log_mu * np.asarray(load) / self._cap)

    def _decide(self, demand, residual, load):
        ell = self.lengths(load)
        best = None
        for path in self.candidates(demand.src, demand.dst):
            if not path_fits(residual, path, demand.bw):
                continue
            cost = float(sum(ell[e] for e in path))
            if best is None or cost < best[0] - TOL:
                best = (cost, path)
        if best is None:
            return self._reject(float("inf"))
        cost, path = best
        if cost <= self.theta:
            return self._accept(path, cost)
        return self._reject(cost)


class Agrawal(Decider):
    """Multiplicative-update link prices (stochastic-input pricing).

    Accept iff the demand's profit exceeds ``sum(price) * bw`` along the
    cheapest feasible candidate. After the decision every link ``e`` of that
    path gets ``price *= 1 + gamma * (consumed / capacity - rho_target)``,
    with ``consumed = bw`` on acceptance and 0 otherwise, floored at
    ``price_floor``.
    """

    name = "agrawal"

    def __init__(self, topo, params=None, candidates=None, expected_flows=None):
        super().__init__(topo, params, candidates)
        p = self.params
        init = p.price_init if p.price_init is not None else p.price_floor
        self.price = np.full(topo.num_links, float(init))
        if p.rho_target is not None:
            rho = np.broadcast_to(np.asarray(p.rho_target, dtype=float), (topo.num_links,))
        elif expected_flows is not None:
            rho = 1.0 / np.maximum(np.asarray(expected_flows, dtype=float), 1.0)
        else:
            rho = np.zeros(topo.num_links)
        self.rho = np.array(rho, dtype=float)
        self._cap = topo.capacities

    def _decide(self, demand, residual, load):
        best = None
        for path in self.candidates(demand.src, demand.dst):
            if not path_fits(residual, path, demand.bw):
                continue
            cost = float(sum(self.price[e] for e in path)) * demand.bw
            if best is None or cost < best[0] - TOL:
                best = (cost, path)
        if best is None:
            return self._reject(float("inf"))
        cost, path = best
        accept = demand.value > cost
        self._update(path, demand.bw if accept else 0.0)
        return self._accept(path, cost) if accept else self._reject(cost)

    def _update(self, path, consumed):
        idx = list(path)
        factor = 1.0 + self.params.gamma * (consumed / self._cap[idx] - self.rho[idx])
        self.price[idx] = np.maximum(self.price[idx] * factor, self.params.price_floor)


DECIDERS = {
    "greedy": Greedy,
    "threshold": Threshold,
    "primal_dual": PrimalDual,
    "agrawal": Agrawal,
}


def make_decider(name: str, topo: Topology, params: AdmissionParams | None = None,
                 candidates=None, b_max: float = 1.0, expected_flows=None) -> Decider:
    if name not in DECIDERS:
        raise KeyError(f"unknown admission algorithm {name!r}; known: {sorted(DECIDERS)}")
    cls = DECIDERS[name]
    if cls is PrimalDual:
        return cls(topo, params, candidates, b_max=b_max)
    if cls is Agrawal:
        return cls(topo, params, candidates, expected_flows=expected_flows)
    return cls(topo, params, candidates)


@dataclass
class ReplayResult:
    decisions: list = field(default_factory=list)
    accepted_profit: float = 0.0
    accepted: int = 0
    rejected: int = 0


def replay(decider: Decider, events, topo: Topology) -> ReplayResult:
    """Run a decider alone over an event list on a capacity-only network."""
    from .netmodel import apply_path_load, residual as residual_of

    load = np.zeros(topo.num_links)
    active = {}
    out = ReplayResult()
    for ev in events:
        d = ev.demand
        if ev.kind == "departure":
            path = active.pop(d.id, None)
            if path is not None:
                load = apply_path_load(load, path, d.bw, -1)
            continue
        dec = decider.decide(d, topo, residual_of(topo, load), load)
        out.decisions.append(dec)
        if dec.accepted:
            load = apply_path_load(load, dec.path, d.bw, +1)
            active[d.id] = dec.path
            out.accepted += 1
            out.accepted_profit += d.value
        else:
            out.rejected += 1
    return out
