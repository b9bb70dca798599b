"""Global re-optimisation of admitted flows and deployment policies.

The iterative solver is a deterministic flow-deviation local search over
per-demand path pools. Two LPs bound it: ``mcf_lp_optimal`` (fractional
minimum-cost routing of the active demands) and ``offline_packing_lp``
(fractional maximum profit with full knowledge of the request sequence).
Both are solved with HiGHS and certified by an explicit duality-gap check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix, vstack

from .netmodel import TOL, Topology, k_shortest_paths

LP_TOL = 1e-7


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkConfiguration:
    """Single-path assignment of demands with its induced load and cost."""
    assignment: dict
    bw: dict
    induced_load: np.ndarray
    cost: float

    @classmethod
    def build(cls, topo: Topology, assignment: dict, bw: dict) -> "NetworkConfiguration":
        load = np.zeros(topo.num_links)
        for did, path in assignment.items():
            load[list(path)] += bw[did]
        w = topo.weights
        return cls(dict(assignment), {d: bw[d] for d in assignment}, load, float(w @ load))

    @classmethod
    def empty(cls, topo: Topology) -> "NetworkConfiguration":
        return cls({}, {}, np.zeros(topo.num_links), 0.0)

    def with_flow(self, topo: Topology, did, path, bw: float) -> "NetworkConfiguration":
        a = dict(self.assignment)
        b = dict(self.bw)
        load = self.induced_load.copy()
        if did in a:
            load[list(a[did])] -= b[did]
        a[did] = tuple(path)
        b[did] = bw
        load[list(path)] += bw
        return NetworkConfiguration(a, b, np.maximum(load, 0.0), float(topo.weights @ load))

    def without(self, topo: Topology, did) -> "NetworkConfiguration":
        if did not in self.assignment:
            return self
        a = dict(self.assignment)
        b = dict(self.bw)
        path = a.pop(did)
        bw = b.pop(did)
        load = self.induced_load.copy()
        load[list(path)] -= bw
        load = np.maximum(load, 0.0)
        if not a:
            load[:] = 0.0
        return NetworkConfiguration(a, b, load, float(topo.weights @ load))

    def is_feasible(self, topo: Topology) -> bool:
        return bool(np.all(self.induced_load <= topo.capacities + TOL))

    def __len__(self):
        return len(self.assignment)


def routing_cost(config: NetworkConfiguration, topo: Topology) -> float:
    return float(topo.weights @ config.induced_load)


def config_distance(a: NetworkConfiguration, b: NetworkConfiguration) -> int:
    """Number of (demand, link) routing entries present in exactly one configuration."""
    ea = {(d, e) for d, p in a.assignment.items() for e in p}
    eb = {(d, e) for d, p in b.assignment.items() for e in p}
    return len(ea ^ eb)


# ---------------------------------------------------------------------------
# Path pools
# ---------------------------------------------------------------------------

class PoolCache:
    """``k`` weight-shortest simple paths per (src, dst)."""

    def __init__(self, topo: Topology, k: int = 8):
        self.topo = topo
        self.k = k
        self._lengths = list(topo.weights)
        self._cache: dict = {}

    def __call__(self, src, dst) -> list:
        key = (src, dst)
        if key not in self._cache:
            self._cache[key] = k_shortest_paths(self.topo, src, dst, self.k, self._lengths)
        return self._cache[key]

    def for_demand(self, demand, current=None) -> list:
        pool = list(self(demand.src, demand.dst))
        if current is not None and tuple(current) not in pool:
            pool.append(tuple(current))
        return pool


# ---------------------------------------------------------------------------
# Linear programs
# ---------------------------------------------------------------------------

@dataclass
class LpSolution:
    flow: dict            # (demand id, path index) -> amount
    objective: float
    status: str           # "optimal" | "infeasible"
    dual_objective: float = float("nan")
    gap: float = float("nan")
    paths: dict = field(default_factory=dict)  # demand id -> list of paths

    @property
    def certified(self) -> bool:
        return self.status == "optimal" and self.gap <= LP_TOL * (1.0 + abs(self.objective))


def _column_layout(demands, pools):
    cols = []
    for d in demands:
        for j, path in enumerate(pools[d.id]):
            cols.append((d, j, tuple(path)))
    return cols


def _solve(c, A_ub, b_ub, A_eq, b_eq, bounds):
    return linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                   method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                            "dual_feasibility_tolerance": 1e-10})


def _link_matrix(cols, rows_of, nrows):
    """Sparse 0/1 incidence between constraint rows and path columns."""
    r, cidx, v = [], [], []
    for k, (d, _, path) in enumerate(cols):
        for row in rows_of(d, path):
            r.append(row)
            cidx.append(k)
            v.append(1.0)
    return coo_matrix((v, (r, cidx)), shape=(nrows, len(cols))).tocsr()


def mcf_lp_optimal(topo: Topology, demands, pools: dict) -> LpSolution:
    """Minimum-cost fractional routing of ``demands`` over their path pools.

    Variables are per-(demand, path) flow amounts; each demand is routed
    exactly and link loads stay within capacity. The returned objective is
    certified by recomputing the dual objective from HiGHS' multipliers.
    """
    demands = list(demands)
    if not demands:
        return LpSolution({}, 0.0, "optimal", 0.0, 0.0, {})
    for d in demands:
        if not pools.get(d.id):
            raise ValueError(f"demand {d.id} has an empty path pool")
    w = topo.weights
    cap = topo.capacities
    cols = _column_layout(demands, pools)
    c = np.array([w[list(p)].sum() for _, _, p in cols])
    L = topo.num_links
    A_ub = _link_matrix(cols, lambda d, p: p, L)
    row_of = {d.id: i for i, d in enumerate(demands)}
    A_eq = coo_matrix((np.ones(len(cols)), ([row_of[d.id] for d, _, _ in cols], range(len(cols)))),
                      shape=(len(demands), len(cols))).tocsr()
    b_eq = np.array([d.bw for d in demands])
    res = _solve(c, A_ub, cap, A_eq, b_eq, [(0, None)] * len(cols))
    paths = {d.id: [tuple(p) for p in pools[d.id]] for d in demands}
    if res.status != 0:
        return LpSolution({}, float("inf"), "infeasible", paths=paths)
    x = res.x
    y = res.eqlin.marginals
    z = np.minimum(res.ineqlin.marginals, 0.0)
    ub = np.array([d.bw for d, _, _ in cols])
    dual = _dual_bound(c, y, b_eq, A_eq, z, cap, A_ub, ub)
    flow = {(d.id, j): float(v) for (d, j, _), v in zip(cols, x) if v > 1e-12}
    obj = float(c @ x)
    return LpSolution(flow, obj, "optimal", dual, abs(obj - dual), paths)


def _dual_bound(c, y, b_eq, A_eq, z, b_ub, A_ub, ub) -> float:
    """Valid lower bound on ``min c.x`` from (possibly slightly infeasible) multipliers.

    With ``z <= 0`` and ``0 <= x <= ub``:
    ``c.x >= y.b_eq + z.b_ub + sum(min(reduced, 0) * ub)``.
    """
    reduced = c - A_ub.T @ z
    bound = float(b_ub @ z)
    if y is not None:
        reduced = reduced - A_eq.T @ y
        bound += float(b_eq @ y)
    return bound + float(np.minimum(reduced, 0.0) @ ub)


def _overlap_groups(demands):
    """Maximal sets of demands simultaneously active at some arrival instant."""
    groups = []
    for t in sorted({d.arrival for d in demands}):
        active = frozenset(d.id for d in demands if d.arrival <= t < d.departure)
        groups.append(active)
    maximal = []
    for g in sorted(set(groups), key=lambda s: (-len(s), sorted(s))):
        if not any(g <= m for m in maximal):
            maximal.append(g)
    return maximal


def offline_packing_lp(topo: Topology, demands, pools: dict) -> LpSolution:
    """Maximum fractional profit with hindsight over a whole request sequence.

    Each demand may be routed fractionally (total at most its bandwidth) over
    its pool; profit is earned pro rata. Capacity must hold at every instant
    at which demands overlap, i.e. for every maximal set of simultaneously
    active demands.
    """
    demands = [d for d in demands if pools.get(d.id)]
    if not demands:
        return LpSolution({}, 0.0, "optimal", 0.0, 0.0, {})
    cap = topo.capacities
    L = topo.num_links
    cols = _column_layout(demands, pools)
    c = -np.array([d.value / d.bw for d, _, _ in cols])
    groups = _overlap_groups(demands)
    group_of = {}
    for gi, g in enumerate(groups):
        for did in g:
            group_of.setdefault(did, []).append(gi)
    A_cap = _link_matrix(cols, lambda d, p: [gi * L + e for gi in group_of[d.id] for e in p],
                         len(groups) * L)
    row_of = {d.id: i for i, d in enumerate(demands)}
    A_dem = coo_matrix((np.ones(len(cols)), ([row_of[d.id] for d, _, _ in cols], range(len(cols)))),
                       shape=(len(demands), len(cols))).tocsr()
    A_ub = vstack([A_cap, A_dem]).tocsr()
    b_ub = np.concatenate([np.tile(cap, len(groups)), [d.bw for d in demands]])
    res = _solve(c, A_ub, b_ub, None, None, [(0, None)] * len(cols))
    paths = {d.id: [tuple(p) for p in pools[d.id]] for d in demands}
    if res.status != 0:  # zero flow is always feasible; a failure here is numerical
        raise RuntimeError(f"packing LP failed: {res.message}")
    x = res.x
    z = np.minimum(res.ineqlin.marginals, 0.0)
    ub = np.array([d.bw for d, _, _ in cols])
    primal = float(-(c @ x))
    dual = -_dual_bound(c, None, None, None, z, b_ub, A_ub, ub)
    flow = {(d.id, j): float(v) for (d, j, _), v in zip(cols, x) if v > 1e-12}
    return LpSolution(flow, primal, "optimal", dual, abs(dual - primal), paths)


# ---------------------------------------------------------------------------
# Iterative solver
# ---------------------------------------------------------------------------

def solver_step(current: NetworkConfiguration, topo: Topology, pools: dict) -> NetworkConfiguration:
    """One flow-deviation pass.

    Demands are visited by decreasing bandwidth (ties by id). Each one is
    lifted off the network and put back on the cheapest pool path that fits;
    the move is kept only if it lowers total cost by more than 1e-9.
    """
    w = topo.weights.tolist()
    cap = topo.capacities.tolist()
    assignment = dict(current.assignment)
    load = current.induced_load.tolist()
    order = sorted(assignment, key=lambda d: (-current.bw[d], d))
    for did in order:
        bw = current.bw[did]
        old = assignment[did]
        old_w = sum(w[e] for e in old)
        for e in old:
            load[e] -= bw
        best_path, best_w = old, old_w
        for path in pools[did]:
            pw = sum(w[e] for e in path)
            if pw < best_w - 1e-12 and all(load[e] + bw <= cap[e] + TOL for e in path):
                best_path, best_w = tuple(path), pw
        if bw * (old_w - best_w) > 1e-9:
            assignment[did] = best_path
        for e in assignment[did]:
            load[e] += bw
    if assignment == current.assignment:
        return current
    return NetworkConfiguration.build(topo, assignment, current.bw)


def solve_to_fixed_point(config: NetworkConfiguration, topo: Topology, pools: dict,
                         max_steps: int | None = None) -> tuple:
    """Iterate ``solver_step`` until nothing changes; returns (config, cost trace)."""
    trace = [config.cost]
    limit = max_steps if max_steps is not None else 10 * max(1, len(config)) + 1
    for _ in range(limit):
        nxt = solver_step(config, topo, pools)
        if nxt is config:
            break
        config = nxt
        trace.append(config.cost)
    return config, trace


# ---------------------------------------------------------------------------
# Deployment policies
# ---------------------------------------------------------------------------

@dataclass
class PolicyState:
    V: float = 100.0
    alpha: float = 0.05
    Q: float = 0.0
    reconfig_count: int = 0
    slots: int = 0
    deployed: NetworkConfiguration | None = None
    candidate: NetworkConfiguration | None = None

    def __post_init__(self):
        if not self.V > 0:
            raise ValueError("V must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


def dp_policy_step(state: PolicyState, slot: int = 0) -> tuple:
    """Drift-plus-penalty deployment decision with a unit-arrival virtual queue.

    Reconfigure iff ``V * benefit >= Q``; then ``Q <- max(Q + r - alpha, 0)``.
    """
    deployed = state.deployed
    candidate = state.candidate if state.candidate is not None else deployed
    benefit = 0.0
    if deployed is not None and candidate is not None:
        benefit = deployed.cost - candidate.cost
    reconfigure = benefit > 0 and state.V * benefit >= state.Q
    r = 1 if reconfigure else 0
    new = replace(
        state,
        Q=max(state.Q + r - state.alpha, 0.0),
        reconfig_count=state.reconfig_count + r,
        slots=state.slots + 1,
        deployed=candidate if reconfigure else deployed,
    )
    return reconfigure, new


def periodic_policy_step(period: int, slot: int) -> bool:
    if period < 1:
        raise ValueError("period must be >= 1")
    return slot % period == 0


def pools_for(topo: Topology, demands, k: int = 8, extra: dict | None = None) -> dict:
    cache = PoolCache(topo, k)
    extra = extra or {}
    return {d.id: cache.for_demand(d, extra.get(d.id)) for d in demands}


def period_for(alpha: float) -> int:
    return int(math.ceil(1.0 / alpha - 1e-12))
