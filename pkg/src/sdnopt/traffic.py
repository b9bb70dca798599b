"""Guaranteed-class request streams and best-effort background load matrices."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .netmodel import Topology, k_shortest_paths

ARRIVAL = "arrival"
DEPARTURE = "departure"
# departures sort before arrivals inside a slot
_KIND_ORDER = {DEPARTURE: 0, ARRIVAL: 1}


@dataclass(frozen=True)
class Demand:
    id: int
    src: int
    dst: int
    bw: float
    arrival: int
    holding: int
    cls: str = "guaranteed"
    profit: float | None = None

    def __post_init__(self):
        if not self.bw > 0:
            raise ValueError("demand bandwidth must be positive")
        if not self.holding > 0:
            raise ValueError("holding time must be positive")
        if self.src == self.dst:
            raise ValueError("demand endpoints must differ")

    @property
    def value(self) -> float:
        """Profit credited on acceptance (bandwidth unless set explicitly)."""
        return self.bw if self.profit is None else self.profit

    @property
    def departure(self) -> int:
        return self.arrival + self.holding


@dataclass(frozen=True)
class FlowEvent:
    time: int
    kind: str
    demand: Demand

    def sort_key(self):
        return (self.time, _KIND_ORDER[self.kind], self.demand.id)


@dataclass
class ScenarioParams:
    horizon: int = 1000
    arrival_rate: float = 0.01
    mean_holding: float = 50.0
    bw_choices: tuple = (1.0, 2.0, 5.0)
    bw_probs: tuple = (0.5, 0.3, 0.2)
    pairs: tuple | None = None  # None means every ordered pair
    seed: int = 0
    mode: str = "iid"
    script: tuple = ()  # Demand records for mode="adversarial-script"

    def __post_init__(self):
        if self.arrival_rate < 0 or self.mean_holding <= 0:
            raise ValueError("rates must be nonnegative and mean holding positive")
        if len(self.bw_choices) != len(self.bw_probs):
            raise ValueError("bw_choices and bw_probs differ in length")
        if any(p < 0 for p in self.bw_probs) or abs(sum(self.bw_probs) - 1.0) > 1e-9:
            raise ValueError("bw_probs must be a probability vector")
        if self.mode not in ("iid", "adversarial-script"):
            raise ValueError(f"unknown scenario mode {self.mode!r}")


def all_pairs(topo: Topology) -> tuple:
    return tuple((s, d) for s in topo.nodes for d in topo.nodes if s != d)


def events_from_demands(demands) -> list:
    events = []
    for d in demands:
        events.append(FlowEvent(d.arrival, ARRIVAL, d))
        events.append(FlowEvent(d.departure, DEPARTURE, d))
    events.sort(key=FlowEvent.sort_key)
    return events


def generate_events(params: ScenarioParams, topo: Topology) -> list:
    """Time-ordered arrival/departure events.

    Arrivals per slot and pair are Poisson(``arrival_rate``); holding times are
    geometric on {1, 2, ...} with mean ``mean_holding``.
    """
    if params.mode == "adversarial-script":
        return events_from_demands(params.script)
    pairs = params.pairs if params.pairs is not None else all_pairs(topo)
    for s, d in pairs:
        if not (0 <= s < topo.n and 0 <= d < topo.n) or s == d:
            raise ValueError(f"pair ({s}, {d}) is not valid in this topology")
    if params.arrival_rate == 0 or params.horizon <= 0 or not pairs:
        return []
    rng = np.random.default_rng([params.seed, 0x7A1F])
    counts = rng.poisson(params.arrival_rate, size=(params.horizon, len(pairs)))
    total = int(counts.sum())
    bws = rng.choice(np.asarray(params.bw_choices, dtype=float), size=total, p=params.bw_probs)
    holds = rng.geometric(min(1.0, 1.0 / params.mean_holding), size=total)
    demands = []
    k = 0
    for t, p in zip(*np.nonzero(counts)):
        s, d = pairs[p]
        for _ in range(counts[t, p]):
            demands.append(Demand(k, s, d, float(bws[k]), int(t), int(holds[k])))
            k += 1
    return events_from_demands(demands)


def arrivals(events) -> list:
    return [e.demand for e in events if e.kind == ARRIVAL]


def offered_link_load(params: ScenarioParams, topo: Topology) -> np.ndarray:
    """Mean concurrent offered bandwidth per link if every request took its hop-shortest path."""
    pairs = params.pairs if params.pairs is not None else all_pairs(topo)
    mean_bw = float(np.dot(params.bw_choices, params.bw_probs))
    load = np.zeros(topo.num_links)
    for s, d in pairs:
        paths = k_shortest_paths(topo, s, d, 1)
        if paths:
            load[list(paths[0])] += params.arrival_rate * params.mean_holding * mean_bw
    return load


def expected_active_flows(params: ScenarioParams, topo: Topology) -> np.ndarray:
    """Mean number of concurrent offered flows crossing each link (hop-shortest routing)."""
    mean_bw = float(np.dot(params.bw_choices, params.bw_probs))
    return offered_link_load(params, topo) / mean_bw


# ---------------------------------------------------------------------------
# Best-effort background
# ---------------------------------------------------------------------------

def generate_best_effort(topo_or_links, epochs: int, rank: int, amplitude: float,
                         noise_std: float = 0.0, seed: int = 0, period: float = 24.0) -> np.ndarray:
    """Low-rank nonnegative link x epoch load matrix.

    ``amplitude * (A @ B.T / rank + diurnal) + noise``, clamped at zero. ``A``
    and ``B`` have uniform [0, 1) entries and the diurnal term is the rank-1
    outer product of a per-link scale with ``1 + 0.5 sin(2 pi t / period)``.
    Without noise the result has rank at most ``rank + 1``.
    """
    L = topo_or_links if isinstance(topo_or_links, int) else topo_or_links.num_links
    if not 1 <= rank <= min(L, epochs):
        raise ValueError(f"rank must lie in [1, {min(L, epochs)}], got {rank}")
    rng = np.random.default_rng([seed, 0xBE])
    A = rng.random((L, rank))
    B = rng.random((epochs, rank))
    scale = rng.random(L)
    t = np.arange(epochs)
    wave = 1.0 + 0.5 * np.sin(2.0 * np.pi * t / period)
    values = amplitude * (A @ B.T / rank + np.outer(scale, wave))
    if noise_std > 0:
        values = values + rng.normal(0.0, noise_std, size=values.shape)
    return np.maximum(values, 0.0)


# ---------------------------------------------------------------------------
# Adversarial sequence for Greedy
# ---------------------------------------------------------------------------

class UnsuitableTopologyError(ValueError):
    pass


@dataclass
class TrapScenario:
    """Scripted demands plus the facts needed to reason about the optimum."""
    demands: list
    long_path: tuple
    long_pair: tuple
    hops: int
    unit: float
    notes: str = ""
    events: list = field(default_factory=list)


def adversarial_greedy_trap(topo: Topology, units_per_link: int = 10, holding: int = 1000) -> TrapScenario:
    """Build a request script on which Greedy is lured into a bad allocation.

    The longest hop-shortest path ``v0 -> ... -> vh`` of the topology is chosen
    (largest hop count, then lexicographically smallest link sequence). Let
    ``c`` be the smallest capacity on it and ``unit = c / units_per_link``.

    * slots ``0 .. units_per_link - 1``: one ``v0 -> vh`` request of ``unit``
      each, so the long path alone can absorb all of them;
    * then, for every hop ``vi -> vi+1``, ``units_per_link`` single-hop
      requests of ``unit``.

    Every request holds for ``holding`` slots, longer than the script, so all
    of them overlap. On a line topology Greedy accepts the ``units_per_link``
    long requests and then nothing else, for profit ``c``; the optimum rejects
    the long ones and accepts every single-hop request, for profit ``h * c``.
    Pricing schemes that stop accepting the long request once its path gets
    expensive keep room on each hop for the short ones.
    """
    if topo.n < 3 or topo.num_links < 2:
        raise UnsuitableTopologyError("topology needs a path with at least two hops")
    best = None
    for s in topo.nodes:
        for d in topo.nodes:
            if s == d:
                continue
            paths = k_shortest_paths(topo, s, d, 1)
            if not paths:
                continue
            key = (-len(paths[0]), paths[0])
            if best is None or key < best[0]:
                best = (key, (s, d), paths[0])
    if best is None or len(best[2]) < 2:
        raise UnsuitableTopologyError("topology needs a path with at least two hops")
    _, (s, d), path = best
    c = min(topo.links[e].capacity for e in path)
    unit = c / units_per_link
    demands = []
    t = 0
    for _ in range(units_per_link):
        demands.append(Demand(len(demands), s, d, unit, t, holding))
        t += 1
    for e in path:
        link = topo.links[e]
        for _ in range(units_per_link):
            demands.append(Demand(len(demands), link.src, link.dst, unit, t, holding))
            t += 1
    notes = (f"{units_per_link} long requests {s}->{d} over {len(path)} hops, then "
             f"{units_per_link} single-hop requests per hop; unit={unit:g}")
    return TrapScenario(demands, tuple(path), (s, d), len(path), unit, notes,
                        events_from_demands(demands))


def line_topology(n: int = 3, capacity: float = 10.0) -> Topology:
    from .netmodel import from_edges
    return from_edges(n, [(i, i + 1, capacity, 1.0) for i in range(n - 1)], name=f"line{n}")


# ---------------------------------------------------------------------------
# CSV for scripted sequences: time,kind,src,dst,bw,holding
# ---------------------------------------------------------------------------

SCRIPT_HEADER = ["time", "kind", "src", "dst", "bw", "holding"]


def dump_script(events) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCRIPT_HEADER)
    for e in events:
        d = e.demand
        w.writerow([e.time, e.kind, d.src, d.dst, f"{d.bw:.9g}", d.holding])
    return buf.getvalue()


def load_script(text: str) -> list:
    """Parse a scripted sequence; only arrival rows create demands."""
    rows = list(csv.DictReader(io.StringIO(text)))
    demands = []
    for row in rows:
        if row["kind"] != ARRIVAL:
            continue
        demands.append(Demand(len(demands), int(row["src"]), int(row["dst"]), float(row["bw"]),
                              int(row["time"]), int(row["holding"])))
    return demands


def with_seed(params: ScenarioParams, seed: int) -> ScenarioParams:
    return replace(params, seed=seed)


def poisson_tolerance(rate: float, horizon: int) -> float:
    return 3.0 * math.sqrt(rate * horizon)
