"""Directed capacitated topology, ranked simple-path search and load accounting."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

# Absolute tolerance for every capacity/feasibility comparison.
TOL = 1e-9

Path = tuple  # ordered tuple of link ids


class TopologyError(ValueError):
    """Malformed or inconsistent topology description."""


class NegativeLoadError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    id: int
    src: int
    dst: int
    capacity: float
    weight: float = 1.0


@dataclass(frozen=True)
class Topology:
    nodes: tuple
    links: tuple
    name: str = ""
    labels: tuple = ()
    _out: tuple = field(default=(), repr=False, compare=False)
    _cap: np.ndarray = field(default=None, repr=False, compare=False)
    _w: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.nodes)
        if tuple(self.nodes) != tuple(range(n)):
            raise TopologyError("node ids must be dense integers 0..n-1")
        for i, link in enumerate(self.links):
            if link.id != i:
                raise TopologyError(f"link ids must be dense, got {link.id} at position {i}")
            if not (0 <= link.src < n and 0 <= link.dst < n):
                raise TopologyError(f"link {i} has a dangling endpoint")
            if link.src == link.dst:
                raise TopologyError(f"link {i} is a self-loop")
            if not link.capacity > 0 or not link.weight > 0:
                raise TopologyError(f"link {i} needs positive capacity and weight")
        out = [[] for _ in range(n)]
        for link in self.links:
            out[link.src].append(link.id)
        object.__setattr__(self, "_out", tuple(tuple(x) for x in out))
        object.__setattr__(self, "_cap", np.array([link.capacity for link in self.links], dtype=float))
        object.__setattr__(self, "_w", np.array([link.weight for link in self.links], dtype=float))
        if not self.labels:
            object.__setattr__(self, "labels", tuple("" for _ in range(n)))

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def num_links(self) -> int:
        return len(self.links)

    def out_links(self, node: int) -> tuple:
        return self._out[node]

    @property
    def capacities(self) -> np.ndarray:
        return self._cap.copy()

    @property
    def weights(self) -> np.ndarray:
        return self._w.copy()

    def path_nodes(self, path: Sequence[int]) -> list:
        if not path:
            return []
        nodes = [self.links[path[0]].src]
        for lid in path:
            nodes.append(self.links[lid].dst)
        return nodes

    def is_valid_path(self, path: Sequence[int]) -> bool:
        """True when the links chain end to end and no node repeats."""
        if not path:
            return False
        for a, b in zip(path, path[1:]):
            if self.links[a].dst != self.links[b].src:
                return False
        nodes = self.path_nodes(path)
        return len(set(nodes)) == len(nodes)


def _parse_number(tok: str, lineno: int, kind=float):
    try:
        return kind(tok)
    except ValueError:
        raise TopologyError(f"line {lineno}: expected {kind.__name__}, got {tok!r}") from None


def load_topology(text: str, name: str = "") -> Topology:
    """Parse the line-based topology format.

    Recognised lines (``#`` starts a comment)::

        node <id> [label]
        link <src> <dst> <capacity> <weight>
        edge <a> <b> <capacity> <weight>     # expands to a->b and b->a
        name <label>
    """
    nodes: list[int] = []
    labels: list[str] = []
    raw_links: list[tuple] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kw = parts[0]
        if kw == "name":
            name = " ".join(parts[1:])
        elif kw == "node":
            if len(parts) < 2:
                raise TopologyError(f"line {lineno}: node needs an id")
            nid = _parse_number(parts[1], lineno, int)
            if nid != len(nodes):
                raise TopologyError(f"line {lineno}: node ids must be dense and ascending, got {nid}")
            nodes.append(nid)
            labels.append(" ".join(parts[2:]))
        elif kw in ("link", "edge"):
            if len(parts) != 5:
                raise TopologyError(f"line {lineno}: {kw} needs <src> <dst> <capacity> <weight>")
            s = _parse_number(parts[1], lineno, int)
            d = _parse_number(parts[2], lineno, int)
            cap = _parse_number(parts[3], lineno)
            w = _parse_number(parts[4], lineno)
            raw_links.append((lineno, s, d, cap, w))
            if kw == "edge":
                raw_links.append((lineno, d, s, cap, w))
        else:
            raise TopologyError(f"line {lineno}: unknown keyword {kw!r}")

    n = len(nodes)
    links = []
    for lineno, s, d, cap, w in raw_links:
        if not (0 <= s < n and 0 <= d < n):
            raise TopologyError(f"line {lineno}: link endpoint not a declared node ({s} -> {d})")
        if s == d:
            raise TopologyError(f"line {lineno}: self-loop on node {s}")
        if not cap > 0 or not w > 0:
            raise TopologyError(f"line {lineno}: capacity and weight must be positive")
        links.append(Link(len(links), s, d, cap, w))
    return Topology(tuple(nodes), tuple(links), name, tuple(labels))


def dump_topology(topo: Topology) -> str:
    lines = []
    if topo.name:
        lines.append(f"name {topo.name}")
    for nid, label in zip(topo.nodes, topo.labels):
        lines.append(f"node {nid} {label}".rstrip())
    for link in topo.links:
        lines.append(f"link {link.src} {link.dst} {link.capacity:.17g} {link.weight:.17g}")
    return "\n".join(lines) + "\n"


def read_topology(path) -> Topology:
    """Read a topology file; ``bundled:<name>`` resolves to the packaged data."""
    path = str(path)
    if path.startswith("bundled:"):
        return load_topology(bundled_text(path.split(":", 1)[1]))
    with open(path, encoding="utf-8") as fh:
        return load_topology(fh.read())


def bundled_text(name: str = "geant") -> str:
    return resources.files("sdnopt.data").joinpath(f"{name}.topo").read_text(encoding="utf-8")


def geant() -> Topology:
    return load_topology(bundled_text("geant"))


def from_edges(n: int, edges: Iterable[tuple], name: str = "") -> Topology:
    """Build a topology from ``(src, dst, capacity, weight)`` tuples."""
    links = tuple(Link(i, s, d, float(c), float(w)) for i, (s, d, c, w) in enumerate(edges))
    return Topology(tuple(range(n)), links, name)


# ---------------------------------------------------------------------------
# Path search
# ---------------------------------------------------------------------------

def _distances_to(topo: Topology, dst: int, lengths: Sequence[float]) -> list:
    """Reverse Dijkstra: exact shortest distance from every node to ``dst``."""
    into = [[] for _ in range(topo.n)]
    for link in topo.links:
        into[link.dst].append(link.id)
    dist = [float("inf")] * topo.n
    dist[dst] = 0.0
    heap = [(0.0, dst)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for lid in into[v]:
            u = topo.links[lid].src
            nd = d + lengths[lid]
            if nd < dist[u]:
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
    return dist


def shortest_path_length(topo: Topology, src: int, dst: int, lengths: Sequence[float]) -> float:
    return _distances_to(topo, dst, lengths)[src]


def k_shortest_paths(topo: Topology, src: int, dst: int, k: int,
                     lengths: Sequence[float] | None = None) -> list:
    """Return up to ``k`` loopless paths in ascending total length.

    Ties are broken by the lexicographic order of the link-id sequence, so
    the result is fully determined by the inputs. The search is best-first
    over partial paths with the exact unconstrained distance-to-go as the
    priority bound; since that bound never overestimates, complete paths
    leave the queue in (length, link sequence) order.
    """
    if src == dst:
        raise ValueError("src and dst must differ")
    if k < 1:
        raise ValueError("k must be >= 1")
    if lengths is None:
        lengths = [1.0] * topo.num_links
    lengths = [float(x) for x in lengths]
    if len(lengths) != topo.num_links:
        raise ValueError("lengths must have one entry per link")
    if min(lengths, default=0.0) < 0:
        raise ValueError("lengths must be nonnegative")

    h = _distances_to(topo, dst, lengths)
    if h[src] == float("inf"):
        return []
    found: list = []
    # (bound, links, cost, node, visited)
    heap = [(h[src], (), 0.0, src, frozenset((src,)))]
    while heap and len(found) < k:
        _, links, cost, node, visited = heapq.heappop(heap)
        if node == dst:
            found.append(links)
            continue
        for lid in topo.out_links(node):
            nxt = topo.links[lid].dst
            if nxt in visited or h[nxt] == float("inf"):
                continue
            c = cost + lengths[lid]
            heapq.heappush(heap, (c + h[nxt], links + (lid,), c, nxt, visited | {nxt}))
    return found


def path_length(path: Sequence[int], lengths: Sequence[float]) -> float:
    return float(sum(lengths[e] for e in path))


# ---------------------------------------------------------------------------
# Load accounting
# ---------------------------------------------------------------------------

def zero_load(topo: Topology) -> np.ndarray:
    return np.zeros(topo.num_links)


def apply_path_load(load: np.ndarray, path: Sequence[int], bw: float, sign: int = 1) -> np.ndarray:
    """Return a copy of ``load`` with ``sign * bw`` added on every link of ``path``."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    out = np.array(load, dtype=float, copy=True)
    idx = list(path)
    out[idx] += sign * bw
    if sign < 0:
        low = out[idx]
        if np.any(low < -TOL):
            raise NegativeLoadError(f"removing {bw} drives a link load negative")
        out[idx] = np.maximum(low, 0.0)
    return out


def residual(topo: Topology, guaranteed: np.ndarray, best_effort_estimate: np.ndarray | None = None) -> np.ndarray:
    cap = topo.capacities
    be = 0.0 if best_effort_estimate is None else np.asarray(best_effort_estimate, dtype=float)
    return np.maximum(0.0, cap - np.asarray(guaranteed, dtype=float) - be)


def path_fits(residual_view: np.ndarray, path: Sequence[int], bw: float) -> bool:
    return all(residual_view[e] >= bw - TOL for e in path)
