import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from sdnopt.netmodel import from_edges


@st.composite
def small_digraphs(draw, min_nodes=2, max_nodes=7, max_weight=5):
    """Random directed graph with integer weights (so ties happen) and its topology."""
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = [(a, b) for a, b in itertools.permutations(range(n), 2)]
    chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=min(len(pairs), 3 * n), unique=True))
    edges = [(a, b, float(draw(st.integers(1, 20))), float(draw(st.integers(1, max_weight)))) for a, b in chosen]
    return from_edges(n, edges)


def all_simple_paths(topo, src, dst):
    """Every simple path from src to dst as link tuples, by plain DFS."""
    out = []

    def dfs(node, links, seen):
        if node == dst:
            out.append(tuple(links))
            return
        for lid in topo.out_links(node):
            nxt = topo.links[lid].dst
            if nxt not in seen:
                dfs(nxt, links + [lid], seen | {nxt})

    dfs(src, [], {src})
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion, when that module ran."""
    import sys

    mod = sys.modules.get("test_acceptance")
    rows = getattr(mod, "RESULTS", None)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(rows):
        terminalreporter.write_line(f"criterion {num} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
