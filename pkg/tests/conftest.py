"""Shared instance builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from cutcover.graph import Graph, make_graph


def complete_graph(n: int, cost: float = 1.0) -> Graph:
    edges = [(u, v, cost) for u in range(n) for v in range(u + 1, n)]
    return make_graph(n, edges)


def cycle_graph(n: int, cost: float = 1.0) -> Graph:
    edges = [(i, (i + 1) % n, cost) for i in range(n)]
    return make_graph(n, edges)


def single_edge_graph(cost: float = 5.0) -> Graph:
    return make_graph(2, [(0, 1, cost)])


def five_cycle_mixed_costs() -> Graph:
    """The 5-cycle with costs 5,1,1,5 on the path and 1 on the chord.

    Vertices 0..4; edge ids: 0=(0,1,c5), 1=(1,2,c1), 2=(2,3,c1),
    3=(3,4,c5), 4=(4,0,c1). Edges 0..3 form a spanning path and edge 4
    closes the cycle.
    """
    return make_graph(5, [(0, 1, 5.0), (1, 2, 1.0), (2, 3, 1.0),
                          (3, 4, 5.0), (4, 0, 1.0)])


def random_graph(rng: np.random.Generator, n: int, m: int,
                 cost_lo: float = 1.0, cost_hi: float = 10.0) -> Graph:
    """Random connected multigraph: random spanning tree + extra edges."""
    edges: list[tuple[int, int, float]] = []
    order = rng.permutation(n)
    for i in range(1, n):
        u = int(order[i])
        v = int(order[rng.integers(0, i)])
        edges.append((u, v, float(rng.uniform(cost_lo, cost_hi))))
    while len(edges) < m:
        u, v = rng.integers(0, n, size=2)
        if u == v:
            continue
        edges.append((int(u), int(v), float(rng.uniform(cost_lo, cost_hi))))
    return make_graph(n, edges)


@pytest.fixture
def k3() -> Graph:
    return complete_graph(3)


@pytest.fixture
def c4() -> Graph:
    return cycle_graph(4)


@pytest.fixture
def c5x() -> Graph:
    return five_cycle_mixed_costs()


@pytest.fixture
def rng_factory():
    """Philox generators keyed by an explicit seed, for reproducible tests."""
    def factory(seed: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return factory
