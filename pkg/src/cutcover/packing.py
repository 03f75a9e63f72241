"""Spanning tree packing.

Builds a small family of spanning trees by greedy fractional packing so
that, with high probability, every cut of near-minimum weight crosses at
most two edges of some tree in the family. Downstream modules only ever
search over cuts that cross a tree in one or two edges, so the packing
is what reduces "all exponentially many cuts" to a tractable family.

Also provides the packing-based starting threshold for the solver driver
and a desk-scale verifier used by tests and the Las Vegas retry loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import kruskal_mst
from .graph import Graph, cut_values_bruteforce
from .rng import make_rng

# Packing sizes: TREE_COUNT_FACTOR * ln n sampled trees out of
# LOAD_ROUNDS_FACTOR * ln n / PACK_SLACK^2 greedy rounds. The slack is
# the cut-value margin (cuts within a 1.499 factor of the minimum are
# covered), fixed here rather than tied to the solver's accuracy knob.
TREE_COUNT_FACTOR = 3.0
LOAD_ROUNDS_FACTOR = 12.0
PACK_SLACK = 0.499

# Quadratic-cost exact search guard (pairs of tree edges).
MAX_PAIR_BRUTEFORCE_N = 2048


@dataclass(frozen=True)
class SpanningTree:
    """Rooted spanning tree with preorder (Euler-style) indexing.

    Vertices are indexed by their discovery position: subtree(v) is the
    contiguous slice [tin[v], tout[v]) of the preorder sequence, which
    makes "is u in the subtree under v" a pair of comparisons and makes
    every one-edge tree cut an interval.
    """

    n: int
    edge_ids: np.ndarray    # graph edge ids of the n-1 tree edges
    lower: np.ndarray       # per tree edge: its child-side (deeper) endpoint
    parent: np.ndarray      # per vertex: parent vertex, -1 at the root (0)
    parent_edge: np.ndarray  # per vertex: graph edge id to parent, -1 at root
    depth: np.ndarray
    order: np.ndarray       # preorder vertex sequence; order[tin[v]] == v
    tin: np.ndarray
    tout: np.ndarray

    def subtree_size(self, v: int) -> int:
        return int(self.tout[v] - self.tin[v])

    def in_subtree(self, ancestor_child: int, v: int) -> bool:
        """True when v lies in the subtree under the given vertex."""
        return bool(self.tin[ancestor_child] <= self.tin[v]
                    < self.tout[ancestor_child])


@dataclass(frozen=True)
class TreePacking:
    trees: list[SpanningTree] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.trees)

    def __iter__(self):
        return iter(self.trees)


def packing_tree_count(n: int) -> int:
    return max(1, math.ceil(TREE_COUNT_FACTOR * math.log(n)))


def packing_rounds(n: int) -> int:
    return max(1, math.ceil(LOAD_ROUNDS_FACTOR * math.log(n)
                            / (PACK_SLACK * PACK_SLACK)))


def build_spanning_tree(g: Graph, edge_ids: np.ndarray) -> SpanningTree:
    """Root the given tree edges at vertex 0 and index it in preorder."""
    edge_ids = np.asarray(edge_ids, dtype=np.int64)
    n = g.n
    if len(edge_ids) != n - 1:
        raise ValueError("a spanning tree needs exactly n - 1 edges")
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for e in edge_ids:
        a, b = int(g.src[e]), int(g.dst[e])
        adj[a].append((b, int(e)))
        adj[b].append((a, int(e)))

    parent = np.full(n, -1, dtype=np.int64)
    parent_edge = np.full(n, -1, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    tin = np.empty(n, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    visited[0] = True
    stack = [0]
    timer = 0
    while stack:
        v = stack.pop()
        tin[v] = timer
        order[timer] = v
        timer += 1
        for w, e in reversed(adj[v]):
            if not visited[w]:
                visited[w] = True
                parent[w] = v
                parent_edge[w] = e
                depth[w] = depth[v] + 1
                stack.append(w)
    if timer != n:
        raise ValueError("tree edges do not span the graph")

    size = np.ones(n, dtype=np.int64)
    for v in order[::-1]:
        p = parent[v]
        if p >= 0:
            size[p] += size[v]
    tout = tin + size

    lower = np.empty(n - 1, dtype=np.int64)
    for i, e in enumerate(edge_ids):
        a, b = int(g.src[e]), int(g.dst[e])
        lower[i] = a if parent_edge[a] == e else b
    return SpanningTree(n=n, edge_ids=edge_ids, lower=lower, parent=parent,
                        parent_edge=parent_edge, depth=depth, order=order,
                        tin=tin, tout=tout)


def pack_trees(g: Graph, u: np.ndarray,
               seed: int | np.random.Generator,
               count: int | None = None) -> TreePacking:
    """Greedy fractional packing, sampling `count` of the built trees.

    Each round takes a minimum spanning tree under key load/u (ties by
    edge id, so the result is deterministic per seed) and spreads 1/K of
    a unit of load over its edges; heavily loaded edges are avoided by
    later rounds, which is what makes the sampled trees diverse enough
    to cover all near-minimum cuts with high probability.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (g.m,) or not np.all(u > 0) or not np.all(np.isfinite(u)):
        raise ValueError("edge weights must be positive and finite")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, 7)
    rounds = packing_rounds(g.n)
    if count is None:
        count = packing_tree_count(g.n)
    sampled = rng.integers(0, rounds, size=count)

    loads = np.zeros(g.m, dtype=np.float64)
    inv_u = 1.0 / u
    needed = set(int(r) for r in sampled)
    built: dict[int, SpanningTree] = {}
    last = max(needed)
    for r in range(last + 1):
        key = loads * inv_u
        scan = np.argsort(key, kind="stable")
        mst = kruskal_mst(scan, g.src, g.dst, g.n)
        if r in needed:
            built[r] = build_spanning_tree(g, mst)
        loads[mst] += 1.0 / rounds
    return TreePacking(trees=[built[int(r)] for r in sampled])


def tree_cut_crossing(g: Graph, tree: SpanningTree) -> np.ndarray:
    """Bool matrix: row i marks the graph edges crossing the cut that
    removing tree edge i induces (the subtree under its lower endpoint
    against the rest)."""
    child_tin = tree.tin[tree.lower]
    child_tout = tree.tout[tree.lower]
    pos_src = tree.tin[g.src]
    pos_dst = tree.tin[g.dst]
    in_src = ((child_tin[:, None] <= pos_src[None, :])
              & (pos_src[None, :] < child_tout[:, None]))
    in_dst = ((child_tin[:, None] <= pos_dst[None, :])
              & (pos_dst[None, :] < child_tout[:, None]))
    return in_src != in_dst


def min_1or2_respecting_cut_bruteforce(
        g: Graph, tree: SpanningTree,
        u: np.ndarray) -> tuple[tuple[int, ...], float]:
    """Minimum over all cuts crossing the tree in one or two edges.

    Quadratic in n: evaluates every single tree edge and every pair
    directly. Returns (tree edge ids of the minimizer, value). The value
    is always an upper bound on the global minimum cut, with equality
    whenever some global minimum cut crosses the tree at most twice.
    """
    if g.n > MAX_PAIR_BRUTEFORCE_N:
        raise ValueError(
            f"pair enumeration guarded to n <= {MAX_PAIR_BRUTEFORCE_N}")
    u = np.asarray(u, dtype=np.float64)
    crossing = tree_cut_crossing(g, tree)
    singles = crossing @ u
    best_single = int(np.argmin(singles))

    # cut(i xor j) crosses exactly the edges in the symmetric difference
    # of the two one-edge cuts, so its value is v_i + v_j - 2 * overlap
    overlap = (crossing * u) @ crossing.T
    pair_vals = singles[:, None] + singles[None, :] - 2.0 * overlap
    iu = np.triu_indices(len(singles), k=1)
    if len(iu[0]) == 0:
        return ((int(tree.edge_ids[best_single]),), float(singles[best_single]))
    flat = int(np.argmin(pair_vals[iu]))
    i, j = int(iu[0][flat]), int(iu[1][flat])
    best_pair_val = float(pair_vals[i, j])
    if float(singles[best_single]) <= best_pair_val:
        return ((int(tree.edge_ids[best_single]),), float(singles[best_single]))
    return ((int(tree.edge_ids[i]), int(tree.edge_ids[j])), best_pair_val)


def initial_lambda(g: Graph, u: np.ndarray, packing: TreePacking,
                   eps: float, min_fn=None) -> float:
    """Starting threshold: packed-tree cut minimum with a safety margin.

    The tree minimum can only overshoot the true minimum cut (it
    restricts the search family), and the packing guarantee says it
    matches with high probability; one division by (1 + eps) absorbs a
    failure at the cost of at most one extra threshold-raising round.
    """
    if min_fn is None:
        def min_fn(tree: SpanningTree) -> float:
            return min_1or2_respecting_cut_bruteforce(g, tree, u)[1]
    best = min(min_fn(tree) for tree in packing)
    return best / (1.0 + eps)


def verify_packing(g: Graph, u: np.ndarray, packing: TreePacking,
                   eps: float) -> bool:
    """Exhaustively check the packing guarantee on a small graph.

    Every cut within (1 + eps) of the minimum must cross some packed
    tree in at most two edges. Exponential in n, so guarded; the solver
    uses this only in tests and desk-scale audits, relying on fresh
    repacking (not this check) at scale.
    """
    u = np.asarray(u, dtype=np.float64)
    pats, values = cut_values_bruteforce(g, u)
    mincut = float(values.min())
    near = pats[values <= (1.0 + eps) * mincut * (1.0 + 1e-12)]
    if len(near) == 0:
        return True
    covered = np.zeros(len(near), dtype=bool)
    for tree in packing:
        e_ids = tree.edge_ids
        src = g.src[e_ids]
        dst = g.dst[e_ids]
        side_src = np.where(src == 0, 1, (near[:, None] >> (src[None, :] - 1)) & 1)
        side_dst = np.where(dst == 0, 1, (near[:, None] >> (dst[None, :] - 1)) & 1)
        shares = np.sum(side_src != side_dst, axis=1)
        covered |= shares <= 2
        if covered.all():
            return True
    return bool(covered.all())
