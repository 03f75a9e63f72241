"""Undirected multigraph with positive edge costs, plus small cut utilities.

The graph is the LP instance everything else works on: vertices are
0..n-1 internally (1-based in the text format), edges carry positive
costs, parallel edges are kept distinct, and connectivity is enforced at
load time because the covering LPs are ill-posed on disconnected input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_BRUTEFORCE_N = 20


class GraphError(ValueError):
    """Base class for graph input problems."""


class ParseError(GraphError):
    """Malformed input text."""


class ValidationError(GraphError):
    """Structurally invalid graph (self loop, bad cost, disconnected...)."""


@dataclass
class Graph:
    """Immutable undirected multigraph.

    Attributes:
        n: vertex count (vertices are 0..n-1).
        src, dst: per-edge endpoint arrays (int64), src[i] < dst[i].
        cost: per-edge positive cost (float64).
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    cost: np.ndarray
    _adj: dict | None = field(default=None, repr=False, compare=False)

    @property
    def m(self) -> int:
        return len(self.src)

    def incident_edges(self, v: int) -> np.ndarray:
        """Edge ids incident to vertex v (built lazily, then cached)."""
        if self._adj is None:
            adj: dict[int, list[int]] = {u: [] for u in range(self.n)}
            for eid in range(self.m):
                adj[int(self.src[eid])].append(eid)
                adj[int(self.dst[eid])].append(eid)
            object.__setattr__(self, "_adj", {v: np.asarray(ids, dtype=np.int64)
                                              for v, ids in adj.items()})
        return self._adj[v]


def make_graph(n: int, edges: list[tuple[int, int, float]]) -> Graph:
    """Build and validate a Graph from (u, v, cost) triples (0-based)."""
    if n < 2:
        raise ValidationError(f"need at least 2 vertices, got {n}")
    if not edges:
        raise ValidationError("graph has no edges")
    src = np.empty(len(edges), dtype=np.int64)
    dst = np.empty(len(edges), dtype=np.int64)
    cost = np.empty(len(edges), dtype=np.float64)
    for i, (u, v, c) in enumerate(edges):
        if not (0 <= u < n and 0 <= v < n):
            raise ValidationError(f"edge {i}: vertex out of range: ({u}, {v})")
        if u == v:
            raise ValidationError(f"edge {i}: self loop at vertex {u}")
        if not (c > 0) or not np.isfinite(c):
            raise ValidationError(f"edge {i}: cost must be positive, got {c}")
        src[i], dst[i] = (u, v) if u < v else (v, u)
        cost[i] = c
    g = Graph(n=n, src=src, dst=dst, cost=cost)
    if not _is_connected(g):
        raise ValidationError("graph is disconnected")
    return g


def _is_connected(g: Graph) -> bool:
    parent = np.arange(g.n)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    comps = g.n
    for u, v in zip(g.src, g.dst):
        ra, rb = find(int(u)), find(int(v))
        if ra != rb:
            parent[ra] = rb
            comps -= 1
    return comps == 1


def load_graph(text: str) -> Graph:
    """Parse the edge-list text format.

    Format: a header line ``p ghct <n> <m>``, then m lines
    ``e <u> <v> <cost>`` with 1-based vertex ids and decimal cost > 0.
    Lines starting with ``c`` are comments.
    """
    n = None
    m_declared = None
    edges: list[tuple[int, int, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        parts = line.split()
        if parts[0] == "p":
            if n is not None:
                raise ParseError(f"line {lineno}: duplicate header")
            if len(parts) != 4 or parts[1] != "ghct":
                raise ParseError(f"line {lineno}: bad header {line!r}")
            try:
                n, m_declared = int(parts[2]), int(parts[3])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: bad header numbers") from exc
        elif parts[0] == "e":
            if n is None:
                raise ParseError(f"line {lineno}: edge before header")
            if len(parts) != 4:
                raise ParseError(f"line {lineno}: bad edge line {line!r}")
            try:
                u, v, c = int(parts[1]), int(parts[2]), float(parts[3])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: bad edge fields") from exc
            if not (1 <= u <= n and 1 <= v <= n):
                raise ValidationError(
                    f"line {lineno}: vertex id out of 1..{n}: ({u}, {v})")
            edges.append((u - 1, v - 1, c))
        else:
            raise ParseError(f"line {lineno}: unrecognized line {line!r}")
    if n is None:
        raise ParseError("missing header line")
    if m_declared is not None and m_declared != len(edges):
        raise ParseError(
            f"header declares {m_declared} edges, found {len(edges)}")
    return make_graph(n, edges)


def vertex_mask(g: Graph, members) -> np.ndarray:
    """Normalize a vertex subset (iterable or bool mask) to a bool mask."""
    members = np.asarray(members)
    if members.dtype == bool:
        if members.shape != (g.n,):
            raise ValueError("bool mask has wrong length")
        return members.copy()
    mask = np.zeros(g.n, dtype=bool)
    mask[members.astype(np.int64)] = True
    return mask


def cut_weight(g: Graph, w: np.ndarray, members) -> float:
    """Total weight of edges with exactly one endpoint in the given set.

    The set may be empty or the full vertex set, in which case the cut
    weight is 0 by convention (no edge crosses).
    """
    mask = vertex_mask(g, members)
    crossing = mask[g.src] != mask[g.dst]
    return float(np.dot(np.asarray(w, dtype=np.float64), crossing))


def _all_cut_masks(n: int) -> np.ndarray:
    """All proper cuts as bit patterns over vertices 1..n-1; vertex 0 is
    always on the inside, so patterns run over [0, 2^(n-1) - 1)."""
    return np.arange(2 ** (n - 1) - 1, dtype=np.int64)


def cut_values_bruteforce(g: Graph, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values of every proper cut (vertex 0 inside), as (patterns, values).

    Pattern p encodes the set {0} plus the vertices v >= 1 whose bit
    (v - 1) is set.
    """
    if g.n > MAX_BRUTEFORCE_N:
        raise ValueError(f"brute force limited to n <= {MAX_BRUTEFORCE_N}")
    w = np.asarray(w, dtype=np.float64)
    pats = _all_cut_masks(g.n)
    values = np.empty(len(pats), dtype=np.float64)
    # chunked so that n near the cap stays within a modest memory footprint
    for lo in range(0, len(pats), 1 << 14):
        chunk = pats[lo:lo + (1 << 14), None]
        side_src = np.where(g.src == 0, 1, (chunk >> (g.src[None, :] - 1)) & 1)
        side_dst = np.where(g.dst == 0, 1, (chunk >> (g.dst[None, :] - 1)) & 1)
        values[lo:lo + (1 << 14)] = (side_src != side_dst) @ w
    return pats, values


def pattern_to_members(pattern: int, n: int) -> frozenset[int]:
    """Decode a brute-force cut pattern into its vertex set."""
    return frozenset([0] + [v for v in range(1, n) if (pattern >> (v - 1)) & 1])


def exact_min_cut_bruteforce(g: Graph, w: np.ndarray) -> tuple[frozenset[int], float]:
    """Minimize cut weight over all proper vertex subsets by enumeration."""
    pats, values = cut_values_bruteforce(g, w)
    best = int(np.argmin(values))
    return pattern_to_members(int(pats[best]), g.n), float(values[best])


def check_sub_posi_modularity(g: Graph, w: np.ndarray, x_members, y_members) -> bool:
    """Check both the submodular and posimodular inequality for two sets.

    Uses the convention that the empty set and the full vertex set have
    cut weight 0. Always true for nonnegative weights; exercised as a
    property test.
    """
    xm = vertex_mask(g, x_members)
    ym = vertex_mask(g, y_members)

    def f(mask: np.ndarray) -> float:
        return cut_weight(g, w, mask)

    fx, fy = f(xm), f(ym)
    sub = fx + fy >= f(xm & ym) + f(xm | ym) - 1e-9 * (fx + fy + 1.0)
    posi = fx + fy >= f(xm & ~ym) + f(ym & ~xm) - 1e-9 * (fx + fy + 1.0)
    return bool(sub and posi)
