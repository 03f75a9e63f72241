"""Cut oracle over one spanning tree.

Every cut the solver ever touches crosses a fixed spanning tree in one
or two edges, so its edge set is a union of constantly many axis-aligned
rectangles once each graph edge is drawn as the point (min, max) of its
endpoints' preorder positions. A static two-level range structure (an
x-segment tree whose nodes hold their edges sorted by y) then answers
"total value of the edges in this cut" and "strongest coefficient in
this cut" in polylogarithmic time, and lets the inner solver loop push
batch increments to edges through per-level difference arrays instead
of materializing any cut's edge list.

All mutable per-edge quantities (weights, congestion) live in the shared
DualState; the oracle caches only per-level prefix sums derived from it
and rebuilds them lazily whenever the state changes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import HAS_NUMBA, rect_sums
from .graph import Graph
from .mwu import (
    BudgetExceeded,
    DualState,
    FocusResult,
    LemmaViolation,
    focus_iteration_cap,
)
from .packing import SpanningTree

TreeCut = tuple[int, ...]


def normalize_cut(s) -> TreeCut:
    """Canonical form of a tree cut: sorted tuple of 1 or 2 edge ids."""
    if isinstance(s, (int, np.integer)):
        ids: tuple[int, ...] = (int(s),)
    else:
        ids = tuple(sorted(int(e) for e in s))
    if len(ids) == 2 and ids[0] == ids[1]:
        raise ValueError("a two-edge tree cut needs distinct edges")
    if not 1 <= len(ids) <= 2:
        raise ValueError("a tree cut has one or two tree edges")
    return ids


# ---------------------------------------------------------------------------
# static geometry: the two-level range structure
# ---------------------------------------------------------------------------

class CanonicalStructure:
    """Edges as (x, y) points in preorder coordinates, indexed per level.

    Level l splits the position axis into 2^l aligned blocks; within a
    level the edges are sorted by (block, y), so any rectangle query
    becomes at most two contiguous index runs per level. A canonical set
    is one node of the implicit y-tree over such a run.
    """

    def __init__(self, g: Graph, tree: SpanningTree):
        self.g = g
        self.tree = tree
        self.n = g.n
        self.m = g.m
        tin = tree.tin
        px = tin[g.src]
        py = tin[g.dst]
        self.x = np.minimum(px, py).astype(np.int64)
        self.y = np.maximum(px, py).astype(np.int64)
        self.depth = max(1, math.ceil(math.log2(self.n)))
        self.width = 1 << self.depth
        self.order: list[np.ndarray] = []
        self.pos: list[np.ndarray] = []
        self.keys: list[np.ndarray] = []
        for level in range(self.depth + 1):
            block = self.x >> (self.depth - level)
            key = (block << 32) | self.y
            order = np.argsort(key, kind="stable")
            pos = np.empty(self.m, dtype=np.int64)
            pos[order] = np.arange(self.m)
            self.order.append(order)
            self.pos.append(pos)
            self.keys.append(key[order])

    @property
    def levels(self) -> int:
        return self.depth + 1

    def cover(self, x1: np.ndarray, x2: np.ndarray,
              y1: np.ndarray, y2: np.ndarray, qid: np.ndarray,
              ) -> "RectRuns":
        """Decompose rectangles into per-level index runs.

        Returns, for each level, (query id, run start, run end) arrays;
        [start, end) indexes that level's y-ordered edge array. Runs of
        one query are pairwise disjoint and exactly cover its points.
        Degenerate rectangles are skipped.
        """
        keep = (np.asarray(x1) < np.asarray(x2)) \
            & (np.asarray(y1) < np.asarray(y2))
        lo = np.asarray(x1, dtype=np.int64)[keep] + self.width
        hi = np.asarray(x2, dtype=np.int64)[keep] + self.width
        ylo = np.asarray(y1, dtype=np.int64)[keep]
        yhi = np.asarray(y2, dtype=np.int64)[keep]
        qs = np.asarray(qid, dtype=np.int64)[keep]
        picked: list[list[tuple[np.ndarray, np.ndarray, np.ndarray,
                                np.ndarray]]] = \
            [[] for _ in range(self.levels)]
        for step in range(self.depth + 1):
            level = self.depth - step
            act = lo < hi
            if not np.any(act):
                break
            take = act & ((lo & 1) == 1)
            if np.any(take):
                picked[level].append(
                    (qs[take], lo[take], ylo[take], yhi[take]))
                lo = lo + take
            take = (lo < hi) & ((hi & 1) == 1)
            if np.any(take):
                hi = hi - take
                picked[level].append(
                    (qs[take], hi[take], ylo[take], yhi[take]))
            lo >>= 1
            hi >>= 1
        out = []
        empty = np.empty(0, dtype=np.int64)
        for level in range(self.levels):
            if picked[level]:
                q = np.concatenate([p[0] for p in picked[level]])
                node = np.concatenate([p[1] for p in picked[level]])
                qy1 = np.concatenate([p[2] for p in picked[level]])
                qy2 = np.concatenate([p[3] for p in picked[level]])
                idx = node - (1 << level)
                a = np.searchsorted(self.keys[level], (idx << 32) | qy1)
                b = np.searchsorted(self.keys[level], (idx << 32) | qy2)
                out.append((q, a, b))
            else:
                out.append((empty, empty, empty))
        return out


RectRuns = list[tuple[np.ndarray, np.ndarray, np.ndarray]]


def _run_sums(runs: RectRuns, prefixes: list[np.ndarray],
              nq: int) -> np.ndarray:
    out = np.zeros(nq, dtype=np.float64)
    for level, (q, a, b) in enumerate(runs):
        if len(q):
            p = prefixes[level]
            np.add.at(out, q, p[b] - p[a])
    return out


def _build_max_trees(struct: CanonicalStructure,
                     vals: np.ndarray) -> tuple[list[np.ndarray], int]:
    """Per-level binary max trees over vals in level order (0 padding)."""
    cap = 1
    while cap < max(struct.m, 1):
        cap <<= 1
    trees = []
    for level in range(struct.levels):
        tree = np.zeros(2 * cap, dtype=np.float64)
        tree[cap:cap + struct.m] = vals[struct.order[level]]
        size = cap
        while size > 1:
            half = size >> 1
            tree[half:size] = np.maximum(tree[size:2 * size:2],
                                         tree[size + 1:2 * size:2])
            size = half
        trees.append(tree)
    return trees, cap


def _range_max(tree: np.ndarray, cap: int, a: np.ndarray,
               b: np.ndarray) -> np.ndarray:
    res = np.zeros(len(a), dtype=np.float64)
    lo = a + cap
    hi = b + cap
    while np.any(lo < hi):
        act = lo < hi
        take = act & ((lo & 1) == 1)
        if np.any(take):
            res[take] = np.maximum(res[take], tree[lo[take]])
            lo = lo + take
        take = (lo < hi) & ((hi & 1) == 1)
        if np.any(take):
            hi = hi - take
            res[take] = np.maximum(res[take], tree[hi[take]])
        lo >>= 1
        hi >>= 1
    return res


# ---------------------------------------------------------------------------
# the oracle
# ---------------------------------------------------------------------------

@dataclass
class AugmentedBatch:
    """Batch columns wired to their per-level index runs."""

    cuts: list[TreeCut]
    runs: RectRuns
    ncols: int

    def column_degrees(self) -> np.ndarray:
        deg = np.zeros(self.ncols, dtype=np.int64)
        for q, a, b in self.runs:
            if len(q):
                np.add.at(deg, q, np.int64(1))
        return deg


class CutOracle:
    """Cut values, decompositions, and the batched inner loop for one tree.

    Weight state is shared through a DualState; per-level prefix caches
    are rebuilt lazily after every mutation. In free mode (free_k set)
    the oracle additionally tracks per-edge truncated values min(v, rho)
    and heavy counts, where rho is the current truncation threshold.
    """

    def __init__(self, g: Graph, tree: SpanningTree, state: DualState,
                 *, free_k: int | None = None):
        if state.m != g.m:
            raise ValueError("state does not match the graph")
        self.g = g
        self.tree = tree
        self.state = state
        self.free_k = free_k
        self.struct = CanonicalStructure(g, tree)
        self.edge_pos = np.full(g.m, -1, dtype=np.int64)
        self.edge_pos[tree.edge_ids] = np.arange(g.n - 1)
        self.int_lo = tree.tin[tree.lower].astype(np.int64)
        self.int_hi = tree.tout[tree.lower].astype(np.int64)
        self._rho: float | None = None
        self._dirty = True
        self._prefix_v: list[np.ndarray] = []
        self._prefix_t: list[np.ndarray] = []
        self._prefix_hc: list[np.ndarray] = []
        # static buffers for the compiled scan kernel
        self._keys_flat = np.concatenate(self.struct.keys)
        self._koff = np.arange(self.struct.levels + 1, dtype=np.int64) * g.m
        self._poff = np.arange(self.struct.levels + 1,
                               dtype=np.int64) * (g.m + 1)
        self._scan_cache: dict = {}

    # -- cache management ----------------------------------------------------

    def set_rho(self, rho: float | None) -> None:
        if rho == self._rho:
            return
        self._rho = rho
        self._dirty = True

    @property
    def rho(self) -> float | None:
        return self._rho

    def mark_dirty(self) -> None:
        self._dirty = True

    def _ensure(self) -> None:
        if not self._dirty:
            return
        v = self.state.v
        self._prefix_v = []
        self._prefix_t = []
        self._prefix_hc = []
        if self._rho is not None:
            t = np.minimum(v, self._rho)
            hc = (v >= self._rho).astype(np.float64)
        for level in range(self.struct.levels):
            order = self.struct.order[level]
            self._prefix_v.append(np.concatenate(
                ([0.0], np.cumsum(v[order]))))
            if self._rho is not None:
                self._prefix_t.append(np.concatenate(
                    ([0.0], np.cumsum(t[order]))))
                self._prefix_hc.append(np.concatenate(
                    ([0.0], np.cumsum(hc[order]))))
        self._scan_cache.clear()
        self._dirty = False

    def _value_prefixes(self, trunc: bool) -> list[np.ndarray]:
        if trunc and self._rho is None:
            raise ValueError("truncated values need rho set")
        self._ensure()
        return self._prefix_t if trunc else self._prefix_v

    # -- cut geometry ----------------------------------------------------------

    def _position(self, edge_id: int) -> int:
        p = int(self.edge_pos[edge_id])
        if p < 0:
            raise ValueError(f"edge {edge_id} is not a tree edge")
        return p

    def cut_side_intervals(self, s: TreeCut) -> list[tuple[int, int]]:
        """The cut's vertex side as 1 or 2 disjoint preorder intervals."""
        s = normalize_cut(s)
        if len(s) == 1:
            p = self._position(s[0])
            return [(int(self.int_lo[p]), int(self.int_hi[p]))]
        pi, pj = (self._position(e) for e in s)
        a1, b1 = int(self.int_lo[pi]), int(self.int_hi[pi])
        a2, b2 = int(self.int_lo[pj]), int(self.int_hi[pj])
        if a1 <= a2 and b2 <= b1:      # second nested in first
            parts = [(a1, a2), (b2, b1)]
        elif a2 <= a1 and b1 <= b2:    # first nested in second
            parts = [(a2, a1), (b1, b2)]
        else:                          # disjoint subtrees
            parts = sorted([(a1, b1), (a2, b2)])
        return [(a, b) for a, b in parts if a < b]

    def _cut_rects(self, cuts: list[TreeCut]
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray,
                              np.ndarray, np.ndarray]:
        """Rectangles (x1, x2, y1, y2, query id) covering each cut's edges.

        The cut side is a union of at most two intervals; the crossing
        edges are the points with exactly one coordinate inside, which
        is the union over pairs (piece inside, gap outside) of ordered
        rectangles. At most six per cut, pairwise disjoint.
        """
        xs1, xs2, ys1, ys2, qid = [], [], [], [], []
        n = self.struct.n
        for q, s in enumerate(cuts):
            inside = self.cut_side_intervals(s)
            outside = []
            prev = 0
            for a, b in inside:
                if prev < a:
                    outside.append((prev, a))
                prev = b
            if prev < n:
                outside.append((prev, n))
            for a, b in inside:
                for c, d in outside:
                    if b <= c:
                        x1, x2, y1, y2 = a, b, c, d
                    else:
                        x1, x2, y1, y2 = c, d, a, b
                    xs1.append(x1)
                    xs2.append(x2)
                    ys1.append(y1)
                    ys2.append(y2)
                    qid.append(q)
        return (np.asarray(xs1, dtype=np.int64),
                np.asarray(xs2, dtype=np.int64),
                np.asarray(ys1, dtype=np.int64),
                np.asarray(ys2, dtype=np.int64),
                np.asarray(qid, dtype=np.int64))

    def _cover_cuts(self, cuts: list[TreeCut]) -> RectRuns:
        return self.struct.cover(*self._cut_rects(cuts))

    # -- canonical sets (structural interface, used by audits) ----------------

    def decompose(self, s: TreeCut) -> list[tuple[int, int, int]]:
        """Disjoint canonical sets covering exactly the cut's edge set.

        A canonical set id is (level, block, y-node): one node of the
        implicit binary tree over the block's y-sorted edge run.
        """
        out = []
        for level, (q, a, b) in enumerate(
                self._cover_cuts([normalize_cut(s)])):
            for start, end in zip(a, b):
                if start == end:
                    continue
                block = int(self.struct.keys[level][start] >> 32)
                s_lo, s_hi = self._block_span(level, block)
                cap = 1
                while cap < max(s_hi - s_lo, 1):
                    cap <<= 1
                lo = int(start - s_lo) + cap
                hi = int(end - s_lo) + cap
                while lo < hi:
                    if lo & 1:
                        out.append((level, block, lo))
                        lo += 1
                    if hi & 1:
                        hi -= 1
                        out.append((level, block, hi))
                    lo >>= 1
                    hi >>= 1
        return out

    def _block_span(self, level: int, block: int) -> tuple[int, int]:
        keys = self.struct.keys[level]
        lo = int(np.searchsorted(keys, np.int64(block) << 32))
        hi = int(np.searchsorted(keys, np.int64(block + 1) << 32))
        return lo, hi

    def canonical_edges(self, cid: tuple[int, int, int]) -> np.ndarray:
        """Graph edge ids stored at one canonical set."""
        level, block, ynode = cid
        s_lo, s_hi = self._block_span(level, block)
        cap = 1
        while cap < max(s_hi - s_lo, 1):
            cap <<= 1
        d = ynode.bit_length() - 1
        span = cap >> d
        off = (ynode - (1 << d)) * span
        lo = s_lo + off
        hi = min(s_lo + off + span, s_hi)
        return self.struct.order[level][lo:max(hi, lo)]

    def edge_membership_count(self, edge_id: int) -> int:
        """How many canonical sets contain the edge."""
        total = 0
        for level in range(self.struct.levels):
            block = int(self.struct.x[edge_id]) >> (self.struct.depth - level)
            s_lo, s_hi = self._block_span(level, block)
            cap = 1
            while cap < max(s_hi - s_lo, 1):
                cap <<= 1
            total += cap.bit_length()  # root-to-leaf path in the y-tree
        return total

    def membership_bound(self) -> float:
        lg = math.log2(self.struct.n)
        return 4.0 * lg * lg + 8.0

    # -- value queries ---------------------------------------------------------

    def cut_values(self, cuts: list[TreeCut], *,
                   trunc: bool = False) -> np.ndarray:
        pref = self._value_prefixes(trunc)
        runs = self._cover_cuts([normalize_cut(s) for s in cuts])
        return _run_sums(runs, pref, len(cuts))

    def cut_value(self, s: TreeCut) -> float:
        return float(self.cut_values([s])[0])

    def heavy_counts(self, cuts: list[TreeCut]) -> np.ndarray:
        if self._rho is None:
            raise ValueError("heavy counts need rho set")
        self._ensure()
        runs = self._cover_cuts([normalize_cut(s) for s in cuts])
        return _run_sums(runs, self._prefix_hc, len(cuts))

    def _single_runs(self, pos: np.ndarray) -> RectRuns:
        nq = len(pos)
        lo = self.int_lo[pos]
        hi = self.int_hi[pos]
        n = self.struct.n
        x1 = np.concatenate([np.zeros(nq, dtype=np.int64), lo])
        x2 = np.concatenate([lo, hi])
        y1 = np.concatenate([lo, hi])
        y2 = np.concatenate([hi, np.full(nq, n, dtype=np.int64)])
        qid = np.concatenate([np.arange(nq), np.arange(nq)])
        return self.struct.cover(x1, x2, y1, y2, qid)

    def single_cut_values(self, positions: np.ndarray | None = None, *,
                          trunc: bool = False) -> np.ndarray:
        """Values of one-edge tree cuts by tree position, batched.

        Default: all n-1 of them.
        """
        pref = self._value_prefixes(trunc)
        if positions is None:
            positions = np.arange(self.g.n - 1)
        pos = np.asarray(positions, dtype=np.int64)
        return _run_sums(self._single_runs(pos), pref, len(pos))

    def single_heavy_counts(self, positions: np.ndarray | None = None
                            ) -> np.ndarray:
        if self._rho is None:
            raise ValueError("heavy counts need rho set")
        self._ensure()
        if positions is None:
            positions = np.arange(self.g.n - 1)
        pos = np.asarray(positions, dtype=np.int64)
        return _run_sums(self._single_runs(pos), self._prefix_hc, len(pos))

    def _pair_overlap_rects(self, pa: np.ndarray, pb: np.ndarray
                            ) -> tuple[np.ndarray, ...]:
        """Rectangles whose total is the pair correction term.

        value(pair) = value(a) + value(b) - 2 * correction, where the
        correction counts edges between the two subtrees when they are
        disjoint and edges between the inner subtree and the complement
        of the outer one when nested.
        """
        a1, b1 = self.int_lo[pa], self.int_hi[pa]
        a2, b2 = self.int_lo[pb], self.int_hi[pb]
        n = self.struct.n
        nq = len(pa)
        first_inner = (a2 <= a1) & (b1 <= b2)
        second_inner = (a1 <= a2) & (b2 <= b1)
        nested = first_inner | second_inner
        inner_lo = np.where(first_inner, a1, a2)
        inner_hi = np.where(first_inner, b1, b2)
        outer_lo = np.where(first_inner, a2, a1)
        outer_hi = np.where(first_inner, b2, b1)
        zeros = np.zeros(nq, dtype=np.int64)
        # nested: inner subtree vs the prefix before the outer subtree,
        # then inner subtree vs the suffix after it
        r1 = (zeros, np.where(nested, outer_lo, 0), inner_lo, inner_hi)
        r2 = (inner_lo, np.where(nested, inner_hi, 0),
              np.where(nested, outer_hi, 0),
              np.where(nested, np.int64(n), 0))
        # disjoint: earlier subtree vs later subtree
        first_earlier = a1 < a2
        e_lo = np.where(first_earlier, a1, a2)
        e_hi = np.where(first_earlier, b1, b2)
        l_lo = np.where(first_earlier, a2, a1)
        l_hi = np.where(first_earlier, b2, b1)
        r3 = (e_lo, np.where(nested, 0, e_hi), l_lo, l_hi)
        qid = np.arange(nq, dtype=np.int64)
        return (np.concatenate([r1[0], r2[0], r3[0]]),
                np.concatenate([r1[1], r2[1], r3[1]]),
                np.concatenate([r1[2], r2[2], r3[2]]),
                np.concatenate([r1[3], r2[3], r3[3]]),
                np.concatenate([qid, qid, qid]))

    def pair_cut_values(self, pos_a: np.ndarray, pos_b: np.ndarray, *,
                        trunc: bool = False) -> np.ndarray:
        """Values of two-edge tree cuts by tree positions, batched."""
        pref = self._value_prefixes(trunc)
        pa = np.asarray(pos_a, dtype=np.int64)
        pb = np.asarray(pos_b, dtype=np.int64)
        both = np.concatenate([pa, pb])
        singles = _run_sums(self._single_runs(both), pref, len(both))
        runs = self.struct.cover(*self._pair_overlap_rects(pa, pb))
        correction = _run_sums(runs, pref, len(pa))
        return singles[:len(pa)] + singles[len(pa):] - 2.0 * correction

    def pair_heavy_counts(self, pos_a: np.ndarray,
                          pos_b: np.ndarray) -> np.ndarray:
        if self._rho is None:
            raise ValueError("heavy counts need rho set")
        self._ensure()
        pa = np.asarray(pos_a, dtype=np.int64)
        pb = np.asarray(pos_b, dtype=np.int64)
        both = np.concatenate([pa, pb])
        singles = _run_sums(self._single_runs(both), self._prefix_hc,
                            len(both))
        runs = self.struct.cover(*self._pair_overlap_rects(pa, pb))
        correction = _run_sums(runs, self._prefix_hc, len(pa))
        return singles[:len(pa)] + singles[len(pa):] - 2.0 * correction

    def range_weight(self, interval_a: tuple[int, int],
                     interval_b: tuple[int, int], *,
                     trunc: bool = False) -> float:
        """Total value of edges between two preorder intervals.

        Equal intervals return the internal weight (both endpoints
        inside). Nested intervals count edges between the inner interval
        and the rest of the outer one. Disjoint intervals count the
        edges with one endpoint in each.
        """
        pref = self._value_prefixes(trunc)
        (a1, b1), (a2, b2) = interval_a, interval_b
        if (a1, b1) == (a2, b2):
            rects = [(a1, b1, a1, b1)]
        elif a2 <= a1 and b1 <= b2:  # first nested in second: swap roles
            rects = [(a2, a1, a1, b1), (a1, b1, b1, b2)]
        elif a1 <= a2 and b2 <= b1:  # second nested in first
            rects = [(a1, a2, a2, b2), (a2, b2, b2, b1)]
        elif b1 <= a2:
            rects = [(a1, b1, a2, b2)]
        elif b2 <= a1:
            rects = [(a2, b2, a1, b1)]
        else:
            raise ValueError("intervals must be nested or disjoint")
        rects = [(x1, x2, y1, y2) for x1, x2, y1, y2 in rects
                 if x1 < x2 and y1 < y2]
        if not rects:
            return 0.0
        arr = np.asarray(rects, dtype=np.int64)
        runs = self.struct.cover(arr[:, 0], arr[:, 1], arr[:, 2],
                                 arr[:, 3],
                                 np.zeros(len(rects), dtype=np.int64))
        return float(_run_sums(runs, pref, 1)[0])

    # -- scan routes -----------------------------------------------------------
    #
    # Batched read-only sums for the ordering, pruning, and interest
    # machinery. They go through a compiled per-query walk when
    # available, which sums in a different float order than the exact
    # cut-value route above; callers treat the results as scan-grade
    # (they decide what to look at) and re-evaluate anything that must
    # match the focus loop bit for bit through cut_values.

    def _prefix_group(self, kind: str) -> list[np.ndarray]:
        self._ensure()
        group = {"v": self._prefix_v, "t": self._prefix_t,
                 "hc": self._prefix_hc}[kind]
        if not group:
            raise ValueError("truncated scans need rho set")
        return group

    def _flat_prefix(self, kind: str) -> np.ndarray:
        group = self._prefix_group(kind)  # rebuilds caches when stale
        arr = self._scan_cache.get(("flat", kind))
        if arr is None:
            arr = np.concatenate(group)
            self._scan_cache[("flat", kind)] = arr
        return arr

    def _rect_sums_scan(self, x1, x2, y1, y2, kind: str) -> np.ndarray:
        x1 = np.ascontiguousarray(x1, dtype=np.int64)
        x2 = np.ascontiguousarray(x2, dtype=np.int64)
        y1 = np.ascontiguousarray(y1, dtype=np.int64)
        y2 = np.ascontiguousarray(y2, dtype=np.int64)
        if HAS_NUMBA:
            pref = self._flat_prefix(kind)
            return rect_sums(x1, x2, y1, y2, self._keys_flat, self._koff,
                             pref, self._poff, self.struct.depth,
                             self.struct.width)
        pref = self._prefix_group(kind)
        runs = self.struct.cover(x1, x2, y1, y2,
                                 np.arange(len(x1), dtype=np.int64))
        return _run_sums(runs, pref, len(x1))

    def interval_weights(self, a_lo, a_hi, b_lo, b_hi, *,
                         trunc: bool = False) -> np.ndarray:
        """Totals of edges joining two disjoint preorder intervals, batched.

        Interval pairs may come in either order; empty intervals
        contribute nothing; overlapping pairs are rejected.
        """
        alo = np.asarray(a_lo, dtype=np.int64)
        ahi = np.asarray(a_hi, dtype=np.int64)
        blo = np.asarray(b_lo, dtype=np.int64)
        bhi = np.asarray(b_hi, dtype=np.int64)
        swap = blo < alo
        x1 = np.where(swap, blo, alo)
        x2 = np.where(swap, bhi, ahi)
        y1 = np.where(swap, alo, blo)
        y2 = np.where(swap, ahi, bhi)
        live = (x1 < x2) & (y1 < y2)
        if np.any(live & (x2 > y1)):
            raise ValueError("interval pairs must be disjoint")
        return self._rect_sums_scan(x1, x2, y1, y2, "t" if trunc else "v")

    def cached_single_values(self, *, trunc: bool = False) -> np.ndarray:
        """All one-edge cut values by tree position, cached per rebuild."""
        kind = "t" if trunc else "v"
        self._ensure()
        arr = self._scan_cache.get(("singles", kind))
        if arr is None:
            arr = self.single_cut_values(trunc=trunc)
            self._scan_cache[("singles", kind)] = arr
        return arr

    def cached_single_heavy(self) -> np.ndarray:
        self._ensure()
        arr = self._scan_cache.get(("singles", "hc"))
        if arr is None:
            arr = self.single_heavy_counts()
            self._scan_cache[("singles", "hc")] = arr
        return arr

    def _pair_scan_correction(self, pa: np.ndarray, pb: np.ndarray,
                              kind: str) -> np.ndarray:
        a1, b1 = self.int_lo[pa], self.int_hi[pa]
        a2, b2 = self.int_lo[pb], self.int_hi[pb]
        first_inner = (a2 <= a1) & (b1 <= b2)
        second_inner = (a1 <= a2) & (b2 <= b1)
        nested = first_inner | second_inner
        inner_lo = np.where(first_inner, a1, a2)
        inner_hi = np.where(first_inner, b1, b2)
        outer_lo = np.where(first_inner, a2, a1)
        outer_hi = np.where(first_inner, b2, b1)
        first_earlier = a1 < a2
        e_lo = np.where(first_earlier, a1, a2)
        e_hi = np.where(first_earlier, b1, b2)
        l_lo = np.where(first_earlier, a2, a1)
        l_hi = np.where(first_earlier, b2, b1)
        zeros = np.zeros(len(pa), dtype=np.int64)
        n = np.int64(self.struct.n)
        corr = self._rect_sums_scan(np.where(nested, zeros, e_lo),
                                    np.where(nested, outer_lo, e_hi),
                                    np.where(nested, inner_lo, l_lo),
                                    np.where(nested, inner_hi, l_hi), kind)
        corr += self._rect_sums_scan(np.where(nested, inner_lo, zeros),
                                     np.where(nested, inner_hi, zeros),
                                     np.where(nested, outer_hi, zeros),
                                     np.where(nested, n, zeros), kind)
        return corr

    def pair_values_scan(self, pos_a, pos_b, *,
                         trunc: bool = False) -> np.ndarray:
        """Two-edge cut values for ordering scans.

        Cached single values plus a two-rectangle correction per pair:
        for disjoint subtrees the edges between them, for nested ones
        the edges from the inner subtree past the outer boundary.
        """
        kind = "t" if trunc else "v"
        s = self.cached_single_values(trunc=trunc)
        pa = np.asarray(pos_a, dtype=np.int64)
        pb = np.asarray(pos_b, dtype=np.int64)
        return s[pa] + s[pb] - 2.0 * self._pair_scan_correction(pa, pb, kind)

    def pair_heavy_scan(self, pos_a, pos_b) -> np.ndarray:
        """Heavy-member counts of two-edge cuts, scan route."""
        s = self.cached_single_heavy()
        pa = np.asarray(pos_a, dtype=np.int64)
        pb = np.asarray(pos_b, dtype=np.int64)
        return s[pa] + s[pb] - 2.0 * self._pair_scan_correction(pa, pb, "hc")

    # -- batches and the inner loop --------------------------------------------

    def augment(self, batch) -> AugmentedBatch:
        """Wire a batch of tree cuts to their per-level index runs.

        Duplicates are removed; first occurrence order is kept.
        """
        seen: dict[TreeCut, None] = {}
        for s in batch:
            seen.setdefault(normalize_cut(s))
        cuts = list(seen.keys())
        return AugmentedBatch(cuts=cuts, runs=self._cover_cuts(cuts),
                              ncols=len(cuts))

    def _column_max(self, aug: AugmentedBatch,
                    per_edge: np.ndarray) -> np.ndarray:
        trees, cap = _build_max_trees(self.struct, per_edge)
        out = np.zeros(aug.ncols, dtype=np.float64)
        for level, (q, a, b) in enumerate(aug.runs):
            if len(q):
                np.maximum.at(out, q, _range_max(trees[level], cap, a, b))
        return out

    def _pull(self, aug: AugmentedBatch, push: np.ndarray) -> np.ndarray:
        """Per-edge total of the pushed column mass (the transpose map)."""
        pulled = np.zeros(self.struct.m, dtype=np.float64)
        for level, (q, a, b) in enumerate(aug.runs):
            diff = np.zeros(self.struct.m + 1, dtype=np.float64)
            if len(q):
                np.add.at(diff, a, push[q])
                np.add.at(diff, b, -push[q])
            pulled += np.cumsum(diff[:-1])[self.struct.pos[level]]
        return pulled

    def fast_focus(self, batch, eps: float, cong_cap: float, *,
                   budget_iters: int | None = None,
                   check_lemmas: bool = True) -> FocusResult:
        """Inner solver loop on a batch of tree cuts, via the structure.

        Mirrors the explicit-matrix loop operation for operation: same
        step sizes, same update order, same drop rule; only the sums go
        through the range structure. Mutates the shared state. An empty
        batch is a no-op.
        """
        state = self.state
        aug = batch if isinstance(batch, AugmentedBatch) \
            else self.augment(batch)
        ncols = aug.ncols
        if ncols == 0:
            return FocusResult(x=np.zeros(0), iterations=0,
                               dropped=np.zeros(0, dtype=bool),
                               completed=True, last_delta=0.0)
        # at k = 1 the free rules collapse to the plain ones exactly
        # (alive columns are all light, residual demand is always 1);
        # run the plain path so the collapse holds bit for bit
        free_k = None if self.free_k == 1 else self.free_k
        lam = state.lam
        state.focus_calls += 1
        state.max_batch = max(state.max_batch, ncols)

        def thresholds() -> tuple[float, float | None]:
            if free_k is None:
                return (1.0 + eps) * lam, None
            r = (1.0 + eps) * lam
            return free_k * r, r

        threshold, rho = thresholds()
        if free_k is not None:
            self.set_rho(rho)

        def column_values() -> np.ndarray:
            pref = self._value_prefixes(free_k is not None)
            return _run_sums(aug.runs, pref, ncols)

        def column_heavy() -> np.ndarray:
            self._ensure()
            return _run_sums(aug.runs, self._prefix_hc, ncols)

        entry_vals = column_values()
        if not np.all(entry_vals < threshold):
            raise AssertionError("focus entered with a column already covered")

        alive = np.ones(ncols, dtype=bool)
        x = np.zeros(ncols)

        # first-iteration step: eps / (|B| * max column coefficient)
        if free_k is None:
            col_max_coef = self._column_max(aug, state.v0)
        else:
            light = state.v < rho
            resid = free_k - column_heavy()
            if np.any(resid < 1):
                raise AssertionError(
                    "column with k or more heavy members entered focus")
            col_max = self._column_max(aug, np.where(light, state.v0, 0.0))
            if np.any(col_max <= 0.0):
                raise AssertionError(
                    "column with no light member entered focus")
            col_max_coef = col_max / resid
        g = eps / (ncols * col_max_coef)

        iterations = 0
        delta = 0.0
        while True:
            # apply the step g on the currently alive columns
            x[alive] += g
            push = np.zeros(ncols)
            if free_k is None:
                push[alive] = g
                ag = state.v0 * self._pull(aug, push)
            else:
                light = state.v < rho
                resid = free_k - column_heavy()[alive]
                push[alive] = g / resid
                ag = np.where(light, state.v0 * self._pull(aug, push), 0.0)
            sum_w_before = state.sum_w()
            state.w *= 1.0 + ag
            state.cong += ag
            state.cong_lb += (1.0 - eps) * ag
            state.ub_exp += (1.0 + eps) * lam * float(np.sum(g)) \
                / sum_w_before
            state.sum_g += float(np.sum(g))
            state.iterations += 1
            iterations += 1
            self.mark_dirty()
            if budget_iters is not None and state.iterations > budget_iters:
                raise BudgetExceeded(
                    f"iteration budget {budget_iters} exhausted")
            if state.rescale_if_needed():
                lam = state.lam
                threshold, rho = thresholds()
                if free_k is not None:
                    self.set_rho(rho)
            if check_lemmas:
                state.check_weight_lemmas()

            # drop covered columns (exact float comparison, strict < survives)
            vals_alive = column_values()[alive]
            still = vals_alive < threshold
            if free_k is not None:
                # k heavy members force the truncated value to k * rho
                # exactly; drop even if prefix rounding says an ulp less
                still &= column_heavy()[alive] < free_k
            alive[np.flatnonzero(alive)[~still]] = False
            if not np.any(alive):
                completed = True
                break
            if state.cong_max() >= cong_cap:
                completed = False
                break

            # next step is proportional to the surviving accumulated mass
            push = np.zeros(ncols)
            if free_k is None:
                push[alive] = x[alive]
                ax = state.v0 * self._pull(aug, push)
            else:
                light = state.v < rho
                resid = free_k - column_heavy()[alive]
                push[alive] = x[alive] / resid
                ax = np.where(light, state.v0 * self._pull(aug, push), 0.0)
            ax_max = float(np.max(ax))
            assert ax_max > 0.0
            delta = eps / ax_max
            g = delta * x[alive]

        state.last_delta = delta
        if check_lemmas and iterations > focus_iteration_cap(
                self.struct.m, eps, ncols) + 1:
            raise LemmaViolation(
                f"focus used {iterations} iterations, above its cap "
                f"{focus_iteration_cap(self.struct.m, eps, ncols)}")
        return FocusResult(x=x, iterations=iterations, dropped=~alive,
                           completed=completed, last_delta=delta)
