"""Small-cut extraction on path minors of a spanning tree.

A path minor is a run of tree edges forming a path, read left to right,
with a root vertex splitting it into a left and a right arm. Cuts that
pick one edge from each arm form a matrix of cut values; the minimum of
each column moves monotonically as the column moves outward, which lets
a divide-and-conquer scan find every small cross cut with a number of
value queries near-linear in the path length instead of quadratic.

The focus drivers below split a path recursively at its midpoint, handle
short pieces exhaustively, and work level by level from the deepest
pieces upward so that by the time a piece is processed, every small cut
strictly inside one of its halves has already been raised above the
threshold. That ordering is what makes the monotone scan complete.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from .mwu import FocusResult
from .oracle import CutOracle, TreeCut


@dataclass(frozen=True)
class PathMinor:
    """Consecutive tree edges forming a path, as tree edge positions.

    ``positions[i]`` and ``positions[i+1]`` must share a vertex; the
    drivers never verify adjacency, they only rely on the cut values.
    """

    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions",
                           np.asarray(self.positions, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.positions.size)


@dataclass(frozen=True)
class ColumnMinima:
    """Per-column argmin rows of the cross-cut value matrix.

    Rows and columns are tree positions counted outward from the root
    vertex. ``istar[j]`` is the row index minimizing the value of the
    cut {rows[i], cols[j]}, ties broken toward the largest row index;
    the sequence is nondecreasing in j.
    """

    rows: np.ndarray
    cols: np.ndarray
    istar: np.ndarray
    queries: int


@dataclass(frozen=True)
class ExtractionStats:
    """Counters from one small-cut extraction."""

    queries: int
    candidates: int
    extracted: int


@dataclass(frozen=True)
class PathFocusReport:
    """Outcome of a path-focusing pass."""

    completed: bool
    iterations: int
    focus_calls: int
    extracted: int


def query_budget(path_edges: int) -> float:
    """Value-query allowance for one extraction on a path minor."""
    return 4.0 * path_edges * math.log2(max(path_edges, 2)) + 16.0


def candidate_budget(path_edges: int) -> int:
    """Size allowance for one extraction's candidate set."""
    return 4 * (path_edges + 2)


def _effective_k(oracle: CutOracle) -> int | None:
    """Demand when truncation changes anything, else None (plain rules)."""
    k = oracle.free_k
    return None if k is None or k == 1 else k


def _smallness_threshold(oracle: CutOracle, eps: float) -> float:
    """Strict upper bound a cut must beat to enter a focus batch.

    Matches the focus entry check bit for bit: plain columns compare
    their value against (1+eps)*lam, truncating columns compare the
    truncated value against k*(1+eps)*lam with the truncation level set
    to (1+eps)*lam.
    """
    k = _effective_k(oracle)
    r = (1.0 + eps) * oracle.state.lam
    if k is None:
        return r
    oracle.set_rho(r)
    return k * r


def _filter_small(oracle: CutOracle, cuts: list[TreeCut],
                  eps: float) -> list[TreeCut]:
    """Keep the cuts a focus call would accept as uncovered columns."""
    if not cuts:
        return []
    k = _effective_k(oracle)
    threshold = _smallness_threshold(oracle, eps)
    vals = oracle.cut_values(cuts, trunc=k is not None)
    keep = vals < threshold
    if k is not None:
        # k heavy members make the truncated value exactly k*rho in
        # real arithmetic; treat such cuts as covered even when the
        # prefix rounding lands an ulp below the threshold
        keep &= oracle.heavy_counts(cuts) < k
    return [c for c, ok in zip(cuts, keep) if ok]


def _dac_scan(oracle: CutOracle,
              tasks: list[tuple[np.ndarray, np.ndarray]],
              threshold: float | None = None
              ) -> tuple[list[np.ndarray], list[np.ndarray], list[int]]:
    """Column minima of the cross-cut matrices of several tasks at once.

    Returns per task the argmin row of every column (-1 on columns
    skipped by pruning), the minimum value of every column (+inf on
    skipped columns), and the number of value queries spent.

    The base scan is the divide-and-conquer over columns: solving the
    middle column of a segment pins the row windows of the columns on
    either side, because argmin rows move monotonically outward. On top
    of it, every segment after the leftmost column carries an anchor: a
    scanned column t to its left whose minimum bounds every entry to
    its right through value(i, j) >= min_t - single(t) + single(j),
    since moving a column outward sheds interaction weight at least as
    fast as it sheds subtree weight. When that bound clears the margin,
    no entry of the segment can matter to a caller hunting values below
    the threshold, and the segment is pruned unscanned. Only passing a
    threshold enables pruning; the margin of one part in 1e9 keeps
    columns whose two float routes straddle the threshold scanned.

    Values come from the fast summation route and only order the scan;
    callers re-check any candidate entry through the exact route.
    """
    trunc = _effective_k(oracle) is not None
    singles = oracle.cached_single_values(trunc=trunc)
    margin = None if threshold is None else threshold * (1.0 + 1e-9)
    istars = [np.full(len(cols), -1, dtype=np.int64) for _, cols in tasks]
    vmins = [np.full(len(cols), math.inf) for _, cols in tasks]
    queries = [0] * len(tasks)
    # segment: task, column span, row window, anchor bound base, anchored
    segs = [(t, 0, len(cols) - 1, 0, len(rows) - 1, -math.inf, False)
            for t, (rows, cols) in enumerate(tasks)
            if len(cols) > 0 and len(rows) > 0]
    while segs:
        rows_flat: list[np.ndarray] = []
        cols_flat: list[np.ndarray] = []
        meta: list[tuple[int, int, int, int, int, float, int, int]] = []
        for t, jlo, jhi, rlo, rhi, base, anchored in segs:
            rows_arr, cols_arr = tasks[t]
            if anchored and margin is not None:
                bound = base + float(np.min(singles[cols_arr[jlo:jhi + 1]]))
                if bound >= margin:
                    continue
            mid = (jlo + jhi) // 2 if anchored else jlo
            span = rows_arr[rlo:rhi + 1]
            rows_flat.append(span)
            cols_flat.append(np.full(span.size, cols_arr[mid],
                                     dtype=np.int64))
            meta.append((t, jlo, jhi, rlo, rhi, base, mid, span.size))
            queries[t] += span.size
        if not meta:
            break
        vals = oracle.pair_values_scan(np.concatenate(rows_flat),
                                       np.concatenate(cols_flat),
                                       trunc=trunc)
        nxt: list[tuple[int, int, int, int, int, float, bool]] = []
        off = 0
        for t, jlo, jhi, rlo, rhi, base, mid, size in meta:
            seg_vals = vals[off:off + size]
            off += size
            vmin = float(seg_vals.min())
            ties = np.flatnonzero(seg_vals == vmin)
            ist = rlo + int(ties[-1])
            istars[t][mid] = ist
            vmins[t][mid] = vmin
            anchor = max(base, vmin - float(singles[tasks[t][1][mid]]))
            if jlo <= mid - 1:
                nxt.append((t, jlo, mid - 1, rlo, ist, base, True))
            if mid + 1 <= jhi:
                nxt.append((t, mid + 1, jhi, ist, rhi, anchor, True))
        segs = nxt
    for istar in istars:
        seen = istar[istar >= 0]
        if np.any(np.diff(seen) < 0):
            raise AssertionError("column minima not nondecreasing")
    return istars, vmins, queries


def _staircase_entries(istar: np.ndarray, vmin: np.ndarray, nrows: int,
                       margin: float) -> list[tuple[int, int]]:
    """Candidate entries around the minima of the surviving columns.

    A column survives when its minimum falls below the margin; columns
    whose minimum is large cannot host a small entry and are dropped
    before the staircase is read off, so the row band of a surviving
    column runs between the argmins of its nearest surviving neighbors.
    Dropping first matters: a large column's argmin sits anywhere and
    must not be allowed to pinch the band of a small column next to it.
    The outermost bands extend to the first and last row. Band sizes
    telescope, so the total stays within the linear candidate budget.
    """
    surv = np.flatnonzero(vmin < margin)
    out: list[tuple[int, int]] = []
    for k, j in enumerate(surv):
        lo = int(istar[surv[k - 1]]) if k > 0 else 0
        hi = int(istar[surv[k + 1]]) if k + 1 < surv.size else nrows - 1
        out.extend((i, int(j)) for i in range(lo, hi + 1))
    return out


def column_minima(oracle: CutOracle, path: PathMinor,
                  root: int) -> ColumnMinima:
    """Argmin row of every column of the cross-cut matrix at ``root``.

    ``root`` is the vertex index along the path, so rows are the edges
    left of it counted outward and columns the edges right of it
    counted outward. Both arms must be nonempty.
    """
    length = len(path)
    if not 1 <= root <= length - 1:
        raise ValueError("path root must leave edges on both sides")
    rows = path.positions[:root][::-1]
    cols = path.positions[root:]
    istars, _, queries = _dac_scan(oracle, [(rows, cols)])
    istar = istars[0]
    assert np.all(istar >= 0)
    return ColumnMinima(rows=rows, cols=cols, istar=istar,
                        queries=queries[0])


def extract_cross_many(oracle: CutOracle,
                       tasks: list[tuple[np.ndarray, np.ndarray]],
                       eps: float,
                       ) -> tuple[list[TreeCut], list[ExtractionStats]]:
    """Small cross cuts of several row/column tasks, with counters.

    Each task is a (rows, cols) pair of tree-position arrays ordered
    outward from their meeting point. All tasks are scanned against a
    single smallness threshold taken from the oracle's current state.
    """
    if not tasks:
        return [], []
    threshold = _smallness_threshold(oracle, eps)
    istars, vmins, queries = _dac_scan(oracle, tasks, threshold)
    margin = threshold * (1.0 + 1e-9)
    edge_ids = oracle.tree.edge_ids
    all_cuts: list[TreeCut] = []
    spans: list[tuple[int, int]] = []
    for (rows, cols), istar, vmin in zip(tasks, istars, vmins):
        ent = _staircase_entries(istar, vmin, rows.size, margin)
        start = len(all_cuts)
        for i, j in ent:
            a = int(edge_ids[rows[i]])
            b = int(edge_ids[cols[j]])
            all_cuts.append((a, b) if a < b else (b, a))
        spans.append((start, len(all_cuts)))
    small = _filter_small(oracle, all_cuts, eps)
    small_set = set(small)
    stats: list[ExtractionStats] = []
    out: list[TreeCut] = []
    for (rows, cols), (start, stop), q in zip(tasks, spans, queries):
        mine = [c for c in all_cuts[start:stop] if c in small_set]
        out.extend(mine)
        ncand = stop - start
        edges = int(rows.size + cols.size)
        total_q = q + ncand
        if total_q > query_budget(edges):
            raise AssertionError("extraction exceeded its query budget")
        if ncand > candidate_budget(edges):
            raise AssertionError("extraction candidate set too large")
        stats.append(ExtractionStats(queries=total_q, candidates=ncand,
                                     extracted=len(mine)))
    return out, stats


def extract_cuts_in_path(oracle: CutOracle, path: PathMinor, root: int,
                         eps: float) -> tuple[list[TreeCut], ExtractionStats]:
    """Every small cut taking one edge from each arm of ``root``.

    Returns the cross cuts whose value is strictly below the focus
    threshold, provided no small cut lies within a single arm; without
    that guarantee the result is still a subset of the small cross
    cuts. Also works for two arms that meet at a junction rather than
    along one path: pass the arms via ``extract_cross``.
    """
    length = len(path)
    if not 1 <= root <= length - 1:
        raise ValueError("path root must leave edges on both sides")
    rows = path.positions[:root][::-1]
    cols = path.positions[root:]
    return extract_cross(oracle, rows, cols, eps)


def extract_cross(oracle: CutOracle, rows: np.ndarray, cols: np.ndarray,
                  eps: float) -> tuple[list[TreeCut], ExtractionStats]:
    """Small cuts pairing one row edge with one column edge.

    Rows and columns are tree positions ordered outward from their
    common vertex; they may come from two different descending chains.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.size == 0 or cols.size == 0:
        raise ValueError("both arms need at least one edge")
    cuts, stats = extract_cross_many(oracle, [(rows, cols)], eps)
    return cuts, stats[0]


def split_nodes(length: int) -> list[tuple[int, int, int]]:
    """Balanced midpoint-split tree over a run of ``length`` edges.

    Returns (depth, start, stop) nodes; pieces of at most three edges
    are leaves. A node splits after the edge just left of its middle,
    so both halves are nonempty and within one edge of balanced.
    """
    nodes: list[tuple[int, int, int]] = []
    stack = [(0, 0, length)]
    while stack:
        depth, a, b = stack.pop()
        nodes.append((depth, a, b))
        if b - a > 3:
            mid = (a + b - 1) // 2
            stack.append((depth + 1, a, mid + 1))
            stack.append((depth + 1, mid + 1, b))
    return nodes


def focus_multiple_paths(oracle: CutOracle, paths: list[PathMinor],
                         eps: float, cong_cap: float, *,
                         budget_iters: int | None = None,
                         check_lemmas: bool = True) -> PathFocusReport:
    """Raise every small two-edge cut within the given paths.

    Splits each path recursively at midpoints and walks the split trees
    of all paths in lockstep, deepest level first. Per level it gathers
    one batch: all pairs inside leaf pieces (three edges or fewer,
    checked exhaustively) plus the cross cuts of internal pieces found
    by the monotone scan, filtered to the small ones; one focus call
    then raises the whole level. Processing children before parents is
    what makes each scan complete, and weights only ever grow, so cuts
    raised at one level stay raised.

    Stops early and reports ``completed=False`` when a focus call ends
    on the congestion cap instead of clearing its batch.
    """
    by_depth: dict[int, list[tuple[np.ndarray, int, int]]] = {}
    for path in paths:
        if len(path) < 2:
            continue
        for depth, a, b in split_nodes(len(path)):
            by_depth.setdefault(depth, []).append((path.positions, a, b))
    iterations = 0
    focus_calls = 0
    extracted = 0
    for depth in sorted(by_depth, reverse=True):
        exhaustive: list[TreeCut] = []
        tasks: list[tuple[np.ndarray, np.ndarray]] = []
        edge_ids = oracle.tree.edge_ids
        for positions, a, b in by_depth[depth]:
            if b - a <= 3:
                ids = [int(edge_ids[p]) for p in positions[a:b]]
                exhaustive += [(x, y) if x < y else (y, x)
                               for i, x in enumerate(ids)
                               for y in ids[i + 1:]]
            else:
                mid = (a + b - 1) // 2
                tasks.append((positions[a:mid + 1][::-1],
                              positions[mid + 1:b]))
        batch = _filter_small(oracle, exhaustive, eps)
        cross, _ = extract_cross_many(oracle, tasks, eps)
        batch += cross
        if not batch:
            continue
        extracted += len(batch)
        res: FocusResult = oracle.fast_focus(batch, eps, cong_cap,
                                             budget_iters=budget_iters,
                                             check_lemmas=check_lemmas)
        iterations += res.iterations
        focus_calls += 1
        if not res.completed:
            return PathFocusReport(completed=False, iterations=iterations,
                                   focus_calls=focus_calls,
                                   extracted=extracted)
    return PathFocusReport(completed=True, iterations=iterations,
                           focus_calls=focus_calls, extracted=extracted)


def focus_path(oracle: CutOracle, path: PathMinor, eps: float,
               cong_cap: float, *, budget_iters: int | None = None,
               check_lemmas: bool = True) -> PathFocusReport:
    """Raise every small two-edge cut within one path."""
    return focus_multiple_paths(oracle, [path], eps, cong_cap,
                                budget_iters=budget_iters,
                                check_lemmas=check_lemmas)
