"""Tree-level focusing: clear every 1- and 2-edge tree cut per epoch.

Each solver epoch must raise every cut that crosses a sampled spanning
tree in one or two edges. Single edges and pairs along one descending
path are handled by the path machinery; the remaining geometry is pairs
whose edges sit on different paths. A deterministic heavy-path
decomposition splits the tree into descending chains, and batched
binary-search descents find, for every tree edge, the chains that can
hold its partner in a small two-edge cut. Those interested chain pairs
yield small row/column minors that the monotone scan machinery searches
at near-linear cost.

The same descents power an exact minimum over all 1- and 2-edge tree
cuts, which seeds the starting threshold and drives the Las Vegas epoch
verification. `held_karp` wires everything into the threshold-raising
solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .mwu import (BudgetExceeded, DualState, EpochReport, RESCALE_FACTOR,
                  SolveResult, SolverKnobs, extract_covering_solution,
                  run_solver, solve_single_edge)
from .oracle import CutOracle, TreeCut
from .packing import SpanningTree, TreePacking
from .packing import initial_lambda as packing_initial_lambda
from .packing import pack_trees
from .paths import (PathFocusReport, PathMinor, _dac_scan, _effective_k,
                    _filter_small, extract_cross_many, focus_multiple_paths,
                    split_nodes)
from .reference import InfeasibleError
from .rng import make_rng

# Interest registrations per edge follow one descending chain that meets
# at most ceil(log2 n) + 1 paths, so pair minors stay near-linear overall.
INTEREST_SIZE_FACTOR = 6.0

# Shave strict half-comparisons so borderline partners are kept; the
# extraction re-checks exact values, making over-inclusion harmless.
HALF_SLACK = 1e-9


# ---------------------------------------------------------------------------
# heavy-path decomposition


@dataclass(frozen=True)
class PathDecomposition:
    """Edge-disjoint descending paths covering a spanning tree.

    Every tree edge lies on exactly one path and each path runs strictly
    downward. Splitting follows the heaviest subtree at every vertex, so
    a root-to-leaf walk meets at most ceil(log2 n) + 1 paths: leaving a
    path means entering a subtree at most half its parent's size. Edges
    to lighter children head the path of their lower endpoint rather
    than standing alone, which keeps the path count at the leaf count.

    paths:    per path, tree edge positions top to bottom
    path_of:  tree position -> path id
    index_in: tree position -> index within its path
    start, flat: the same paths in concatenated (CSR) form
    """

    paths: list[np.ndarray]
    path_of: np.ndarray
    index_in: np.ndarray
    start: np.ndarray
    flat: np.ndarray

    def __len__(self) -> int:
        return len(self.paths)


def path_decomposition(tree: SpanningTree) -> PathDecomposition:
    """Split the tree edges into heavy-path chains, deterministically.

    Each vertex passes its chain to the child with the largest subtree,
    ties to the smallest vertex id; every other child edge starts a new
    chain that it heads itself.
    """
    n = tree.n
    nm1 = n - 1
    size = tree.tout - tree.tin
    pos_by_lower = np.empty(n, dtype=np.int64)
    pos_by_lower[tree.lower] = np.arange(nm1)

    # heaviest child per vertex: group children by parent, keep the one
    # maximizing (subtree size, smaller id wins ties)
    heavy = np.full(n, -1, dtype=np.int64)
    kids = np.arange(1, n)
    order = np.lexsort((-kids, size[1:], tree.parent[1:]))
    sorted_parents = tree.parent[1:][order]
    last = np.ones(order.size, dtype=bool)
    last[:-1] = sorted_parents[:-1] != sorted_parents[1:]
    heavy[sorted_parents[last]] = kids[order][last]

    light = kids[heavy[tree.parent[1:]] != kids]
    heads = np.concatenate([[heavy[0]], light]).astype(np.int64)
    heads = heads[np.argsort(tree.tin[heads], kind="stable")]

    path_of = np.full(nm1, -1, dtype=np.int64)
    index_in = np.full(nm1, -1, dtype=np.int64)
    paths: list[np.ndarray] = []
    for h in heads:
        chain: list[int] = []
        v = int(h)
        while v != -1:
            chain.append(int(pos_by_lower[v]))
            v = int(heavy[v])
        arr = np.asarray(chain, dtype=np.int64)
        path_of[arr] = len(paths)
        index_in[arr] = np.arange(arr.size)
        paths.append(arr)

    start = np.zeros(len(paths) + 1, dtype=np.int64)
    start[1:] = np.cumsum([p.size for p in paths])
    flat = (np.concatenate(paths) if paths
            else np.empty(0, dtype=np.int64))
    return PathDecomposition(paths, path_of, index_in, start, flat)


# ---------------------------------------------------------------------------
# exact interaction weights (three value queries and inclusion-exclusion)


def subtree_weight(oracle: CutOracle, edge_id: int) -> float:
    """Weight leaving the subtree under a tree edge: its one-edge cut."""
    return oracle.cut_value((int(edge_id),))


def _tree_interval(oracle: CutOracle, edge_id: int) -> tuple[int, int]:
    p = int(oracle.edge_pos[edge_id])
    if p < 0:
        raise ValueError(f"edge {edge_id} is not a tree edge")
    return int(oracle.int_lo[p]), int(oracle.int_hi[p])


def _interaction_weight(oracle: CutOracle, e_id: int, f_id: int) -> float:
    e_id, f_id = int(e_id), int(f_id)
    pair = (e_id, f_id) if e_id < f_id else (f_id, e_id)
    vals = oracle.cut_values([(e_id,), (f_id,), pair])
    return 0.5 * float(vals[0] + vals[1] - vals[2])


def cross_weight(oracle: CutOracle, e_id: int, f_id: int) -> float:
    """Weight of the edges joining two disjoint subtrees.

    The two tree edges must be unrelated (neither subtree contains the
    other); raises ValueError otherwise. Three cut-value queries: the
    pair cut misses exactly the joining edges from both one-edge cuts.
    """
    ae, be = _tree_interval(oracle, e_id)
    af, bf = _tree_interval(oracle, f_id)
    if not (be <= af or bf <= ae):
        raise ValueError("edges must have disjoint subtrees")
    return _interaction_weight(oracle, e_id, f_id)


def down_weight(oracle: CutOracle, e_id: int, f_id: int) -> float:
    """Weight from the subtree under f_id to everything outside e_id's.

    Requires f_id's subtree to sit strictly inside e_id's; raises
    ValueError otherwise. Same identity as `cross_weight`: here the pair
    cut double-misses the edges by which the inner subtree reaches past
    the outer one.
    """
    ae, be = _tree_interval(oracle, e_id)
    af, bf = _tree_interval(oracle, f_id)
    if not (ae <= af and bf <= be and e_id != f_id):
        raise ValueError("first edge must lie strictly above the second")
    return _interaction_weight(oracle, e_id, f_id)


# ---------------------------------------------------------------------------
# interest descents
#
# For a tree edge e with one-edge cut value s, another edge f can only
# complete a two-edge cut below any threshold not exceeding s when the
# weight shared between the cut of e and the cut of f is above s/2 (the
# pair value is s + s_f - 2 * shared). At any vertex the shared weights
# of disjoint child subtrees sum to at most s, so at most one child can
# be above half: the partners form one descending chain, found by binary
# searches. All descents advance in lockstep; each round issues a few
# batched interval scans, one per phase and kind, so the python overhead
# stays flat in the number of descents.

_SEG, _SPINE_UP, _SPINE, _HUNT, _BISECT, _VERIFY, _DONE = range(7)

_CROSS, _DOWN = 0, 1


def _interest_descents(oracle: CutOracle, decomp: PathDecomposition
                       ) -> tuple[list[tuple[int, int, int]],
                                  list[tuple[int, int, int]]]:
    """Run every cross and down interest descent over the tree.

    Returns two registration lists of (source position, target path id,
    entry index) triples: per source edge, the paths that can hold a
    partner forming a small pair with it, entered at the topmost
    candidate edge. Kind "cross" tracks partners in subtrees unrelated
    to the source, kind "down" partners strictly below it; the source's
    own path is never registered (pairs along one path are handled by
    the path scans).
    """
    tree = oracle.tree
    n = tree.n
    nm1 = n - 1
    trunc = _effective_k(oracle) is not None
    singles = oracle.cached_single_values(trunc=trunc)

    parent = tree.parent
    lower = tree.lower
    upper_v = parent[lower]
    tin, tout = tree.tin, tree.tout
    int_lo, int_hi = oracle.int_lo, oracle.int_hi
    path_of, index_in = decomp.path_of, decomp.index_in
    start, flat = decomp.start, decomp.flat
    plen = np.diff(start)

    pos_by_lower = np.empty(n, dtype=np.int64)
    pos_by_lower[lower] = np.arange(nm1)

    # children of every vertex in preorder, CSR by parent; consecutive
    # children tile contiguous index ranges, so any run of siblings is
    # one rectangle for the scans
    kids = np.arange(1, n)
    korder = np.lexsort((tin[1:], parent[1:]))
    child_list = kids[korder]
    child_count = np.bincount(parent[1:], minlength=n)
    child_start = np.zeros(n + 1, dtype=np.int64)
    child_start[1:] = np.cumsum(child_count)
    child_tin = tin[child_list]
    child_tout = tout[child_list]
    child_pos = pos_by_lower[child_list]
    slot_of = np.full(n, -1, dtype=np.int64)
    slot_of[child_list] = np.arange(nm1)

    # ancestor path segments per source, top-down: pointer-jump from the
    # upper endpoint, one whole path per hop
    seg_ids: list[np.ndarray] = []
    seg_pids: list[np.ndarray] = []
    seg_bs: list[np.ndarray] = []
    walk_ids = np.arange(nm1)
    walk_cur = upper_v.copy()
    alive = walk_cur != 0
    walk_ids, walk_cur = walk_ids[alive], walk_cur[alive]
    while walk_ids.size:
        pe = pos_by_lower[walk_cur]
        seg_ids.append(walk_ids.copy())
        seg_pids.append(path_of[pe])
        seg_bs.append(index_in[pe])
        top = flat[start[path_of[pe]]]
        walk_cur = parent[lower[top]]
        keep = walk_cur != 0
        walk_ids, walk_cur = walk_ids[keep], walk_cur[keep]
    if seg_ids:
        e_all = np.concatenate(seg_ids)
        p_all = np.concatenate(seg_pids)
        b_all = np.concatenate(seg_bs)
        r_all = np.concatenate([np.full(x.size, i, dtype=np.int64)
                                for i, x in enumerate(seg_ids)])
        seg_order = np.lexsort((-r_all, e_all))
        seg_path = p_all[seg_order]
        seg_b = b_all[seg_order]
        seg_cnt = np.bincount(e_all, minlength=nm1)
    else:
        seg_path = np.empty(0, dtype=np.int64)
        seg_b = np.empty(0, dtype=np.int64)
        seg_cnt = np.zeros(nm1, dtype=np.int64)
    seg_off = np.zeros(nm1 + 1, dtype=np.int64)
    seg_off[1:] = np.cumsum(seg_cnt)

    # one descent per (edge, kind)
    d_total = 2 * nm1
    kind = np.zeros(d_total, dtype=np.int8)
    kind[nm1:] = _DOWN
    src = np.concatenate([np.arange(nm1)] * 2)
    s_val = singles[src].astype(np.float64)
    half = 0.5 * s_val * (1.0 - HALF_SLACK)
    le = int_lo[src]
    he = int_hi[src]

    phase = np.full(d_total, _DONE, dtype=np.int8)
    segp = np.zeros(d_total, dtype=np.int64)
    cpath = np.full(d_total, -1, dtype=np.int64)
    blo = np.zeros(d_total, dtype=np.int64)
    bhi = np.zeros(d_total, dtype=np.int64)
    bs_a = np.zeros(d_total, dtype=np.int64)
    bs_b = np.zeros(d_total, dtype=np.int64)
    ot_a = np.zeros(d_total, dtype=np.int64)
    ot_b = np.zeros(d_total, dtype=np.int64)
    cur_tot = np.zeros(d_total, dtype=np.float64)
    ot_tot = np.zeros(d_total, dtype=np.float64)
    ot_live = np.zeros(d_total, dtype=bool)
    cand = np.full(d_total, -1, dtype=np.int64)

    regs: tuple[list[tuple[int, int, int]], list[tuple[int, int, int]]]
    regs = ([], [])

    def span_interval(a_slots: np.ndarray, b_slots: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
        ok = a_slots <= b_slots
        a = child_tin[np.clip(a_slots, 0, nm1 - 1)]
        b = child_tout[np.clip(b_slots, 0, nm1 - 1)]
        return np.where(ok, a, 0), np.where(ok, b, 0)

    def measure(ix: np.ndarray, kk: int, a: np.ndarray, b: np.ndarray
                ) -> np.ndarray:
        """Shared weight between the sources at ix and the range [a, b)."""
        if kk == _CROSS:
            return oracle.interval_weights(le[ix], he[ix], a, b, trunc=trunc)
        out = oracle.interval_weights(a, b, np.zeros_like(a), le[ix],
                                      trunc=trunc)
        out += oracle.interval_weights(a, b, he[ix],
                                       np.full_like(a, n), trunc=trunc)
        return out

    def measure_within(ix: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Weight between each source subtree and its ancestor v's rest."""
        out = oracle.interval_weights(le[ix], he[ix], tin[v], le[ix],
                                      trunc=trunc)
        out += oracle.interval_weights(le[ix], he[ix], he[ix], tout[v],
                                       trunc=trunc)
        return out

    def enter_hunt(ix: np.ndarray, at: np.ndarray, excl: np.ndarray) -> None:
        """Look for a partner chain among at's children other than excl."""
        cs = child_start[at]
        ce = child_start[at + 1]
        es = slot_of[excl]
        only = (ce - cs) <= 1
        phase[ix[only]] = _DONE
        ix, cs, ce, es = ix[~only], cs[~only], ce[~only], es[~only]
        phase[ix] = _HUNT
        bs_a[ix] = cs
        bs_b[ix] = es - 1
        ot_a[ix] = es + 1
        ot_b[ix] = ce - 1

    def enter_bisect(ix: np.ndarray) -> None:
        # invariant: the cumulative weight over [bs_a, blo] is below half
        # and over [bs_a, bhi] at least half; bhi lands on the crossing
        blo[ix] = bs_a[ix] - 1
        bhi[ix] = bs_b[ix]
        ready = bhi[ix] - blo[ix] == 1
        phase[ix[~ready]] = _BISECT
        fin = ix[ready]
        phase[fin] = _VERIFY
        cand[fin] = bhi[fin]

    def enter_spine_up(ix: np.ndarray) -> None:
        # search j in [blo, bhi] for the deepest ancestor vertex, taken
        # as upper(P[j]), still sharing at least half; bhi is the failed
        # segment bottom, blo the passing top
        ready = bhi[ix] - blo[ix] == 1
        phase[ix[~ready]] = _SPINE_UP
        fin = ix[ready]
        edge = flat[start[cpath[fin]] + blo[fin]]
        enter_hunt(fin, upper_v[edge], lower[edge])

    def spine_done(ix: np.ndarray) -> None:
        # deepest interested edge of cpath sits at index blo; its lower
        # endpoint either ends the chain (path ends at tree leaves) or
        # hosts the next hunt, excluding the path's own continuation
        at_end = blo[ix] == plen[cpath[ix]] - 1
        phase[ix[at_end]] = _DONE
        rest = ix[~at_end]
        base = start[cpath[rest]] + blo[rest]
        enter_hunt(rest, lower[flat[base]], lower[flat[base + 1]])

    def hop(ix: np.ndarray, kk: int, got: np.ndarray) -> None:
        """Register the verified child's path and continue along it."""
        pc = child_pos[got]
        q = path_of[pc]
        i0 = index_in[pc]
        own = path_of[src[ix]]
        if np.any(q == own):
            raise AssertionError("interest chain re-entered its own path")
        regs[kk].extend(zip(src[ix].tolist(), q.tolist(), i0.tolist()))
        at_end = i0 == plen[q] - 1
        phase[ix[at_end]] = _DONE
        rest = ix[~at_end]
        phase[rest] = _SPINE
        cpath[rest] = q[~at_end]
        blo[rest] = i0[~at_end]
        bhi[rest] = plen[q[~at_end]]

    # initialize cross descents
    cids = np.arange(nm1)
    live = s_val[:nm1] > 0.0
    segged = live & (seg_cnt > 0)
    phase[cids[segged]] = _SEG
    rooted = cids[live & (seg_cnt == 0)]
    enter_hunt(rooted, np.zeros(rooted.size, dtype=np.int64), lower[rooted])

    # initialize down descents: walk the source's own path from the
    # source downward (known to share everything with itself)
    dofs = nm1 + cids
    ii = index_in[cids]
    pl = path_of[cids]
    live = (s_val[nm1:] > 0.0) & (ii < plen[pl] - 1)
    act = dofs[live]
    phase[act] = _SPINE
    cpath[act] = pl[live]
    blo[act] = ii[live]
    bhi[act] = plen[pl[live]]

    max_rounds = 64 * (2 + int(math.log2(max(n, 2)))) + 64
    for _ in range(max_rounds):
        active = np.nonzero(phase != _DONE)[0]
        if active.size == 0:
            break
        ph_act = phase[active]
        kd_act = kind[active]

        ix = active[ph_act == _SEG]
        if ix.size:
            at = seg_off[src[ix]] + segp[ix]
            pth = seg_path[at]
            b = seg_b[at]
            bot = lower[flat[start[pth] + b]]
            ok = measure_within(ix, bot) >= half[ix]
            deeper = ok & (segp[ix] + 1 < seg_cnt[src[ix]])
            ended = ok & ~deeper
            segp[ix[deeper]] += 1
            fin = ix[ended]
            enter_hunt(fin, upper_v[src[fin]], lower[src[fin]])
            bad = ix[~ok]
            cpath[bad] = pth[~ok]
            blo[bad] = 0
            bhi[bad] = b[~ok] + 1
            enter_spine_up(bad)

        ix = active[ph_act == _SPINE_UP]
        if ix.size:
            mid = (blo[ix] + bhi[ix]) // 2
            vtx = upper_v[flat[start[cpath[ix]] + mid]]
            ok = measure_within(ix, vtx) >= half[ix]
            blo[ix[ok]] = mid[ok]
            bhi[ix[~ok]] = mid[~ok]
            enter_spine_up(ix)

        for kk in (_CROSS, _DOWN):
            ix = active[(ph_act == _SPINE) & (kd_act == kk)]
            if ix.size:
                mid = (blo[ix] + bhi[ix]) // 2
                q = flat[start[cpath[ix]] + mid]
                ok = measure(ix, kk, int_lo[q], int_hi[q]) >= half[ix]
                blo[ix[ok]] = mid[ok]
                bhi[ix[~ok]] = mid[~ok]
                spine_done(ix[bhi[ix] - blo[ix] == 1])

        for kk in (_CROSS, _DOWN):
            ix = active[(ph_act == _HUNT) & (kd_act == kk)]
            if ix.size:
                la, lb = span_interval(bs_a[ix], bs_b[ix])
                ra, rb = span_interval(ot_a[ix], ot_b[ix])
                tl = measure(ix, kk, la, lb)
                tr = measure(ix, kk, ra, rb)
                pick_r = tr > tl
                swap = ix[pick_r]
                bs_a[swap], ot_a[swap] = ot_a[swap], bs_a[swap].copy()
                bs_b[swap], ot_b[swap] = ot_b[swap], bs_b[swap].copy()
                best = np.where(pick_r, tr, tl)
                other = np.where(pick_r, tl, tr)
                cur_tot[ix] = best
                ot_tot[ix] = other
                ot_live[ix] = other >= half[ix]
                dead = best < half[ix]
                phase[ix[dead]] = _DONE
                enter_bisect(ix[~dead])

        for kk in (_CROSS, _DOWN):
            ix = active[(ph_act == _BISECT) & (kd_act == kk)]
            if ix.size:
                mid = (blo[ix] + bhi[ix]) // 2
                a = child_tin[bs_a[ix]]
                b = child_tout[mid]
                ok = measure(ix, kk, a, b) >= half[ix]
                bhi[ix[ok]] = mid[ok]
                blo[ix[~ok]] = mid[~ok]
                fin = ix[bhi[ix] - blo[ix] == 1]
                phase[fin] = _VERIFY
                cand[fin] = bhi[fin]

        for kk in (_CROSS, _DOWN):
            ix = active[(ph_act == _VERIFY) & (kd_act == kk)]
            if ix.size:
                got = cand[ix]
                m = measure(ix, kk, child_tin[got], child_tout[got])
                sa, sb = span_interval(got + 1, bs_b[ix])
                suf = measure(ix, kk, sa, sb)
                passed = m >= half[ix]
                win = ix[passed]
                if win.size:
                    # disjoint shares at one vertex can never sum past
                    # the source's own cut; catches measurement bugs
                    excess = (m[passed] + ot_tot[win]
                              - s_val[win] * (1.0 + 1e-9) - 1e-12)
                    if np.any(excess > 0.0):
                        raise AssertionError(
                            "child shares exceed the source cut value")
                    hop(win, kk, got[passed])
                rest = ~passed
                retry = rest & (suf >= half[ix])
                again = ix[retry]
                bs_a[again] = got[retry] + 1
                enter_bisect(again)
                live_now = ot_live[ix]
                flip = rest & ~retry & live_now
                flop = ix[flip]
                if flop.size:
                    bs_a[flop] = ot_a[flop]
                    bs_b[flop] = ot_b[flop]
                    ot_live[flop] = False
                    swapped = ot_tot[flop].copy()
                    ot_tot[flop] = cur_tot[flop]
                    cur_tot[flop] = swapped
                    enter_bisect(flop)
                phase[ix[rest & ~retry & ~live_now]] = _DONE
    else:
        raise AssertionError("interest descents failed to settle")

    return regs[_CROSS], regs[_DOWN]


# ---------------------------------------------------------------------------
# interested path pairs


@dataclass(frozen=True)
class InterestedPair:
    """Two paths that may hold a small two-edge cut across them.

    kind "cross": every row edge (on path_a) is unrelated to every
    column edge (on path_b); both sides hold the mutually registered
    sources, ordered top to bottom, which is outward from the paths'
    meeting point. kind "down": rows are the registered sources ordered
    bottom to top (outward is upward here) and cols are all of path_b's
    edges, each strictly below every row.
    """

    kind: str
    path_a: int
    path_b: int
    rows: np.ndarray
    cols: np.ndarray


def _ordered(positions: list[int], index_in: np.ndarray,
             descending: bool = False) -> np.ndarray:
    arr = np.asarray(positions, dtype=np.int64)
    arr = arr[np.argsort(index_in[arr], kind="stable")]
    return arr[::-1].copy() if descending else arr


def _spot_check_registrations(oracle: CutOracle, decomp: PathDecomposition,
                              regs: list[tuple[int, int, int]]) -> None:
    """Re-verify sampled registrations with exact cut values."""
    if not regs:
        return
    trunc = _effective_k(oracle) is not None
    edge_ids = oracle.tree.edge_ids
    cuts: list[TreeCut] = []
    for s, q, i0 in regs:
        f = decomp.flat[decomp.start[q] + i0]
        e_id, f_id = int(edge_ids[s]), int(edge_ids[f])
        cuts.append((e_id,))
        cuts.append((f_id,))
        cuts.append((e_id, f_id) if e_id < f_id else (f_id, e_id))
    vals = oracle.cut_values(cuts, trunc=trunc)
    shared = 0.5 * (vals[0::3] + vals[1::3] - vals[2::3])
    if np.any(2.0 * shared < vals[0::3] * (1.0 - 1e-6)):
        raise AssertionError("a registered interest fails its exact recheck")


def interested_path_pairs(oracle: CutOracle,
                          decomp: PathDecomposition | None = None, *,
                          spot_checks: int = 32) -> list[InterestedPair]:
    """Path pairs that can hold small cross or down two-edge cuts.

    Runs the interest descents and keeps cross path pairs registered in
    both directions: a small unrelated pair makes each edge interested
    in the other's path, so one-sided registrations cannot hold small
    cuts. Down pairs combine the registered sources with the full target
    path. Total row and column counts are asserted against the
    c * n * log2(n) bound, and a deterministic sample of registrations
    is re-verified against exact cut values.
    """
    tree = oracle.tree
    if decomp is None:
        decomp = path_decomposition(tree)
    cross_regs, down_regs = _interest_descents(oracle, decomp)
    take = max(spot_checks // 2, 1)
    _spot_check_registrations(oracle, decomp,
                              cross_regs[:take] + down_regs[:take])

    path_of, index_in = decomp.path_of, decomp.index_in
    cross_by: dict[tuple[int, int], list[int]] = {}
    for s, q, _ in cross_regs:
        cross_by.setdefault((int(path_of[s]), int(q)), []).append(s)
    down_by: dict[tuple[int, int], list[int]] = {}
    for s, q, _ in down_regs:
        down_by.setdefault((int(path_of[s]), int(q)), []).append(s)

    pairs: list[InterestedPair] = []
    for (a, b) in sorted(cross_by):
        if a >= b:
            continue
        back = cross_by.get((b, a))
        if not back:
            continue
        pairs.append(InterestedPair("cross", a, b,
                                    _ordered(cross_by[(a, b)], index_in),
                                    _ordered(back, index_in)))
    for (a, b) in sorted(down_by):
        rows = _ordered(down_by[(a, b)], index_in, descending=True)
        pairs.append(InterestedPair("down", a, b, rows, decomp.paths[b]))

    total = sum(p.rows.size + p.cols.size for p in pairs)
    bound = INTEREST_SIZE_FACTOR * tree.n * max(1.0, math.log2(tree.n))
    assert total <= bound, f"interested pairs too large: {total} > {bound}"
    return pairs


# ---------------------------------------------------------------------------
# exact 1-or-2-edge tree cut minimum


def _scan_candidates(oracle: CutOracle,
                     tasks: list[tuple[np.ndarray, np.ndarray]],
                     cap: float) -> list[TreeCut]:
    """Cells that could beat the cap, from pruned column-minima scans."""
    if not tasks:
        return []
    edge_ids = oracle.tree.edge_ids
    istars, vmins, _ = _dac_scan(oracle, tasks, cap)
    margin = cap * (1.0 + 1e-9)
    out: list[TreeCut] = []
    for (rows, cols), ist, vm in zip(tasks, istars, vmins):
        for j in np.nonzero(vm < margin)[0]:
            e = int(edge_ids[rows[ist[j]]])
            f = int(edge_ids[cols[j]])
            out.append((e, f) if e < f else (f, e))
    return out


def min_1or2_respecting_cut(oracle: CutOracle,
                            decomp: PathDecomposition | None = None, *,
                            stop_below: float | None = None,
                            masked: bool = False
                            ) -> tuple[TreeCut | None, float]:
    """Minimum cut among those crossing the tree in one or two edges.

    Exact in the oracle's metric (truncated when the oracle carries a
    demand above one). With ``masked``, cuts holding at least k heavy
    edges are skipped as already satisfied; they are worth k times the
    truncation level or more, so the result stays decision-correct for
    thresholds up to that product. ``stop_below`` permits an early
    return with any witness below the given value; without an early
    return the minimum is exact to value-rounding.

    The cached single values give the one-edge minimum and a pruning
    cap. Pair minima come from the monotone column scans, over midpoint
    splits of each heavy path and over the interested pair minors, with
    every surviving cell re-checked at exact values.
    """
    tree = oracle.tree
    k = _effective_k(oracle)
    trunc = k is not None
    if masked and not trunc:
        raise ValueError("masking requires a demand above one")
    edge_ids = tree.edge_ids
    singles = oracle.cached_single_values(trunc=trunc)
    if masked:
        heavy = oracle.cached_single_heavy()
        vals = np.where(heavy >= k, math.inf, singles)
    else:
        vals = np.asarray(singles, dtype=np.float64)
    p0 = int(np.argmin(vals))
    best_val = float(vals[p0])
    best_cut: TreeCut | None = None
    if math.isfinite(best_val):
        best_cut = (int(edge_ids[p0]),)
    if stop_below is not None and best_val < stop_below:
        return best_cut, best_val
    if tree.n <= 2:
        return best_cut, best_val

    cap = best_val
    if masked:
        cap = min(cap, k * oracle.rho)
    assert math.isfinite(cap)

    def fold(cands: list[TreeCut]) -> None:
        nonlocal best_val, best_cut, cap
        if not cands:
            return
        cv = oracle.cut_values(cands, trunc=trunc)
        if masked:
            cv = np.where(oracle.heavy_counts(cands) >= k, math.inf, cv)
        j = int(np.argmin(cv))
        if float(cv[j]) < best_val:
            best_val = float(cv[j])
            best_cut = cands[j]
            cap = min(cap, best_val)

    if decomp is None:
        decomp = path_decomposition(tree)
    tasks: list[tuple[np.ndarray, np.ndarray]] = []
    near: list[TreeCut] = []
    for path in decomp.paths:
        if path.size < 2:
            continue
        for _, a, b in split_nodes(path.size):
            if b - a <= 3:
                for i in range(a, b):
                    e = int(edge_ids[path[i]])
                    for j in range(i + 1, b):
                        f = int(edge_ids[path[j]])
                        near.append((e, f) if e < f else (f, e))
            else:
                mid = (a + b - 1) // 2
                tasks.append((path[a:mid + 1][::-1], path[mid + 1:b]))
    near.extend(_scan_candidates(oracle, tasks, cap))
    fold(near)
    if stop_below is not None and best_val < stop_below:
        return best_cut, best_val

    prs = interested_path_pairs(oracle, decomp)
    fold(_scan_candidates(oracle, [(p.rows, p.cols) for p in prs], cap))
    return best_cut, best_val


# ---------------------------------------------------------------------------
# full tree focusing


def focus_tree(oracle: CutOracle, eps: float, cong_cap: float = math.inf, *,
               budget_iters: int | None = None, check_lemmas: bool = True,
               decomp: PathDecomposition | None = None) -> PathFocusReport:
    """Raise every small one- and two-edge cut of the oracle's tree.

    Order matters: single-edge cuts first (their values gate the
    interest searches), then pairs within each heavy path, then pairs
    across paths via the interested pair minors. Weight updates only
    raise cut values, so earlier stages stay clear while later ones run.
    A congestion-capped abort reports completed=False; the caller
    advances its phase and re-enters.
    """
    tree = oracle.tree
    iterations = 0
    calls = 0
    extracted = 0

    batch = _filter_small(oracle, [(int(e),) for e in tree.edge_ids], eps)
    if batch:
        res = oracle.fast_focus(batch, eps, cong_cap,
                                budget_iters=budget_iters,
                                check_lemmas=check_lemmas)
        iterations += res.iterations
        calls += 1
        extracted += len(batch)
        if not res.completed:
            return PathFocusReport(False, iterations, calls, extracted)
    if tree.n <= 2:
        return PathFocusReport(True, iterations, calls, extracted)

    if decomp is None:
        decomp = path_decomposition(tree)
    rep = focus_multiple_paths(oracle, [PathMinor(p) for p in decomp.paths],
                               eps, cong_cap, budget_iters=budget_iters,
                               check_lemmas=check_lemmas)
    iterations += rep.iterations
    calls += rep.focus_calls
    extracted += rep.extracted
    if not rep.completed:
        return PathFocusReport(False, iterations, calls, extracted)

    pairs = interested_path_pairs(oracle, decomp)
    batch, _ = extract_cross_many(oracle, [(p.rows, p.cols) for p in pairs],
                                  eps)
    if batch:
        res = oracle.fast_focus(batch, eps, cong_cap,
                                budget_iters=budget_iters,
                                check_lemmas=check_lemmas)
        iterations += res.iterations
        calls += 1
        extracted += len(batch)
        if not res.completed:
            return PathFocusReport(False, iterations, calls, extracted)
    return PathFocusReport(True, iterations, calls, extracted)


# ---------------------------------------------------------------------------
# epochs over packed trees


@dataclass
class EpochCarry:
    """Verified packing handed from one epoch to the next.

    ``floor`` is the exact minimum 1-or-2-edge tree cut over the packed
    trees at verification time, measured under the weight rescaling
    generation ``scale_exp``. Only the plain variant carries floors: its
    values never decrease, so a floor above the next threshold proves
    the epoch clear without repacking. The truncated variant's level
    moves with every threshold raise, so it re-measures instead.
    """

    packing: TreePacking
    floor: float | None
    scale_exp: int


def _measure_packing(g: Graph, state: DualState, packing: TreePacking,
                     threshold: float, free_k: int | None,
                     rho: float | None) -> tuple[float, bool]:
    """Exact 1-or-2-edge minimum over a packing, stopping early when dirty."""
    eff = free_k is not None and free_k != 1
    floor = math.inf
    for tree in packing:
        oracle = CutOracle(g, tree, state, free_k=free_k)
        if eff:
            oracle.set_rho(rho)
        _, val = min_1or2_respecting_cut(oracle, stop_below=threshold,
                                         masked=eff)
        floor = min(floor, val)
        if val < threshold:
            return floor, False
    return floor, True


def _epoch_pass(g: Graph, state: DualState, eps: float,
                rng: np.random.Generator, carry: EpochCarry | None,
                free_k: int | None, cong_cap: float,
                budget_iters: int | None, check_lemmas: bool,
                retries: int) -> tuple[EpochReport, EpochCarry | None]:
    """One threshold epoch: focus every packed tree, then re-verify.

    Las Vegas: after a focusing pass, a fresh packing is measured; if it
    still holds a small cut (the old packing missed some near-minimum
    cut), the fresh packing is focused in turn, up to the retry budget.
    """
    lam = state.lam
    k = None if free_k is None or free_k == 1 else free_k
    if k is None:
        threshold = (1.0 + eps) * lam
        rho = None
        if carry is not None and carry.floor is not None:
            gen = state.scale_exp - carry.scale_exp
            if carry.floor * RESCALE_FACTOR ** gen >= threshold:
                return EpochReport(cleared=True, batch=0, delta=0.0), carry
        if carry is not None:
            packing = carry.packing
        else:
            packing = pack_trees(g, state.v, rng)
            floor, ok = _measure_packing(g, state, packing, threshold,
                                         free_k, rho)
            if ok:
                return (EpochReport(cleared=True, batch=0, delta=0.0),
                        EpochCarry(packing, floor, state.scale_exp))
    else:
        rho = (1.0 + eps) * lam
        threshold = k * rho
        packing = pack_trees(g, np.minimum(state.v, rho), rng)
        floor, ok = _measure_packing(g, state, packing, threshold, free_k,
                                     rho)
        if ok:
            return EpochReport(cleared=True, batch=0, delta=0.0), None

    total = 0
    attempt = 0
    while True:
        for tree in packing:
            oracle = CutOracle(g, tree, state, free_k=free_k)
            rep = focus_tree(oracle, eps, cong_cap,
                             budget_iters=budget_iters,
                             check_lemmas=check_lemmas)
            total += rep.extracted
            if not rep.completed:
                keep = carry if k is None else None
                return (EpochReport(cleared=False, batch=total,
                                    delta=state.last_delta,
                                    retries=attempt), keep)
        u = state.v if k is None else np.minimum(state.v, rho)
        fresh = pack_trees(g, u, rng)
        floor, ok = _measure_packing(g, state, fresh, threshold, free_k, rho)
        if ok:
            keep = (EpochCarry(fresh, floor, state.scale_exp)
                    if k is None else None)
            return (EpochReport(cleared=True, batch=total,
                                delta=state.last_delta,
                                retries=attempt), keep)
        attempt += 1
        if attempt > retries:
            raise BudgetExceeded(
                f"epoch verification failed {attempt} times at the "
                f"threshold {threshold!r}")
        packing = fresh


def epoch_algorithm(g: Graph, state: DualState, eps: float, *, seed: int = 0,
                    free_k: int | None = None,
                    carry: EpochCarry | None = None,
                    cong_cap: float = math.inf,
                    budget_iters: int | None = None,
                    check_lemmas: bool = True, retries: int = 16
                    ) -> tuple[EpochReport, EpochCarry | None]:
    """Clear one epoch at the state's current threshold, in place.

    Already-clear thresholds return immediately: in plain mode a carried
    floor above the threshold skips even the packing and hands back the
    same carry object. Feed each returned carry into the next call,
    starting from None. The state's weights are advanced in place;
    reports say whether the epoch cleared and how many cuts it touched.
    """
    rng = make_rng(seed, 11)
    return _epoch_pass(g, state, eps, rng, carry, free_k, cong_cap,
                       budget_iters, check_lemmas, retries)


class TreeEpochBackend:
    """Threshold-raising epochs over sampled spanning trees.

    Backend for `run_solver`: packs trees against the current effective
    weights, clears every 1- and 2-edge tree cut per epoch via
    `focus_tree`, and re-verifies with a fresh packing before advancing.
    With ``boxed`` the box-constrained variant is solved: values
    truncate at the running level and cuts with k or more heavy edges
    count as satisfied.
    """

    def __init__(self, g: Graph, k: int = 2, *, boxed: bool = False,
                 seed: int = 0, retries: int = 16):
        if k < 1:
            raise ValueError(f"demand must be at least 1, got {k}")
        self.g = g
        self.k = k
        self.free_k = k if boxed else None
        self.v0 = 1.0 / g.cost if boxed else 1.0 / (k * g.cost)
        self.rng = make_rng(seed, 11)
        self.retries = retries
        self.carry: EpochCarry | None = None

    def make_state(self) -> DualState:
        return DualState.fresh(self.v0)

    def initial_lambda(self, state: DualState, eps0: float) -> float:
        packing = pack_trees(self.g, state.v, self.rng)
        if self.free_k is None:
            floors: dict[int, float] = {}

            def min_fn(tree: SpanningTree) -> float:
                oracle = CutOracle(self.g, tree, state)
                val = min_1or2_respecting_cut(oracle)[1]
                floors[id(tree)] = val
                return val

            lam0 = packing_initial_lambda(self.g, state.v, packing, eps0,
                                          min_fn=min_fn)
            self.carry = EpochCarry(packing, min(floors.values()),
                                    state.scale_exp)
            return lam0
        # box variant: start from the untruncated tree minimum per unit
        # of demand and halve until the truncated minimum catches up
        raw = min(min_1or2_respecting_cut(CutOracle(self.g, t, state))[1]
                  for t in packing)
        lam = raw / self.k
        oracles = [CutOracle(self.g, t, state, free_k=self.free_k)
                   for t in packing]
        eff = self.free_k != 1
        vmin = float(np.min(state.v))
        while True:
            ok = True
            for oracle in oracles:
                if eff:
                    oracle.set_rho(lam)
                target = self.k * lam
                _, val = min_1or2_respecting_cut(oracle, stop_below=target,
                                                 masked=eff)
                if val < target:
                    ok = False
                    break
            if ok:
                return lam
            # below the smallest edge value every edge counts as heavy,
            # so a still-failing cut has fewer than k edges outright
            if lam <= vmin:
                raise InfeasibleError(
                    f"a cut with fewer than {self.k} edges can never "
                    f"reach demand {self.k} under unit edge caps")
            lam *= 0.5

    def run_epoch(self, state: DualState, eps: float, cong_cap: float,
                  knobs: SolverKnobs) -> EpochReport:
        rep, carry = _epoch_pass(self.g, state, eps, self.rng, self.carry,
                                 self.free_k, cong_cap, knobs.budget_iters,
                                 knobs.check_lemmas, self.retries)
        self.carry = carry
        return rep


# ---------------------------------------------------------------------------
# facade


def held_karp(g: Graph, eps_target: float, *, seed: int = 0,
              budget_iters: int | None = None, retries: int = 16
              ) -> tuple[float, np.ndarray, SolveResult]:
    """Near-optimal bound for covering every proper cut twice.

    Returns (value, y, solve details): y is a nonnegative edge vector
    loading every proper cut to at least 2, value is its cost, and the
    solve details carry the matching lower-bound certificate, so the
    optimum lies within a (1 + eps_target) factor below the value.
    Deterministic per seed. The input graph is connected by
    construction; eps_target must lie in (0, 0.5).
    """
    if not 0.0 < eps_target < 0.5:
        raise ValueError(f"eps_target must be in (0, 0.5), got {eps_target}")
    if g.m == 1:
        y, val = solve_single_edge(g, 2, boxed=False)
        state = DualState.fresh(1.0 / (2.0 * g.cost))
        res = SolveResult(bound=val, lam=1.0, w_snapshot=np.ones(1),
                          scale_exp=0, state=state, status="closed-form",
                          best_p=0.0, epochs=0, iterations=0, trace=[])
        return val, y, res
    backend = TreeEpochBackend(g, 2, seed=seed, retries=retries)
    res = run_solver(backend, SolverKnobs(eps_target,
                                          budget_iters=budget_iters))
    y, val = extract_covering_solution(res.w_snapshot, res.lam, g.cost)
    return val, y, res
