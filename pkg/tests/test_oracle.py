"""Range-structure cut oracle: decompositions, values, fast inner loop."""

from __future__ import annotations

import numpy as np
import pytest

from cutcover.graph import exact_min_cut_bruteforce, make_graph
from cutcover.mwu import DualState, focus_explicit
from cutcover.oracle import CutOracle, normalize_cut
from cutcover.packing import build_spanning_tree, pack_trees, tree_cut_crossing

from conftest import five_cycle_mixed_costs, random_graph


def raw_state(g):
    """State whose per-edge value is just the cost (unit weights)."""
    return DualState.fresh(g.cost.copy())


def crossing_row(g, tree, s):
    """Boolean crossing vector of a 1- or 2-edge tree cut, brute force."""
    crossing = tree_cut_crossing(g, tree)
    pos = {int(e): i for i, e in enumerate(tree.edge_ids)}
    row = np.zeros(g.m, dtype=bool)
    for e in normalize_cut(s):
        row ^= crossing[pos[e]]
    return row


def all_tree_cuts(tree):
    ids = [int(e) for e in tree.edge_ids]
    cuts = [(e,) for e in ids]
    cuts += [tuple(sorted((a, b))) for i, a in enumerate(ids)
             for b in ids[i + 1:]]
    return cuts


def random_wired_instance(rng, n_hi=13):
    n = int(rng.integers(2, n_hi))
    m = int(rng.integers(n - 1, 3 * n))
    g = random_graph(rng, n, m)
    tree = pack_trees(g, g.cost, rng, count=1).trees[0]
    return g, tree


def random_k_connected(rng, k, n_lo=3, n_hi=9):
    while True:
        n = int(rng.integers(n_lo, n_hi))
        m = int(rng.integers(k * n // 2 + n, 3 * n + 5))
        g = random_graph(rng, n, m)
        _, card = exact_min_cut_bruteforce(g, np.ones(g.m))
        if card >= k:
            return g


class TestDecompose:
    def test_five_cycle_single_edge_cut(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        oc = CutOracle(g, tree, raw_state(g))
        edges = sorted(int(e) for cid in oc.decompose((0,))
                       for e in oc.canonical_edges(cid))
        assert edges == [0, 4]

    def test_five_cycle_adjacent_pair(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        oc = CutOracle(g, tree, raw_state(g))
        edges = sorted(int(e) for cid in oc.decompose((1, 2))
                       for e in oc.canonical_edges(cid))
        assert edges == [1, 2]

    def test_five_cycle_far_pair(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        oc = CutOracle(g, tree, raw_state(g))
        edges = sorted(int(e) for cid in oc.decompose((0, 3))
                       for e in oc.canonical_edges(cid))
        assert edges == [0, 3]

    def test_disjoint_and_exact_on_randoms(self, rng_factory):
        rng = rng_factory(101)
        for _ in range(25):
            g, tree = random_wired_instance(rng)
            oc = CutOracle(g, tree, raw_state(g))
            for s in all_tree_cuts(tree):
                edges = [int(e) for cid in oc.decompose(s)
                         for e in oc.canonical_edges(cid)]
                assert len(set(edges)) == len(edges)
                want = set(np.flatnonzero(crossing_row(g, tree, s)).tolist())
                assert set(edges) == want

    def test_membership_counts_bounded(self, rng_factory):
        rng = rng_factory(102)
        for _ in range(25):
            g, tree = random_wired_instance(rng)
            oc = CutOracle(g, tree, raw_state(g))
            for e in range(g.m):
                assert oc.edge_membership_count(e) <= oc.membership_bound()

    def test_augment_dedups(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        oc = CutOracle(g, tree, raw_state(g))
        aug = oc.augment([(0,), (1, 2), (2, 1), (0,), (0,)])
        assert aug.ncols == 2
        assert aug.cuts == [(0,), (1, 2)]

    def test_invalid_cuts_rejected(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        oc = CutOracle(g, tree, raw_state(g))
        with pytest.raises(ValueError):
            oc.cut_value((1, 1))
        with pytest.raises(ValueError):
            oc.cut_value((0, 1, 2))
        with pytest.raises(ValueError):
            oc.cut_value((4,))  # the chord is not a tree edge


class TestCutValues:
    def test_five_cycle_values(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        oc = CutOracle(g, tree, raw_state(g))
        assert oc.cut_value((1, 2)) == pytest.approx(2.0)
        assert oc.cut_value((0,)) == pytest.approx(6.0)
        assert oc.cut_value((0, 3)) == pytest.approx(10.0)

    def test_zero_weights_give_zero(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        st = raw_state(g)
        st.w[:] = 0.0
        oc = CutOracle(g, tree, st)
        for s in all_tree_cuts(tree):
            assert oc.cut_value(s) == 0.0

    def test_matches_bruteforce_on_randoms(self, rng_factory):
        rng = rng_factory(103)
        for _ in range(25):
            g, tree = random_wired_instance(rng)
            st = raw_state(g)
            st.w = rng.uniform(0.5, 2.0, size=g.m)
            oc = CutOracle(g, tree, st)
            cuts = all_tree_cuts(tree)
            got = oc.cut_values(cuts)
            v = st.v
            for s, val in zip(cuts, got):
                want = float(v[crossing_row(g, tree, s)].sum())
                assert abs(val - want) <= 1e-9 * max(1.0, abs(want))

    def test_pair_identity_matches_direct(self, rng_factory):
        rng = rng_factory(104)
        for _ in range(15):
            g, tree = random_wired_instance(rng)
            if g.n < 3:
                continue
            st = raw_state(g)
            st.w = rng.uniform(0.5, 2.0, size=g.m)
            oc = CutOracle(g, tree, st)
            ii, jj = np.triu_indices(g.n - 1, k=1)
            got = oc.pair_cut_values(ii, jj)
            v = st.v
            for a, b, val in zip(ii, jj, got):
                s = tuple(sorted((int(tree.edge_ids[a]),
                                  int(tree.edge_ids[b]))))
                want = float(v[crossing_row(g, tree, s)].sum())
                assert abs(val - want) <= 1e-9 * max(1.0, abs(want))

    def test_truncated_values_and_heavy_counts(self, rng_factory):
        rng = rng_factory(105)
        for _ in range(15):
            g, tree = random_wired_instance(rng)
            st = raw_state(g)
            st.w = rng.uniform(0.2, 3.0, size=g.m)
            oc = CutOracle(g, tree, st)
            rho = float(np.median(st.v))
            oc.set_rho(rho)
            cuts = all_tree_cuts(tree)
            vals = oc.cut_values(cuts, trunc=True)
            hcs = oc.heavy_counts(cuts)
            v = st.v
            for s, val, hc in zip(cuts, vals, hcs):
                row = crossing_row(g, tree, s)
                want = float(np.minimum(v, rho)[row].sum())
                assert abs(val - want) <= 1e-9 * max(1.0, abs(want))
                assert hc == float((v[row] >= rho).sum())

    def test_trunc_requires_rho(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        oc = CutOracle(g, tree, raw_state(g))
        with pytest.raises(ValueError):
            oc.cut_values([(0,)], trunc=True)

    def test_rebuild_equals_fresh_construction(self, rng_factory):
        rng = rng_factory(106)
        g, tree = random_wired_instance(rng)
        st = raw_state(g)
        oc = CutOracle(g, tree, st)
        cuts = all_tree_cuts(tree)
        oc.cut_values(cuts)  # populate caches
        st.w = rng.uniform(0.5, 2.0, size=g.m)
        oc.mark_dirty()
        fresh = CutOracle(g, tree, st)
        assert np.array_equal(oc.cut_values(cuts), fresh.cut_values(cuts))

    def test_single_cut_values_batch(self, rng_factory):
        rng = rng_factory(107)
        g, tree = random_wired_instance(rng)
        st = raw_state(g)
        oc = CutOracle(g, tree, st)
        singles = oc.single_cut_values()
        per_cut = oc.cut_values([(int(e),) for e in tree.edge_ids])
        assert np.allclose(singles, per_cut, rtol=1e-12)


class TestRangeWeight:
    def test_cut_as_interval_pair(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        oc = CutOracle(g, tree, raw_state(g))
        assert oc.range_weight((0, 1), (1, 5)) == pytest.approx(6.0)
        assert oc.range_weight((1, 5), (0, 1)) == pytest.approx(6.0)

    def test_equal_intervals_internal_weight(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        oc = CutOracle(g, tree, raw_state(g))
        assert oc.range_weight((0, 5), (0, 5)) == pytest.approx(13.0)
        # vertices {1, 2}: the single path edge between them
        assert oc.range_weight((1, 3), (1, 3)) == pytest.approx(1.0)

    def test_nested_intervals(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        oc = CutOracle(g, tree, raw_state(g))
        # inner {2}: edges to {1} and {3} inside the whole range
        assert oc.range_weight((2, 3), (0, 5)) == pytest.approx(2.0)

    def test_crossing_intervals_rejected(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        oc = CutOracle(g, tree, raw_state(g))
        with pytest.raises(ValueError):
            oc.range_weight((0, 3), (2, 5))


def run_both(g, tree, k, eps, *, free):
    """Drive focus_explicit and fast_focus from identical cloned states."""
    v0 = (1.0 / g.cost) if free else 1.0 / (k * g.cost)
    st1 = DualState.fresh(v0.copy())
    cuts = all_tree_cuts(tree)
    rows = {s: crossing_row(g, tree, s) for s in cuts}
    if free:
        raw = {s: float(st1.v[rows[s]].sum()) for s in cuts}
        lam = min(raw.values()) / k
        while True:
            rho = (1.0 + eps) * lam
            batch = [s for s in cuts
                     if float(np.minimum(st1.v, rho)[rows[s]].sum())
                     < k * rho]
            batch = [s for s in batch
                     if (rows[s] & (st1.v >= rho)).sum() < k
                     and (rows[s] & (st1.v < rho)).any()]
            if batch:
                break
            lam *= 1.0 + eps
    else:
        vals = {s: float(st1.v[rows[s]].sum()) for s in cuts}
        lam = min(vals.values())
        batch = [s for s in cuts if vals[s] < (1.0 + eps) * lam]
    st1.lam = lam
    st2 = st1.clone()
    member = np.stack([rows[s] for s in batch], axis=1)
    res1 = focus_explicit(st1, member, eps, cong_cap=3.0,
                          free_k=k if free else None)
    oc = CutOracle(g, tree, st2, free_k=k if free else None)
    res2 = oc.fast_focus(batch, eps, cong_cap=3.0)
    return st1, st2, res1, res2


def max_rel(a, b):
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / scale)) if np.size(a) else 0.0


class TestFastFocus:
    @pytest.mark.parametrize("k,eps", [(1, 0.1), (2, 0.3), (3, 0.05)])
    def test_single_edge_bitwise(self, k, eps):
        g = make_graph(2, [(0, 1, 5.0)])
        tree = build_spanning_tree(g, np.array([0]))
        st1 = DualState.fresh(1.0 / (k * g.cost))
        st1.lam = float(st1.v[0])
        st2 = st1.clone()
        res1 = focus_explicit(st1, np.ones((1, 1), dtype=bool), eps,
                              cong_cap=3.0)
        res2 = CutOracle(g, tree, st2).fast_focus([(0,)], eps, cong_cap=3.0)
        assert np.array_equal(st1.w, st2.w)
        assert np.array_equal(res1.x, res2.x)
        assert res1.iterations == res2.iterations
        assert res1.completed == res2.completed

    def test_matches_explicit_plain(self, rng_factory):
        rng = rng_factory(108)
        for _ in range(20):
            g = random_k_connected(rng, 2)
            tree = pack_trees(g, g.cost, rng, count=1).trees[0]
            st1, st2, res1, res2 = run_both(g, tree, 2, 0.3, free=False)
            assert res1.iterations == res2.iterations
            assert np.array_equal(res1.dropped, res2.dropped)
            assert res1.completed == res2.completed
            assert max_rel(st1.w, st2.w) <= 1e-9
            assert max_rel(st1.cong, st2.cong) <= 1e-9
            assert max_rel(res1.x, res2.x) <= 1e-9

    def test_matches_explicit_free(self, rng_factory):
        rng = rng_factory(109)
        for _ in range(20):
            g = random_k_connected(rng, 3)
            tree = pack_trees(g, g.cost, rng, count=1).trees[0]
            st1, st2, res1, res2 = run_both(g, tree, 3, 0.2, free=True)
            assert res1.iterations == res2.iterations
            assert np.array_equal(res1.dropped, res2.dropped)
            assert max_rel(st1.w, st2.w) <= 1e-9
            assert max_rel(res1.x, res2.x) <= 1e-9

    def test_k1_free_equals_plain_bitwise(self, rng_factory):
        rng = rng_factory(110)
        for _ in range(10):
            g = random_k_connected(rng, 1)
            tree = pack_trees(g, g.cost, rng, count=1).trees[0]
            st1 = DualState.fresh(1.0 / g.cost)
            crossing = tree_cut_crossing(g, tree)
            vals = crossing @ st1.v
            st1.lam = float(vals.min())
            st2 = st1.clone()
            batch = [(int(tree.edge_ids[p]),) for p in range(g.n - 1)
                     if vals[p] < 1.3 * st1.lam]
            r1 = CutOracle(g, tree, st1).fast_focus(batch, 0.3, 3.0)
            r2 = CutOracle(g, tree, st2, free_k=1).fast_focus(batch, 0.3, 3.0)
            assert np.array_equal(st1.w, st2.w)
            assert np.array_equal(r1.x, r2.x)
            assert r1.iterations == r2.iterations

    def test_empty_batch_is_noop(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        st = DualState.fresh(1.0 / (2 * g.cost))
        st.lam = 1.0
        before = st.w.copy()
        res = CutOracle(g, tree, st).fast_focus([], 0.3, 3.0)
        assert res.iterations == 0 and res.completed
        assert np.array_equal(st.w, before)
        assert st.focus_calls == 0

    def test_deterministic_across_runs(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        st_a = DualState.fresh(1.0 / (2 * g.cost))
        st_a.lam = 1.0
        st_b = st_a.clone()
        ra = CutOracle(g, tree, st_a).fast_focus([(0,), (1, 2)], 0.3, 3.0)
        rb = CutOracle(g, tree, st_b).fast_focus([(0,), (1, 2)], 0.3, 3.0)
        assert np.array_equal(st_a.w, st_b.w)
        assert np.array_equal(ra.x, rb.x)

    def test_covered_column_rejected_at_entry(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        st = DualState.fresh(1.0 / (2 * g.cost))
        st.lam = 0.1  # threshold 0.13, every tree cut is worth more
        with pytest.raises(AssertionError):
            CutOracle(g, tree, st).fast_focus([(0,)], 0.3, 3.0)
