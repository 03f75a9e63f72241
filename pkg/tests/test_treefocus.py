"""Heavy-path interest machinery, tree focusing, epochs, and the facade."""

from __future__ import annotations

import math

import numpy as np
import pytest

from cutcover.graph import cut_values_bruteforce, make_graph
from cutcover.mwu import DualState
from cutcover.oracle import CutOracle
from cutcover.packing import (build_spanning_tree,
                              min_1or2_respecting_cut_bruteforce, pack_trees,
                              tree_cut_crossing)
from cutcover.reference import exact_held_karp
from cutcover.treefocus import (InterestedPair, TreeEpochBackend,
                                _interest_descents, cross_weight, down_weight,
                                epoch_algorithm, focus_tree, held_karp,
                                interested_path_pairs,
                                min_1or2_respecting_cut, path_decomposition,
                                subtree_weight)

from conftest import (complete_graph, cycle_graph, five_cycle_mixed_costs,
                      random_graph, single_edge_graph)

from test_oracle import all_tree_cuts, random_k_connected


def path_graph(n: int) -> tuple:
    g = make_graph(n, [(i, i + 1, 1.0) for i in range(n - 1)])
    tree = build_spanning_tree(g, np.arange(n - 1))
    return g, tree


def unit_state(g) -> DualState:
    """Per-edge effective value 1 under unit weights."""
    return DualState.fresh(1.0 / g.cost)


def wired(rng, n_hi=13):
    """Random instance, packed tree, and a randomly weighted state."""
    n = int(rng.integers(3, n_hi))
    m = int(rng.integers(n, 3 * n))
    g = random_graph(rng, n, m)
    tree = pack_trees(g, g.cost, rng, count=1).trees[0]
    state = unit_state(g)
    state.w = rng.uniform(0.2, 4.0, size=g.m)
    return g, tree, state


def interval_relations(tree):
    """(unrelated, strictly_below) boolean matrices over tree positions."""
    lo = tree.tin[tree.lower]
    hi = tree.tout[tree.lower]
    unrelated = (hi[:, None] <= lo[None, :]) | (hi[None, :] <= lo[:, None])
    below = (lo[:, None] <= lo[None, :]) & (hi[None, :] <= hi[:, None])
    np.fill_diagonal(below, False)
    return unrelated, below


def brute_interest_maps(g, tree, u, decomp):
    """Per source position and kind, {partner path id: topmost index}.

    A partner f is interesting for e when the weight shared between
    their one-edge cuts exceeds half of e's cut value; the shared weight
    is the overlap of the crossing rows for both partner geometries.
    The source's own path is dropped on the nested side, matching the
    descents (pairs along one path are someone else's job).
    """
    crossing = tree_cut_crossing(g, tree)
    singles = crossing @ u
    overlap = (crossing * u) @ crossing.T
    unrelated, below = interval_relations(tree)
    interesting = 2.0 * overlap > singles[:, None]
    cross_maps, down_maps = [], []
    for e in range(g.n - 1):
        maps = []
        for rel in (unrelated[e], below[e]):
            targets = np.nonzero(rel & interesting[e])[0]
            per: dict[int, int] = {}
            for f in targets:
                q = int(decomp.path_of[f])
                i = int(decomp.index_in[f])
                if q not in per or i < per[q]:
                    per[q] = i
            maps.append(per)
        maps[1].pop(int(decomp.path_of[e]), None)
        cross_maps.append(maps[0])
        down_maps.append(maps[1])
    return cross_maps, down_maps


def regs_to_maps(regs, nm1):
    out = [dict() for _ in range(nm1)]
    for s, q, i0 in regs:
        assert q not in out[s], "duplicate registration"
        out[s][int(q)] = int(i0)
    return out


class TestPathDecomposition:
    def test_path_graph_single_path(self):
        g, tree = path_graph(7)
        decomp = path_decomposition(tree)
        assert len(decomp) == 1
        assert decomp.paths[0].size == 6
        assert np.all(decomp.path_of == 0)
        assert list(decomp.index_in[decomp.paths[0]]) == list(range(6))

    def test_star_paths(self):
        g = make_graph(5, [(0, i, 1.0) for i in range(1, 5)])
        tree = build_spanning_tree(g, np.arange(4))
        decomp = path_decomposition(tree)
        assert len(decomp) == 4
        assert all(p.size == 1 for p in decomp.paths)
        # any root-to-leaf walk crosses one edge, hence at most 2 paths
        assert walk_max_paths(tree, decomp) <= 2

    def test_balanced_binary_bound(self):
        n = 15
        edges = [(i, c, 1.0) for i in range(n) for c in (2 * i + 1, 2 * i + 2)
                 if c < n]
        g = make_graph(n, edges)
        tree = build_spanning_tree(g, np.arange(n - 1))
        decomp = path_decomposition(tree)
        assert walk_max_paths(tree, decomp) <= 4

    @pytest.mark.parametrize("seed", range(25))
    def test_random_invariants(self, rng_factory, seed):
        rng = rng_factory(900 + seed)
        n = int(rng.integers(2, 40))
        g = random_graph(rng, n, int(rng.integers(n - 1, 3 * n)))
        tree = pack_trees(g, g.cost, rng, count=1).trees[0]
        decomp = path_decomposition(tree)
        seen = np.concatenate(decomp.paths)
        assert sorted(seen.tolist()) == list(range(n - 1))
        for pid, path in enumerate(decomp.paths):
            assert np.all(decomp.path_of[path] == pid)
            assert np.all(decomp.index_in[path] == np.arange(path.size))
            for a, b in zip(path[:-1], path[1:]):
                assert tree.lower[a] == tree.parent[tree.lower[b]]
            got = decomp.flat[decomp.start[pid]:decomp.start[pid + 1]]
            assert np.array_equal(got, path)
        bound = math.ceil(math.log2(n)) + 1 if n > 1 else 1
        assert walk_max_paths(tree, decomp) <= bound


def walk_max_paths(tree, decomp) -> int:
    pos_by_lower = {int(v): i for i, v in enumerate(tree.lower)}
    worst = 0
    for leaf in range(tree.n):
        if leaf in set(tree.parent[1:].tolist()) or leaf == 0:
            continue
        met = set()
        v = leaf
        while v != 0:
            met.add(int(decomp.path_of[pos_by_lower[v]]))
            v = int(tree.parent[v])
        worst = max(worst, len(met))
    return worst


class TestInteractionWeights:
    def test_cycle_subtree_weight(self):
        g = cycle_graph(5)
        tree = build_spanning_tree(g, np.arange(4))
        oracle = CutOracle(g, tree, unit_state(g))
        for e in tree.edge_ids:
            assert subtree_weight(oracle, int(e)) == pytest.approx(2.0)

    def test_star_leaves_share_nothing(self):
        g = make_graph(4, [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)])
        tree = build_spanning_tree(g, np.arange(3))
        oracle = CutOracle(g, tree, unit_state(g))
        e, f = int(tree.edge_ids[0]), int(tree.edge_ids[1])
        assert cross_weight(oracle, e, f) == pytest.approx(0.0)

    @pytest.mark.parametrize("seed", range(15))
    def test_matches_crossing_overlap(self, rng_factory, seed):
        rng = rng_factory(910 + seed)
        g, tree, state = wired(rng)
        oracle = CutOracle(g, tree, state)
        crossing = tree_cut_crossing(g, tree)
        overlap = (crossing * state.v) @ crossing.T
        unrelated, below = interval_relations(tree)
        ids = tree.edge_ids
        for a in range(g.n - 1):
            for b in range(g.n - 1):
                if unrelated[a, b]:
                    got = cross_weight(oracle, int(ids[a]), int(ids[b]))
                elif below[a, b]:
                    got = down_weight(oracle, int(ids[a]), int(ids[b]))
                else:
                    continue
                assert got == pytest.approx(overlap[a, b], rel=1e-11,
                                            abs=1e-12)

    def test_relation_errors(self):
        g = five_cycle_mixed_costs()
        tree = build_spanning_tree(g, np.array([0, 1, 2, 3]))
        oracle = CutOracle(g, tree, unit_state(g))
        ids = [int(e) for e in tree.edge_ids]
        # the spanning path is one nested chain: no unrelated pairs
        with pytest.raises(ValueError):
            cross_weight(oracle, ids[0], ids[1])
        with pytest.raises(ValueError):
            down_weight(oracle, ids[1], ids[0])  # wrong nesting order
        with pytest.raises(ValueError):
            down_weight(oracle, ids[0], ids[0])
        assert oracle.edge_pos[4] == -1  # the chord is not a tree edge
        with pytest.raises(ValueError):
            cross_weight(oracle, 4, ids[0])


class TestInterestDescents:
    @pytest.mark.parametrize("seed", range(40))
    def test_matches_bruteforce(self, rng_factory, seed):
        rng = rng_factory(920 + seed)
        g, tree, state = wired(rng, n_hi=11)
        oracle = CutOracle(g, tree, state)
        decomp = path_decomposition(tree)
        cross_regs, down_regs = _interest_descents(oracle, decomp)
        want_cross, want_down = brute_interest_maps(g, tree, state.v, decomp)
        assert regs_to_maps(cross_regs, g.n - 1) == want_cross
        assert regs_to_maps(down_regs, g.n - 1) == want_down

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_bruteforce_truncated(self, rng_factory, seed):
        rng = rng_factory(940 + seed)
        g = random_k_connected(rng, 2, n_lo=4, n_hi=10)
        tree = pack_trees(g, g.cost, rng, count=1).trees[0]
        state = unit_state(g)
        state.w = rng.uniform(0.2, 4.0, size=g.m)
        oracle = CutOracle(g, tree, state, free_k=2)
        rho = float(np.quantile(state.v, 0.6))
        oracle.set_rho(rho)
        decomp = path_decomposition(tree)
        cross_regs, down_regs = _interest_descents(oracle, decomp)
        u = np.minimum(state.v, rho)
        want_cross, want_down = brute_interest_maps(g, tree, u, decomp)
        assert regs_to_maps(cross_regs, g.n - 1) == want_cross
        assert regs_to_maps(down_regs, g.n - 1) == want_down

    def test_zero_value_edge_interested_in_nothing(self):
        # a bridge of weight 0 shares nothing with anyone
        g = make_graph(4, [(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0),
                           (2, 3, 1.0)])
        tree = pack_trees(g, g.cost, 0, count=1).trees[0]
        state = unit_state(g)
        bridge = 0  # edge (0, 1) is the only edge at vertex 0
        state.w[bridge] = 0.0
        oracle = CutOracle(g, tree, state)
        decomp = path_decomposition(tree)
        cross_regs, down_regs = _interest_descents(oracle, decomp)
        pos = int(oracle.edge_pos[bridge])
        assert all(s != pos for s, _, _ in cross_regs)
        assert all(s != pos for s, _, _ in down_regs)


class TestInterestedPairs:
    @pytest.mark.parametrize("seed", range(25))
    def test_structure(self, rng_factory, seed):
        rng = rng_factory(960 + seed)
        g, tree, state = wired(rng)
        oracle = CutOracle(g, tree, state)
        decomp = path_decomposition(tree)
        pairs = interested_path_pairs(oracle, decomp)
        unrelated, below = interval_relations(tree)
        for p in pairs:
            assert isinstance(p, InterestedPair)
            assert p.rows.size and p.cols.size
            assert np.all(decomp.path_of[p.rows] == p.path_a)
            assert np.all(decomp.path_of[p.cols] == p.path_b)
            ri = decomp.index_in[p.rows]
            ci = decomp.index_in[p.cols]
            assert np.all(np.diff(ci) > 0)
            if p.kind == "cross":
                assert np.all(np.diff(ri) > 0)
                assert np.all(unrelated[np.ix_(p.rows, p.cols)])
            else:
                assert p.kind == "down"
                assert np.all(np.diff(ri) < 0)
                assert np.array_equal(p.cols, decomp.paths[p.path_b])
                assert np.all(below[np.ix_(p.rows, p.cols)])
        total = sum(p.rows.size + p.cols.size for p in pairs)
        assert total <= 6.0 * tree.n * max(1.0, math.log2(tree.n))


def brute_min12_masked(g, tree, u, rho, k):
    """Truncated 1-or-2-edge tree cut minimum, skipping heavy cuts."""
    crossing = tree_cut_crossing(g, tree)
    ut = np.minimum(u, rho)
    heavy = u >= rho
    best = math.inf
    rows = [crossing[i] for i in range(g.n - 1)]
    for i in range(g.n - 1):
        for row in [rows[i]] + [rows[i] ^ rows[j] for j in range(i)]:
            if int(heavy[row].sum()) >= k:
                continue
            best = min(best, float(ut[row].sum()))
    return best


class TestMin12:
    @pytest.mark.parametrize("seed", range(60))
    def test_matches_bruteforce(self, rng_factory, seed):
        rng = rng_factory(980 + seed)
        g, tree, state = wired(rng)
        oracle = CutOracle(g, tree, state)
        cut, val = min_1or2_respecting_cut(oracle)
        want = min_1or2_respecting_cut_bruteforce(g, tree, state.v)[1]
        assert val == pytest.approx(want, rel=1e-9)
        assert oracle.cut_value(cut) == pytest.approx(val, rel=1e-12)

    @pytest.mark.parametrize("seed", range(25))
    def test_masked_truncated(self, rng_factory, seed):
        rng = rng_factory(1010 + seed)
        g = random_k_connected(rng, 2, n_lo=4, n_hi=10)
        tree = pack_trees(g, g.cost, rng, count=1).trees[0]
        state = unit_state(g)
        state.w = rng.uniform(0.2, 4.0, size=g.m)
        oracle = CutOracle(g, tree, state, free_k=2)
        rho = float(np.quantile(state.v, 0.7))
        oracle.set_rho(rho)
        cut, val = min_1or2_respecting_cut(oracle, masked=True)
        want = brute_min12_masked(g, tree, state.v, rho, 2)
        # masked mode only decides against the 2*rho demand: minima at or
        # above it may be pruned away and reported as infinite
        cap = 2.0 * rho
        if want < cap * (1.0 - 1e-6):
            assert val == pytest.approx(want, rel=1e-9)
            assert cut is not None
        else:
            assert math.isinf(val) or val >= cap * (1.0 - 1e-6)

    def test_stop_below_early_exit(self, rng_factory):
        rng = rng_factory(1040)
        g, tree, state = wired(rng)
        oracle = CutOracle(g, tree, state)
        want = min_1or2_respecting_cut_bruteforce(g, tree, state.v)[1]
        cut, val = min_1or2_respecting_cut(oracle, stop_below=want * 1.5)
        assert val < want * 1.5
        assert oracle.cut_value(cut) == pytest.approx(val, rel=1e-12)

    def test_medium_instance(self, rng_factory):
        rng = rng_factory(1041)
        g = random_graph(rng, 200, 520)
        tree = pack_trees(g, g.cost, rng, count=1).trees[0]
        state = unit_state(g)
        state.w = rng.uniform(0.2, 4.0, size=g.m)
        oracle = CutOracle(g, tree, state)
        _, val = min_1or2_respecting_cut(oracle)
        want = min_1or2_respecting_cut_bruteforce(g, tree, state.v)[1]
        assert val == pytest.approx(want, rel=1e-9)


def brute_tree_cuts_clear(g, tree, state, threshold, free_k=None, rho=None):
    """Every 1- and 2-edge tree cut is settled at the given threshold."""
    crossing = tree_cut_crossing(g, tree)
    pos = {int(e): i for i, e in enumerate(tree.edge_ids)}
    v = state.v
    for cut in all_tree_cuts(tree):
        row = np.zeros(g.m, dtype=bool)
        for e in cut:
            row ^= crossing[pos[e]]
        if free_k is None:
            if float(v[row].sum()) < threshold * (1.0 - 1e-9):
                return False
        else:
            heavies = int(np.count_nonzero(v[row] >= rho))
            tval = float(np.minimum(v, rho)[row].sum())
            if heavies < free_k and tval < threshold * (1.0 - 1e-9):
                return False
    return True


class TestFocusTree:
    def test_five_cycle_example(self):
        g = cycle_graph(5)
        tree = build_spanning_tree(g, np.arange(4))
        state = unit_state(g)
        state.lam = 2.0
        oracle = CutOracle(g, tree, state)
        rep = focus_tree(oracle, 0.4)
        assert rep.completed
        assert brute_tree_cuts_clear(g, tree, state, 2.8)

    def test_already_clear_is_a_no_op(self):
        g = complete_graph(4)
        tree = pack_trees(g, g.cost, 0, count=1).trees[0]
        state = unit_state(g)
        state.lam = 0.1
        snapshot = state.w.copy()
        rep = focus_tree(CutOracle(g, tree, state), 0.3)
        assert rep.completed
        assert rep.iterations == 0
        assert np.array_equal(state.w, snapshot)

    @pytest.mark.parametrize("seed", range(40))
    def test_random_sweep(self, rng_factory, seed):
        rng = rng_factory(1060 + seed)
        g, tree, state = wired(rng)
        floor = min_1or2_respecting_cut_bruteforce(g, tree, state.v)[1]
        state.lam = 0.7 * floor
        eps = float(rng.uniform(0.05, 0.5))
        # perturbed starting weights void the fresh-weight growth bound
        rep = focus_tree(CutOracle(g, tree, state), eps, check_lemmas=False)
        assert rep.completed
        assert brute_tree_cuts_clear(g, tree, state,
                                     (1.0 + eps) * state.lam)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_sweep_truncated(self, rng_factory, seed):
        rng = rng_factory(1100 + seed)
        k = 2 + seed % 2
        g = random_k_connected(rng, k, n_lo=4, n_hi=9)
        tree = pack_trees(g, g.cost, rng, count=1).trees[0]
        state = DualState.fresh(1.0 / g.cost)
        state.w = rng.uniform(0.5, 2.0, size=g.m)
        eps = 0.3
        state.lam = float(np.min(state.v)) / 4.0
        oracle = CutOracle(g, tree, state, free_k=k)
        rep = focus_tree(oracle, eps, check_lemmas=False)
        assert rep.completed
        rho = (1.0 + eps) * state.lam
        assert brute_tree_cuts_clear(g, tree, state, k * rho,
                                     free_k=k, rho=rho)


class TestEpochs:
    def test_boundary_threshold_clears_without_focusing(self):
        g = complete_graph(3)
        state = unit_state(g)
        state.lam = 1.0
        rep, carry = epoch_algorithm(g, state, 1.0)  # threshold == min cut
        assert rep.cleared and rep.batch == 0
        assert carry is not None and carry.floor == pytest.approx(2.0)

    def test_already_clear_returns_same_carry(self):
        g = complete_graph(3)
        state = unit_state(g)
        state.lam = 0.5
        rep1, carry1 = epoch_algorithm(g, state, 0.5)
        assert rep1.cleared and rep1.batch == 0
        rep2, carry2 = epoch_algorithm(g, state, 0.5, carry=carry1)
        assert rep2.cleared and rep2.batch == 0
        assert carry2 is carry1

    def test_four_cycle_epoch_postcondition(self):
        g = cycle_graph(4)
        state = DualState.fresh(1.0 / (2.0 * g.cost))
        state.lam = 0.9  # threshold 1.17 exceeds the min cut of 1.0
        rep, carry = epoch_algorithm(g, state, 0.3, seed=3)
        assert rep.cleared and rep.batch > 0
        _, vals = cut_values_bruteforce(g, state.v)
        assert float(vals.min()) >= 1.3 * 0.9 * (1.0 - 1e-9)
        assert carry.floor >= 1.3 * 0.9 * (1.0 - 1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_random_epoch_postcondition(self, rng_factory, seed):
        rng = rng_factory(1140 + seed)
        g = random_graph(rng, int(rng.integers(4, 10)), 20)
        state = DualState.fresh(1.0 / (2.0 * g.cost))
        _, vals = cut_values_bruteforce(g, state.v)
        state.lam = float(vals.min()) * float(rng.uniform(0.75, 0.95))
        eps = 0.3
        rep, carry = epoch_algorithm(g, state, eps, seed=seed)
        assert rep.cleared
        _, after = cut_values_bruteforce(g, state.v)
        assert float(after.min()) >= (1 + eps) * state.lam * (1 - 1e-9)

    def test_truncated_epoch_postcondition(self, rng_factory):
        rng = rng_factory(1200)
        g = random_k_connected(rng, 2, n_lo=5, n_hi=9)
        state = DualState.fresh(1.0 / g.cost)
        _, vals = cut_values_bruteforce(g, state.v)
        state.lam = float(vals.min()) / 2.0 / 2.0
        eps = 0.3
        rep, carry = epoch_algorithm(g, state, eps, free_k=2, seed=1)
        assert rep.cleared
        assert carry is None
        rho = (1.0 + eps) * state.lam
        pats, _ = cut_values_bruteforce(g, state.v)
        ut = np.minimum(state.v, rho)
        # patterns put vertex 0 inside and encode v >= 1 at bit v - 1
        side_src = np.where(g.src == 0, 1, (pats[:, None] >> (g.src - 1)) & 1)
        side_dst = np.where(g.dst == 0, 1, (pats[:, None] >> (g.dst - 1)) & 1)
        crossing = side_src != side_dst
        heavies = (crossing & (state.v >= rho)).sum(axis=1)
        tvals = crossing @ ut
        assert np.all((heavies >= 2)
                      | (tvals >= 2 * rho * (1 - 1e-9)))


class TestHeldKarp:
    @pytest.mark.parametrize("build,opt", [
        (lambda: complete_graph(3), 3.0),
        (lambda: cycle_graph(4), 4.0),
        (lambda: complete_graph(4), 4.0),
    ])
    def test_small_envelopes(self, build, opt):
        g = build()
        val, y, res = held_karp(g, 0.05)
        assert res.status == "certificate"
        assert opt * (1 - 1e-9) <= val <= 1.05 * opt * (1 + 1e-9)
        _, cuts = cut_values_bruteforce(g, y)
        assert float(cuts.min()) >= 2.0 * (1.0 - 1e-9)

    def test_mixed_costs_vs_exact(self):
        g = five_cycle_mixed_costs()
        opt = exact_held_karp(g).value_float
        val, y, res = held_karp(g, 0.1, seed=4)
        assert res.status == "certificate"
        assert opt * (1 - 1e-9) <= val <= 1.1 * opt * (1 + 1e-9)
        _, cuts = cut_values_bruteforce(g, y)
        assert float(cuts.min()) >= 2.0 * (1.0 - 1e-9)

    def test_single_edge_closed_form(self):
        g = single_edge_graph(cost=5.0)
        val, y, res = held_karp(g, 0.3)
        assert val == pytest.approx(10.0)
        assert np.allclose(y, [2.0])
        assert res.status == "closed-form"

    def test_deterministic_per_seed(self):
        g = five_cycle_mixed_costs()
        a = held_karp(g, 0.2, seed=7)
        b = held_karp(g, 0.2, seed=7)
        assert a[0] == b[0]
        assert np.array_equal(a[1], b[1])
        assert a[2].epochs == b[2].epochs
        assert a[2].iterations == b[2].iterations

    @pytest.mark.parametrize("seed", range(6))
    def test_random_instances(self, rng_factory, seed):
        rng = rng_factory(1230 + seed)
        g = random_graph(rng, int(rng.integers(4, 11)),
                         int(rng.integers(10, 25)))
        eps = 0.3
        val, y, res = held_karp(g, eps, seed=seed)
        assert res.status == "certificate"
        opt = exact_held_karp(g).value_float
        assert opt * (1 - 1e-9) <= val <= (1 + eps) * opt * (1 + 1e-9)
        _, cuts = cut_values_bruteforce(g, y)
        assert float(cuts.min()) >= 2.0 * (1.0 - 1e-9)

    def test_boxed_backend_solves_strong_variant(self, rng_factory):
        from cutcover.mwu import SolverKnobs, run_solver
        from cutcover.mwu import extract_covering_solution
        from cutcover.reference import exact_kecss_box
        rng = rng_factory(1250)
        g = random_k_connected(rng, 2, n_lo=4, n_hi=8)
        backend = TreeEpochBackend(g, 2, boxed=True, seed=2)
        res = run_solver(backend, SolverKnobs(0.2))
        assert res.status == "certificate"
        y, val = extract_covering_solution(res.w_snapshot, res.lam, g.cost,
                                           free_k=2, v0=backend.v0)
        opt = exact_kecss_box(g, 2).value_float
        assert opt * (1 - 1e-9) <= val <= 1.2 * opt * (1 + 1e-9)
        assert np.all(y <= 1.0 + 1e-9)
        _, cuts = cut_values_bruteforce(g, y)
        assert float(cuts.min()) >= 2.0 * (1.0 - 1e-9)
