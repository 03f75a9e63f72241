"""Exact rational reference solvers for the small cut covering LPs.

These are test oracles, not the production path. Every optimum is either
certified exactly (float solve followed by a rational reconstruction of
the optimal primal/dual pair, verified in exact arithmetic against every
constraint) or recomputed by a from-scratch rational simplex. Both routes
exist on purpose; tests compare them against each other and never merge
them with the approximate solver's own arithmetic.

Problems handled (all with y >= 0 implicit):
    cut covering      min c.y  s.t.  sum_{e in cut} y_e >= k   for all cuts
    box variant       the above plus y_e <= 1
    knapsack cover    rows sum_{e in cut minus F} y_e >= k - |F|
                      for every cut and every F inside it with |F| < k

Cut enumeration fixes vertex 0 on the inside, so proper cuts are indexed
by bit patterns over vertices 1..n-1 (excluding the all-ones pattern).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from .graph import Graph

MAX_EXACT_N = 14


class InfeasibleError(Exception):
    """The LP has no feasible point."""


@dataclass(frozen=True)
class LPResult:
    value: Fraction            # exact optimum, or a certified upper bound
    y: tuple[Fraction, ...] | None
    method: str
    lo: Fraction | None = None  # certified lower bound (== value if exact)

    @property
    def value_float(self) -> float:
        return float(self.value)

    @property
    def lo_float(self) -> float:
        return float(self.lo if self.lo is not None else self.value)


def cut_rows(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    """All proper-cut constraint rows as a bool matrix (cuts x edges)."""
    if g.n > MAX_EXACT_N:
        raise ValueError(f"exact reference limited to n <= {MAX_EXACT_N}")
    pats = np.arange(2 ** (g.n - 1) - 1, dtype=np.int64)
    side_src = np.where(g.src == 0, 1, (pats[:, None] >> (g.src[None, :] - 1)) & 1)
    side_dst = np.where(g.dst == 0, 1, (pats[:, None] >> (g.dst[None, :] - 1)) & 1)
    return pats, side_src != side_dst


def kc_rows(g: Graph, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Knapsack cover rows: one per (cut, excluded subset F), |F| < k.

    Returns (A, b) with A in {0,1} and b[i] = k - |F_i|. Row counts grow
    combinatorially, so this is gated to small instances.
    """
    if g.n > 8:
        raise ValueError("knapsack cover enumeration limited to n <= 8")
    if k > 4:
        raise ValueError("knapsack cover enumeration limited to k <= 4")
    _, base = cut_rows(g)
    rows: list[np.ndarray] = []
    rhs: list[int] = []
    for crossing in base:
        idx = np.flatnonzero(crossing)
        for fsize in range(min(k, len(idx) + 1)):
            for f in itertools.combinations(idx.tolist(), fsize):
                row = crossing.copy()
                row[list(f)] = False
                rows.append(row)
                rhs.append(k - fsize)
    return np.asarray(rows, dtype=np.int8), np.asarray(rhs, dtype=np.int64)


# ---------------------------------------------------------------------------
# rational linear algebra helpers
# ---------------------------------------------------------------------------

def solve_rational_system(rows: list[list[Fraction]],
                          rhs: list[Fraction],
                          free_values: list[Fraction] | None = None,
                          ) -> list[Fraction] | None:
    """Solve a (possibly non-square) exact linear system.

    Gaussian elimination; non-pivot variables take free_values (zero by
    default). Returns None when the system is inconsistent.
    """
    nrows = len(rows)
    ncols = len(rows[0]) if nrows else 0
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    pivot_cols: list[int] = []
    rank = 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, nrows) if aug[r][col] != 0), None)
        if pivot is None:
            continue
        aug[rank], aug[pivot] = aug[pivot], aug[rank]
        pv = aug[rank][col]
        aug[rank] = [v / pv for v in aug[rank]]
        for r in range(nrows):
            if r != rank and aug[r][col] != 0:
                factor = aug[r][col]
                aug[r] = [v - factor * pv2 for v, pv2 in zip(aug[r], aug[rank])]
        pivot_cols.append(col)
        rank += 1
        if rank == nrows:
            break
    for r in range(rank, nrows):
        if aug[r][ncols] != 0:
            return None
    x = [Fraction(0)] * ncols
    if free_values is not None:
        pivot_set = set(pivot_cols)
        for col in range(ncols):
            if col not in pivot_set:
                x[col] = free_values[col]
    for r, col in enumerate(pivot_cols):
        x[col] = aug[r][ncols] - sum(
            aug[r][j] * x[j] for j in range(ncols)
            if j != col and aug[r][j] != 0)
    return x


def _as_int_vector(vals: list[Fraction]) -> tuple[list[int], int]:
    """Common-denominator form: vals[i] == numerators[i] / denom."""
    denom = 1
    for v in vals:
        denom = denom * v.denominator // math.gcd(denom, v.denominator)
    return [int(v * denom) for v in vals], denom


def _rows_dot_exact(a_int: np.ndarray, x: list[Fraction]) -> tuple[np.ndarray, int]:
    """Exact A @ x for an integer matrix, as (integer numerators, denom)."""
    nums, denom = _as_int_vector(x)
    nums_obj = np.array(nums, dtype=object)
    return a_int.astype(object) @ nums_obj, denom


def _greedy_rank_rows(candidates: np.ndarray, a_int: np.ndarray,
                      cols: np.ndarray) -> np.ndarray:
    """Prefix of candidate rows whose restrictions to cols reach full rank.

    Rows are taken in the given order; a row is kept only if it enlarges
    the span. Used to turn a fat float-derived tight set into a square
    basis candidate for the dual reconstruction.
    """
    target = len(cols)
    reduced: list[tuple[int, list[Fraction]]] = []  # (pivot col, row)
    chosen: list[int] = []
    for i in candidates:
        vec = [Fraction(int(a_int[i, j])) for j in cols]
        for piv, row in reduced:
            if vec[piv] != 0:
                factor = vec[piv] / row[piv]
                vec = [v - factor * r for v, r in zip(vec, row)]
        piv = next((p for p, v in enumerate(vec) if v != 0), None)
        if piv is None:
            continue
        reduced.append((piv, vec))
        chosen.append(int(i))
        if len(chosen) == target:
            break
    return np.asarray(chosen, dtype=np.int64)


# ---------------------------------------------------------------------------
# certified solve: float LP, rational reconstruction, exact verification
# ---------------------------------------------------------------------------

def _reconstruct_primal(a_int: np.ndarray, b: list[Fraction],
                        support: np.ndarray, tight: np.ndarray,
                        y_float: np.ndarray | None = None,
                        ) -> tuple[list[Fraction], np.ndarray] | None:
    """Exact feasible primal from the float support, or None.

    When the tight system is rank deficient the non-pivot variables are
    pinned to rationalized float values, which keeps the solution near
    the solver's point instead of drifting to an infeasible corner of
    the affine solution set. Returns the full-length rational vector and
    the mask of rows it satisfies with equality.
    """
    nrows, ncols = a_int.shape
    sys_rows = [[Fraction(int(a_int[i, j])) for j in support] for i in tight]
    sys_rhs = [b[i] for i in tight]
    pins = None
    if y_float is not None:
        pins = [Fraction(float(y_float[j])).limit_denominator(10 ** 6)
                for j in support]
    y_sup = solve_rational_system(sys_rows, sys_rhs, free_values=pins)
    if y_sup is None:
        return None
    y = [Fraction(0)] * ncols
    for j, val in zip(support, y_sup):
        if val < 0:
            return None
        y[j] = val
    ay, denom_y = _rows_dot_exact(a_int, y)
    tight_exact = np.zeros(nrows, dtype=bool)
    for i in range(nrows):
        rhs = b[i] * denom_y
        if ay[i] < rhs:
            return None
        tight_exact[i] = ay[i] == rhs
    return y, tight_exact


def _certify_from_float(a_int: np.ndarray, b: list[Fraction], c: list[Fraction],
                        y_float: np.ndarray, dual_float: np.ndarray,
                        tol: float) -> LPResult | None:
    nrows, ncols = a_int.shape
    scale_y = max(1.0, float(np.max(y_float, initial=0.0)))
    scale_u = max(1.0, float(np.max(dual_float, initial=0.0)))
    support = np.flatnonzero(y_float > tol * scale_y)
    tight = np.flatnonzero(dual_float > tol * scale_u)
    if len(support) == 0 or len(tight) == 0:
        return None
    # order unknowns by float magnitude so that when the reconstruction
    # system is underdetermined, the variables pinned to zero (the
    # non-pivot trailing ones) are those the float solve already called
    # nearly zero
    support = support[np.argsort(-y_float[support], kind="stable")]
    tight = tight[np.argsort(-dual_float[tight], kind="stable")]

    rec = _reconstruct_primal(a_int, b, support, tight, y_float)
    if rec is None:
        return None
    y, _ = rec

    # dual reconstruction: a square basis candidate first (degenerate
    # solves hand back face-interior duals), then the full tight set
    basis = _greedy_rank_rows(tight, a_int, support)
    for rows in ((basis,) if len(basis) == len(support) else ()) + (tight,):
        dual_sys = [[Fraction(int(a_int[i, j])) for i in rows]
                    for j in support]
        dual_rhs = [c[j] for j in support]
        u_sup = solve_rational_system(dual_sys, dual_rhs)
        if u_sup is None or any(val < 0 for val in u_sup):
            continue
        u = [Fraction(0)] * nrows
        for i, val in zip(rows, u_sup):
            u[i] = val
        atu, denom_u = _rows_dot_exact(a_int.T, u)
        if any(atu[j] > c[j] * denom_u for j in range(ncols)):
            continue
        primal_val = sum(cj * yj for cj, yj in zip(c, y))
        dual_val = sum(b[i] * u[i] for i in rows)
        if primal_val == dual_val:
            return LPResult(value=primal_val, y=tuple(y),
                            method="certified", lo=primal_val)
    return None


def _certify_restricted(a_int: np.ndarray, b: list[Fraction],
                        c: list[Fraction], y_float: np.ndarray,
                        dual_float: np.ndarray) -> LPResult | None:
    """Certify by solving the LP restricted to the tight rows exactly.

    Dropping rows can only lower the optimum; if the restricted exact
    optimum equals the value of an exactly feasible full-problem point,
    that value is the full optimum. Works on degenerate instances where
    no dual vertex can be recovered from the float duals.
    """
    scale_y = max(1.0, float(np.max(y_float, initial=0.0)))
    scale_u = max(1.0, float(np.max(dual_float, initial=0.0)))
    support = np.flatnonzero(y_float > 1e-9 * scale_y)
    tight = np.flatnonzero(dual_float > 1e-9 * scale_u)
    if len(support) == 0 or len(tight) == 0:
        return None
    support = support[np.argsort(-y_float[support], kind="stable")]
    tight = tight[np.argsort(-dual_float[tight], kind="stable")]
    rec = _reconstruct_primal(a_int, b, support, tight, y_float)
    if rec is None:
        return None
    y, tight_exact = rec
    rows = np.flatnonzero(tight_exact | np.isin(
        np.arange(a_int.shape[0]), tight))
    if len(rows) > 1200:
        return None  # degenerate beyond what the small simplex should do
    value = sum(cj * yj for cj, yj in zip(c, y))
    restricted = _rational_simplex_value(a_int[rows], [b[i] for i in rows], c)
    if restricted == value:
        return LPResult(value=value, y=tuple(y), method="restricted",
                        lo=value)
    return None


def _interval_from_float(a_int: np.ndarray, b: list[Fraction],
                         c: list[Fraction], y_float: np.ndarray,
                         dual_float: np.ndarray) -> LPResult | None:
    """Certified enclosure of the optimum from the float solve.

    The float primal is scaled up just enough to be exactly feasible
    (upper bound); the float dual is scaled down just enough to be
    exactly feasible (lower bound). Both scalings are computed and
    verified in rational arithmetic, so the enclosure is rigorous even
    though it is not a single exact value.
    """
    nrows, ncols = a_int.shape
    y = [Fraction(float(max(v, 0.0))) for v in y_float]
    ay, denom_y = _rows_dot_exact(a_int, y)
    worst: Fraction | None = None
    for i in range(nrows):
        if b[i] <= 0:
            if ay[i] < b[i] * denom_y:
                return None  # would need shrinking, not our case
            continue
        if ay[i] <= 0:
            return None
        ratio = Fraction(int(ay[i]), denom_y) / b[i]
        if worst is None or ratio < worst:
            worst = ratio
    if worst is None or worst <= 0:
        return None
    scale_up = max(Fraction(1), 1 / worst)
    hi = scale_up * sum(cj * yj for cj, yj in zip(c, y))

    u = [Fraction(float(max(v, 0.0))) for v in dual_float]
    atu, denom_u = _rows_dot_exact(a_int.T, u)
    worst_d: Fraction | None = None
    for j in range(ncols):
        lhs = Fraction(int(atu[j]), denom_u)
        if lhs <= 0:
            continue
        ratio = c[j] / lhs
        if worst_d is None or ratio < worst_d:
            worst_d = ratio
    scale_down = min(Fraction(1), worst_d) if worst_d is not None else Fraction(1)
    lo = scale_down * sum(bi * ui for bi, ui in zip(b, u))
    if lo <= 0 or hi < lo or hi > lo * Fraction(1_000_001, 1_000_000):
        return None  # enclosure too loose to be useful
    y_scaled = tuple(scale_up * v for v in y)
    return LPResult(value=hi, y=y_scaled, method="interval", lo=lo)


def _rational_simplex_value(a_int: np.ndarray, b: list[Fraction],
                            c: list[Fraction]) -> Fraction:
    """Exact optimum of min c.y, A y >= b, y >= 0 via the dual.

    Maximizes b.u subject to A^T u <= c, u >= 0 with Bland's rule. The
    slack basis is feasible because c > 0, so no phase one is needed. An
    unbounded dual means the primal is infeasible.
    """
    nrows, ncols = a_int.shape
    if any(cj <= 0 for cj in c):
        raise ValueError("rational simplex fallback expects positive costs")
    nvars = nrows + ncols  # duals then slacks
    basis = list(range(nrows, nrows + ncols))
    obj = b + [Fraction(0)] * ncols

    a_obj = a_int.astype(object)

    def column(j: int) -> list[Fraction]:
        if j < nrows:
            return [Fraction(int(v)) for v in a_obj[j, :]]
        col = [Fraction(0)] * ncols
        col[j - nrows] = Fraction(1)
        return col

    for _ in range(200_000):
        bmat = [column(j) for j in basis]  # columns of the basis matrix
        brows = [[bmat[jj][ii] for jj in range(ncols)] for ii in range(ncols)]
        xb = solve_rational_system([row[:] for row in brows], c)
        assert xb is not None
        # simplex multipliers: B^T pi = obj_B
        btrows = [[brows[jj][ii] for jj in range(ncols)] for ii in range(ncols)]
        pi = solve_rational_system(btrows, [obj[j] for j in basis])
        assert pi is not None
        entering = -1
        for j in range(nvars):
            if j in basis:
                continue
            col = column(j)
            reduced = obj[j] - sum(p * v for p, v in zip(pi, col))
            if reduced > 0:
                entering = j
                break
        if entering < 0:
            return sum(o * v for o, v in
                       zip((obj[j] for j in basis), xb))
        direction = solve_rational_system([row[:] for row in brows],
                                          column(entering))
        assert direction is not None
        leave = -1
        best: Fraction | None = None
        for i in range(ncols):
            if direction[i] > 0:
                ratio = xb[i] / direction[i]
                if best is None or ratio < best or (
                        ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave < 0:
            raise InfeasibleError("dual unbounded: primal LP is infeasible")
        basis[leave] = entering
    raise RuntimeError("rational simplex failed to terminate")


def exact_lp(a_matrix: np.ndarray, b_vec, c_vec, *,
             force_simplex: bool = False) -> LPResult:
    """Exact optimum of min c.y subject to A y >= b, y >= 0.

    A must be integer valued (cut indicator rows). b and c may be ints,
    floats, or Fractions; floats convert exactly.
    """
    a_int = np.asarray(a_matrix, dtype=np.int64)
    b = [Fraction(v) for v in b_vec]
    c = [Fraction(v) for v in c_vec]
    if not force_simplex:
        res = linprog(c=[float(v) for v in c],
                      A_ub=-a_int.astype(np.float64),
                      b_ub=[-float(v) for v in b],
                      bounds=(0, None), method="highs")
        if res.status == 2:
            raise InfeasibleError("LP reported infeasible")
        if res.status == 0:
            duals = -np.asarray(res.ineqlin.marginals, dtype=np.float64)
            for tol in (1e-9, 1e-7, 1e-5):
                cert = _certify_from_float(a_int, b, c, np.asarray(res.x),
                                           duals, tol)
                if cert is not None:
                    return cert
            cert = _certify_restricted(a_int, b, c, np.asarray(res.x), duals)
            if cert is not None:
                return cert
            enclosure = _interval_from_float(a_int, b, c, np.asarray(res.x),
                                             duals)
            if enclosure is not None:
                return enclosure
    value = _rational_simplex_value(a_int, b, c)
    return LPResult(value=value, y=None, method="simplex", lo=value)


# ---------------------------------------------------------------------------
# problem-level wrappers with a small memo (acceptance sweeps reuse optima)
# ---------------------------------------------------------------------------

_memo: dict[tuple, LPResult] = {}


def _graph_key(g: Graph) -> tuple:
    return (g.n, g.src.tobytes(), g.dst.tobytes(), g.cost.tobytes())


def exact_cut_cover(g: Graph, k: int, *, force_simplex: bool = False) -> LPResult:
    """Exact optimum of the cut covering LP with requirement k."""
    key = ("cc", k, force_simplex, _graph_key(g))
    if key not in _memo:
        _, a = cut_rows(g)
        _memo[key] = exact_lp(a, [k] * len(a), g.cost,
                              force_simplex=force_simplex)
    return _memo[key]


def exact_held_karp(g: Graph, *, force_simplex: bool = False) -> LPResult:
    """The fractional 2-edge-connectivity bound (cut covering at k = 2)."""
    return exact_cut_cover(g, 2, force_simplex=force_simplex)


def exact_kecss_box(g: Graph, k: int, *, force_simplex: bool = False) -> LPResult:
    """Cut covering at k with the box constraint y <= 1 (as -y >= -1 rows)."""
    key = ("box", k, force_simplex, _graph_key(g))
    if key not in _memo:
        _, a = cut_rows(g)
        eye = np.eye(g.m, dtype=np.int64)
        a_full = np.vstack([a.astype(np.int64), -eye])
        b_full = [k] * len(a) + [-1] * g.m
        _memo[key] = exact_lp(a_full, b_full, g.cost,
                              force_simplex=force_simplex)
    return _memo[key]


def exact_kecss_kc(g: Graph, k: int, *, force_simplex: bool = False) -> LPResult:
    """Cut covering at k with the knapsack cover row family."""
    key = ("kc", k, force_simplex, _graph_key(g))
    if key not in _memo:
        a, b = kc_rows(g, k)
        _memo[key] = exact_lp(a, b, g.cost, force_simplex=force_simplex)
    return _memo[key]
