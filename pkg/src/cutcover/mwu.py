"""Width-independent multiplicative-weights engine for cut covering LPs.

The engine solves the packing LP that is dual to a cut covering LP:
columns are cuts (optionally with an excluded heavy-edge set), rows are
edges with capacity 1, and the matrix entry for edge e in column S is
1/(k * cost_e) (plain mode) or 1/((k - |F_S|) * cost_e) restricted to
light edges (free mode). Weights w start at 1 per edge; a column is
"covered" and dropped once its weighted value reaches (1+eps) * lam.

The driver advances lam by (1+eps) whenever an epoch certifies that no
cut remains below the threshold, runs a step-size ladder (coarse eps
first, halving down to a floor derived from the target accuracy), and
stops as soon as an exact weak-duality certificate proves the bound:
p = sum_of_increments / max_congestion is a feasible packing value and
d = sum_weights / lam is a feasible covering value, so any moment with
d <= (1+eps_target) * p sandwiches the optimum.

Only scale-free ratios (w/lam, sums/lam) are ever reported, so weights
may be rescaled by 2^-512 when they grow too large without touching the
congestion or the log-space lemma accumulators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .graph import Graph, cut_values_bruteforce
from .reference import InfeasibleError

RESCALE_LIMIT = 2.0 ** 512
RESCALE_FACTOR = 2.0 ** -512
LN_RESCALE = 512.0 * math.log(2.0)


class BudgetExceeded(RuntimeError):
    """The configured iteration budget was exhausted."""


class LemmaViolation(AssertionError):
    """A runtime-checked analysis invariant failed."""


def eps_floor(eps_target: float) -> float:
    """Finest internal step size: (1+e)/(1-2e) <= 1+eps_target exactly."""
    return eps_target / (3.0 + 2.0 * eps_target)


def eta_budget(m: int, eps: float) -> float:
    """Congestion budget of one phase at step size eps."""
    return math.log(m) / eps


@dataclass
class SolverKnobs:
    """Internal tuning of the driver (CLI maps onto this)."""

    eps_target: float
    eps_internal: float | None = None  # fixed internal eps override
    single_phase: bool = False         # start directly at the floor
    ladder_start: float = 0.3
    budget_iters: int | None = None
    max_floor_phases: int = 6
    check_lemmas: bool = True

    def phase_eps(self, phase_idx: int) -> float:
        if self.eps_internal is not None:
            return self.eps_internal
        floor = eps_floor(self.eps_target)
        if self.single_phase:
            return floor
        return max(floor, self.ladder_start * (0.5 ** phase_idx))


@dataclass
class DualState:
    """Shared mutable state of one solve: weights, congestion, counters."""

    v0: np.ndarray             # per-edge base coefficient
    w: np.ndarray              # multiplicative weights (stored rescaled)
    cong: np.ndarray           # exact accumulated congestion A @ x
    cong_lb: np.ndarray        # per-edge lower-bound accumulator (log space)
    lam: float = 0.0           # current threshold estimate (stored scale)
    scale_exp: int = 0         # number of 2^-512 rescales applied
    sum_g: float = 0.0         # total packing mass added
    ub_exp: float = 0.0        # weight-sum growth bound (log space)
    iterations: int = 0
    epochs: int = 0
    focus_calls: int = 0
    max_batch: int = 0
    last_delta: float = 0.0

    @classmethod
    def fresh(cls, v0: np.ndarray) -> "DualState":
        m = len(v0)
        return cls(v0=np.asarray(v0, dtype=np.float64),
                   w=np.ones(m), cong=np.zeros(m), cong_lb=np.zeros(m))

    @property
    def m(self) -> int:
        return len(self.v0)

    @property
    def v(self) -> np.ndarray:
        """Current per-edge values (stored scale)."""
        return self.w * self.v0

    def sum_w(self) -> float:
        return float(np.sum(self.w))

    def cong_max(self) -> float:
        return float(np.max(self.cong))

    def rescale_if_needed(self) -> bool:
        if float(np.max(self.w)) > RESCALE_LIMIT:
            self.w *= RESCALE_FACTOR
            self.lam *= RESCALE_FACTOR
            self.scale_exp += 1
            return True
        return False

    def clone(self) -> "DualState":
        dup = DualState(v0=self.v0.copy(), w=self.w.copy(),
                        cong=self.cong.copy(), cong_lb=self.cong_lb.copy(),
                        lam=self.lam, scale_exp=self.scale_exp,
                        sum_g=self.sum_g, ub_exp=self.ub_exp,
                        iterations=self.iterations, epochs=self.epochs,
                        focus_calls=self.focus_calls,
                        max_batch=self.max_batch,
                        last_delta=self.last_delta)
        return dup

    # -- runtime-checked analysis invariants ------------------------------

    def check_weight_lemmas(self) -> None:
        ln_sum = math.log(self.sum_w()) + LN_RESCALE * self.scale_exp
        budget = math.log(self.m) + self.ub_exp
        slack = 1e-7 * (1.0 + abs(budget)) + 1e-9 * (1.0 + self.iterations)
        if ln_sum > budget + slack:
            raise LemmaViolation(
                f"weight sum exceeded its growth bound: ln sum {ln_sum} "
                f"> ln(m) + accumulated bound {budget}")
        ln_w = np.log(self.w) + LN_RESCALE * self.scale_exp
        deficit = float(np.max(self.cong_lb - ln_w))
        lb_slack = 1e-7 * (1.0 + float(np.max(self.cong_lb))) \
            + 1e-9 * (1.0 + self.iterations)
        if deficit > lb_slack:
            raise LemmaViolation(
                f"a weight fell below exp((1-eps) * congestion) "
                f"by {deficit}")


def focus_iteration_cap(m: int, eps: float, batch0: int) -> float:
    """Per-call iteration bound for a focus run at step size eps."""
    if m < 2:
        return math.inf
    eta = eta_budget(m, eps)
    inner = max(eta * batch0 / eps, math.e)
    return 8.0 * math.log(m) * math.log(inner) / (eps * eps)


def epoch_phase_cap(m: int, eps: float) -> float:
    """Threshold advances possible within one phase's congestion budget.

    Each edge weight can grow by at most m^((1+eps)/eps) inside a phase,
    so the minimum cut (hence lam) advances at most that factor plus one
    initial slack step; one more unit covers the final iteration
    overshooting the congestion cap.
    """
    if m < 2:
        return math.inf
    return (1.0 + 1.0 / eps) * math.log(m) / math.log1p(eps) + 2.0


@dataclass
class FocusResult:
    x: np.ndarray              # accumulated increment per column
    iterations: int
    dropped: np.ndarray        # bool per column
    completed: bool            # True: all columns dropped; False: cong cap
    last_delta: float


def focus_explicit(state: DualState, membership: np.ndarray, eps: float,
                   cong_cap: float, *, free_k: int | None = None,
                   budget_iters: int | None = None,
                   check_lemmas: bool = True) -> FocusResult:
    """Run the MWU inner loop on an explicit edge-by-column 0/1 matrix.

    Plain mode (free_k None): column value is the sum of member edge
    values, threshold (1+eps)*lam. Free mode (free_k = k): member edges
    at or above rho = (1+eps)*lam are heavy; the column value is the
    rho-truncated sum, the threshold is k*rho, and coefficients are
    v0 / (k - #heavy members) on light members only.

    Always performs at least one iteration (the congestion cap is
    checked after each update). Mutates state in place.
    """
    m, ncols = membership.shape
    assert m == state.m and ncols > 0
    member_f = membership.astype(np.float64)
    lam = state.lam
    state.focus_calls += 1
    state.max_batch = max(state.max_batch, ncols)

    def column_values(v: np.ndarray, rho: float | None) -> np.ndarray:
        if rho is None:
            return v @ member_f
        return np.minimum(v, rho) @ member_f

    def thresholds() -> tuple[float, float | None]:
        if free_k is None:
            return (1.0 + eps) * lam, None
        rho = (1.0 + eps) * lam
        return free_k * rho, rho

    threshold, rho = thresholds()
    v = state.v
    entry_vals = column_values(v, rho)
    if not np.all(entry_vals < threshold):
        raise AssertionError("focus entered with a column already covered")

    alive = np.ones(ncols, dtype=bool)
    x = np.zeros(ncols)

    # first-iteration step: eps / (|B| * max column coefficient)
    if free_k is None:
        col_max_coef = np.max(np.where(membership, state.v0[:, None],
                                       0.0), axis=0)
    else:
        light = v < rho
        heavy_members = ((membership & ~light[:, None])
                         .sum(axis=0, dtype=np.int64))
        resid = free_k - heavy_members
        if np.any(resid < 1):
            raise AssertionError(
                "column with k or more heavy members entered focus")
        light_coef = np.where(membership & light[:, None],
                              state.v0[:, None], 0.0)
        col_max = np.max(light_coef, axis=0)
        if np.any(col_max <= 0.0):
            raise AssertionError("column with no light member entered focus")
        col_max_coef = col_max / resid
    g = eps / (ncols * col_max_coef)

    iterations = 0
    delta = 0.0
    while True:
        # apply the step g on the currently alive columns
        x[alive] += g
        if free_k is None:
            pulled = member_f[:, alive] @ g
            ag = state.v0 * pulled
        else:
            light = state.v < rho
            heavy_members = ((membership[:, alive] & ~light[:, None])
                             .sum(axis=0, dtype=np.int64))
            resid = free_k - heavy_members
            pulled = member_f[:, alive] @ (g / resid)
            ag = np.where(light, state.v0 * pulled, 0.0)
        sum_w_before = state.sum_w()
        state.w *= 1.0 + ag
        state.cong += ag
        state.cong_lb += (1.0 - eps) * ag
        state.ub_exp += (1.0 + eps) * lam * float(np.sum(g)) / sum_w_before
        state.sum_g += float(np.sum(g))
        state.iterations += 1
        iterations += 1
        if budget_iters is not None and state.iterations > budget_iters:
            raise BudgetExceeded(
                f"iteration budget {budget_iters} exhausted")
        if state.rescale_if_needed():
            lam = state.lam
            threshold, rho = thresholds()
        if check_lemmas:
            state.check_weight_lemmas()

        # drop covered columns (exact float comparison, strict < survives)
        v = state.v
        vals_alive = column_values(v, rho)[alive]
        still = vals_alive < threshold
        alive[np.flatnonzero(alive)[~still]] = False
        if not np.any(alive):
            completed = True
            break
        if state.cong_max() >= cong_cap:
            completed = False
            break

        # next step is proportional to the surviving accumulated mass
        if free_k is None:
            pulled_x = member_f[:, alive] @ x[alive]
            ax = state.v0 * pulled_x
        else:
            light = v < rho
            heavy_members = ((membership[:, alive] & ~light[:, None])
                             .sum(axis=0, dtype=np.int64))
            resid = free_k - heavy_members
            pulled_x = member_f[:, alive] @ (x[alive] / resid)
            ax = np.where(light, state.v0 * pulled_x, 0.0)
        ax_max = float(np.max(ax))
        assert ax_max > 0.0
        delta = eps / ax_max
        g = delta * x[alive]

    state.last_delta = delta
    if check_lemmas and iterations > focus_iteration_cap(m, eps, ncols) + 1:
        raise LemmaViolation(
            f"focus used {iterations} iterations, above its cap "
            f"{focus_iteration_cap(m, eps, ncols)}")
    return FocusResult(x=x, iterations=iterations, dropped=~alive,
                       completed=completed, last_delta=delta)


# ---------------------------------------------------------------------------
# epoch backends and the ladder driver
# ---------------------------------------------------------------------------

@dataclass
class EpochReport:
    cleared: bool
    batch: int
    delta: float
    retries: int = 0


class EpochBackend(Protocol):
    """One backend = one way to find and focus the below-threshold cuts."""

    def make_state(self) -> DualState: ...

    def initial_lambda(self, state: DualState, eps0: float) -> float: ...

    def run_epoch(self, state: DualState, eps: float, cong_cap: float,
                  knobs: SolverKnobs) -> EpochReport: ...


@dataclass
class SolveResult:
    bound: float               # certified covering value (scale-free)
    lam: float                 # threshold at the reported snapshot
    w_snapshot: np.ndarray     # weights at the reported snapshot
    scale_exp: int
    state: DualState
    status: str                # "certificate" | "budget-envelope"
    best_p: float
    epochs: int
    iterations: int
    trace: list[dict]


def run_solver(backend: EpochBackend, knobs: SolverKnobs,
               *, collect_trace: bool = False) -> SolveResult:
    """Ladder driver: epochs advance lam, certificate stops the run."""
    state = backend.make_state()
    m = state.m
    assert m >= 2, "single-edge instances are handled in closed form"
    eps0 = knobs.phase_eps(0)
    state.lam = backend.initial_lambda(state, eps0)
    assert state.lam > 0.0

    floor = (knobs.eps_internal if knobs.eps_internal is not None
             else eps_floor(knobs.eps_target))
    phase_idx = 0
    phase_cong_start = 0.0
    phase_epochs = 0
    floor_phases = 0
    best_d = math.inf
    best_p = 0.0
    best_w: np.ndarray | None = None
    best_lam = state.lam
    best_scale = 0
    trace: list[dict] = []
    status = "budget-envelope"

    while True:
        cong_max = state.cong_max()
        if cong_max > 0.0:
            best_p = max(best_p, state.sum_g / cong_max)
        if state.epochs >= 1:
            d = state.sum_w() / state.lam
            if d < best_d:
                best_d = d
                best_w = state.w.copy()
                best_lam = state.lam
                best_scale = state.scale_exp
        if best_p > 0.0 and best_d <= (1.0 + knobs.eps_target) * best_p:
            status = "certificate"
            break

        eps = knobs.phase_eps(phase_idx)
        cong_cap = phase_cong_start + eta_budget(m, eps)
        if cong_max >= cong_cap:
            if phase_epochs > epoch_phase_cap(m, eps):
                raise LemmaViolation(
                    f"phase ran {phase_epochs} epochs, above the cap "
                    f"{epoch_phase_cap(m, eps)}")
            if eps <= floor * (1.0 + 1e-12):
                floor_phases += 1
                if floor_phases >= knobs.max_floor_phases:
                    break  # classical termination: budget envelope
            phase_idx += 1
            phase_cong_start = cong_max
            phase_epochs = 0
            continue

        report = backend.run_epoch(state, eps, cong_cap, knobs)
        if report.cleared:
            state.lam *= 1.0 + eps
            state.epochs += 1
            # zero-batch clears raise the threshold without touching any
            # weight, so the growth-based per-phase cap does not count them
            if report.batch > 0:
                phase_epochs += 1
            if knobs.check_lemmas and phase_epochs > epoch_phase_cap(m, eps):
                raise LemmaViolation(
                    f"phase ran {phase_epochs} epochs, above the cap "
                    f"{epoch_phase_cap(m, eps)}")
        if collect_trace:
            trace.append({
                "epoch": state.epochs,
                "lam": state.lam,
                "batch": report.batch,
                "delta": report.delta,
                "cong_max": state.cong_max(),
                "sum_w": state.sum_w(),
            })

    if best_w is None:  # no epoch ever cleared; fall back to current
        best_w = state.w.copy()
        best_lam = state.lam
        best_scale = state.scale_exp
        best_d = state.sum_w() / state.lam
    return SolveResult(bound=best_d, lam=best_lam, w_snapshot=best_w,
                       scale_exp=best_scale, state=state, status=status,
                       best_p=best_p, epochs=state.epochs,
                       iterations=state.iterations, trace=trace)


def extract_covering_solution(w: np.ndarray, lam: float, cost: np.ndarray,
                              *, free_k: int | None = None,
                              v0: np.ndarray | None = None
                              ) -> tuple[np.ndarray, float]:
    """Map a weight snapshot to a feasible covering vector and its value.

    Plain mode: y_e = w_e / (lam * cost_e); every cut then has value at
    least k because lam is a valid threshold for the normalized values.
    Free mode: y_e = min(v_e, lam) / lam, which lands in [0, 1] and
    satisfies every knapsack cover row.
    """
    if free_k is None:
        y = w / (lam * cost)
    else:
        assert v0 is not None
        y = np.minimum(w * v0, lam) / lam
    return y, float(np.dot(cost, y))


# ---------------------------------------------------------------------------
# explicit brute-force backends (test instruments, n <= ~14)
# ---------------------------------------------------------------------------

class ExplicitCutBackend:
    """Epochs enumerate every proper cut explicitly (independent route)."""

    def __init__(self, g: Graph, k: int):
        self.g = g
        self.k = k
        pats, crossing = _all_cut_membership(g)
        self.patterns = pats
        self.membership = crossing  # (m, ncuts) bool
        self.v0 = 1.0 / (k * g.cost)

    def make_state(self) -> DualState:
        return DualState.fresh(self.v0)

    def initial_lambda(self, state: DualState, eps0: float) -> float:
        vals = state.v @ self.membership.astype(np.float64)
        return float(np.min(vals)) / (1.0 + eps0)

    def run_epoch(self, state: DualState, eps: float, cong_cap: float,
                  knobs: SolverKnobs) -> EpochReport:
        threshold = (1.0 + eps) * state.lam
        vals = state.v @ self.membership.astype(np.float64)
        batch = vals < threshold
        nb = int(np.count_nonzero(batch))
        if nb == 0:
            return EpochReport(cleared=True, batch=0, delta=0.0)
        res = focus_explicit(state, self.membership[:, batch], eps, cong_cap,
                             budget_iters=knobs.budget_iters,
                             check_lemmas=knobs.check_lemmas)
        return EpochReport(cleared=res.completed, batch=nb,
                           delta=res.last_delta)


class ExplicitFreeBackend:
    """Brute-force epochs for the box-constrained variant (free columns)."""

    def __init__(self, g: Graph, k: int):
        self.g = g
        self.k = k
        pats, crossing = _all_cut_membership(g)
        self.patterns = pats
        self.membership = crossing
        card = crossing.sum(axis=0)
        if int(card.min()) < k:
            raise InfeasibleError(
                f"a cut has only {int(card.min())} edges, need {k}")
        self.v0 = 1.0 / g.cost

    def make_state(self) -> DualState:
        return DualState.fresh(self.v0)

    def initial_lambda(self, state: DualState, eps0: float) -> float:
        member_f = self.membership.astype(np.float64)
        v = state.v
        lam = float(np.min(v @ member_f)) / self.k
        while True:
            trunc_vals = np.minimum(v, lam) @ member_f
            if float(np.min(trunc_vals)) >= self.k * lam:
                return lam
            lam *= 0.5

    def run_epoch(self, state: DualState, eps: float, cong_cap: float,
                  knobs: SolverKnobs) -> EpochReport:
        rho = (1.0 + eps) * state.lam
        member_f = self.membership.astype(np.float64)
        vals = np.minimum(state.v, rho) @ member_f
        batch = vals < self.k * rho
        nb = int(np.count_nonzero(batch))
        if nb == 0:
            return EpochReport(cleared=True, batch=0, delta=0.0)
        res = focus_explicit(state, self.membership[:, batch], eps, cong_cap,
                             free_k=self.k,
                             budget_iters=knobs.budget_iters,
                             check_lemmas=knobs.check_lemmas)
        return EpochReport(cleared=res.completed, batch=nb,
                           delta=res.last_delta)


def _all_cut_membership(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    """Edge-by-cut crossing indicators for every proper cut."""
    pats, values = cut_values_bruteforce(g, np.ones(g.m))
    del values
    side_src = np.where(g.src == 0, 1,
                        (pats[:, None] >> (g.src[None, :] - 1)) & 1)
    side_dst = np.where(g.dst == 0, 1,
                        (pats[:, None] >> (g.dst[None, :] - 1)) & 1)
    return pats, (side_src != side_dst).T.copy()


# ---------------------------------------------------------------------------
# closed-form single-edge instances (the LP is trivial there)
# ---------------------------------------------------------------------------

def solve_single_edge(g: Graph, k: int, *, boxed: bool) -> tuple[np.ndarray, float]:
    """Exact answer for m = 1: the lone cut needs y = k (plain) or is
    infeasible past k = 1 when the box applies."""
    assert g.m == 1
    if boxed:
        if k > 1:
            raise InfeasibleError("single edge cannot be made "
                                  f"{k}-edge-connected")
        return np.ones(1), float(g.cost[0])
    return np.full(1, float(k)), float(k * g.cost[0])
