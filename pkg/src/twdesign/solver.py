"""Exact search for the minimum-cost tour and optimality cuts.

The route objective decomposes over customers and each customer's cost
is fixed the moment it is placed (its depot path is a prefix of the
final tour), which makes depth-first search with partial-cost pruning
exact: the accumulated cost of placed customers never overestimates the
finished tour.  Two searches are provided on purpose:

* ``enumerate_exact`` walks every customer permutation and prices each
  complete tour from scratch.  Slow, simple, and used as the reference.
* ``branch_and_bound`` extends partial paths along existing arcs with
  incremental arrival bookkeeping, an admissible budget bound, and
  incumbent pruning.

Both respect the duration budget exactly as defined in ``routing``.

Cut generation for master-problem decompositions is also here: the
sample-average window cost is superdifferentiable in the path variables
through its optimal duals (a generalized Benders cut), and the
moment-robust dispersion term sqrt(y' C y) admits the usual
outer-approximation gradient cut.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .instance import Network, SampleSet
from .routing import (
    Route,
    budget_dro,
    budget_saa,
    route_cost_rm,
    route_cost_sm,
    route_to_xy,
)
from .window_design import (
    PenaltyConfig,
    WindowPlan,
    critical_indices,
    design_dro,
    design_stochastic,
    gamma_coeffs,
    saa_window,
)

BUDGET_PRUNE_SLACK = 1e-9
CUT_CHECK_TOL = 1e-9


class InfeasibleError(RuntimeError):
    """No tour satisfies the arc structure and the duration budget."""

    def __init__(self, message: str, min_budget: float | None = None):
        super().__init__(message)
        self.min_budget = min_budget


@dataclass(frozen=True)
class SaaModel:
    """Sample-average objective and budget over a fixed scenario set."""

    samples: SampleSet


@dataclass(frozen=True)
class DroModel:
    """Moment-robust objective (alpha2 inflates the covariance) and
    dispersion-protected budget (alpha1 weights the budget's variance term)."""

    alpha1: float = 0.0
    alpha2: float = 0.0

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("alpha1 and alpha2 must be nonnegative")


@dataclass(frozen=True)
class SearchOptions:
    initial_seq: tuple[int, ...] | None = None
    prune: bool = True
    greedy_start: bool = True


@dataclass(eq=False)
class SolveResult:
    route: Route
    plan: WindowPlan
    objective: float
    budget_value: float
    budget_limit: float
    nodes: int
    pruned: int
    proof_of_optimality: bool
    wall_time: float
    model: str

    def to_json_dict(self, include_timing: bool = True) -> dict:
        doc = {
            "seq": [int(v) for v in self.route.seq],
            "model": self.model,
            "objective": float(self.objective),
            "budget_value": float(self.budget_value),
            "budget_limit": float(self.budget_limit),
            "nodes": int(self.nodes),
            "pruned": int(self.pruned),
            "proof_of_optimality": bool(self.proof_of_optimality),
        }
        if include_timing:
            doc["wall_time_s"] = float(self.wall_time)
        return doc


def _budget_of(net: Network, model, x) -> float:
    if isinstance(model, SaaModel):
        return budget_saa(x, model.samples)
    return budget_dro(x, net.mean, net.cov, model.alpha1)


def _route_cost(net: Network, model, route: Route, pen: PenaltyConfig) -> float:
    if isinstance(model, SaaModel):
        return route_cost_sm(route, model.samples, pen)
    return route_cost_rm(route, net.mean, net.cov, model.alpha2, pen)


def _final_plan(net: Network, model, route: Route, pen: PenaltyConfig) -> WindowPlan:
    if isinstance(model, SaaModel):
        plan, _ = design_stochastic(route, model.samples, pen)
        return plan
    return design_dro(route, net.mean, net.cov, model.alpha2, pen)


def _check_model(net: Network, model, pen: PenaltyConfig) -> None:
    if pen.n_customers != net.n_customers:
        raise ValueError("penalty config does not match the network's customer count")
    if isinstance(model, SaaModel):
        if model.samples.n_arcs != net.n_arcs:
            raise ValueError("sample set does not match the network's arc count")
    elif isinstance(model, DroModel):
        if not pen.dro_valid:
            raise ValueError(
                "coefficient domain: moment-robust model needs 2*a_w < min(a_l, a_u)"
            )
    else:
        raise TypeError(f"unknown model type {type(model).__name__}")


ENUMERATE_MAX_CUSTOMERS = 9


def enumerate_exact(net: Network, model, pen: PenaltyConfig) -> SolveResult:
    """Reference solver: price every feasible customer permutation.

    Ties are broken lexicographically by visit sequence.  Limited to
    nine customers; beyond that use ``branch_and_bound``.
    """
    _check_model(net, model, pen)
    if net.n_customers > ENUMERATE_MAX_CUSTOMERS:
        raise ValueError(f"enumeration limited to {ENUMERATE_MAX_CUSTOMERS} customers")
    start = time.perf_counter()
    arcs = net.arc_index
    best_cost = np.inf
    best_route = None
    min_budget = np.inf
    tours_priced = 0
    for perm in itertools.permutations(net.customers):
        path = (0, *perm, 0)
        if any((path[t], path[t + 1]) not in arcs for t in range(len(path) - 1)):
            continue
        route = route_to_xy(path, net)
        tours_priced += 1
        budget = _budget_of(net, model, route.x)
        min_budget = min(min_budget, budget)
        if budget > net.time_budget:
            continue
        cost = _route_cost(net, model, route, pen)
        if cost < best_cost:
            best_cost = cost
            best_route = route
    if best_route is None:
        if not np.isfinite(min_budget):
            raise InfeasibleError("no feasible tour: network admits no full circuit")
        raise InfeasibleError(
            f"budget infeasible: cheapest tour needs {min_budget:.6g} "
            f"but the budget is {net.time_budget:.6g}",
            min_budget=float(min_budget),
        )
    plan = _final_plan(net, model, best_route, pen)
    return SolveResult(
        route=best_route,
        plan=plan,
        objective=float(best_cost),
        budget_value=_budget_of(net, model, best_route.x),
        budget_limit=net.time_budget,
        nodes=tours_priced,
        pruned=0,
        proof_of_optimality=True,
        wall_time=time.perf_counter() - start,
        model="sm" if isinstance(model, SaaModel) else "rm",
    )


class _SaaContext:
    """Incremental pricing state for the sample-average model."""

    def __init__(self, net: Network, samples: SampleSet, pen: PenaltyConfig):
        self.values = samples.values
        self.q = samples.q
        self.linear = self.values.mean(axis=0)  # per-arc average travel time
        self.pen = pen
        self.ranks = {
            k: critical_indices(self.q, *pen.for_customer(k)) for k in net.customers
        }

    def root_state(self):
        return np.zeros(self.q)

    def extend(self, state, arc: int):
        return state + self.values[:, arc]

    def place_cost(self, state, k: int) -> float:
        a_w, a_l, a_u = self.pen.for_customer(k)
        p1, p2 = self.ranks[k]
        if p1 == p2:
            part = np.partition(state, p1 - 1)
        else:
            part = np.partition(state, (p1 - 1, p2 - 1))
        lo = part[p1 - 1]
        up = part[p2 - 1]
        early = lo * (p1 - 1) - part[: p1 - 1].sum()
        late = part[p2:].sum() - up * (self.q - p2)
        return float(a_w * (up - lo) + (a_l / self.q) * early + (a_u / self.q) * late)


class _DroContext:
    """Incremental pricing state for the moment-robust model."""

    def __init__(self, net: Network, model: DroModel, pen: PenaltyConfig):
        self.cbar = net.cov + model.alpha2 * np.eye(net.n_arcs)
        self.linear = net.mean
        self.gamma = {}
        for k in net.customers:
            g_l, g_u = gamma_coeffs(*pen.for_customer(k))
            self.gamma[k] = g_l + g_u

    def root_state(self):
        # (C y, y' C y) for the current prefix path
        return np.zeros(len(self.linear)), 0.0

    def extend(self, state, arc: int):
        v, quad = state
        new_quad = quad + 2.0 * v[arc] + self.cbar[arc, arc]
        return v + self.cbar[:, arc], new_quad

    def place_cost(self, state, k: int) -> float:
        _, quad = state
        return float(self.gamma[k] * np.sqrt(max(quad, 0.0)))


def _greedy_seq(net: Network, linear: np.ndarray) -> tuple[int, ...] | None:
    """Nearest-neighbour tour by the linear arc cost; None on dead ends."""
    seq = [0]
    visited = {0}
    node = 0
    for _ in range(net.n_customers):
        choices = [
            (linear[a], j, a) for j, a in net.out_arcs[node] if j not in visited
        ]
        if not choices:
            return None
        _, node, _ = min(choices)
        visited.add(node)
        seq.append(node)
    if (node, 0) not in net.arc_index:
        return None
    seq.append(0)
    return tuple(seq)


def _min_budget_tour(net: Network, model, linear: np.ndarray) -> float:
    """Exact minimum tour budget, or inf when no circuit exists.

    Used only to report infeasibility precisely: the returned value is
    what the error message quotes as the cheapest attainable budget.
    Prunes on the admissible linear bound, so it stays fast on the small
    instances where the main search gave up.
    """
    min_in = np.full(net.node_count, np.inf)
    for a, (i, j) in enumerate(net.arcs):
        min_in[j] = min(min_in[j], linear[a])
    best = np.inf
    visited = np.zeros(net.node_count, dtype=bool)
    visited[0] = True
    n_customers = net.n_customers

    def dfs(node: int, depth: int, seq: list[int], acc_linear: float):
        nonlocal best
        if depth == n_customers:
            if (node, 0) not in net.arc_index:
                return
            route = route_to_xy((*seq, 0), net)
            best = min(best, _budget_of(net, model, route.x))
            return
        for j, arc in net.out_arcs[node]:
            if j == 0 or visited[j]:
                continue
            child_linear = acc_linear + linear[arc]
            remaining = [k for k in range(1, net.node_count) if not visited[k] and k != j]
            lb = child_linear + sum(min_in[k] for k in remaining)
            closing_from = remaining if remaining else [j]
            closing = [linear[a] for jj, a in net.in_arcs[0] if jj in closing_from]
            lb += min(closing) if closing else np.inf
            if lb >= best:
                continue
            visited[j] = True
            seq.append(j)
            dfs(j, depth + 1, seq, child_linear)
            seq.pop()
            visited[j] = False

    dfs(0, 0, [0], 0.0)
    return float(best)


def branch_and_bound(
    net: Network, model, pen: PenaltyConfig, options: SearchOptions | None = None
) -> SolveResult:
    """Exact depth-first search over partial visit sequences.

    A placed customer's window cost is final, so the accumulated cost is
    an admissible lower bound and any partial sequence matching or
    exceeding the incumbent can be discarded.  The budget bound adds, to
    the linear part of the partial duration, each unvisited node's
    cheapest incoming arc plus the cheapest closing arc; the dispersion
    part of the robust budget is nonnegative, so the bound stays
    admissible there too.  Single-threaded and fully deterministic:
    children are explored in ascending node order.  Practical up to
    roughly fifteen customers; beyond that the permutation space
    outgrows what incremental pricing can cover.
    """
    _check_model(net, model, pen)
    opts = options or SearchOptions()
    start = time.perf_counter()
    ctx = (
        _SaaContext(net, model.samples, pen)
        if isinstance(model, SaaModel)
        else _DroContext(net, model, pen)
    )
    linear = ctx.linear
    min_in = np.full(net.node_count, np.inf)
    for a, (i, j) in enumerate(net.arcs):
        min_in[j] = min(min_in[j], linear[a])
    tb = net.time_budget

    best_cost = np.inf
    best_seq: tuple[int, ...] | None = None
    min_budget = np.inf

    def consider(seq: tuple[int, ...]) -> None:
        nonlocal best_cost, best_seq, min_budget
        try:
            route = route_to_xy(seq, net)
        except ValueError:
            return
        budget = _budget_of(net, model, route.x)
        min_budget = min(min_budget, budget)
        if budget > tb:
            return
        cost = _route_cost(net, model, route, pen)
        if cost < best_cost:
            best_cost = cost
            best_seq = seq

    if opts.initial_seq is not None:
        consider(tuple(opts.initial_seq))
    if opts.greedy_start and opts.prune:
        greedy = _greedy_seq(net, linear)
        if greedy is not None:
            consider(greedy)

    nodes = 0
    pruned = 0
    n_customers = net.n_customers
    visited = np.zeros(net.node_count, dtype=bool)
    visited[0] = True

    def dfs(node: int, depth: int, seq: list[int], state, acc_cost: float, acc_linear: float):
        nonlocal nodes, pruned, best_cost, best_seq, min_budget
        nodes += 1
        if depth == n_customers:
            arc = net.arc_index.get((node, 0))
            if arc is None:
                return
            route = route_to_xy((*seq, 0), net)
            budget = _budget_of(net, model, route.x)
            min_budget = min(min_budget, budget)
            if budget > tb:
                return
            if acc_cost < best_cost:
                best_cost = acc_cost
                best_seq = tuple(route.seq)
            return
        for j, arc in net.out_arcs[node]:
            if j == 0 or visited[j]:
                continue
            child_linear = acc_linear + linear[arc]
            child_state = ctx.extend(state, arc)
            child_cost = acc_cost + ctx.place_cost(child_state, j)
            if opts.prune:
                if child_cost >= best_cost:
                    pruned += 1
                    continue
                remaining = [k for k in range(1, net.node_count) if not visited[k] and k != j]
                lb = child_linear + sum(min_in[k] for k in remaining)
                if remaining:
                    closing = [
                        linear[a]
                        for jj, a in net.in_arcs[0]
                        if not visited[jj] and jj != j
                    ]
                else:
                    closing = [linear[a] for jj, a in net.in_arcs[0] if jj == j]
                lb += min(closing) if closing else np.inf
                if lb > tb + BUDGET_PRUNE_SLACK:
                    pruned += 1
                    continue
            visited[j] = True
            seq.append(j)
            dfs(j, depth + 1, seq, child_state, child_cost, child_linear)
            seq.pop()
            visited[j] = False

    dfs(0, 0, [0], ctx.root_state(), 0.0, 0.0)

    if best_seq is None:
        # pruning may have discarded every completion before its exact
        # budget was priced, so compute the true cheapest budget now
        min_budget = min(min_budget, _min_budget_tour(net, model, linear))
        if not np.isfinite(min_budget):
            raise InfeasibleError("no feasible tour: network admits no full circuit")
        raise InfeasibleError(
            f"budget infeasible: cheapest tour needs {min_budget:.6g} "
            f"but the budget is {net.time_budget:.6g}",
            min_budget=float(min_budget),
        )
    route = route_to_xy(best_seq, net)
    plan = _final_plan(net, model, route, pen)
    return SolveResult(
        route=route,
        plan=plan,
        objective=float(best_cost),
        budget_value=_budget_of(net, model, route.x),
        budget_limit=tb,
        nodes=nodes,
        pruned=pruned,
        proof_of_optimality=True,
        wall_time=time.perf_counter() - start,
        model="sm" if isinstance(model, SaaModel) else "rm",
    )


# ---------------------------------------------------------------------------
# optimality cuts


@dataclass(eq=False)
class Cut:
    """A supporting inequality value >= intercept + coeffs . (y - anchor)."""

    customer: int
    intercept: float
    coeffs: np.ndarray
    anchor: np.ndarray


def benders_cut(y_hat, samples: SampleSet, pen: PenaltyConfig, customer: int) -> Cut:
    """Generalized Benders cut for one customer's window cost.

    The optimal duals of the window problem at the anchor give exact
    subgradient coefficients s_a = sum_q t_a^q (rho2_q - rho1_q); the
    cut underestimates the cost globally in the path variables.
    Fractional anchors in [0, 1] are fine, the dual closed form only
    needs the induced arrival costs.
    """
    y = np.asarray(y_hat, dtype=float)
    if y.shape != (samples.n_arcs,):
        raise ValueError(f"anchor: expected shape ({samples.n_arcs},), got {y.shape}")
    a_w, a_l, a_u = pen.for_customer(customer)
    arrivals = samples.values @ y
    win = saa_window(arrivals, a_w, a_l, a_u)
    coeffs = samples.values.T @ (win.rho2 - win.rho1)
    return Cut(customer=customer, intercept=win.cost, coeffs=coeffs, anchor=y.copy())


def oa_cut(y_hat, cbar, customer: int = 0) -> Cut:
    """Outer-approximation cut for the dispersion term sqrt(y' C y)."""
    y = np.asarray(y_hat, dtype=float)
    cbar = np.asarray(cbar, dtype=float)
    quad = float(y @ cbar @ y)
    if quad <= 1e-18:
        raise ValueError("singular anchor: y' C y is numerically zero")
    phi = float(np.sqrt(quad))
    coeffs = (cbar @ y) / phi
    return Cut(customer=customer, intercept=phi, coeffs=coeffs, anchor=y.copy())


def cut_check(cut: Cut, y, evaluator) -> bool:
    """True when the cut underestimates ``evaluator`` at y (tolerance 1e-9)."""
    y = np.asarray(y, dtype=float)
    rhs = cut.intercept + float(cut.coeffs @ (y - cut.anchor))
    return bool(evaluator(y) >= rhs - CUT_CHECK_TOL)
