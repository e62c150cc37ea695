"""Service time-window design for a fixed route.

Two window models are implemented, both minimising the same per-customer
cost: a width charge a_w * (u - l), plus penalised expected earliness
a_l * E[(l - tau)+] and expected tardiness a_u * E[(tau - u)+], where tau
is the customer's arrival time.

* The sample-based design replaces the expectations with averages over Q
  scenarios; the minimiser is then a pair of order statistics of the
  arrival samples, and the attached dual multipliers give subgradients of
  the cost in the arrival samples (used to build optimality cuts).
* The moment-robust design replaces each expectation with its worst case
  over all distributions sharing the arrival mean m and variance s^2
  (the Scarf bound); the minimiser is m shifted by explicit multiples of
  the standard deviation.

A third variant restricts all customers to one shared window width and
optimises the width together with the per-customer start times.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

CMP_TOL = 1e-12


@dataclass(eq=False)
class PenaltyConfig:
    """Per-customer cost weights (a_w, a_l, a_u), indexed by customer id - 1.

    All weights lie in (0, 1] and satisfy a_w/a_l + a_w/a_u <= 1, which
    guarantees the window cost cannot be reduced by collapsing or
    inflating the window without bound.
    """

    a_w: np.ndarray
    a_l: np.ndarray
    a_u: np.ndarray

    def __post_init__(self):
        self.a_w = np.atleast_1d(np.asarray(self.a_w, dtype=float)).copy()
        self.a_l = np.atleast_1d(np.asarray(self.a_l, dtype=float)).copy()
        self.a_u = np.atleast_1d(np.asarray(self.a_u, dtype=float)).copy()
        n = self.a_w.size
        if self.a_l.size != n or self.a_u.size != n:
            raise ValueError("penalty arrays must have equal length")
        for name, arr in (("a_w", self.a_w), ("a_l", self.a_l), ("a_u", self.a_u)):
            if np.any(arr <= 0) or np.any(arr > 1 + CMP_TOL):
                raise ValueError(f"{name}: weights must lie in (0, 1]")
        ratio = self.a_w / self.a_l + self.a_w / self.a_u
        if np.any(ratio > 1 + CMP_TOL):
            k = int(np.argmax(ratio)) + 1
            raise ValueError(
                f"penalty weights for customer {k} violate a_w/a_l + a_w/a_u <= 1"
            )
        for arr in (self.a_w, self.a_l, self.a_u):
            arr.setflags(write=False)

    @property
    def n_customers(self) -> int:
        return self.a_w.size

    @property
    def dro_valid(self) -> bool:
        """True when 2 a_w < min(a_l, a_u) everywhere, the domain on which
        the moment-robust design is well posed."""
        return bool(
            np.all(2 * self.a_w < self.a_l) and np.all(2 * self.a_w < self.a_u)
        )

    def for_customer(self, k: int) -> tuple[float, float, float]:
        if not 1 <= k <= self.n_customers:
            raise ValueError(f"customer {k} outside 1..{self.n_customers}")
        return float(self.a_w[k - 1]), float(self.a_l[k - 1]), float(self.a_u[k - 1])

    def scaled(self, lam: float) -> "PenaltyConfig":
        return PenaltyConfig(self.a_w * lam, self.a_l * lam, self.a_u * lam)


def penalties_from_beta(beta_l: float, beta_u: float, n_customers: int) -> PenaltyConfig:
    """Build weights hitting target violation tolerances (beta_l, beta_u).

    The mapping fixes a_w = min(beta_l, beta_u) and a_. = a_w / beta_.,
    so the tolerated early rate a_w/a_l equals beta_l and the tolerated
    late rate a_w/a_u equals beta_u, with every weight still in (0, 1].
    """
    if not (0 < beta_l < 1 and 0 < beta_u < 1) or beta_l + beta_u > 1 + CMP_TOL:
        raise ValueError(
            "infeasible confidence: need beta_l, beta_u > 0 with beta_l + beta_u <= 1"
        )
    a_w = min(beta_l, beta_u)
    ones = np.ones(n_customers)
    return PenaltyConfig(a_w * ones, (a_w / beta_l) * ones, (a_w / beta_u) * ones)


def critical_indices(q: int, a_w: float, a_l: float, a_u: float) -> tuple[int, int]:
    """Order-statistic ranks (P1, P2) of the optimal sample-based window.

    P1 is the smallest rank with a_w <= (P1/q) a_l and P2 the largest
    rank with a_w <= ((q - P2 + 1)/q) a_u; comparisons treat values
    within 1e-12 as equal, resolving toward <=.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    if a_w > a_l + CMP_TOL or a_w > a_u + CMP_TOL:
        raise ValueError("no valid quantile index: a_w must not exceed min(a_l, a_u)")
    p1 = min(q, max(1, math.ceil(q * a_w / a_l)))
    while p1 > 1 and a_w <= (p1 - 1) / q * a_l + CMP_TOL:
        p1 -= 1
    while p1 < q and a_w > p1 / q * a_l + CMP_TOL:
        p1 += 1
    p2 = min(q, max(1, math.floor(q + 1 - q * a_w / a_u)))
    while p2 < q and a_w <= (q - p2) / q * a_u + CMP_TOL:
        p2 += 1
    while p2 > 1 and a_w > (q - p2 + 1) / q * a_u + CMP_TOL:
        p2 -= 1
    if p1 > p2:
        raise ValueError("no valid quantile index: ranks crossed")
    return p1, p2


@dataclass(eq=False)
class SaaWindow:
    """Closed-form sample-based window for one arrival-sample vector.

    ``rho1`` and ``rho2`` are the optimal dual multipliers of the
    earliness and tardiness constraints, in the original sample order.
    Each vector sums to a_w, and the dual objective
    sum_q tau_q (rho2_q - rho1_q) equals ``cost``.
    """

    lower: float
    upper: float
    cost: float
    rho1: np.ndarray
    rho2: np.ndarray
    p1: int
    p2: int


def saa_window(arrivals, a_w: float, a_l: float, a_u: float) -> SaaWindow:
    """Optimal window for one customer given arrival samples.

    Works for any nonnegative combination of scenario travel times, so
    callers may pass arrival costs induced by fractional path variables.
    """
    arr = np.asarray(arrivals, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("arrivals must be a non-empty 1-D array")
    q = arr.size
    p1, p2 = critical_indices(q, a_w, a_l, a_u)
    order = np.argsort(arr, kind="stable")
    srt = arr[order]
    lower = float(srt[p1 - 1])
    upper = float(srt[p2 - 1])
    cost = (
        a_w * (upper - lower)
        + (a_l / q) * float(np.maximum(lower - arr, 0.0).sum())
        + (a_u / q) * float(np.maximum(arr - upper, 0.0).sum())
    )
    rho1_sorted = np.zeros(q)
    rho1_sorted[: p1 - 1] = a_l / q
    rho1_sorted[p1 - 1] = a_w - (p1 - 1) * (a_l / q)
    rho2_sorted = np.zeros(q)
    rho2_sorted[p2:] = a_u / q
    rho2_sorted[p2 - 1] = a_w - (q - p2) * (a_u / q)
    np.clip(rho1_sorted, 0.0, a_l / q, out=rho1_sorted)
    np.clip(rho2_sorted, 0.0, a_u / q, out=rho2_sorted)
    rho1 = np.empty(q)
    rho2 = np.empty(q)
    rho1[order] = rho1_sorted
    rho2[order] = rho2_sorted
    return SaaWindow(lower, upper, float(cost), rho1, rho2, p1, p2)


@dataclass(eq=False)
class DualPair:
    """Optimal duals for one customer, original sample order."""

    customer: int
    rho1: np.ndarray
    rho2: np.ndarray
    p1: int
    p2: int


@dataclass(eq=False)
class WindowPlan:
    """Designed windows for the customers of one route, in visit order."""

    kind: str
    route_seq: tuple[int, ...]
    customers: tuple[int, ...]
    lower: np.ndarray
    upper: np.ndarray
    cost_per_customer: np.ndarray
    total_cost: float
    shared_width: float | None = None
    early_rate: np.ndarray | None = None
    late_rate: np.ndarray | None = None
    clamped: np.ndarray | None = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.cost_per_customer = np.asarray(self.cost_per_customer, dtype=float)
        if np.any(self.upper < self.lower):
            raise ValueError("window plan has upper < lower")
        if np.any(self.lower < 0):
            raise ValueError("window plan has a negative lower bound")

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def window_for(self, k: int) -> tuple[float, float]:
        try:
            pos = self.customers.index(k)
        except ValueError:
            raise ValueError(f"plan has no window for customer {k}") from None
        return float(self.lower[pos]), float(self.upper[pos])

    def to_json_dict(self) -> dict:
        per = []
        for pos, k in enumerate(self.customers):
            entry: dict = {"customer": int(k), "cost": float(self.cost_per_customer[pos])}
            entry["early_rate"] = (
                None if self.early_rate is None else float(self.early_rate[pos])
            )
            entry["late_rate"] = (
                None if self.late_rate is None else float(self.late_rate[pos])
            )
            entry["clamped"] = (
                bool(self.clamped[pos]) if self.clamped is not None else False
            )
            per.append(entry)
        return {
            "route": [int(v) for v in self.route_seq],
            "windows": [
                {"customer": int(k), "lower": float(self.lower[p]), "upper": float(self.upper[p])}
                for p, k in enumerate(self.customers)
            ],
            "shared_width": None if self.shared_width is None else float(self.shared_width),
            "cost": float(self.total_cost),
            "kind": self.kind,
            "per_customer": per,
        }


def save_plan(plan: WindowPlan, path, extra: dict | None = None) -> None:
    doc = plan.to_json_dict()
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_plan(path) -> WindowPlan:
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("route", "windows", "cost"):
        if key not in doc:
            raise ValueError(f"window plan file: missing key {key!r}")
    customers = tuple(int(w["customer"]) for w in doc["windows"])
    lower = np.array([float(w["lower"]) for w in doc["windows"]])
    upper = np.array([float(w["upper"]) for w in doc["windows"]])
    per = doc.get("per_customer") or [{} for _ in customers]
    costs = np.array([float(e.get("cost", 0.0)) for e in per])
    return WindowPlan(
        kind=str(doc.get("kind", "unknown")),
        route_seq=tuple(int(v) for v in doc["route"]),
        customers=customers,
        lower=lower,
        upper=upper,
        cost_per_customer=costs,
        total_cost=float(doc["cost"]),
        shared_width=doc.get("shared_width"),
    )


def design_stochastic(route, samples, pen: PenaltyConfig):
    """Per-customer optimal windows under the sample-average cost.

    Returns the plan together with the optimal duals per customer; the
    duals are what optimality cuts for the routing master problem are
    built from.
    """
    from .routing import arrival_matrix

    arr = arrival_matrix(route, samples.values)
    q = samples.q
    lowers, uppers, costs, early, late = [], [], [], [], []
    duals: dict[int, DualPair] = {}
    for pos, k in enumerate(route.customers):
        a_w, a_l, a_u = pen.for_customer(k)
        win = saa_window(arr[:, pos], a_w, a_l, a_u)
        lowers.append(win.lower)
        uppers.append(win.upper)
        costs.append(win.cost)
        early.append((win.p1 - 1) / q)
        late.append((q - win.p2) / q)
        duals[k] = DualPair(k, win.rho1, win.rho2, win.p1, win.p2)
    plan = WindowPlan(
        kind="saa",
        route_seq=route.seq,
        customers=route.customers,
        lower=np.array(lowers),
        upper=np.array(uppers),
        cost_per_customer=np.array(costs),
        total_cost=float(np.sum(costs)),
        early_rate=np.array(early),
        late_rate=np.array(late),
    )
    return plan, duals


BRUTE_FORCE_MAX_Q = 500


def brute_force_windows(route, samples, pen: PenaltyConfig) -> WindowPlan:
    """Reference design by exhaustive search over sample-valued windows.

    Evaluates the sample-average cost at every pair (l, u) of arrival
    sample values with l <= u, per customer.  Ties are broken by the
    smaller width, then the smaller lower bound.  Quadratic in Q, meant
    as an oracle for small sample sets.
    """
    from .routing import arrival_matrix

    q = samples.q
    if q > BRUTE_FORCE_MAX_Q:
        raise ValueError(f"brute-force design limited to q <= {BRUTE_FORCE_MAX_Q}")
    arr = arrival_matrix(route, samples.values)
    lowers, uppers, costs, early, late = [], [], [], [], []
    for pos, k in enumerate(route.customers):
        a_w, a_l, a_u = pen.for_customer(k)
        col = arr[:, pos]
        values = np.unique(col)
        best = None
        for i, lo in enumerate(values):
            early_sum = float(np.maximum(lo - col, 0.0).sum())
            for up in values[i:]:
                late_sum = float(np.maximum(col - up, 0.0).sum())
                cost = a_w * (up - lo) + (a_l / q) * early_sum + (a_u / q) * late_sum
                key = (cost, up - lo, lo)
                if best is None or key < best:
                    best = key
        cost, width, lo = best
        lowers.append(lo)
        uppers.append(lo + width)
        costs.append(cost)
        early.append(float(np.mean(col < lo)))
        late.append(float(np.mean(col > lo + width)))
    return WindowPlan(
        kind="saa-brute",
        route_seq=route.seq,
        customers=route.customers,
        lower=np.array(lowers),
        upper=np.array(uppers),
        cost_per_customer=np.array(costs),
        total_cost=float(np.sum(costs)),
        early_rate=np.array(early),
        late_rate=np.array(late),
    )


FIXED_WIDTH_MAX_CANDIDATES = 10_000_000


def _inner_fixed_cost(srt, cum, a_l, a_u, q, width):
    """Min over the start time l >= 0 of the earliness/tardiness cost at
    a given width, by scanning the kinks of the piecewise-linear cost."""
    cands = np.concatenate((srt, srt - width, [0.0]))
    cands = np.maximum(cands, 0.0)
    cands = np.unique(cands)
    m1 = np.searchsorted(srt, cands, side="right")
    early = cands * m1 - cum[m1]
    ups = cands + width
    m2 = np.searchsorted(srt, ups, side="right")
    late = (cum[q] - cum[m2]) - ups * (q - m2)
    f = (a_l / q) * early + (a_u / q) * late
    best = int(np.argmin(f))
    return float(f[best]), float(cands[best])


def design_fixed_width(route, samples, pen: PenaltyConfig, a_w_shared: float | None = None) -> WindowPlan:
    """Optimal shared-width windows for all customers of a route.

    Minimises sum_k [a_w w + (a_l^k/q) sum (l_k - tau)+ +
    (a_u^k/q) sum (tau - l_k - w)+] over w >= 0 and l_k >= 0.  For fixed
    w the inner optimum per customer is found exactly on the kinks of
    its cost; the outer objective is convex piecewise linear in w, so an
    exact search over the candidate widths (all nonnegative pairwise
    differences of each customer's arrival samples, plus zero) via
    ternary search on the sorted grid suffices.
    """
    from .routing import arrival_matrix

    if a_w_shared is None:
        if not np.all(pen.a_w == pen.a_w[0]):
            raise ValueError("shared-width design needs a customer-independent a_w")
        a_w_shared = float(pen.a_w[0])
    if a_w_shared <= 0:
        raise ValueError("a_w_shared must be positive")
    arr = arrival_matrix(route, samples.values)
    q = samples.q
    n = len(route.customers)
    raw_count = n * (q * (q + 1)) // 2 + 1
    if raw_count > FIXED_WIDTH_MAX_CANDIDATES:
        raise ValueError(
            "fixed-width candidate set exceeds "
            f"{FIXED_WIDTH_MAX_CANDIDATES}; subsample the scenarios first"
        )
    per_cust = []
    diff_parts = [np.zeros(1)]
    for pos in range(n):
        srt = np.sort(arr[:, pos])
        cum = np.concatenate(([0.0], np.cumsum(srt)))
        per_cust.append((srt, cum))
        diffs = np.subtract.outer(srt, srt).ravel()
        diff_parts.append(diffs[diffs >= 0])
    widths = np.unique(np.concatenate(diff_parts))

    cache: dict[int, float] = {}

    def total_at(idx: int) -> float:
        if idx not in cache:
            w = float(widths[idx])
            total = n * a_w_shared * w
            for pos, k in enumerate(route.customers):
                _, a_l, a_u = pen.for_customer(k)
                srt, cum = per_cust[pos]
                val, _ = _inner_fixed_cost(srt, cum, a_l, a_u, q, w)
                total += val
            cache[idx] = total
        return cache[idx]

    lo, hi = 0, len(widths) - 1
    while hi - lo > 2:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        if total_at(m1) <= total_at(m2):
            hi = m2
        else:
            lo = m1
    best_idx = min(range(lo, hi + 1), key=lambda i: (total_at(i), widths[i]))
    w = float(widths[best_idx])

    lowers, costs, early, late = [], [], [], []
    for pos, k in enumerate(route.customers):
        _, a_l, a_u = pen.for_customer(k)
        srt, cum = per_cust[pos]
        _, l_best = _inner_fixed_cost(srt, cum, a_l, a_u, q, w)
        col = arr[:, pos]
        cost = (
            a_w_shared * w
            + (a_l / q) * float(np.maximum(l_best - col, 0.0).sum())
            + (a_u / q) * float(np.maximum(col - l_best - w, 0.0).sum())
        )
        lowers.append(l_best)
        costs.append(cost)
        early.append(float(np.mean(col < l_best)))
        late.append(float(np.mean(col > l_best + w)))
    lowers = np.array(lowers)
    return WindowPlan(
        kind="saa-fixed",
        route_seq=route.seq,
        customers=route.customers,
        lower=lowers,
        upper=lowers + w,
        cost_per_customer=np.array(costs),
        total_cost=float(np.sum(costs)),
        shared_width=w,
        early_rate=np.array(early),
        late_rate=np.array(late),
    )


# ---------------------------------------------------------------------------
# moment-robust design


def scarf_earliness(lower: float, mean: float, variance: float) -> float:
    """Worst-case E[(l - tau)+] over distributions with the given mean and
    variance (Scarf bound): (d + sqrt(s^2 + d^2)) / 2 with d = l - mean."""
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    d = lower - mean
    return 0.5 * (d + math.sqrt(variance + d * d))


def scarf_tardiness(upper: float, mean: float, variance: float) -> float:
    """Worst-case E[(tau - u)+], mirror image of the earliness bound."""
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    d = mean - upper
    return 0.5 * (d + math.sqrt(variance + d * d))


def _wing(beta: float) -> float:
    """Multiple of the standard deviation a window edge sits away from the
    arrival mean, for the one-sided tolerance ratio beta = a_w / a_side."""
    c = 1.0 - 2.0 * beta
    if abs(c) >= 1.0:
        raise ValueError("coefficient domain: need 0 < a_w/a_side < 1")
    return c / math.sqrt(1.0 - c * c)


def gamma_coeffs(a_w: float, a_l: float, a_u: float) -> tuple[float, float]:
    """Per-sigma cost coefficients of the optimal moment-robust window.

    The minimised worst-case cost for a customer with arrival standard
    deviation sigma is (gamma_l + gamma_u) * sigma with
    gamma_side = sqrt(a_w (a_side - a_w)).  At the closed boundary
    2 a_w = a_side this degenerates to gamma_side = a_side / 2.
    """
    if a_w <= 0 or a_l <= 0 or a_u <= 0:
        raise ValueError("penalty weights must be positive")
    if 2 * a_w > min(a_l, a_u) + CMP_TOL:
        raise ValueError("coefficient domain: need 2*a_w <= min(a_l, a_u)")
    return math.sqrt(a_w * (a_l - a_w)), math.sqrt(a_w * (a_u - a_w))


def dro_window(mean: float, variance: float, a_w: float, a_l: float, a_u: float):
    """Closed-form moment-robust window for one customer.

    Returns (lower, upper, cost, clamped).  The unconstrained optimum is
    mean -/+ sigma * wing(beta_side); a negative lower edge is clamped
    to zero and flagged, with the cost evaluated at the clamped window.
    """
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    sigma = math.sqrt(variance)
    lower = mean - sigma * _wing(a_w / a_l)
    upper = mean + sigma * _wing(a_w / a_u)
    clamped = lower < 0
    if clamped:
        lower = 0.0
    cost = (
        a_w * (upper - lower)
        + a_l * scarf_earliness(lower, mean, variance)
        + a_u * scarf_tardiness(upper, mean, variance)
    )
    return lower, upper, cost, clamped


def design_dro(route, mean, cov, alpha2: float, pen: PenaltyConfig, allow_boundary: bool = False) -> WindowPlan:
    """Moment-robust windows built around each customer's arrival mean.

    The arrival moments come from the prefix of the route: m = mean on
    the path to the customer, s^2 = path variance under cov + alpha2 I
    (the inflation alpha2 guards against covariance estimation error).
    Requires 2 a_w < min(a_l, a_u); the degenerate boundary case
    2 a_w = a_side collapses the corresponding window edge onto the mean
    and is admitted only with ``allow_boundary``.
    """
    if alpha2 < 0:
        raise ValueError("alpha2 must be nonnegative")
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    slack = CMP_TOL if allow_boundary else -CMP_TOL
    if np.any(2 * pen.a_w - pen.a_l > slack) or np.any(2 * pen.a_w - pen.a_u > slack):
        raise ValueError(
            "coefficient domain: moment-robust design needs 2*a_w < min(a_l, a_u)"
            + ("" if allow_boundary else " (strictly)")
        )
    cbar = cov + alpha2 * np.eye(cov.shape[0])
    lowers, uppers, costs, flags = [], [], [], []
    for pos, k in enumerate(route.customers):
        a_w, a_l, a_u = pen.for_customer(k)
        y = route.y[k - 1]
        m = float(mean @ y)
        var = float(y @ cbar @ y)
        var = max(var, 0.0)
        lo, up, cost, clamped = dro_window(m, var, a_w, a_l, a_u)
        lowers.append(lo)
        uppers.append(up)
        costs.append(cost)
        flags.append(clamped)
    return WindowPlan(
        kind="dro",
        route_seq=route.seq,
        customers=route.customers,
        lower=np.array(lowers),
        upper=np.array(uppers),
        cost_per_customer=np.array(costs),
        total_cost=float(np.sum(costs)),
        clamped=np.array(flags, dtype=bool),
    )
