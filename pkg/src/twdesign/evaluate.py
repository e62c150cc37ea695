"""Out-of-sample evaluation, waiting simulation, and parameter sweeps.

Evaluation replays a designed plan against fresh scenario draws and
counts arrivals strictly outside the windows (an arrival exactly on a
window edge is served on time).  The waiting simulation models a driver
who is not allowed to serve before a window opens: departure from each
stop is the later of the arrival and that stop's lower edge.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .instance import Network, SampleSet, sample_travel_times, substream
from .routing import Route, arrival_matrix, budget_dro, budget_saa
from .solver import DroModel, SaaModel, branch_and_bound
from .window_design import PenaltyConfig, WindowPlan, penalties_from_beta

REPORT_COLUMNS = [
    "model",
    "beta_l",
    "beta_u",
    "seed",
    "customer",
    "lower",
    "upper",
    "width",
    "early_rate",
    "late_rate",
    "early_amt",
    "late_amt",
    "objective",
    "budget_used",
]


@dataclass(eq=False)
class EvalReport:
    """Violation statistics of one plan on one test sample set.

    Counts are raw so per-customer rates are exactly count / q_test; the
    amount fields hold the mean earliness (lateness) over the violating
    scenarios of each customer, zero when there are none.
    """

    customers: tuple[int, ...]
    lower: np.ndarray
    upper: np.ndarray
    early_count: np.ndarray
    late_count: np.ndarray
    early_amount_mean: np.ndarray
    late_amount_mean: np.ndarray
    window_length: np.ndarray
    q_test: int
    seed: int | None
    early_rate: float
    late_rate: float
    mean_length: float
    total_violation_amount: float


def evaluate_plan(route: Route, plan: WindowPlan, test_samples: SampleSet) -> EvalReport:
    """Score a window plan on scenarios it was not designed against."""
    missing = [k for k in route.customers if k not in plan.customers]
    if missing:
        raise ValueError(f"plan has no window for customer {missing[0]}")
    arr = arrival_matrix(route, test_samples.values)
    q = test_samples.q
    n = len(route.customers)
    lower = np.empty(n)
    upper = np.empty(n)
    for pos, k in enumerate(route.customers):
        lower[pos], upper[pos] = plan.window_for(k)
    early_mask = arr < lower
    late_mask = arr > upper
    early_count = early_mask.sum(axis=0)
    late_count = late_mask.sum(axis=0)
    early_gap = np.where(early_mask, lower - arr, 0.0)
    late_gap = np.where(late_mask, arr - upper, 0.0)
    with np.errstate(invalid="ignore"):
        early_amount = np.where(early_count > 0, early_gap.sum(axis=0) / np.maximum(early_count, 1), 0.0)
        late_amount = np.where(late_count > 0, late_gap.sum(axis=0) / np.maximum(late_count, 1), 0.0)
    return EvalReport(
        customers=route.customers,
        lower=lower,
        upper=upper,
        early_count=early_count.astype(int),
        late_count=late_count.astype(int),
        early_amount_mean=early_amount,
        late_amount_mean=late_amount,
        window_length=upper - lower,
        q_test=q,
        seed=test_samples.seed,
        early_rate=float(early_count.sum() / (n * q)),
        late_rate=float(late_count.sum() / (n * q)),
        mean_length=float(np.mean(upper - lower)),
        total_violation_amount=float(early_gap.sum() + late_gap.sum()),
    )


def simulate_waiting(route: Route, lowers: Mapping[int, float], samples: SampleSet) -> np.ndarray:
    """Service start times under a wait-if-early policy.

    Returns a (q, n) matrix of start times in visit order, computed by
    the forward recursion T_k = max(T_prev + travel, lower_k) with the
    depot released at time zero.
    """
    for k in route.customers:
        if k not in lowers:
            raise ValueError(f"lower bound missing for customer {k}")
    t = samples.values
    q = samples.q
    out = np.empty((q, len(route.customers)))
    cur = np.zeros(q)
    for pos, k in enumerate(route.customers):
        cur = np.maximum(cur + t[:, route.path_arcs[pos]], lowers[k])
        out[:, pos] = cur
    return out


def simulate_waiting_unrolled(route: Route, lowers: Mapping[int, float], samples: SampleSet) -> np.ndarray:
    """Reference for the waiting recursion, written as the explicit max.

    The start time at stop p is the best over all release points r <= p
    of (release time at r) plus the travel on arcs r..p, accumulated
    left to right.  Interchanging max with the monotone additions keeps
    this bit-identical to the recursion; any mismatch is a bug.
    """
    for k in route.customers:
        if k not in lowers:
            raise ValueError(f"lower bound missing for customer {k}")
    t = samples.values
    q = samples.q
    n = len(route.customers)
    arcs = route.path_arcs
    out = np.empty((q, n))
    for s in range(q):
        for pos in range(n):
            acc = 0.0
            for tpos in range(pos + 1):
                acc = acc + t[s, arcs[tpos]]
            best = acc
            for r in range(pos + 1):
                accr = float(lowers[route.customers[r]])
                for tpos in range(r + 1, pos + 1):
                    accr = accr + t[s, arcs[tpos]]
                if accr > best:
                    best = accr
            out[s, pos] = best
    return out


def guideline_sweep(
    net: Network,
    beta_grid,
    models,
    seeds,
    q_train: int = 1000,
    q_test: int = 1000,
    alpha1: float = 0.0,
    alpha2: float = 0.0,
) -> list[dict]:
    """Grid evaluation used to pick service-level targets.

    For each (model, beta pair, seed) cell: draw training scenarios,
    solve for the route and windows, draw fresh test scenarios, and
    score.  Each seed splits into independent named substreams for the
    training and test draws.  Rows come back sorted by
    (model, beta_l, beta_u, seed).
    """
    rows = []
    for model_name in models:
        if model_name not in ("sm", "rm"):
            raise ValueError(f"unknown model {model_name!r}; expected 'sm' or 'rm'")
        for beta_l, beta_u in beta_grid:
            pen = penalties_from_beta(beta_l, beta_u, net.n_customers)
            for seed in seeds:
                train = sample_travel_times(net, q_train, substream(seed, "sampling-train"))
                test = sample_travel_times(net, q_test, substream(seed, "sampling-test"))
                if model_name == "sm":
                    res = branch_and_bound(net, SaaModel(train), pen)
                    budget_used = budget_saa(res.route.x, train)
                else:
                    res = branch_and_bound(net, DroModel(alpha1, alpha2), pen)
                    budget_used = budget_dro(res.route.x, net.mean, net.cov, alpha1)
                rep = evaluate_plan(res.route, res.plan, test)
                rows.append(
                    {
                        "model": model_name,
                        "beta_l": beta_l,
                        "beta_u": beta_u,
                        "seed": seed,
                        "width": rep.mean_length,
                        "early_rate": rep.early_rate,
                        "late_rate": rep.late_rate,
                        "objective": res.objective,
                        "budget_used": budget_used,
                    }
                )
    rows.sort(key=lambda r: (r["model"], r["beta_l"], r["beta_u"], r["seed"]))
    return rows


def report_rows(
    report: EvalReport,
    model: str = "",
    beta_l="",
    beta_u="",
    seed="",
    objective="",
    budget_used="",
) -> list[dict]:
    """Flatten an evaluation into report-CSV rows, one per customer plus
    one aggregate row with an empty customer field."""
    rows = []
    q = report.q_test
    for pos, k in enumerate(report.customers):
        rows.append(
            {
                "model": model,
                "beta_l": beta_l,
                "beta_u": beta_u,
                "seed": seed,
                "customer": int(k),
                "lower": float(report.lower[pos]),
                "upper": float(report.upper[pos]),
                "width": float(report.window_length[pos]),
                "early_rate": report.early_count[pos] / q,
                "late_rate": report.late_count[pos] / q,
                "early_amt": float(report.early_amount_mean[pos]),
                "late_amt": float(report.late_amount_mean[pos]),
                "objective": "",
                "budget_used": "",
            }
        )
    rows.append(
        {
            "model": model,
            "beta_l": beta_l,
            "beta_u": beta_u,
            "seed": seed,
            "customer": "",
            "lower": "",
            "upper": "",
            "width": float(report.mean_length),
            "early_rate": report.early_rate,
            "late_rate": report.late_rate,
            "early_amt": "",
            "late_amt": "",
            "objective": objective,
            "budget_used": budget_used,
        }
    )
    return rows


def write_report_csv(rows, path) -> None:
    """Write rows in the fixed report column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, restval="", extrasaction="raise")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
