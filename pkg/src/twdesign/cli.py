"""Command-line entry point.

Subcommands: gen (write a random instance), design (windows for a given
route), solve (route and windows together), eval (out-of-sample report),
guideline (service-level sweep).  Exit codes: 0 success, 1 bad input,
2 proven infeasibility.  All randomness flows from one --seed, split
into named substreams (covgen, sampling-train, sampling-test), so reruns
are byte-identical; --no-timestamp drops the only non-deterministic
output fields.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .evaluate import evaluate_plan, guideline_sweep, report_rows, write_report_csv
from .instance import (
    CovGenParams,
    load_instance,
    random_network,
    sample_travel_times,
    save_instance,
    substream,
)
from .routing import budget_saa, load_route, route_to_xy, save_route, write_cost_csv
from .solver import (
    DroModel,
    InfeasibleError,
    SaaModel,
    benders_cut,
    branch_and_bound,
    enumerate_exact,
    oa_cut,
)
from .window_design import (
    PenaltyConfig,
    design_dro,
    design_fixed_width,
    design_stochastic,
    load_plan,
    penalties_from_beta,
    save_plan,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; 2 is reserved for
    # infeasibility here, so bad flags exit 1 instead.
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name.replace("-", "_"), None) is None:
            raise ValueError(f"--{name} is required")


def _add_penalty_flags(p):
    p.add_argument("--beta-l", type=float, help="target early-arrival tolerance")
    p.add_argument("--beta-u", type=float, help="target late-arrival tolerance")
    p.add_argument("--a-w", type=float, help="explicit width weight")
    p.add_argument("--a-l", type=float, help="explicit earliness weight")
    p.add_argument("--a-u", type=float, help="explicit tardiness weight")


def _penalties(args, n_customers: int) -> PenaltyConfig:
    explicit = [args.a_w, args.a_l, args.a_u]
    betas = [args.beta_l, args.beta_u]
    if any(v is not None for v in explicit):
        if any(v is not None for v in betas):
            raise ValueError("give either --beta-l/--beta-u or --a-w/--a-l/--a-u, not both")
        if any(v is None for v in explicit):
            raise ValueError("explicit weights need all of --a-w, --a-l, --a-u")
        ones = np.ones(n_customers)
        return PenaltyConfig(args.a_w * ones, args.a_l * ones, args.a_u * ones)
    if any(v is None for v in betas):
        raise ValueError("penalties required: --beta-l and --beta-u (or explicit --a-w/--a-l/--a-u)")
    return penalties_from_beta(args.beta_l, args.beta_u, n_customers)


def build_parser() -> _Parser:
    parser = _Parser(prog="twdesign", description=__doc__)
    parser.add_argument("--config", type=Path, help="JSON file with flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random instance")
    p.add_argument("--customers", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.add_argument("--complete", action="store_true", help="use the complete arc set")
    p.add_argument("--cv-min", type=float, default=0.01)
    p.add_argument("--cv-max", type=float, default=0.2)
    p.add_argument("--neg-flip-prob", type=float, default=0.05)
    p.add_argument("--tb-factor", type=float, default=1.5)
    p.add_argument("--time-budget", type=float, default=None)

    p = sub.add_parser("design", help="design windows for a fixed route")
    p.add_argument("--instance", type=Path)
    p.add_argument("--route", type=Path)
    p.add_argument("--model", choices=("sm", "rm"))
    _add_penalty_flags(p)
    p.add_argument("--q-train", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha2", type=float, default=0.0)
    p.add_argument("--fixed-width", action="store_true", help="shared window width (sm only)")
    p.add_argument("--out", type=Path)
    p.add_argument("--cost-csv", type=Path, default=None)
    p.add_argument("--no-timestamp", action="store_true")

    p = sub.add_parser("solve", help="optimise the route and its windows")
    p.add_argument("--instance", type=Path)
    p.add_argument("--model", choices=("sm", "rm"))
    _add_penalty_flags(p)
    p.add_argument("--q-train", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha1", type=float, default=0.0)
    p.add_argument("--alpha2", type=float, default=0.0)
    p.add_argument("--exact", action="store_true", help="full enumeration instead of branch and bound")
    p.add_argument("--cut-log", type=Path, default=None)
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--threads", type=int, default=1,
                   help="accepted for interface stability; the search is sequential")
    p.add_argument("--no-timestamp", action="store_true")

    p = sub.add_parser("eval", help="score a plan on fresh test draws")
    p.add_argument("--instance", type=Path)
    p.add_argument("--route", type=Path)
    p.add_argument("--plan", type=Path)
    p.add_argument("--q-test", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", default="")
    p.add_argument("--beta-l", type=float, default=None)
    p.add_argument("--beta-u", type=float, default=None)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("guideline", help="sweep service levels across models and seeds")
    p.add_argument("--instance", type=Path)
    p.add_argument("--beta-pair", action="append",
                   metavar="BL,BU", help="repeatable, e.g. --beta-pair 0.05,0.05")
    p.add_argument("--models", default="sm,rm")
    p.add_argument("--seeds", help="comma-separated master seeds")
    p.add_argument("--q-train", type=int, default=1000)
    p.add_argument("--q-test", type=int, default=1000)
    p.add_argument("--alpha1", type=float, default=0.0)
    p.add_argument("--alpha2", type=float, default=0.0)
    p.add_argument("--out", type=Path)
    return parser


def _timestamp_extra(args) -> dict:
    if getattr(args, "no_timestamp", False):
        return {}
    return {"created_at": datetime.now(timezone.utc).isoformat()}


def _cmd_gen(args) -> int:
    _require(args, "customers", "out")
    if args.customers < 1:
        raise ValueError("--customers must be >= 1")
    params = CovGenParams(
        cv_min=args.cv_min,
        cv_max=args.cv_max,
        neg_flip_prob=args.neg_flip_prob,
        seed=substream(args.seed, "covgen"),
    )
    net = random_network(
        args.customers,
        seed=args.seed,
        complete=args.complete,
        cov_params=params,
        tb_factor=args.tb_factor,
        time_budget=args.time_budget,
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_instance(net, args.out)
    print(f"wrote instance with {net.n_customers} customers, {net.n_arcs} arcs to {args.out}")
    return 0


def _cmd_design(args) -> int:
    _require(args, "instance", "route", "model", "out")
    net = load_instance(args.instance)
    route = route_to_xy(load_route(args.route), net)
    pen = _penalties(args, net.n_customers)
    if args.model == "sm":
        if args.q_train < 1:
            raise ValueError("--q-train must be >= 1")
        train = sample_travel_times(net, args.q_train, substream(args.seed, "sampling-train"))
        if args.fixed_width:
            plan = design_fixed_width(route, train, pen)
        else:
            plan, _ = design_stochastic(route, train, pen)
    else:
        if args.fixed_width:
            raise ValueError("--fixed-width applies to the sm model only")
        if args.alpha2 < 0:
            raise ValueError("--alpha2 must be nonnegative")
        plan = design_dro(route, net.mean, net.cov, args.alpha2, pen)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_plan(plan, args.out, extra=_timestamp_extra(args))
    if args.cost_csv is not None:
        write_cost_csv(plan, args.cost_csv)
    print(f"wrote {plan.kind} window plan (total cost {plan.total_cost:.6g}) to {args.out}")
    return 0


def _anchor_hash(anchor: np.ndarray) -> str:
    return hashlib.sha256(anchor.astype(float).tobytes()).hexdigest()[:16]


def _write_cut_log(path, cuts, net) -> None:
    labels = net.arc_labels()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["customer", "anchor_hash", "intercept", "nonzero_coeffs"])
        for cut in cuts:
            nz = ";".join(
                f"{labels[a]}={float(cut.coeffs[a])!r}"
                for a in np.nonzero(np.abs(cut.coeffs) > 1e-15)[0]
            )
            writer.writerow([cut.customer, _anchor_hash(cut.anchor), repr(float(cut.intercept)), nz])


def _cmd_solve(args) -> int:
    _require(args, "instance", "model", "out-dir")
    if args.threads < 1:
        raise ValueError("--threads must be >= 1")
    net = load_instance(args.instance)
    pen = _penalties(args, net.n_customers)
    if args.model == "sm":
        if args.q_train < 1:
            raise ValueError("--q-train must be >= 1")
        train = sample_travel_times(net, args.q_train, substream(args.seed, "sampling-train"))
        model = SaaModel(train)
    else:
        if args.alpha1 < 0:
            raise ValueError("--alpha1 must be nonnegative")
        if args.alpha2 < 0:
            raise ValueError("--alpha2 must be nonnegative")
        train = None
        model = DroModel(args.alpha1, args.alpha2)
    res = enumerate_exact(net, model, pen) if args.exact else branch_and_bound(net, model, pen)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    doc = res.to_json_dict(include_timing=not args.no_timestamp)
    doc.update(_timestamp_extra(args))
    with open(args.out_dir / "solve.json", "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    save_plan(res.plan, args.out_dir / "plan.json", extra=_timestamp_extra(args))
    save_route(res.route.seq, args.out_dir / "route.json")
    if args.cut_log is not None:
        if args.model == "sm":
            cuts = [benders_cut(res.route.y[k - 1], train, pen, k) for k in res.route.customers]
        else:
            cbar = net.cov + args.alpha2 * np.eye(net.n_arcs)
            cuts = [oa_cut(res.route.y[k - 1], cbar, customer=k) for k in res.route.customers]
        _write_cut_log(args.cut_log, cuts, net)
    print(
        f"solved {res.model}: objective {res.objective:.6g}, route {list(res.route.seq)}, "
        f"{res.nodes} nodes, wrote {args.out_dir}"
    )
    return 0


def _cmd_eval(args) -> int:
    _require(args, "instance", "route", "plan", "out")
    if args.q_test < 1:
        raise ValueError("--q-test must be >= 1")
    net = load_instance(args.instance)
    route = route_to_xy(load_route(args.route), net)
    plan = load_plan(args.plan)
    test = sample_travel_times(net, args.q_test, substream(args.seed, "sampling-test"))
    rep = evaluate_plan(route, plan, test)
    rows = report_rows(
        rep,
        model=args.model,
        beta_l="" if args.beta_l is None else args.beta_l,
        beta_u="" if args.beta_u is None else args.beta_u,
        seed=args.seed,
        objective=plan.total_cost,
        budget_used=budget_saa(route.x, test),
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(rows, args.out)
    print(
        f"evaluated plan on {args.q_test} draws: early rate {rep.early_rate:.4f}, "
        f"late rate {rep.late_rate:.4f}, wrote {args.out}"
    )
    return 0


def _cmd_guideline(args) -> int:
    _require(args, "instance", "beta-pair", "seeds", "out")
    net = load_instance(args.instance)
    grid = []
    for pair in args.beta_pair:
        parts = str(pair).split(",")
        if len(parts) != 2:
            raise ValueError(f"--beta-pair expects BL,BU, got {pair!r}")
        grid.append((float(parts[0]), float(parts[1])))
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    seeds = [int(s) for s in str(args.seeds).split(",")]
    if args.q_train < 1 or args.q_test < 1:
        raise ValueError("--q-train and --q-test must be >= 1")
    rows = guideline_sweep(
        net,
        grid,
        models,
        seeds,
        q_train=args.q_train,
        q_test=args.q_test,
        alpha1=args.alpha1,
        alpha2=args.alpha2,
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(rows, args.out)
    print(f"wrote guideline sweep ({len(rows)} rows) to {args.out}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "design": _cmd_design,
    "solve": _cmd_solve,
    "eval": _cmd_eval,
    "guideline": _cmd_guideline,
}

_PATH_KEYS = {"out", "out_dir", "instance", "route", "plan", "cut_log", "cost_csv", "config"}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    # pre-scan --config so its values become subcommand defaults
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    pre_args, _ = pre.parse_known_args(argv)
    if pre_args.config is not None:
        try:
            with open(pre_args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"twdesign: error: --config: {exc}", file=sys.stderr)
            return 1
        if not isinstance(cfg, dict):
            print("twdesign: error: --config: expected a JSON object", file=sys.stderr)
            return 1
        known: set[str] = set()
        subparsers = parser._subparsers._group_actions[0].choices
        for p in subparsers.values():
            known |= {a.dest for a in p._actions}
        unknown = set(cfg) - known
        if unknown:
            print(f"twdesign: error: --config: unknown keys {sorted(unknown)}", file=sys.stderr)
            return 1
        coerced = {
            k: (Path(v) if k in _PATH_KEYS and isinstance(v, str) else v)
            for k, v in cfg.items()
        }
        for p in subparsers.values():
            local = {a.dest for a in p._actions}
            p.set_defaults(**{k: v for k, v in coerced.items() if k in local})
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except InfeasibleError as exc:
        print(f"twdesign: infeasible: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"twdesign: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
