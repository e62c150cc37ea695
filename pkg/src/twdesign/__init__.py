"""Time window design for routes with random travel times.

The package splits into five layers: ``instance`` (networks, covariance
generation, sampling, file IO), ``window_design`` (per-customer window
optimisation, sample-based and distributionally robust), ``routing``
(route encodings, arrival times, budgets), ``solver`` (exact search and
cutting planes), and ``evaluate`` (out-of-sample scoring and sweeps).
"""

from .evaluate import (
    EvalReport,
    evaluate_plan,
    guideline_sweep,
    report_rows,
    simulate_waiting,
    simulate_waiting_unrolled,
    write_report_csv,
)
from .instance import (
    CovGenParams,
    Network,
    SampleSet,
    arc_node_hops,
    covariance_parts,
    generate_covariance,
    load_instance,
    load_samples,
    random_network,
    sample_travel_times,
    save_instance,
    save_samples,
    substream,
)
from .routing import (
    Route,
    arrival_matrix,
    budget_dro,
    budget_saa,
    load_route,
    route_cost_rm,
    route_cost_sm,
    route_to_xy,
    save_route,
    seq_from_x,
    validate_membership,
    write_cost_csv,
)
from .solver import (
    Cut,
    DroModel,
    InfeasibleError,
    SaaModel,
    SearchOptions,
    SolveResult,
    benders_cut,
    branch_and_bound,
    cut_check,
    enumerate_exact,
    oa_cut,
)
from .window_design import (
    DualPair,
    PenaltyConfig,
    SaaWindow,
    WindowPlan,
    brute_force_windows,
    critical_indices,
    design_dro,
    design_fixed_width,
    design_stochastic,
    dro_window,
    gamma_coeffs,
    load_plan,
    penalties_from_beta,
    saa_window,
    save_plan,
    scarf_earliness,
    scarf_tardiness,
)

__version__ = "0.1.0"

__all__ = [
    "CovGenParams",
    "Cut",
    "DroModel",
    "DualPair",
    "EvalReport",
    "InfeasibleError",
    "Network",
    "PenaltyConfig",
    "Route",
    "SaaModel",
    "SaaWindow",
    "SampleSet",
    "SearchOptions",
    "SolveResult",
    "WindowPlan",
    "arc_node_hops",
    "arrival_matrix",
    "benders_cut",
    "branch_and_bound",
    "brute_force_windows",
    "budget_dro",
    "budget_saa",
    "covariance_parts",
    "critical_indices",
    "cut_check",
    "design_dro",
    "design_fixed_width",
    "design_stochastic",
    "dro_window",
    "enumerate_exact",
    "evaluate_plan",
    "gamma_coeffs",
    "generate_covariance",
    "guideline_sweep",
    "load_instance",
    "load_plan",
    "load_route",
    "load_samples",
    "oa_cut",
    "penalties_from_beta",
    "random_network",
    "report_rows",
    "route_cost_rm",
    "route_cost_sm",
    "route_to_xy",
    "saa_window",
    "sample_travel_times",
    "save_instance",
    "save_plan",
    "save_route",
    "save_samples",
    "scarf_earliness",
    "scarf_tardiness",
    "seq_from_x",
    "simulate_waiting",
    "simulate_waiting_unrolled",
    "substream",
    "validate_membership",
    "write_cost_csv",
    "write_report_csv",
]
