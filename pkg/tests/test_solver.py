"""Tests for the exact solvers and the optimality cuts."""

import math

import numpy as np
import pytest

from twdesign import (
    DroModel,
    InfeasibleError,
    Network,
    PenaltyConfig,
    SaaModel,
    SampleSet,
    SearchOptions,
    benders_cut,
    branch_and_bound,
    cut_check,
    enumerate_exact,
    oa_cut,
    penalties_from_beta,
    random_network,
    saa_window,
    sample_travel_times,
)


def solve_both(net, model, pen, **kw):
    a = enumerate_exact(net, model, pen)
    b = branch_and_bound(net, model, pen, **kw)
    return a, b


# ---------------------------------------------------------------------------
# search equivalence


def test_bnb_matches_enumeration_sm():
    for seed in range(6):
        for n in (4, 5):
            net = random_network(n, seed=seed, complete=(seed % 2 == 0))
            samples = sample_travel_times(net, 80, seed=seed + 30)
            pen = penalties_from_beta(0.1, 0.1, n)
            a, b = solve_both(net, SaaModel(samples), pen)
            assert b.objective == pytest.approx(a.objective, abs=1e-9), (seed, n)
            assert b.route.seq == a.route.seq
            assert b.budget_value <= net.time_budget
            assert a.proof_of_optimality and b.proof_of_optimality


def test_bnb_matches_enumeration_rm():
    for seed in range(6):
        for n in (4, 5):
            net = random_network(n, seed=seed + 17, complete=(seed % 2 == 1))
            pen = penalties_from_beta(0.05, 0.08, n)
            model = DroModel(alpha1=0.5, alpha2=0.3)
            a, b = solve_both(net, model, pen)
            assert b.objective == pytest.approx(a.objective, abs=1e-9), (seed, n)
            assert b.route.seq == a.route.seq


def test_bnb_unpruned_node_count_complete_graph():
    # without pruning the DFS visits every partial permutation exactly once
    n = 4
    net = random_network(n, seed=1, complete=True)
    samples = sample_travel_times(net, 30, seed=2)
    pen = penalties_from_beta(0.1, 0.1, n)
    res = branch_and_bound(
        net, SaaModel(samples), pen, options=SearchOptions(prune=False, greedy_start=False)
    )
    want = sum(
        math.factorial(n) // math.factorial(n - d) for d in range(n + 1)
    )  # 1 + 4 + 12 + 24 + 24
    assert res.nodes == want == 65
    assert res.pruned == 0


def test_bnb_pruning_only_saves_work():
    net = random_network(5, seed=4, complete=True)
    samples = sample_travel_times(net, 60, seed=5)
    pen = penalties_from_beta(0.1, 0.1, 5)
    fast = branch_and_bound(net, SaaModel(samples), pen)
    slow = branch_and_bound(
        net, SaaModel(samples), pen, options=SearchOptions(prune=False, greedy_start=False)
    )
    assert fast.objective == pytest.approx(slow.objective, abs=1e-12)
    assert fast.route.seq == slow.route.seq
    assert fast.nodes <= slow.nodes
    assert fast.pruned > 0


def test_bnb_accepts_warm_start():
    net = random_network(5, seed=9, complete=True)
    samples = sample_travel_times(net, 60, seed=9)
    pen = penalties_from_beta(0.1, 0.1, 5)
    base = branch_and_bound(net, SaaModel(samples), pen)
    warm = branch_and_bound(
        net,
        SaaModel(samples),
        pen,
        options=SearchOptions(initial_seq=base.route.seq),
    )
    assert warm.objective == pytest.approx(base.objective, abs=1e-12)
    assert warm.route.seq == base.route.seq
    assert warm.nodes <= base.nodes + 1


def test_bnb_deterministic_across_runs():
    net = random_network(6, seed=2, complete=True)
    samples = sample_travel_times(net, 100, seed=3)
    pen = penalties_from_beta(0.05, 0.05, 6)
    a = branch_and_bound(net, SaaModel(samples), pen)
    b = branch_and_bound(net, SaaModel(samples), pen)
    assert a.route.seq == b.route.seq
    assert a.objective == b.objective  # bitwise
    assert (a.nodes, a.pruned) == (b.nodes, b.pruned)


def test_enumeration_customer_limit():
    net = random_network(10, seed=0)
    samples = sample_travel_times(net, 10, seed=0)
    pen = penalties_from_beta(0.1, 0.1, 10)
    with pytest.raises(ValueError, match="enumeration limited to 9"):
        enumerate_exact(net, SaaModel(samples), pen)


def test_model_validation():
    net = random_network(3, seed=0, complete=True)
    samples = sample_travel_times(net, 10, seed=0)
    with pytest.raises(ValueError, match="customer count"):
        enumerate_exact(net, SaaModel(samples), penalties_from_beta(0.1, 0.1, 4))
    other = random_network(4, seed=0, complete=True)
    wrong = sample_travel_times(other, 10, seed=0)
    with pytest.raises(ValueError, match="arc count"):
        enumerate_exact(net, SaaModel(wrong), penalties_from_beta(0.1, 0.1, 3))
    # moment-robust model needs strict coefficient domain
    pen = PenaltyConfig(0.5 * np.ones(3), np.ones(3), np.ones(3))
    with pytest.raises(ValueError, match="coefficient domain"):
        branch_and_bound(net, DroModel(), pen)
    with pytest.raises(TypeError, match="unknown model"):
        enumerate_exact(net, object(), penalties_from_beta(0.1, 0.1, 3))


# ---------------------------------------------------------------------------
# infeasibility


def test_budget_infeasible_reports_cheapest_tour():
    net = random_network(4, seed=6, complete=True, time_budget=1.0)
    samples = sample_travel_times(net, 50, seed=6)
    pen = penalties_from_beta(0.1, 0.1, 4)
    with pytest.raises(InfeasibleError) as e1:
        enumerate_exact(net, SaaModel(samples), pen)
    with pytest.raises(InfeasibleError) as e2:
        branch_and_bound(net, SaaModel(samples), pen)
    # both searches agree on the unreachable cheapest budget
    assert e1.value.min_budget == pytest.approx(e2.value.min_budget, abs=1e-9)
    assert e1.value.min_budget > 1.0
    assert "budget infeasible" in str(e1.value)
    assert f"{e1.value.min_budget:.6g}" in str(e1.value)


def test_no_circuit_network():
    # both customers individually reach the depot and back, but no single
    # tour covers the two of them
    arcs = ((0, 1), (1, 0), (0, 2), (2, 0))
    net = Network(3, arcs, np.ones(4), np.zeros((4, 4)), 100.0)
    samples = sample_travel_times(net, 5, seed=0)
    pen = penalties_from_beta(0.1, 0.1, 2)
    with pytest.raises(InfeasibleError, match="no full circuit"):
        enumerate_exact(net, SaaModel(samples), pen)
    with pytest.raises(InfeasibleError, match="no full circuit"):
        branch_and_bound(net, SaaModel(samples), pen)


def test_dro_budget_infeasibility():
    net = random_network(3, seed=3, complete=True, time_budget=1.0)
    pen = penalties_from_beta(0.05, 0.05, 3)
    with pytest.raises(InfeasibleError) as e1:
        enumerate_exact(net, DroModel(alpha1=2.0), pen)
    with pytest.raises(InfeasibleError) as e2:
        branch_and_bound(net, DroModel(alpha1=2.0), pen)
    assert e1.value.min_budget == pytest.approx(e2.value.min_budget, abs=1e-9)


# ---------------------------------------------------------------------------
# optimality cuts


def test_benders_cut_single_sample_is_trivial():
    net = random_network(2, seed=0, complete=True)
    samples = sample_travel_times(net, 1, seed=0)
    pen = penalties_from_beta(0.2, 0.2, 2)
    y = np.zeros(net.n_arcs)
    y[0] = 1.0
    cut = benders_cut(y, samples, pen, customer=1)
    # a single scenario admits a zero-cost point window, so the cut is flat
    assert cut.intercept == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(cut.coeffs, 0.0, atol=1e-15)


def test_benders_cut_valid_and_tight():
    rng = np.random.default_rng(10)
    net = random_network(3, seed=10, complete=True)
    samples = sample_travel_times(net, 60, seed=11)
    pen = penalties_from_beta(0.1, 0.15, 3)
    a_w, a_l, a_u = pen.for_customer(2)

    def evaluator(y):
        return saa_window(samples.values @ y, a_w, a_l, a_u).cost

    for trial in range(15):
        anchor = rng.uniform(0.0, 1.0, net.n_arcs)
        cut = benders_cut(anchor, samples, pen, customer=2)
        # tight at the anchor
        assert evaluator(anchor) == pytest.approx(cut.intercept, abs=1e-9)
        # valid at random test points, including binary ones
        for _ in range(40):
            y = rng.uniform(0.0, 1.0, net.n_arcs)
            assert cut_check(cut, y, evaluator)
            yb = (rng.uniform(0.0, 1.0, net.n_arcs) < 0.3).astype(float)
            assert cut_check(cut, yb, evaluator)


def test_benders_cut_shape_check():
    net = random_network(2, seed=1, complete=True)
    samples = sample_travel_times(net, 10, seed=1)
    pen = penalties_from_beta(0.1, 0.1, 2)
    with pytest.raises(ValueError, match="anchor: expected shape"):
        benders_cut(np.ones(3), samples, pen, customer=1)


def test_oa_cut_frozen_example():
    cbar = np.array([[4.0, 0.0], [0.0, 9.0]])
    cut = oa_cut(np.array([1.0, 1.0]), cbar)
    assert cut.intercept == pytest.approx(math.sqrt(13.0))
    np.testing.assert_allclose(cut.coeffs, [4 / math.sqrt(13), 9 / math.sqrt(13)], atol=1e-12)


def test_oa_cut_matches_finite_differences():
    rng = np.random.default_rng(4)
    base = rng.uniform(-1.0, 1.0, (5, 5))
    cbar = base @ base.T + 0.5 * np.eye(5)
    y0 = rng.uniform(0.2, 1.0, 5)
    cut = oa_cut(y0, cbar)
    h = 1e-6

    def phi(y):
        return math.sqrt(float(y @ cbar @ y))

    for a in range(5):
        e = np.zeros(5)
        e[a] = h
        fd = (phi(y0 + e) - phi(y0 - e)) / (2 * h)
        assert cut.coeffs[a] == pytest.approx(fd, abs=1e-6)


def test_oa_cut_valid_globally():
    rng = np.random.default_rng(5)
    base = rng.uniform(-1.0, 1.0, (6, 6))
    cbar = base @ base.T + 0.1 * np.eye(6)

    def phi(y):
        return math.sqrt(float(y @ cbar @ y))

    for trial in range(10):
        anchor = rng.uniform(0.1, 1.0, 6)
        cut = oa_cut(anchor, cbar)
        for _ in range(100):
            y = rng.uniform(0.0, 1.0, 6)
            assert cut_check(cut, y, evaluator=phi)


def test_oa_cut_rejects_singular_anchor():
    with pytest.raises(ValueError, match="singular anchor"):
        oa_cut(np.zeros(3), np.eye(3))


def test_cut_check_detects_corruption():
    # inflating the intercept past the tolerance must fail somewhere
    cbar = np.eye(2)
    cut = oa_cut(np.array([1.0, 0.0]), cbar)
    cut.intercept += 1e-6

    def phi(y):
        return math.sqrt(float(y @ cbar @ y))

    assert not cut_check(cut, np.array([1.0, 0.0]), phi)


def test_solve_result_json_shape():
    net = random_network(3, seed=1, complete=True)
    samples = sample_travel_times(net, 20, seed=1)
    pen = penalties_from_beta(0.1, 0.1, 3)
    res = branch_and_bound(net, SaaModel(samples), pen)
    doc = res.to_json_dict()
    assert doc["seq"][0] == 0 and doc["seq"][-1] == 0
    assert doc["model"] == "sm"
    assert "wall_time_s" in doc
    assert "wall_time_s" not in res.to_json_dict(include_timing=False)
