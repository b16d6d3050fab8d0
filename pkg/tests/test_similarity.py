import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import ultrasparse as us
from ultrasparse.graph import GraphError

from conftest import pencil_reference, random_graph_and_tree


def full_sparsifier(g):
    t = us.extract_spanning_tree(g, "max-weight")
    s = us.Sparsifier(g, t)
    return s.with_edges(s.missing_edge_ids)


def test_lambda_max_identity():
    g = us.random_connected_graph(25, 30, seed=0)
    lam, iters = us.estimate_lambda_max(g, full_sparsifier(g))
    assert lam == pytest.approx(1.0, abs=1e-9)
    assert iters == 1


def test_lambda_max_triangle(triangle, triangle_path_tree):
    s = us.Sparsifier(triangle, triangle_path_tree)
    lam, iters = us.estimate_lambda_max(triangle, s)
    assert lam == pytest.approx(3.0, rel=0.01)
    assert iters <= 10


def test_lambda_max_never_exceeds_truth():
    for seed in range(6):
        g, t = random_graph_and_tree(40, 50, seed=seed)
        s = us.Sparsifier(g, t)
        lam, _ = us.estimate_lambda_max(g, s, max_iters=10, seed=seed)
        truth = pencil_reference(g, t)[0]
        assert lam <= truth * (1 + 1e-9)


def test_lambda_max_accurate_when_top_separated():
    # tree plus one chord: spectrum {1 + wR, 1, ..., 1}, maximally separated
    for seed in (0, 1, 2):
        g = us.random_connected_graph(35, 1, seed=seed)
        t = us.extract_spanning_tree(g, "max-weight")
        s = us.Sparsifier(g, t)
        truth = pencil_reference(g, t)[0]
        if truth < 1.5:
            continue
        lam, _ = us.estimate_lambda_max(g, s, max_iters=10, seed=seed)
        assert lam == pytest.approx(truth, rel=0.05)


def test_lambda_min_identity():
    g = us.random_connected_graph(20, 15, seed=1)
    assert us.estimate_lambda_min(g, full_sparsifier(g)) == pytest.approx(1.0)


def test_lambda_min_triangle(triangle, triangle_path_tree):
    # degree ratios (2/1, 2/2, 2/1) -> vertex 1 gives 1.0
    s = us.Sparsifier(triangle, triangle_path_tree)
    assert us.estimate_lambda_min(triangle, s) == pytest.approx(1.0)


def test_lambda_min_is_upper_bound():
    for seed in range(8):
        g, t = random_graph_and_tree(45, 60, seed=seed)
        s = us.Sparsifier(g, t)
        est = us.estimate_lambda_min(g, s)
        vals = pencil_reference(g, t)
        truth = vals[vals > 1e-8].min()
        assert est >= truth - 1e-8
        assert est >= 1.0 - 1e-12


def test_similarity_estimate_fields():
    g, t = random_graph_and_tree(30, 40, seed=4)
    est = us.estimate_similarity(g, us.Sparsifier(g, t))
    assert est.lambda_min_est >= 1.0
    assert est.sigma2_est >= 1.0
    assert est.sigma2_est == pytest.approx(
        max(est.lambda_max_est / est.lambda_min_est, 1.0))
    d = est.to_dict()
    assert set(d) == {"lambda_max_est", "lambda_min_est", "sigma2_est", "iterations_used"}


def test_fe_style_estimates_match_table_tolerances():
    # finite-element-like geometric mesh analog of the published validation:
    # lambda_max within 3.5% and lambda_min within 4.4% of the dense truth
    g = us.generate_random_geometric(300, seed=8)
    t = us.extract_spanning_tree(g, "low-stretch-heuristic", seed=8)
    s = us.Sparsifier(g, t)
    vals = pencil_reference(g, t)
    lam_max_true = vals[0]
    lam_min_true = vals[vals > 1e-8].min()
    lam_max_est, iters = us.estimate_lambda_max(g, s, max_iters=10, rel_tol=1e-5, seed=0)
    assert iters <= 10
    assert abs(lam_max_est - lam_max_true) / lam_max_true <= 0.035
    lam_min_est = us.estimate_lambda_min(g, s)
    assert abs(lam_min_est - lam_min_true) / lam_min_true <= 0.044


def test_heat_threshold_examples():
    assert us.heat_threshold(100.0, 1.0, 1000.0, 1) == pytest.approx(1e-3)
    assert us.heat_threshold(10.0, 1.0, 5.0, 2) == 1.0  # target already met
    assert us.heat_threshold(50.0, 1.2, 6000.0, 2) == pytest.approx(1e-10)


def test_heat_threshold_validation():
    with pytest.raises(GraphError):
        us.heat_threshold(0.5, 1.0, 10.0, 2)
    with pytest.raises(GraphError):
        us.heat_threshold(10.0, -1.0, 10.0, 2)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=1.0, max_value=1e4), st.floats(min_value=1.0, max_value=10.0),
       st.floats(min_value=1.0, max_value=1e6), st.integers(min_value=1, max_value=4))
def test_heat_threshold_monotonicity(sigma2, lam_min, lam_max, t):
    base = us.heat_threshold(sigma2, lam_min, lam_max, t)
    assert 0.0 < base <= 1.0
    assert us.heat_threshold(sigma2 * 2, lam_min, lam_max, t) >= base
    assert us.heat_threshold(sigma2, lam_min * 1.5, lam_max, t) >= base
    assert us.heat_threshold(sigma2, lam_min, lam_max * 2, t) <= base


def test_unique_edge_budget_examples():
    assert us.unique_edge_budget(100.0, 10.0) == 19
    assert us.unique_edge_budget(5.0, 10.0) == 0
    assert us.unique_edge_budget(64000.0, 100.0) == 1279


def test_unique_edge_budget_validation():
    with pytest.raises(GraphError):
        us.unique_edge_budget(10.0, 0.0)
