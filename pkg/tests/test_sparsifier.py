import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import ultrasparse as us
from ultrasparse.graph import GraphError
from ultrasparse.sparsifier import LaplacianFactorization

from conftest import pencil_reference, random_graph_and_tree


def test_factorization_pure_tree_matches_tree_solve():
    g, t = random_graph_and_tree(60, 0, seed=0)
    s = us.Sparsifier(g, t)
    rng = np.random.default_rng(0)
    b = rng.standard_normal(g.n)
    assert np.allclose(s.solve(b), us.tree_solve(t, b), atol=1e-12)


def test_factorization_full_triangle_residual(triangle, triangle_path_tree):
    s = us.Sparsifier(triangle, triangle_path_tree, [2])
    b = np.array([2.0, -0.5, -1.5])
    x = s.solve(b)
    res = us.laplacian_apply(triangle, x) - (b - b.mean())
    assert np.linalg.norm(res) <= 1e-12 * np.linalg.norm(b)


def test_woodbury_and_sparse_lu_agree():
    for seed in (0, 3):
        g, t = random_graph_and_tree(50, 40, seed=seed)
        off = us.Sparsifier(g, t).missing_edge_ids[:20]
        wood = us.Sparsifier(g, t, off, woodbury_max=64)
        lu = us.Sparsifier(g, t, off, woodbury_max=0)
        assert wood.factorization.kind == "tree+woodbury"
        assert lu.factorization.kind == "sparse-lu"
        b = np.random.default_rng(seed).standard_normal(g.n)
        assert np.allclose(wood.solve(b), lu.solve(b), atol=1e-10)


def test_factorization_residual_bound():
    for seed in (1, 4):
        g, t = random_graph_and_tree(120, 150, seed=seed)
        s = us.Sparsifier(g, t)
        s = s.with_edges(s.missing_edge_ids[:80])  # forces sparse-lu
        pg = s.as_graph()
        rng = np.random.default_rng(seed)
        b = rng.standard_normal(g.n)
        bp = b - b.mean()
        x = s.solve(b)
        assert np.linalg.norm(us.laplacian_apply(pg, x) - bp) <= 1e-12 * np.linalg.norm(bp)


def test_factorization_sdd_no_projection():
    sw = np.zeros(40)
    sw[7] = 1.5
    base = us.random_connected_graph(40, 30, seed=2)
    g = us.WeightedGraph.from_edges(40, (base.edge_p, base.edge_q, base.edge_w),
                                    self_weights=sw)
    t = us.extract_spanning_tree(g, "max-weight")
    s = us.Sparsifier(g, t, us.Sparsifier(g, t).missing_edge_ids[:5])
    b = np.random.default_rng(3).standard_normal(40)
    x = s.solve(b)
    pg = s.as_graph()
    assert np.linalg.norm(us.laplacian_apply(pg, x) - b) <= 1e-12 * np.linalg.norm(b)


def test_fill_in_stays_bounded_on_mesh():
    g = us.generate_grid(100, 100)
    t = us.extract_spanning_tree(g, "low-stretch-heuristic", seed=1)
    s = us.Sparsifier(g, t)
    off = s.missing_edge_ids[:: max(1, s.missing_edge_ids.size // 500)][:500]
    s = us.Sparsifier(g, t, off)
    assert s.factorization.kind == "sparse-lu"
    assert s.factorization.nnz_factor <= 10 * s.edge_count


def test_sparsifier_validation(triangle, triangle_path_tree):
    with pytest.raises(GraphError):
        us.Sparsifier(triangle, triangle_path_tree, [0])  # tree edge repeated
    with pytest.raises(GraphError):
        us.Sparsifier(triangle, triangle_path_tree, [2, 2])  # duplicate
    with pytest.raises(GraphError):
        us.Sparsifier(triangle, triangle_path_tree, [9])  # out of range


def test_sparsifier_counts(triangle, triangle_path_tree):
    s = us.Sparsifier(triangle, triangle_path_tree, [2])
    assert s.edge_count == 3
    assert s.density == pytest.approx(1.0)
    assert s.offtree_edges == [(0, 2, 1.0)]
    assert s.missing_edge_ids.size == 0


def test_filter_edges_theta_one_keeps_single_max():
    g, t = random_graph_and_tree(30, 40, seed=6)
    s = us.Sparsifier(g, t)
    hr = us.aggregate_heat(g, s, t=2, r=4, seed=0)
    kept = us.filter_edges(hr, 1.0)
    assert kept.size == 1
    assert kept[0] == hr.max_edge_id


def test_filter_edges_tiny_theta_keeps_all_nonzero():
    g, t = random_graph_and_tree(30, 40, seed=6)
    s = us.Sparsifier(g, t)
    hr = us.aggregate_heat(g, s, t=2, r=4, seed=0)
    kept = us.filter_edges(hr, 1e-300)
    assert kept.size == np.count_nonzero(hr.raw_heat)
    with pytest.raises(GraphError):
        us.filter_edges(hr, 0.0)


def test_filter_edges_knee_selection():
    # edges strictly above a knee in normalized heat are exactly selected
    g, t = random_graph_and_tree(40, 60, seed=9)
    s = us.Sparsifier(g, t)
    hr = us.aggregate_heat(g, s, t=2, r=6, seed=2)
    sorted_norm = np.sort(hr.normalized_heat)[::-1]
    theta = float(sorted_norm[4])  # knee placed after the top five
    kept = us.filter_edges(hr, theta)
    assert kept.size == np.count_nonzero(hr.normalized_heat >= theta)


def test_deduplicate_shared_bottleneck():
    # two chords closing the same tree path share their bottleneck edge
    edges = [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 4.0), (0, 3, 1.0), (0, 2, 2.0)]
    g = us.WeightedGraph.from_edges(4, edges)
    t = us.SpanningTree(g, [0, 1, 2])
    kept = us.deduplicate_similar(np.array([3, 4]), t)
    # chord (0,3) path 0-1-2-3 and chord (0,2) path 0-1-2 share bottleneck
    # edge 0 (resistance 1, lowest id); only the first-ranked one survives
    assert kept.tolist() == [3]


def test_deduplicate_disjoint_paths_all_kept():
    edges = [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0),
             (0, 2, 1.0), (2, 4, 1.0)]
    g = us.WeightedGraph.from_edges(5, edges)
    t = us.SpanningTree(g, [0, 1, 2, 3])
    kept = us.deduplicate_similar(np.array([4, 5]), t)
    assert kept.tolist() == [4, 5]


def test_deduplicate_limit():
    g, t = random_graph_and_tree(40, 60, seed=5)
    s = us.Sparsifier(g, t)
    cands = s.missing_edge_ids
    kept_all = us.deduplicate_similar(cands, t)
    kept_3 = us.deduplicate_similar(cands, t, limit=3)
    assert kept_3.tolist() == kept_all[:3].tolist()


def test_densify_triangle(triangle, triangle_path_tree):
    s = us.densify(triangle, triangle_path_tree, 1.05)
    assert s.converged
    assert s.offtree_edge_ids.tolist() == [2]
    spec = us.dense_generalized_eigs(triangle, s)
    assert spec.nonzero().max() == pytest.approx(1.0, abs=1e-8)


def test_densify_already_satisfied():
    g, t = random_graph_and_tree(25, 0, seed=1)  # tree graph
    s = us.densify(g, t, 2.0)
    assert s.converged
    assert s.rounds == 0
    assert s.offtree_edge_ids.size == 0
    assert s.similarity.sigma2_est == pytest.approx(1.0)


def test_densify_nonconvergence_flag():
    g = us.generate_grid(30, 30)
    t = us.hair_comb_tree(g, 30, 30)
    s = us.densify(g, t, 1.01, us.DensifyConfig(max_rounds=2))
    assert not s.converged
    assert s.rounds == 2


def test_densify_budget_cap():
    g = us.generate_grid(30, 30)
    t = us.hair_comb_tree(g, 30, 30)
    s = us.densify(g, t, 1.0, us.DensifyConfig(edge_budget=25, max_rounds=10))
    assert s.offtree_edge_ids.size <= 25


def test_densify_sigma_monotone_per_round():
    g = us.generate_grid(40, 40, weighting="uniform-random", seed=4)
    t = us.extract_spanning_tree(g, "low-stretch-heuristic", seed=4)
    s = us.densify(g, t, 20.0, us.DensifyConfig(max_rounds=30))
    sig = [r.sigma2_est for r in s.history]
    assert all(sig[i + 1] <= sig[i] for i in range(len(sig) - 1))
    assert s.converged


def test_rank_one_gamma_triangle(triangle, triangle_path_tree):
    s = us.Sparsifier(triangle, triangle_path_tree)
    u = np.array([1.0, 0.0, -1.0]) / np.sqrt(2.0)
    gamma = us.rank_one_gamma(s, (0, 2), u)
    assert gamma == pytest.approx(np.sqrt(2.0))
    assert gamma ** 2 == pytest.approx(2.0)  # tree effective resistance
    assert us.rank_one_gamma(s, (0, 2), np.ones(3)) == 0.0


def test_gamma_squared_equals_tree_effective_resistance():
    for seed in (0, 2, 5):
        g = us.random_connected_graph(30, 1, seed=seed)
        t = us.extract_spanning_tree(g, "max-weight")
        s = us.Sparsifier(g, t)
        e = int(s.missing_edge_ids[0])
        p, q = int(g.edge_p[e]), int(g.edge_q[e])
        spec = us.dense_generalized_eigs(g, t)
        u = spec.eigenvectors[:, 0]
        gamma = us.rank_one_gamma(s, (p, q), u)
        path, _ = us.tree_path_edges(t, p, q)
        r_eff = float(np.sum(1.0 / g.edge_w[path]))
        assert gamma ** 2 == pytest.approx(r_eff, rel=1e-6)


def test_predicted_eigenvalue_examples():
    assert us.predicted_eigenvalue_after_add(3.0, 1.0, np.sqrt(2.0)) == pytest.approx(1.0)
    assert us.predicted_eigenvalue_after_add(7.0, 2.0, 0.0) == pytest.approx(7.0)
    lams = [us.predicted_eigenvalue_after_add(5.0, w, 1.0) for w in (1, 10, 100, 1e6)]
    assert all(np.diff(lams) < 0)
    assert lams[-1] < 1e-5


def test_weight_for_target_examples():
    gamma = np.sqrt(2.0)
    assert us.weight_for_target(3.0, 1.0, gamma) == pytest.approx(1.0)
    assert us.weight_for_target(3.0, 3.0, gamma) == pytest.approx(0.0)
    with pytest.raises(GraphError):
        us.weight_for_target(3.0, 1.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=1.0, max_value=1e5), st.floats(min_value=0.01, max_value=0.999),
       st.floats(min_value=1e-3, max_value=1e3))
def test_weight_roundtrip(lam, frac, gamma):
    lam_target = max(1.0, lam * frac)
    w = us.weight_for_target(lam, lam_target, gamma)
    if w > 0:
        assert us.predicted_eigenvalue_after_add(lam, w, gamma) == pytest.approx(
            lam_target, rel=1e-9)


def test_eigenvalue_monotonicity_under_addition():
    for seed in (0, 7):
        g, t = random_graph_and_tree(35, 45, seed=seed)
        s = us.Sparsifier(g, t)
        base = np.sort(us.dense_generalized_eigs(g, t).eigenvalues)
        for e in s.missing_edge_ids[:4]:
            after = np.sort(us.dense_generalized_eigs(g, s.with_edges([e])).eigenvalues)
            assert np.all(after <= base + 1e-8)


def test_write_sparsifier_roundtrip(tmp_path):
    g, t = random_graph_and_tree(25, 20, seed=3)
    s = us.densify(g, t, 4.0, us.DensifyConfig(max_rounds=10))
    prefix = str(tmp_path / "spars")
    mtx, sidecar = us.write_sparsifier(s, prefix)
    g2, _ = us.ingest_matrix_market(mtx)
    pg = s.as_graph()
    assert g2.m == pg.edge_count if hasattr(pg, "edge_count") else g2.m == pg.m
    assert g2.m == s.edge_count
    lines = open(sidecar).read().strip().splitlines()
    assert len(lines) == 1 + s.edge_count
    counted = sum(1 for ln in lines[1:] if ln.startswith("offtree"))
    assert counted == s.offtree_edge_ids.size
    rounds = {int(ln.split("\t")[4]) for ln in lines[1:] if ln.startswith("offtree")}
    assert all(r >= 1 for r in rounds)


def test_factor_preconditioner_exposes_state(triangle, triangle_path_tree):
    s = us.Sparsifier(triangle, triangle_path_tree, [2])
    f = us.factor_preconditioner(s)
    assert isinstance(f, LaplacianFactorization)
    assert f.nnz_factor > 0
