import numpy as np
import pytest
import scipy.linalg

import ultrasparse as us


@pytest.fixture
def triangle():
    return us.WeightedGraph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])


@pytest.fixture
def triangle_path_tree(triangle):
    return us.SpanningTree(triangle, [0, 1])


def reference_pencil_eigenvalues(lg: np.ndarray, lp: np.ndarray) -> np.ndarray:
    """Nonzero generalized eigenvalues of (L_G, L_P) on the 1-orthogonal space.

    Independent reference built on LAPACK's generalized symmetric solver;
    used to cross-check both the Jacobi oracle and the iterative estimates.
    """
    n = lg.shape[0]
    basis = scipy.linalg.null_space(np.ones((1, n)))
    a = basis.T @ lg @ basis
    b = basis.T @ lp @ basis
    vals = scipy.linalg.eigh(a, b, eigvals_only=True)
    return np.sort(vals)[::-1]


def pencil_reference(g, p) -> np.ndarray:
    pg = p.as_graph() if hasattr(p, "as_graph") else p
    return reference_pencil_eigenvalues(us.laplacian_dense(g), us.laplacian_dense(pg))


def random_graph_and_tree(n: int, extra: int, seed: int):
    g = us.random_connected_graph(n, extra, seed=seed)
    t = us.extract_spanning_tree(g, "max-weight")
    return g, t


def bfs_tree_path(t, p: int, q: int):
    """Parent-walk path oracle independent of the lifting tables."""
    anc_p = {}
    v = p
    while True:
        anc_p[v] = None
        if v == t.root:
            break
        v = int(t.parent[v])
    v = q
    down = []
    while v not in anc_p:
        down.append(int(t.parent_edge_id[v]))
        v = int(t.parent[v])
    lca = v
    up = []
    v = p
    while v != lca:
        up.append(int(t.parent_edge_id[v]))
        v = int(t.parent[v])
    return up + down[::-1], lca
