"""Weighted undirected graphs with implicit Laplacian operators and I/O.

The Laplacian is never materialized as a dense matrix by the core
operations; everything is edge-wise over flat numpy arrays. A graph may
carry per-vertex ``self_weights`` (diagonal surplus of an SDD input),
which contribute to the Laplacian diagonal but are never candidates for
sparsification.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.io
import scipy.sparse
from scipy.sparse.csgraph import connected_components


class GraphError(ValueError):
    """Invalid graph construction or operation input."""


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Simple connected weighted undirected graph.

    Edges are kept in input order (after merging of parallel edges); the
    position of an edge in the arrays is its edge id, which downstream
    code uses for deterministic tie-breaking.
    """

    n: int
    edge_p: np.ndarray
    edge_q: np.ndarray
    edge_w: np.ndarray
    self_weights: np.ndarray
    adj_indptr: np.ndarray = field(repr=False)
    adj_vertex: np.ndarray = field(repr=False)
    adj_edge: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, n, edges, self_weights=None, merge_parallel=True):
        """Build and validate a graph from (p, q, w) triples.

        Parallel edges are merged by weight summation (the merged edge keeps
        the position of its first occurrence). Self-loops, non-positive
        weights and disconnected inputs are hard errors.
        """
        n = int(n)
        if n < 1:
            raise GraphError("vertex count must be >= 1")
        if isinstance(edges, tuple) and len(edges) == 3:
            p, q, w = edges
            p = np.asarray(p, dtype=np.int64).copy()
            q = np.asarray(q, dtype=np.int64).copy()
            w = np.asarray(w, dtype=np.float64).copy()
        else:
            triples = list(edges)
            if triples:
                p = np.array([t[0] for t in triples], dtype=np.int64)
                q = np.array([t[1] for t in triples], dtype=np.int64)
                w = np.array([t[2] for t in triples], dtype=np.float64)
            else:
                p = np.empty(0, dtype=np.int64)
                q = np.empty(0, dtype=np.int64)
                w = np.empty(0, dtype=np.float64)
        if p.shape != q.shape or p.shape != w.shape:
            raise GraphError("edge arrays must have identical length")
        if p.size and (p.min() < 0 or q.min() < 0 or max(p.max(), q.max()) >= n):
            raise GraphError("edge endpoint out of range")
        if np.any(p == q):
            raise GraphError("self-loops are not allowed")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise GraphError("edge weights must be strictly positive and finite")

        lo = np.minimum(p, q)
        hi = np.maximum(p, q)
        key = lo * n + hi
        uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
        if np.any(counts > 1):
            if not merge_parallel:
                raise GraphError("parallel edges present and merging disabled")
            merged_w = np.bincount(inverse, weights=w, minlength=uniq.size)
            first_pos = np.full(uniq.size, p.size, dtype=np.int64)
            np.minimum.at(first_pos, inverse, np.arange(p.size))
            order = np.argsort(first_pos, kind="stable")
            lo = (uniq // n)[order]
            hi = (uniq % n)[order]
            w = merged_w[order]
        else:
            # already simple; keep input order
            pass
        m = lo.size

        if self_weights is None:
            sw = np.zeros(n, dtype=np.float64)
        else:
            sw = np.asarray(self_weights, dtype=np.float64).copy()
            if sw.shape != (n,):
                raise GraphError("self_weights must have length n")
            if np.any(sw < 0) or not np.all(np.isfinite(sw)):
                raise GraphError("self_weights must be finite and nonnegative")

        # CSR adjacency, neighbors ordered by edge id for determinism
        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        eid = np.concatenate([np.arange(m), np.arange(m)])
        order = np.argsort(src, kind="stable")
        counts = np.bincount(src, minlength=n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])

        g = cls(
            n=n,
            edge_p=lo.astype(np.int64),
            edge_q=hi.astype(np.int64),
            edge_w=w.astype(np.float64),
            self_weights=sw,
            adj_indptr=indptr,
            adj_vertex=dst[order].astype(np.int64),
            adj_edge=eid[order].astype(np.int64),
        )
        ncomp = g.component_count()
        if ncomp != 1:
            raise GraphError(f"graph is disconnected ({ncomp} components)")
        return g

    # -- basic accessors -------------------------------------------------

    @property
    def m(self) -> int:
        return self.edge_p.size

    def component_count(self) -> int:
        if self.n == 1:
            return 1
        if self.m == 0:
            return self.n
        a = scipy.sparse.csr_matrix(
            (np.ones(2 * self.m), (np.concatenate([self.edge_p, self.edge_q]),
                                   np.concatenate([self.edge_q, self.edge_p]))),
            shape=(self.n, self.n),
        )
        ncomp, _ = connected_components(a, directed=False)
        return int(ncomp)

    @cached_property
    def degrees(self) -> np.ndarray:
        """Weighted degrees excluding self_weights."""
        d = np.bincount(self.edge_p, weights=self.edge_w, minlength=self.n)
        d += np.bincount(self.edge_q, weights=self.edge_w, minlength=self.n)
        return d

    @cached_property
    def laplacian_diag(self) -> np.ndarray:
        return self.degrees + self.self_weights

    @cached_property
    def _sorted_pair_keys(self):
        keys = self.edge_p * self.n + self.edge_q
        order = np.argsort(keys)
        return keys[order], order

    def edge_id(self, p: int, q: int) -> int:
        """Edge id of (p, q), or -1 if absent."""
        lo, hi = (p, q) if p < q else (q, p)
        keys, order = self._sorted_pair_keys
        k = lo * self.n + hi
        i = np.searchsorted(keys, k)
        if i < keys.size and keys[i] == k:
            return int(order[i])
        return -1

    def edge_ids(self, ps, qs) -> np.ndarray:
        ps = np.asarray(ps, dtype=np.int64)
        qs = np.asarray(qs, dtype=np.int64)
        lo = np.minimum(ps, qs)
        hi = np.maximum(ps, qs)
        keys, order = self._sorted_pair_keys
        k = lo * self.n + hi
        i = np.clip(np.searchsorted(keys, k), 0, keys.size - 1)
        out = np.where(keys[i] == k, order[i], -1)
        return out

    def neighbors(self, v: int) -> np.ndarray:
        return self.adj_vertex[self.adj_indptr[v]:self.adj_indptr[v + 1]]


# -- Laplacian operations ------------------------------------------------

def _check_vector(g: WeightedGraph, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.n,):
        raise GraphError(f"vector length {x.shape} does not match vertex count {g.n}")
    return x


def laplacian_apply(g: WeightedGraph, x) -> np.ndarray:
    """Edge-wise L_G . x including the self_weights diagonal."""
    x = _check_vector(g, x)
    d = g.edge_w * (x[g.edge_p] - x[g.edge_q])
    y = np.bincount(g.edge_p, weights=d, minlength=g.n)
    y -= np.bincount(g.edge_q, weights=d, minlength=g.n)
    y += g.self_weights * x
    return y


def quadratic_form(g: WeightedGraph, x) -> float:
    """sum_(p,q) w * (x(p)-x(q))^2 + sum_p self_weights(p) * x(p)^2."""
    x = _check_vector(g, x)
    d = x[g.edge_p] - x[g.edge_q]
    total = float(np.dot(g.edge_w, d * d))
    if g.self_weights.any():
        total += float(np.dot(g.self_weights, x * x))
    return total


def laplacian_dense(g: WeightedGraph, size_guard: int = 4000) -> np.ndarray:
    """Dense Laplacian for small-instance verification only."""
    if g.n > size_guard:
        raise GraphError(f"dense Laplacian guarded at n <= {size_guard}")
    L = np.zeros((g.n, g.n))
    np.add.at(L, (g.edge_p, g.edge_q), -g.edge_w)
    np.add.at(L, (g.edge_q, g.edge_p), -g.edge_w)
    np.fill_diagonal(L, g.laplacian_diag)
    return L


# -- generators ------------------------------------------------------------

def generate_grid(rows: int, cols: int, weighting: str = "unit",
                  seed: int | None = None) -> WeightedGraph:
    """4-connected mesh with unit or uniform-random(seed) weights.

    Edges are emitted per vertex in row-major order, right edge before down
    edge, so edge ids are deterministic.
    """
    rows, cols = int(rows), int(cols)
    if rows < 2 or cols < 2:
        raise GraphError("grid dimensions must be >= 2")
    idx = np.arange(rows * cols, dtype=np.int64).reshape(rows, cols)
    src_r = idx[:, :-1].ravel()
    dst_r = src_r + 1
    src_d = idx[:-1, :].ravel()
    dst_d = src_d + cols
    src = np.concatenate([src_r, src_d])
    dst = np.concatenate([dst_r, dst_d])
    kind = np.concatenate([np.zeros(src_r.size, np.int8), np.ones(src_d.size, np.int8)])
    order = np.lexsort((kind, src))
    src, dst = src[order], dst[order]

    if weighting in ("unit",):
        w = np.ones(src.size)
    elif weighting in ("uniform-random", "random"):
        if seed is None:
            raise GraphError("uniform-random weighting requires a seed")
        rng = np.random.default_rng(int(seed))
        w = rng.uniform(0.1, 1.0, size=src.size)
    else:
        raise GraphError(f"unknown weighting {weighting!r}")
    return WeightedGraph.from_edges(rows * cols, (src, dst, w))


def generate_random_geometric(n: int, seed: int = 0, radius: float | None = None) -> WeightedGraph:
    """Random geometric graph on the unit square, weights 1/distance.

    Components left by the radius cutoff are bridged through their closest
    cross pairs so the result is always connected.
    """
    from scipy.spatial import cKDTree
    from scipy.spatial.distance import cdist

    n = int(n)
    if n < 2:
        raise GraphError("need at least two vertices")
    rng = np.random.default_rng(int(seed))
    pts = rng.random((n, 2))
    if radius is None:
        radius = 1.9 * np.sqrt(np.log(max(n, 3)) / (np.pi * n))
    pairs = sorted(cKDTree(pts).query_pairs(float(radius)))
    if pairs:
        p = np.array([a for a, _ in pairs], dtype=np.int64)
        q = np.array([b for _, b in pairs], dtype=np.int64)
    else:
        p = np.empty(0, np.int64)
        q = np.empty(0, np.int64)

    # bridge components deterministically through nearest cross pairs
    while True:
        a = scipy.sparse.csr_matrix(
            (np.ones(2 * p.size), (np.concatenate([p, q]), np.concatenate([q, p]))),
            shape=(n, n),
        )
        ncomp, labels = connected_components(a, directed=False)
        if ncomp == 1:
            break
        main = labels == labels[0]
        rest = ~main
        d = cdist(pts[main], pts[rest])
        i, j = np.unravel_index(np.argmin(d), d.shape)
        u = np.flatnonzero(main)[i]
        v = np.flatnonzero(rest)[j]
        p = np.append(p, min(u, v))
        q = np.append(q, max(u, v))

    dist = np.linalg.norm(pts[p] - pts[q], axis=1)
    w = 1.0 / np.maximum(dist, 1e-3)
    return WeightedGraph.from_edges(n, (p, q, w))


def random_connected_graph(n: int, extra_edges: int, seed: int = 0,
                           w_lo: float = 0.5, w_hi: float = 2.0) -> WeightedGraph:
    """Random tree plus `extra_edges` distinct chords; for tests and demos."""
    n = int(n)
    rng = np.random.default_rng(int(seed))
    p = [int(rng.integers(0, i)) for i in range(1, n)]
    q = list(range(1, n))
    seen = {(min(a, b), max(a, b)) for a, b in zip(p, q)}
    tries = 0
    while extra_edges > 0 and tries < 50 * extra_edges + 100:
        a, b = rng.integers(0, n, size=2)
        tries += 1
        if a == b:
            continue
        key = (min(int(a), int(b)), max(int(a), int(b)))
        if key in seen:
            continue
        seen.add(key)
        p.append(key[0])
        q.append(key[1])
        extra_edges -= 1
    w = rng.uniform(w_lo, w_hi, size=len(p))
    return WeightedGraph.from_edges(n, (np.array(p), np.array(q), w))


# -- Matrix Market I/O -----------------------------------------------------

@dataclass
class MatrixMarketReport:
    """What happened while turning an SDD matrix into a graph."""
    dropped_positive_edges: int = 0
    clamped_vertices: int = 0
    self_weight_vertices: int = 0
    max_surplus_violation: float = 0.0

    def to_dict(self):
        return {
            "dropped_positive_edges": self.dropped_positive_edges,
            "clamped_vertices": self.clamped_vertices,
            "self_weight_vertices": self.self_weight_vertices,
            "max_surplus_violation": self.max_surplus_violation,
        }


SDD_SURPLUS_RTOL = 1e-9


def ingest_matrix_market(path) -> tuple[WeightedGraph, MatrixMarketReport]:
    """Read a symmetric real coordinate matrix as a graph.

    Off-diagonal entries A(i,j) < 0 become edges of weight -A(i,j); positive
    off-diagonals are dropped with a counted warning. Diagonal surplus beyond
    the SDD tolerance becomes self_weights; negative surplus is clamped to
    zero and reported.
    """
    if not os.path.exists(str(path)):
        raise FileNotFoundError(f"no such file: {path}")
    try:
        mat = scipy.io.mmread(str(path))
    except Exception as exc:  # malformed header/body
        raise GraphError(f"could not parse Matrix Market file {path}: {exc}") from exc
    if not scipy.sparse.issparse(mat):
        mat = scipy.sparse.coo_matrix(mat)
    mat = mat.tocoo()
    if mat.shape[0] != mat.shape[1]:
        raise GraphError("matrix is not square")
    n = mat.shape[0]
    mat.sum_duplicates()

    # symmetry check on the expanded matrix (mmread mirrors `symmetric` files)
    diff = (mat - mat.T).tocoo()
    scale = np.abs(mat.data).max() if mat.data.size else 1.0
    if diff.data.size and np.abs(diff.data).max() > 1e-12 * scale:
        raise GraphError("matrix pattern/values are not symmetric")

    i, j, v = mat.row, mat.col, mat.data
    off = i > j  # each unordered pair once
    oi, oj, ov = i[off], j[off], v[off]
    keep = ov < 0
    dropped = int(np.count_nonzero(ov > 0))

    diag = np.zeros(n)
    d_mask = i == j
    diag[i[d_mask]] = v[d_mask]
    row_abs_off = np.bincount(oi, weights=np.abs(ov), minlength=n)
    row_abs_off += np.bincount(oj, weights=np.abs(ov), minlength=n)
    surplus = diag - row_abs_off
    row_abs_sum = row_abs_off + np.abs(diag)
    tol = SDD_SURPLUS_RTOL * np.maximum(row_abs_sum, 1.0)

    sw = np.where(surplus > tol, surplus, 0.0)
    clamped = surplus < -tol
    report = MatrixMarketReport(
        dropped_positive_edges=dropped,
        clamped_vertices=int(np.count_nonzero(clamped)),
        self_weight_vertices=int(np.count_nonzero(sw > 0)),
        max_surplus_violation=float((-surplus[clamped] / np.maximum(row_abs_sum[clamped], 1e-300)).max())
        if np.any(clamped) else 0.0,
    )

    p, q, w = oj[keep], oi[keep], -ov[keep]
    order = np.lexsort((q, p))
    g = WeightedGraph.from_edges(n, (p[order], q[order], w[order]), self_weights=sw)
    return g, report


def read_matrix_market(path) -> WeightedGraph:
    g, _ = ingest_matrix_market(path)
    return g


def write_matrix_market(g: WeightedGraph, path) -> None:
    """Write the graph Laplacian in symmetric coordinate format.

    Emits lower-triangular off-diagonal entries plus the diagonal.
    """
    rows = np.concatenate([np.arange(g.n), np.maximum(g.edge_p, g.edge_q)])
    cols = np.concatenate([np.arange(g.n), np.minimum(g.edge_p, g.edge_q)])
    vals = np.concatenate([g.laplacian_diag, -g.edge_w])
    full_rows = np.concatenate([rows, cols[g.n:]])
    full_cols = np.concatenate([cols, rows[g.n:]])
    full_vals = np.concatenate([vals, vals[g.n:]])
    mat = scipy.sparse.coo_matrix((full_vals, (full_rows, full_cols)), shape=(g.n, g.n))
    scipy.io.mmwrite(str(path), mat, symmetry="symmetric", precision=17)
