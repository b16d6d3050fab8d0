"""Spanning-tree backbones: extraction, stretch queries, linear-time solves.

A SpanningTree is rooted (vertex 0 by default, which is also the grounding
vertex for regularized solves) and keeps per-vertex prefix sums of path
resistance so that the stretch of any vertex pair is an O(log n) lookup via
binary-lifting ancestor tables. Tree Laplacian systems are solved in O(n)
by leaf-first elimination with precomputed pivots.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse
from scipy.sparse.csgraph import dijkstra

from ._seeding import stream
from .graph import GraphError, WeightedGraph


class FactorizationError(RuntimeError):
    """Numerical breakdown (non-positive pivot) during elimination."""


GROUNDING_SCALE = 1e-6  # grounding epsilon = scale * mean weighted degree


def _multi_arange(starts: np.ndarray, lens: np.ndarray) -> np.ndarray:
    """Concatenation of arange(s, s+l) for each segment, fully vectorized."""
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    seg = np.repeat(np.arange(starts.size), lens)
    cum = np.cumsum(lens)
    return starts[seg] + np.arange(total) - (cum - lens)[seg]


class _UnionFind:
    __slots__ = ("parent", "rank")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


class SpanningTree:
    """Rooted spanning tree over a subset of graph edges.

    Attributes follow the elimination/stretch machinery: ``parent`` (root maps
    to itself), ``parent_weight`` (0 at the root), ``depth``,
    ``path_resistance`` (sum of 1/w along the root path) and a leaf-first
    ``elimination_order``.
    """

    def __init__(self, graph: WeightedGraph, edge_ids, root: int = 0):
        n = graph.n
        edge_ids = np.asarray(edge_ids, dtype=np.int64)
        if edge_ids.size != n - 1:
            raise GraphError(f"spanning tree needs {n - 1} edges, got {edge_ids.size}")
        if edge_ids.size:
            if edge_ids.min() < 0 or edge_ids.max() >= graph.m:
                raise GraphError("tree edge id out of range")
            if np.unique(edge_ids).size != edge_ids.size:
                raise GraphError("duplicate tree edges")
        if not (0 <= root < n):
            raise GraphError("root out of range")

        ep = graph.edge_p[edge_ids]
        eq = graph.edge_q[edge_ids]
        ew = graph.edge_w[edge_ids]

        src = np.concatenate([ep, eq])
        dst = np.concatenate([eq, ep])
        loc = np.concatenate([np.arange(n - 1), np.arange(n - 1)])
        order = np.argsort(src, kind="stable")
        dst = dst[order]
        loc = loc[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])

        parent = np.full(n, -1, dtype=np.int64)
        parent_loc = np.full(n, -1, dtype=np.int64)
        depth = np.zeros(n, dtype=np.int64)
        path_res = np.zeros(n, dtype=np.float64)
        visited = np.zeros(n, dtype=bool)
        parent[root] = root
        visited[root] = True
        levels = [np.array([root], dtype=np.int64)]
        frontier = levels[0]
        while frontier.size:
            starts = indptr[frontier]
            lens = indptr[frontier + 1] - starts
            pos = _multi_arange(starts, lens)
            if pos.size == 0:
                break
            nbrs = dst[pos]
            locs = loc[pos]
            srcs = np.repeat(frontier, lens)
            new = ~visited[nbrs]
            children = nbrs[new]
            if children.size == 0:
                break
            pars = srcs[new]
            locl = locs[new]
            visited[children] = True
            parent[children] = pars
            parent_loc[children] = locl
            depth[children] = depth[pars] + 1
            path_res[children] = path_res[pars] + 1.0 / ew[locl]
            levels.append(children)
            frontier = children
        if not visited.all():
            raise GraphError("tree edges do not span all vertices")

        self.graph = graph
        self.n = n
        self.root = int(root)
        self.parent = parent
        self.parent_weight = np.where(parent_loc >= 0, ew[np.maximum(parent_loc, 0)], 0.0)
        self.parent_edge_id = np.where(parent_loc >= 0, edge_ids[np.maximum(parent_loc, 0)], -1)
        self.depth = depth
        self.path_resistance = path_res
        self.levels = levels
        self.elimination_order = np.lexsort((np.arange(n), -depth))
        self.tree_edge_ids = np.sort(edge_ids)

    # -- derived views ----------------------------------------------------

    @cached_property
    def is_tree_edge(self) -> np.ndarray:
        mask = np.zeros(self.graph.m, dtype=bool)
        mask[self.tree_edge_ids] = True
        return mask

    @cached_property
    def weighted_degrees(self) -> np.ndarray:
        nonroot = np.flatnonzero(self.parent_edge_id >= 0)
        w = self.parent_weight[nonroot]
        d = np.bincount(nonroot, weights=w, minlength=self.n)
        d += np.bincount(self.parent[nonroot], weights=w, minlength=self.n)
        return d

    @cached_property
    def _pure_solver(self):
        extra = np.zeros(self.n)
        extra[self.root] = grounding_epsilon(self.weighted_degrees)
        return eliminate_tree(self, extra)

    def as_graph(self) -> WeightedGraph:
        ids = self.tree_edge_ids
        g = self.graph
        return WeightedGraph.from_edges(
            self.n, (g.edge_p[ids], g.edge_q[ids], g.edge_w[ids]),
            self_weights=g.self_weights,
        )

    # -- LCA / stretch ------------------------------------------------------

    @cached_property
    def _lift(self):
        n = self.n
        height = len(self.levels) - 1
        K = max(1, int(height).bit_length())
        up = np.empty((K, n), dtype=np.int64)
        mres = np.empty((K, n), dtype=np.float64)
        meid = np.empty((K, n), dtype=np.int64)
        up[0] = self.parent
        mres[0] = np.where(self.parent_weight > 0, 1.0 / np.maximum(self.parent_weight, 1e-300), -np.inf)
        meid[0] = self.parent_edge_id
        for k in range(1, K):
            a = up[k - 1]
            up[k] = a[a]
            r1, e1 = mres[k - 1], meid[k - 1]
            r2, e2 = r1[a], e1[a]
            take2 = (r2 > r1) | ((r2 == r1) & (e2 < e1))
            mres[k] = np.where(take2, r2, r1)
            meid[k] = np.where(take2, e2, e1)
        return up, mres, meid

    @staticmethod
    def _acc(br, be, sel, r, e):
        cur_r = br[sel]
        cur_e = be[sel]
        upd = (r > cur_r) | ((r == cur_r) & (e < cur_e))
        pos = sel[upd]
        br[pos] = r[upd]
        be[pos] = e[upd]

    def _walk(self, ps, qs, want_bottleneck: bool):
        up, mres, meid = self._lift
        depth = self.depth
        p = np.array(ps, dtype=np.int64, copy=True).ravel()
        q = np.array(qs, dtype=np.int64, copy=True).ravel()
        if p.size and (min(p.min(), q.min()) < 0 or max(p.max(), q.max()) >= self.n):
            raise GraphError("vertex out of range")
        br = be = None
        if want_bottleneck:
            br = np.full(p.size, -np.inf)
            be = np.full(p.size, np.iinfo(np.int64).max)
        swap = depth[p] < depth[q]
        if swap.any():
            tmp = p[swap].copy()
            p[swap] = q[swap]
            q[swap] = tmp
        diff = depth[p] - depth[q]
        K = up.shape[0]
        for k in range(K):
            sel = np.flatnonzero(((diff >> k) & 1) == 1)
            if sel.size:
                idx = p[sel]
                if want_bottleneck:
                    self._acc(br, be, sel, mres[k][idx], meid[k][idx])
                p[sel] = up[k][idx]
        for k in range(K - 1, -1, -1):
            sel = np.flatnonzero((p != q) & (up[k][p] != up[k][q]))
            if sel.size:
                pi, qi = p[sel], q[sel]
                if want_bottleneck:
                    self._acc(br, be, sel, mres[k][pi], meid[k][pi])
                    self._acc(br, be, sel, mres[k][qi], meid[k][qi])
                p[sel] = up[k][pi]
                q[sel] = up[k][qi]
        sel = np.flatnonzero(p != q)
        lca = p.copy()
        if sel.size:
            if want_bottleneck:
                self._acc(br, be, sel, mres[0][p[sel]], meid[0][p[sel]])
                self._acc(br, be, sel, mres[0][q[sel]], meid[0][q[sel]])
            lca[sel] = up[0][p[sel]]
        return lca, br, be

    def lca(self, p: int, q: int) -> int:
        out, _, _ = self._walk([p], [q], want_bottleneck=False)
        return int(out[0])


def edge_stretch(t: SpanningTree, p: int, q: int, w: float) -> float:
    """w * tree effective resistance between p and q."""
    if p == q:
        raise GraphError("stretch requires distinct endpoints")
    if not (0 <= p < t.n and 0 <= q < t.n):
        raise GraphError("vertex out of range")
    a = t.lca(p, q)
    pr = t.path_resistance
    return float(w) * (pr[p] + pr[q] - 2.0 * pr[a])


def stretch_of_edges(t: SpanningTree, ps, qs, ws) -> np.ndarray:
    lca, _, _ = t._walk(ps, qs, want_bottleneck=False)
    pr = t.path_resistance
    ps = np.asarray(ps, dtype=np.int64)
    qs = np.asarray(qs, dtype=np.int64)
    return np.asarray(ws, dtype=np.float64) * (pr[ps] + pr[qs] - 2.0 * pr[lca])


def total_stretch(g: WeightedGraph, t: SpanningTree) -> float:
    """Sum of stretches over all graph edges; tree edges contribute 1 each."""
    if t.n != g.n:
        raise GraphError("tree does not match graph")
    off = np.flatnonzero(~t.is_tree_edge) if t.graph is g else None
    if off is None:
        # tree built from an equal but distinct graph object: revalidate ids
        ids = g.edge_ids(t.graph.edge_p[t.tree_edge_ids], t.graph.edge_q[t.tree_edge_ids])
        if np.any(ids < 0):
            raise GraphError("tree edges are not edges of the graph")
        mask = np.zeros(g.m, dtype=bool)
        mask[ids] = True
        off = np.flatnonzero(~mask)
    if off.size == 0:
        return float(g.n - 1)
    st = stretch_of_edges(t, g.edge_p[off], g.edge_q[off], g.edge_w[off])
    return float(g.n - 1) + float(np.sum(st))


def tree_path_edges(t: SpanningTree, p: int, q: int):
    """Edge ids of the unique tree path p..q plus the bottleneck edge id.

    The bottleneck is the maximum-resistance edge on the path, ties broken
    toward the lowest edge id.
    """
    if p == q:
        raise GraphError("path endpoints must be distinct")
    depth, parent, peid = t.depth, t.parent, t.parent_edge_id
    up_p, up_q = [], []
    a, b = int(p), int(q)
    while depth[a] > depth[b]:
        up_p.append(int(peid[a]))
        a = int(parent[a])
    while depth[b] > depth[a]:
        up_q.append(int(peid[b]))
        b = int(parent[b])
    while a != b:
        up_p.append(int(peid[a]))
        a = int(parent[a])
        up_q.append(int(peid[b]))
        b = int(parent[b])
    path = up_p + up_q[::-1]
    w = t.graph.edge_w
    bottleneck = min(path, key=lambda e: (-1.0 / w[e], e))
    return path, bottleneck


def path_bottlenecks(t: SpanningTree, ps, qs) -> np.ndarray:
    """Bottleneck (max-resistance, lowest-id on ties) edge id per query pair."""
    ps = np.asarray(ps, dtype=np.int64)
    if np.any(ps == np.asarray(qs, dtype=np.int64)):
        raise GraphError("bottleneck queries require distinct endpoints")
    _, _, be = t._walk(ps, qs, want_bottleneck=True)
    return be


# -- linear-time tree solves -------------------------------------------------

def grounding_epsilon(laplacian_diag: np.ndarray) -> float:
    return GROUNDING_SCALE * float(np.mean(laplacian_diag))


def eliminate_tree(t: SpanningTree, diag_extra: np.ndarray):
    """Leaf-first elimination pivots for (L_T + diag(diag_extra)).

    Returns (inv_d, coef); raises FactorizationError with the offending
    vertex on a non-positive pivot.
    """
    d = t.weighted_degrees + np.asarray(diag_extra, dtype=np.float64)
    coef = np.zeros(t.n)
    parent = t.parent
    w = t.parent_weight
    for level in t.levels[:0:-1]:
        dv = d[level]
        bad = dv <= 0
        if bad.any():
            v = int(level[np.flatnonzero(bad)[0]])
            raise FactorizationError(f"non-positive pivot at vertex {v}")
        c = w[level] / dv
        coef[level] = c
        np.add.at(d, parent[level], -(w[level] * c))
    if d[t.root] <= 0:
        raise FactorizationError(f"non-positive pivot at vertex {t.root}")
    return 1.0 / d, coef


def tree_elimination_apply(t: SpanningTree, inv_d, coef, b: np.ndarray) -> np.ndarray:
    """Forward/back substitution given elimination pivots; b may be (n,) or (n,k)."""
    work = np.array(b, dtype=np.float64, copy=True)
    parent = t.parent
    expand = work.ndim == 2
    for level in t.levels[:0:-1]:
        contrib = coef[level, None] * work[level] if expand else coef[level] * work[level]
        np.add.at(work, parent[level], contrib)
    x = np.empty_like(work)
    r = t.root
    x[r] = work[r] * inv_d[r]
    for level in t.levels[1:]:
        par = parent[level]
        if expand:
            x[level] = work[level] * inv_d[level, None] + coef[level, None] * x[par]
        else:
            x[level] = work[level] * inv_d[level] + coef[level] * x[par]
    return x


def tree_solve(t: SpanningTree, b) -> np.ndarray:
    """Solve L_T x = b on the all-ones-orthogonal subspace in O(n).

    b is projected internally; the system is grounded at the root with a
    small epsilon and the result re-projected, which reproduces the exact
    range-space solution.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (t.n,):
        raise GraphError("rhs length does not match tree")
    inv_d, coef = t._pure_solver
    bp = b - b.mean()
    x = tree_elimination_apply(t, inv_d, coef, bp)
    return x - x.mean()


# -- extraction ---------------------------------------------------------------

def kruskal_max_weight(g: WeightedGraph) -> SpanningTree:
    """Maximum-weight spanning tree; ties broken by lower edge index."""
    order = np.lexsort((np.arange(g.m), -g.edge_w))
    uf = _UnionFind(g.n)
    ep = g.edge_p.tolist()
    eq = g.edge_q.tolist()
    ids = []
    want = g.n - 1
    for e in order.tolist():
        if uf.union(ep[e], eq[e]):
            ids.append(e)
            if len(ids) == want:
                break
    return SpanningTree(g, np.array(ids, dtype=np.int64))


def _ball_growing_tree(g: WeightedGraph, rng: np.random.Generator) -> SpanningTree:
    """One ball-growing decomposition pass (star-decomposition style).

    Random centers grow shortest-path balls (resistance metric) up to a
    radius that doubles each level; Voronoi regions contract and the chosen
    inter-region edges accumulate into a spanning tree.
    """
    n, m = g.n, g.m
    elen = 1.0 / g.edge_w
    region = np.arange(n, dtype=np.int64)
    active = np.arange(m, dtype=np.int64)
    tree_ids = []
    base = float(np.median(elen)) if m else 1.0
    radius = base * float(2 ** int(rng.integers(1, 5)))
    for _ in range(200):
        labels, region = np.unique(region, return_inverse=True)
        nreg = labels.size
        if nreg == 1:
            break
        rp = region[g.edge_p[active]]
        rq = region[g.edge_q[active]]
        keep = rp != rq
        active, rp, rq = active[keep], rp[keep], rq[keep]
        el = elen[active]
        lo = np.minimum(rp, rq)
        hi = np.maximum(rp, rq)
        order = np.lexsort((active, el, hi, lo))
        lo_s, hi_s = lo[order], hi[order]
        first = np.ones(order.size, dtype=bool)
        first[1:] = (lo_s[1:] != lo_s[:-1]) | (hi_s[1:] != hi_s[:-1])
        rep = order[first]
        qlo, qhi, qlen, qeid = lo[rep], hi[rep], el[rep], active[rep]

        quot = scipy.sparse.csr_matrix(
            (np.concatenate([qlen, qlen]),
             (np.concatenate([qlo, qhi]), np.concatenate([qhi, qlo]))),
            shape=(nreg, nreg),
        )
        k = max(1, nreg // 8)
        centers = np.sort(rng.permutation(nreg)[:k])
        dist, pred, src = dijkstra(quot, directed=False, indices=centers,
                                   min_only=True, return_predecessors=True,
                                   limit=radius)
        covered = np.isfinite(dist)
        merged = covered & (pred >= 0)
        if merged.any():
            mr = np.flatnonzero(merged)
            a = np.minimum(pred[mr], mr)
            b = np.maximum(pred[mr], mr)
            key_rep = qlo * nreg + qhi
            pos = np.searchsorted(key_rep, a * nreg + b)
            tree_ids.append(qeid[pos])
            dist_eff = np.where(covered, dist, 0.0)
            elen[active] = elen[active] + dist_eff[rp] + dist_eff[rq]
            cluster = np.where(covered, src, np.arange(nreg))
            region = cluster[region]
        radius *= 2.0
    else:
        raise GraphError("ball growing did not converge")
    ids = np.concatenate(tree_ids) if tree_ids else np.empty(0, dtype=np.int64)
    return SpanningTree(g, ids)


def extract_spanning_tree(g: WeightedGraph, strategy: str = "low-stretch-heuristic",
                          seed: int = 0, attempts: int = 3) -> SpanningTree:
    """Extract a spanning-tree backbone.

    ``max-weight`` runs Kruskal with union-find (ties by lower edge index).
    ``low-stretch-heuristic`` runs repeated ball-growing decompositions with
    a geometric radius schedule and keeps whichever of {heuristic, max-weight}
    has the lower total stretch.
    """
    if strategy == "max-weight":
        return kruskal_max_weight(g)
    if strategy != "low-stretch-heuristic":
        raise GraphError(f"unknown strategy {strategy!r}")
    best = kruskal_max_weight(g)
    best_st = total_stretch(g, best)
    for a in range(attempts):
        try:
            cand = _ball_growing_tree(g, stream(seed, "ball-grow", a))
        except GraphError:
            continue
        st = total_stretch(g, cand)
        if st < best_st:
            best, best_st = cand, st
    return best


def hair_comb_tree(g: WeightedGraph, rows: int, cols: int) -> SpanningTree:
    """Comb backbone for a rows x cols grid: bottom-row spine plus vertical teeth.

    A canonical high-stretch tree; the off-tree (horizontal) edges farthest
    from the spine carry the largest stretch.
    """
    rows, cols = int(rows), int(cols)
    if rows * cols != g.n:
        raise GraphError("grid dimensions do not match graph")
    idx = np.arange(rows * cols, dtype=np.int64).reshape(rows, cols)
    spine_p = idx[rows - 1, :-1]
    spine_q = idx[rows - 1, 1:]
    teeth_p = idx[:-1, :].ravel()
    teeth_q = idx[1:, :].ravel()
    ps = np.concatenate([spine_p, teeth_p])
    qs = np.concatenate([spine_q, teeth_q])
    ids = g.edge_ids(ps, qs)
    if np.any(ids < 0):
        raise GraphError("graph is not compatible with the requested comb tree")
    return SpanningTree(g, ids)
