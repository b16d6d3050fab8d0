"""Generalized power iteration and per-edge Joule-heat embedding.

Off-tree edges are scored by the Joule heat they dissipate under iterates
h_t of the preconditioned operator: edges with large heat are the ones a
sparsifier is currently missing most. The sum of all off-tree heats equals
the quadratic-form gap between the graph and the sparsifier for the same
vector, which doubles as a built-in consistency check.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import ceil, log2

import numpy as np

from ._seeding import rademacher, stream
from .graph import GraphError, WeightedGraph, quadratic_form, laplacian_apply


@dataclass(frozen=True, eq=False)
class HeatReport:
    """Aggregated Joule heat per off-tree edge.

    ``edge_ids`` index into the source graph's edge arrays; exactly one edge
    has normalized heat 1.0 (raw-heat ties broken by lower edge id).
    ``qf_gap`` stores sum_j (x_j^T L_G x_j - x_j^T L_P x_j), the independent
    value the raw heats must sum to.
    """
    edge_ids: np.ndarray
    p: np.ndarray
    q: np.ndarray
    w: np.ndarray
    raw_heat: np.ndarray
    normalized_heat: np.ndarray
    max_edge_id: int
    steps: int | None
    vectors: int
    seed: int | None
    qf_gap: float
    qf_scale: float

    @property
    def raw_total(self) -> float:
        return float(np.sum(self.raw_heat))

    @property
    def identity_rel_gap(self) -> float:
        """|sum(raw) - qf_gap| relative to the quadratic-form mass.

        The mass sum_j (qf_G + qf_P)(h_j) is the scale both sums are rounded
        against, so this stays at machine level even when the gap itself is
        zero (P identical to G).
        """
        total = self.raw_total
        denom = max(abs(self.qf_gap), abs(total), self.qf_scale, 1e-300)
        return abs(total - self.qf_gap) / denom

    def write_tsv(self, path) -> None:
        order = np.lexsort((self.edge_ids, -self.raw_heat))
        with open(path, "w") as fh:
            fh.write("p\tq\traw_heat\tnormalized_heat\n")
            for i in order:
                fh.write(f"{self.p[i]}\t{self.q[i]}\t{self.raw_heat[i]:.17g}\t"
                         f"{self.normalized_heat[i]:.17g}\n")


def default_vector_count(n: int) -> int:
    return max(4, ceil(log2(max(n, 2))))


def generalized_power_iterate(g: WeightedGraph, precond_solve, h0, t: int) -> np.ndarray:
    """h_t = (L_P^{-1} L_G)^t h0 with every iterate projected off all-ones."""
    if int(t) < 1:
        raise GraphError("power iteration needs t >= 1")
    h = np.asarray(h0, dtype=np.float64)
    if h.shape != (g.n,):
        raise GraphError("h0 length does not match graph")
    h = h - h.mean()
    if not np.any(h):
        raise GraphError("h0 is zero after projection")
    for _ in range(int(t)):
        h = np.asarray(precond_solve(laplacian_apply(g, h)), dtype=np.float64)
        h = h - h.mean()
    return h


def _normalize(raw: np.ndarray, edge_ids: np.ndarray):
    if raw.size == 0:
        return raw.copy(), -1
    top = float(raw.max())
    if top <= 0.0:
        return np.zeros_like(raw), int(edge_ids[int(np.argmax(raw))])
    normalized = raw / top
    ties = np.flatnonzero(raw == top)
    keep = ties[np.argmin(edge_ids[ties])]
    # exactly one edge reports 1.0; other exact ties sit one ulp below
    if ties.size > 1:
        normalized[ties] = np.nextafter(1.0, 0.0)
    normalized[keep] = 1.0
    return normalized, int(edge_ids[keep])


def _build_report(g, sparsifier, ids, raw, qf_gap, qf_scale, steps, vectors, seed) -> HeatReport:
    normalized, max_edge = _normalize(raw, ids)
    return HeatReport(
        edge_ids=ids,
        p=g.edge_p[ids].copy(),
        q=g.edge_q[ids].copy(),
        w=g.edge_w[ids].copy(),
        raw_heat=raw,
        normalized_heat=normalized,
        max_edge_id=max_edge,
        steps=steps,
        vectors=vectors,
        seed=seed,
        qf_gap=float(qf_gap),
        qf_scale=float(qf_scale),
    )


def edge_joule_heat(g: WeightedGraph, sparsifier, h_t) -> HeatReport:
    """Single-vector heats w * (h(p) - h(q))^2 for every edge missing from P."""
    h = np.asarray(h_t, dtype=np.float64)
    if h.shape != (g.n,):
        raise GraphError("vector length does not match graph")
    ids = sparsifier.missing_edge_ids
    diff = h[g.edge_p[ids]] - h[g.edge_q[ids]]
    raw = g.edge_w[ids] * diff * diff
    qg = quadratic_form(g, h)
    qp = sparsifier.quadratic_form(h)
    return _build_report(g, sparsifier, ids, raw, qg - qp, qg + qp, None, 1, None)


def aggregate_heat(g: WeightedGraph, sparsifier, t: int = 2, r: int | None = None,
                   seed: int = 0, threads: int = 1) -> HeatReport:
    """Joule heats summed over r random +-1 start vectors (compensated).

    Defaults follow the practical choices t=2 and r = max(4, ceil(log2 n)).
    Deterministic for a given seed, including the threaded path (per-vector
    partials merge in vector order).
    """
    if r is None:
        r = default_vector_count(g.n)
    r = int(r)
    if r < 1:
        raise GraphError("need at least one random vector")
    ids = sparsifier.missing_edge_ids
    ep = g.edge_p[ids]
    eq = g.edge_q[ids]
    ew = g.edge_w[ids]

    def one_vector(j: int):
        rng = stream(seed, "heat-vector", j)
        h0 = rademacher(rng, g.n)
        h0 -= h0.mean()
        while not np.any(h0):
            h0 = rademacher(rng, g.n)
            h0 -= h0.mean()
        h = generalized_power_iterate(g, sparsifier.solve, h0, t)
        diff = h[ep] - h[eq]
        heat = ew * diff * diff
        qg = quadratic_form(g, h)
        qp = sparsifier.quadratic_form(h)
        return heat, qg - qp, qg + qp

    if threads > 1 and r > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            parts = list(pool.map(one_vector, range(r)))
    else:
        parts = [one_vector(j) for j in range(r)]

    raw = np.zeros(ids.size)
    comp = np.zeros(ids.size)  # Kahan compensation for long edge sums
    qf_gap = 0.0
    qf_scale = 0.0
    for heat, gap, scale in parts:
        y = heat - comp
        s = raw + y
        comp = (s - raw) - y
        raw = s
        qf_gap += gap
        qf_scale += scale
    return _build_report(g, sparsifier, ids, raw, qf_gap, qf_scale, int(t), r, int(seed))


def rank_edges(hr: HeatReport) -> np.ndarray:
    """Edge ids by descending raw heat; ties by ascending edge id."""
    order = np.lexsort((hr.edge_ids, -hr.raw_heat))
    return hr.edge_ids[order]
