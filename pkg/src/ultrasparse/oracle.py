"""Brute-force dense generalized eigensolver for small-instance verification.

The pencil L_G u = lambda L_P u is reduced to a standard symmetric problem
through a dense Cholesky factor of the grounded L_P, solved with a cyclic
Jacobi rotation scheme (round-robin parallel ordering, vectorized per
round), and mapped back with the L_P-orthonormal normalization
u_i^T L_P u_j = delta_ij on the range space. Accuracy over speed; guarded
to small n.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .graph import GraphError, WeightedGraph, laplacian_dense
from .tree import FactorizationError, grounding_epsilon

ORACLE_SIZE_GUARD = 2000
_JACOBI_TOL = 1e-13  # off-diagonal Frobenius mass relative to ||A||_F


@dataclass(frozen=True, eq=False)
class DenseSpectrum:
    """Descending eigenvalues with L_P-orthonormal eigenvectors (columns)."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    def nonzero(self, floor: float = 1e-8) -> np.ndarray:
        """Eigenvalues of the range space (drops the single ~0 mode if any)."""
        return self.eigenvalues[self.eigenvalues > floor]


def _round_robin_pairs(n: int):
    """Round-robin tournament schedule: n-1 rounds of disjoint pivot pairs."""
    players = list(range(n)) if n % 2 == 0 else list(range(n)) + [-1]
    k = len(players)
    rounds = []
    for _ in range(k - 1):
        pairs = [(players[i], players[k - 1 - i]) for i in range(k // 2)]
        rounds.append([(a, b) if a < b else (b, a) for a, b in pairs if a >= 0 and b >= 0])
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(a: np.ndarray, max_sweeps: int = 60):
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Returns (eigenvalues descending, eigenvector columns). Terminates when
    the off-diagonal Frobenius mass drops below 1e-13 of the input norm;
    raises if that never happens within max_sweeps (it does, quadratically).
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if n == 1:
        return a[0].copy(), np.ones((1, 1))
    norm0 = np.linalg.norm(a)
    if norm0 == 0:
        return np.zeros(n), np.eye(n)
    v = np.eye(n)
    rounds = [(np.array([p for p, _ in pairs]), np.array([q for _, q in pairs]))
              for pairs in _round_robin_pairs(n)]
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= _JACOBI_TOL * norm0:
            break
        # threshold sweep: skipping pivots well below the remaining
        # off-diagonal mass keeps convergence while avoiding dead rotations
        thresh = off / (4.0 * n)
        for pv, qv in rounds:
            apq = a[pv, qv]
            live = np.abs(apq) > thresh
            if not live.any():
                continue
            pv, qv, apq = pv[live], qv[live], apq[live]
            app = a[pv, pv]
            aqq = a[qv, qv]
            tau = (aqq - app) / (2.0 * apq)
            t = np.sign(tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            t[tau == 0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            # disjoint pairs: apply all row rotations, then all column rotations
            rp = a[pv, :].copy()
            rq = a[qv, :].copy()
            a[pv, :] = c[:, None] * rp - s[:, None] * rq
            a[qv, :] = s[:, None] * rp + c[:, None] * rq
            cp = a[:, pv].copy()
            cq = a[:, qv].copy()
            a[:, pv] = c[None, :] * cp - s[None, :] * cq
            a[:, qv] = s[None, :] * cp + c[None, :] * cq
            vp = v[:, pv].copy()
            vq = v[:, qv].copy()
            v[:, pv] = c[None, :] * vp - s[None, :] * vq
            v[:, qv] = s[None, :] * vp + c[None, :] * vq
    else:
        raise RuntimeError("Jacobi iteration did not reach the target off-diagonal mass")
    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], v[:, order]


def _as_graph(p) -> WeightedGraph:
    if isinstance(p, WeightedGraph):
        return p
    if hasattr(p, "as_graph"):
        return p.as_graph()
    raise GraphError("preconditioner must be a graph or expose as_graph()")


def _grounded_dense(pg: WeightedGraph) -> np.ndarray:
    lp = laplacian_dense(pg)
    if not pg.self_weights.any():
        lp[0, 0] += grounding_epsilon(np.diag(lp))
    return lp


def dense_generalized_eigs(g: WeightedGraph, p, size_guard: int = ORACLE_SIZE_GUARD) -> DenseSpectrum:
    """All generalized eigenvalues/eigenvectors of the pencil (L_G, L_P).

    Grounding L_P at vertex 0 leaves the nonzero spectrum exactly intact
    (eigenvector representatives vanish at the grounded vertex), so the
    pure-Laplacian pencil keeps one ~0 eigenvalue for the all-ones mode.
    """
    if g.n > size_guard:
        raise GraphError(f"dense oracle guarded at n <= {size_guard}")
    pg = _as_graph(p)
    if pg.n != g.n:
        raise GraphError("preconditioner size mismatch")
    lg = laplacian_dense(g)
    m = _grounded_dense(pg)
    try:
        r = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"dense factorization breakdown: {exc}") from exc
    half = scipy.linalg.solve_triangular(r, lg, lower=True)
    c = scipy.linalg.solve_triangular(r, half.T, lower=True)
    c = 0.5 * (c + c.T)
    vals, z = jacobi_eigh(c)
    u = scipy.linalg.solve_triangular(r.T, z, lower=False)
    # enforce u^T L_P u = 1 on the range space
    lp = laplacian_dense(pg)
    norms = np.einsum("ij,ij->j", u, lp @ u)
    scale = np.where(norms > 1e-12, 1.0 / np.sqrt(np.maximum(norms, 1e-300)), 1.0)
    return DenseSpectrum(eigenvalues=vals, eigenvectors=u * scale[None, :])


def dense_trace_ratio(g: WeightedGraph, p, size_guard: int = ORACLE_SIZE_GUARD) -> float:
    """Tr(L_P^+ L_G) via dense pseudoinverse (restricted to the 1-orthogonal space)."""
    if g.n > size_guard:
        raise GraphError(f"dense oracle guarded at n <= {size_guard}")
    pg = _as_graph(p)
    lg = laplacian_dense(g)
    lp = laplacian_dense(pg)
    plus = np.linalg.pinv(lp, hermitian=True)
    return float(np.sum(plus * lg))
