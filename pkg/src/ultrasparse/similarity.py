"""Extreme generalized-eigenvalue estimation and similarity-aware thresholds."""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from ._seeding import rademacher, stream
from .graph import GraphError, WeightedGraph, laplacian_apply


@dataclass(frozen=True)
class SimilarityEstimate:
    """Estimated extreme eigenvalues of the pencil (L_G, L_P) and their ratio."""
    lambda_max_est: float
    lambda_min_est: float
    sigma2_est: float
    iterations_used: int

    def to_dict(self):
        return {
            "lambda_max_est": self.lambda_max_est,
            "lambda_min_est": self.lambda_min_est,
            "sigma2_est": self.sigma2_est,
            "iterations_used": self.iterations_used,
        }


def _block_lambda_max_state(g: WeightedGraph, preconditioner, max_iters: int,
                            rel_tol: float, seed: int, start,
                            block: int) -> tuple[float, int, np.ndarray]:
    """Block power iteration with Rayleigh-Ritz readout on the pencil.

    The Ritz value is a maximum of Rayleigh quotients over a subspace, so it
    never exceeds the true lambda_max; a block beats single-vector iteration
    when the top eigenvalues cluster.
    """
    import scipy.linalg

    rng = stream(seed, "lambda-max-block")
    n = g.n
    block = max(1, min(int(block), n - 1))
    s = np.empty((n, block))
    have = 0
    if start is not None:
        start = np.asarray(start, dtype=np.float64)
        if start.ndim == 1:
            start = start[:, None]
        have = min(block, start.shape[1])
        s[:, :have] = start[:, :have]
    if have < block:
        s[:, have:] = rng.standard_normal((n, block - have))
    s -= s.mean(axis=0, keepdims=True)
    q, _ = np.linalg.qr(s)
    s = q
    lam_prev = None
    lam = 1.0
    used = max_iters
    for k in range(1, max_iters + 1):
        y = np.column_stack([laplacian_apply(g, s[:, j]) for j in range(block)])
        z = np.column_stack([preconditioner.solve(y[:, j]) for j in range(block)])
        z -= z.mean(axis=0, keepdims=True)
        b_small = z.T @ y          # == Z^T L_P Z since L_P Z = Y on range
        b_small = 0.5 * (b_small + b_small.T)
        yn = np.column_stack([laplacian_apply(g, z[:, j]) for j in range(block)])
        a_small = z.T @ yn
        a_small = 0.5 * (a_small + a_small.T)
        try:
            vals = scipy.linalg.eigh(a_small, b_small, eigvals_only=True)
            c = np.linalg.cholesky(b_small)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
            # block collapsed; restart the deficient directions
            s = rng.standard_normal((n, block))
            s -= s.mean(axis=0, keepdims=True)
            s, _ = np.linalg.qr(s)
            continue
        lam = float(vals[-1])
        s = scipy.linalg.solve_triangular(c, z.T, lower=True).T  # Z C^{-T}
        if lam_prev is not None and abs(lam - lam_prev) < rel_tol * max(abs(lam), 1e-300):
            used = k
            break
        lam_prev = lam
    return float(lam), used, s


def _lambda_max_state(g: WeightedGraph, preconditioner, max_iters: int,
                      rel_tol: float, seed: int, start) -> tuple[float, int, np.ndarray]:
    if max_iters < 1:
        raise GraphError("max_iters must be >= 1")
    if start is not None:
        h = np.asarray(start, dtype=np.float64).copy()
    else:
        # Best of a few Gaussian draws by initial Rayleigh quotient: guards
        # against a start with near-zero overlap on the dominant eigenvector,
        # which would otherwise trip the plateau test far below lambda_max.
        rng = stream(seed, "lambda-max")
        h = None
        best = -np.inf
        for _ in range(4):
            cand = rng.standard_normal(g.n)
            cand -= cand.mean()
            qp = preconditioner.quadratic_form(cand)
            if qp <= 0:
                continue
            ray = float(np.dot(cand, laplacian_apply(g, cand)) / qp)
            if ray > best:
                best, h = ray, cand
        if h is None:
            h = np.zeros(g.n)
            h[0] = 1.0
    h -= h.mean()
    nrm = np.linalg.norm(h)
    if nrm == 0.0:
        h = np.zeros(g.n)
        h[0] = 1.0
        h -= h.mean()
        nrm = np.linalg.norm(h)
    h /= nrm
    y = laplacian_apply(g, h)
    qp = preconditioner.quadratic_form(h)
    lam_prev = float(np.dot(h, y) / qp) if qp > 0 else 1.0
    lam = lam_prev
    used = max_iters
    for k in range(1, max_iters + 1):
        z = np.asarray(preconditioner.solve(y), dtype=np.float64)
        z -= z.mean()
        denom = float(np.dot(z, y))  # equals z^T L_P z for z = P^{-1} y
        yn = laplacian_apply(g, z)
        num = float(np.dot(z, yn))
        if denom <= 0.0:
            lam = lam_prev
            used = k
            break
        nrm = np.linalg.norm(z)
        h = z / nrm
        y = yn / nrm
        lam = num / denom
        if abs(lam - lam_prev) < rel_tol * max(abs(lam), 1e-300):
            used = k
            break
        lam_prev = lam
    return float(lam), used, h


def estimate_lambda_max(g: WeightedGraph, preconditioner, max_iters: int = 10,
                        rel_tol: float = 1e-3, seed: int = 0,
                        start=None, block: int = 1) -> tuple[float, int]:
    """Largest pencil eigenvalue by generalized power iteration.

    Rayleigh-quotient readout (x^T L_G x)/(x^T L_P x), which never exceeds
    the true maximum; stops once successive readouts change by less than
    rel_tol or after max_iters. ``preconditioner`` needs .solve(b) and
    .quadratic_form(x). ``start`` warm-starts the iteration (used across
    densification rounds to keep estimates tightly comparable); ``block`` > 1
    switches to block iteration with a Rayleigh-Ritz readout, which copes
    with clustered top eigenvalues.
    """
    if block > 1:
        lam, used, _ = _block_lambda_max_state(g, preconditioner, max_iters,
                                               rel_tol, seed, start, block)
    else:
        lam, used, _ = _lambda_max_state(g, preconditioner, max_iters, rel_tol,
                                         seed, start)
    return lam, used


def estimate_lambda_min(g: WeightedGraph, sparsifier) -> float:
    """Smallest weighted-degree ratio min_p L_G(p,p)/L_P(p,p).

    A one-vertex restriction of the two-coloring bound, hence always an
    upper bound on the true lambda_min; exact equality at 1.0 whenever some
    vertex keeps all its incident weight in the sparsifier.
    """
    dg = g.laplacian_diag
    dp = sparsifier.laplacian_diag
    if dg.shape != dp.shape:
        raise GraphError("sparsifier does not match graph")
    return float(np.min(dg / dp))


def estimate_similarity(g: WeightedGraph, sparsifier, max_iters: int = 10,
                        rel_tol: float = 1e-3, seed: int = 0, start=None,
                        return_state: bool = False, block: int = 1):
    if block > 1:
        lam_max, used, h = _block_lambda_max_state(g, sparsifier, max_iters,
                                                   rel_tol, seed, start, block)
    else:
        lam_max, used, h = _lambda_max_state(g, sparsifier, max_iters, rel_tol,
                                             seed, start)
    lam_min = estimate_lambda_min(g, sparsifier)
    sigma2 = max(lam_max / lam_min, 1.0)
    est = SimilarityEstimate(
        lambda_max_est=float(lam_max),
        lambda_min_est=float(lam_min),
        sigma2_est=float(sigma2),
        iterations_used=used,
    )
    if return_state:
        return est, h
    return est


def heat_threshold(target_sigma2: float, lambda_min_est: float,
                   lambda_max_est: float, t: int) -> float:
    """Normalized-heat cutoff (target_sigma2 * lambda_min / lambda_max)^(2t+1).

    Clamped to (0, 1]; 1 means the sparsifier already meets the target and
    only the single maximum-heat edge can pass.
    """
    if target_sigma2 < 1.0:
        raise GraphError("target sigma^2 must be >= 1")
    if lambda_max_est <= 0 or lambda_min_est <= 0:
        raise GraphError("eigenvalue estimates must be positive")
    base = target_sigma2 * lambda_min_est / lambda_max_est
    if base >= 1.0:
        return 1.0
    return float(base ** (2 * int(t) + 1))


def unique_edge_budget(lambda_max: float, target_lambda_max: float) -> int:
    """Edge count 2*lambda_max/target - 1 (ceil, floored at zero).

    Assumes the nearly-worst-case eigenvalue decay; advisory only, never
    enforced as a hard budget.
    """
    if target_lambda_max <= 0:
        raise GraphError("target lambda_max must be positive")
    k = ceil(2.0 * lambda_max / target_lambda_max - 1.0)
    return max(int(k), 0)
