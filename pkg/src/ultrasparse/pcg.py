"""Preconditioned conjugate gradient for graph Laplacians."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import GraphError, WeightedGraph, laplacian_apply


class PCGBreakdownError(RuntimeError):
    """Zero or negative direction curvature inside the PCG recurrence."""


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Outcome of a PCG solve.

    ``relative_residual`` is recomputed post hoc as ||L_G x - b_used|| /
    ||b_used|| where b_used is the right-hand side after the all-ones
    component (reported in ``ones_component``) has been projected out; for
    SDD systems with self weights no projection happens and b_used == b.
    """
    x: np.ndarray
    iterations: int
    relative_residual: float
    converged: bool
    residual_history: np.ndarray
    ones_component: float


TRUE_RESIDUAL_EVERY = 50  # guard against recurrence drift on long solves


def pcg_solve(g: WeightedGraph, precond_solve, b, rel_tol: float = 1e-3,
              max_iters: int = 1000) -> SolveResult:
    """Solve L_G x = b to ||L_G x - b|| <= rel_tol * ||b||.

    Pure Laplacians are solved on the all-ones-orthogonal subspace (the
    nullspace component of b is projected off and reported); SDD inputs with
    self weights solve directly. Breakdown raises; running out of iterations
    returns converged=False.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (g.n,):
        raise GraphError("rhs length does not match graph")
    pure = not g.self_weights.any()
    ones_component = 0.0
    if pure:
        mean = b.mean()
        ones_component = float(mean * np.sqrt(g.n))
        b = b - mean
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return SolveResult(np.zeros(g.n), 0, 0.0, True, np.zeros(0), ones_component)

    x = np.zeros(g.n)
    r = b.copy()
    z = np.asarray(precond_solve(r), dtype=np.float64)
    p = z.copy()
    rz = float(np.dot(r, z))
    history = []
    converged = False
    iterations = 0
    for it in range(1, max_iters + 1):
        ap = laplacian_apply(g, p)
        pap = float(np.dot(p, ap))
        if pap <= 0.0:
            raise PCGBreakdownError(f"direction curvature {pap:.3e} at iteration {it}")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        if it % TRUE_RESIDUAL_EVERY == 0:
            r = b - laplacian_apply(g, x)
        relres = float(np.linalg.norm(r)) / bnorm
        history.append(relres)
        iterations = it
        if relres <= rel_tol:
            # confirm with the true residual before declaring victory
            r = b - laplacian_apply(g, x)
            relres = float(np.linalg.norm(r)) / bnorm
            history[-1] = relres
            if relres <= rel_tol:
                converged = True
                break
        z = np.asarray(precond_solve(r), dtype=np.float64)
        rz_new = float(np.dot(r, z))
        beta = rz_new / rz
        p = z + beta * p
        rz = rz_new
    if pure:
        x = x - x.mean()
    final = float(np.linalg.norm(b - laplacian_apply(g, x))) / bnorm
    return SolveResult(x, iterations, final, converged and final <= rel_tol,
                       np.array(history), ones_component)
