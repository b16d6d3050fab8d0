"""Command-line front end: sparsify / solve / partition / stats / oracle-check.

Every report is JSON with the full run configuration embedded, so a run can
be reproduced from its own output. All randomness flows from the single
--seed flag through per-purpose derived streams. Exit codes: 0 success,
1 check or convergence failure, 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from ._seeding import stream
from .graph import (GraphError, WeightedGraph, generate_grid, quadratic_form,
                    read_matrix_market)
from .oracle import dense_generalized_eigs, dense_trace_ratio, ORACLE_SIZE_GUARD
from .partition import fiedler_approx, fiedler_direct, partition_disagreement, sign_cut
from .pcg import pcg_solve
from .similarity import estimate_similarity
from .sparsifier import (DensifyConfig, Sparsifier, densify,
                         predicted_eigenvalue_after_add, rank_one_gamma,
                         write_sparsifier)
from .tree import (SpanningTree, extract_spanning_tree, hair_comb_tree,
                   stretch_of_edges, total_stretch)
from .embedding import aggregate_heat

FORMAT_VERSION = "1"


@dataclass
class RunConfig:
    """Flat record of every flag; embedded verbatim in each report."""
    command: str
    mtx: str | None = None
    grid: str | None = None
    weighting: str = "unit"
    weight_seed: int = 0
    tree: str = "low-stretch"
    seed: int = 42
    threads: int = 1
    sigma2: float | None = None
    t: int = 2
    r: int | None = None
    max_rounds: int = 20
    round_cap_fraction: float = 0.02
    edge_budget: int | None = None
    tol: float | None = None
    max_iters: int | None = None
    rhs: str | None = None
    random_rhs: int | None = None
    iters: int | None = None
    inner_tol: float | None = None
    compare_direct: bool = False
    out_prefix: str | None = None
    report_path: str | None = None
    heat_out: str | None = None
    stretch_out: str | None = None
    signs_out: str | None = None
    self_test_corrupt: bool = False


class _Timer:
    def __init__(self):
        self.times: dict[str, float] = {}

    def measure(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.start = time.perf_counter()

            def __exit__(self, *exc):
                timer.times[name] = timer.times.get(name, 0.0) + time.perf_counter() - self.start

        return _Ctx()


def _load_graph(cfg: RunConfig) -> tuple[WeightedGraph, tuple[int, int] | None]:
    if (cfg.mtx is None) == (cfg.grid is None):
        raise GraphError("exactly one of --mtx or --grid is required")
    if cfg.mtx is not None:
        return read_matrix_market(cfg.mtx), None
    try:
        rows, cols = (int(v) for v in cfg.grid.lower().split("x"))
    except Exception as exc:
        raise GraphError(f"--grid expects ROWSxCOLS, got {cfg.grid!r}") from exc
    g = generate_grid(rows, cols, weighting=cfg.weighting,
                      seed=cfg.weight_seed if cfg.weighting != "unit" else None)
    return g, (rows, cols)


def _build_tree(cfg: RunConfig, g: WeightedGraph, dims) -> SpanningTree:
    if cfg.tree == "max-weight":
        return extract_spanning_tree(g, "max-weight")
    if cfg.tree == "low-stretch":
        return extract_spanning_tree(g, "low-stretch-heuristic", seed=cfg.seed)
    if cfg.tree == "hair-comb":
        if dims is None:
            raise GraphError("--tree hair-comb requires a --grid input")
        return hair_comb_tree(g, *dims)
    raise GraphError(f"unknown tree strategy {cfg.tree!r}")


def _emit(report: dict, cfg: RunConfig) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if cfg.report_path:
        with open(cfg.report_path, "w") as fh:
            fh.write(text + "\n")


def _base_report(cfg: RunConfig, timer: _Timer) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "command": cfg.command,
        "config": asdict(cfg),
        "wall_times": timer.times,
    }


def _densify_config(cfg: RunConfig) -> DensifyConfig:
    return DensifyConfig(
        t=cfg.t, r=cfg.r, seed=cfg.seed, max_rounds=cfg.max_rounds,
        max_edges_per_round_fraction=cfg.round_cap_fraction,
        edge_budget=cfg.edge_budget, threads=cfg.threads,
    )


def cmd_sparsify(cfg: RunConfig) -> int:
    timer = _Timer()
    with timer.measure("load"):
        g, dims = _load_graph(cfg)
    with timer.measure("tree"):
        t = _build_tree(cfg, g, dims)
        tree_stretch = total_stretch(g, t)
    target = cfg.sigma2 if cfg.sigma2 is not None else 100.0
    with timer.measure("densify"):
        s = densify(g, t, target, _densify_config(cfg))
    report = _base_report(cfg, timer)
    history = [rec.to_dict() for rec in s.history]
    lam0 = history[0]["lambda_max_est"] if history else s.similarity.lambda_max_est
    report.update({
        "n": g.n,
        "m": g.m,
        "tree_total_stretch": tree_stretch,
        "rounds": s.rounds,
        "edges_added_per_round": [rec.accepted_count for rec in s.history
                                  if rec.accepted_count > 0],
        "edges_added_total": int(s.offtree_edge_ids.size),
        "lambda_max_est": s.similarity.lambda_max_est,
        "lambda_min_est": s.similarity.lambda_min_est,
        "sigma2_est": s.similarity.sigma2_est,
        "lambda_max_initial": lam0,
        "lambda_max_reduction": lam0 / max(s.similarity.lambda_max_est, 1e-300),
        "density": s.density,
        "converged": s.converged,
        "history": history,
    })
    if cfg.out_prefix:
        with timer.measure("write"):
            mtx, sidecar = write_sparsifier(s, cfg.out_prefix)
        report["files"] = {"laplacian_mtx": mtx, "edges_tsv": sidecar}
    _emit(report, cfg)
    return 0


def cmd_solve(cfg: RunConfig) -> int:
    timer = _Timer()
    with timer.measure("load"):
        g, dims = _load_graph(cfg)
    with timer.measure("tree"):
        t = _build_tree(cfg, g, dims)
    target = cfg.sigma2 if cfg.sigma2 is not None else 200.0
    with timer.measure("densify"):
        s = densify(g, t, target, _densify_config(cfg))
    if cfg.rhs is not None:
        b = np.loadtxt(cfg.rhs, dtype=np.float64).ravel()
    else:
        rhs_seed = cfg.random_rhs if cfg.random_rhs is not None else cfg.seed
        b = stream(rhs_seed, "rhs").standard_normal(g.n)
    tol = cfg.tol if cfg.tol is not None else 1e-3
    max_iters = cfg.max_iters if cfg.max_iters is not None else 1000
    with timer.measure("pcg"):
        res = pcg_solve(g, s.solve, b, rel_tol=tol, max_iters=max_iters)
    report = _base_report(cfg, timer)
    report.update({
        "n": g.n,
        "m": g.m,
        "iterations": res.iterations,
        "relative_residual": res.relative_residual,
        "converged": bool(res.converged),
        "ones_component": res.ones_component,
        "sparsifier_density": s.density,
        "sigma2_est": s.similarity.sigma2_est,
    })
    _emit(report, cfg)
    return 0 if res.converged else 1


def cmd_partition(cfg: RunConfig) -> int:
    timer = _Timer()
    with timer.measure("load"):
        g, dims = _load_graph(cfg)
    with timer.measure("tree"):
        t = _build_tree(cfg, g, dims)
    target = cfg.sigma2 if cfg.sigma2 is not None else 200.0
    with timer.measure("densify"):
        s = densify(g, t, target, _densify_config(cfg))
    iters = cfg.iters if cfg.iters is not None else 8
    inner_tol = cfg.inner_tol if cfg.inner_tol is not None else 1e-3
    with timer.measure("fiedler"):
        v = fiedler_approx(g, s.solve, iters=iters, seed=cfg.seed,
                           inner_rel_tol=inner_tol)
        part = sign_cut(g, v)
    report = _base_report(cfg, timer)
    report.update({
        "n": g.n,
        "m": g.m,
        "balance_ratio": part.balance_ratio,
        "cut_weight": part.cut_weight,
        "sigma2_est": s.similarity.sigma2_est,
        "sparsifier_density": s.density,
    })
    if cfg.compare_direct:
        with timer.measure("fiedler_direct"):
            vd = fiedler_direct(g, iters=iters, seed=cfg.seed)
            report["disagreement_vs_direct"] = partition_disagreement(
                part, sign_cut(g, vd))
    if cfg.signs_out:
        np.savetxt(cfg.signs_out, part.signs, fmt="%d")
        report["files"] = {"signs": cfg.signs_out}
    _emit(report, cfg)
    return 0


def cmd_stats(cfg: RunConfig) -> int:
    timer = _Timer()
    with timer.measure("load"):
        g, dims = _load_graph(cfg)
    with timer.measure("tree"):
        t = _build_tree(cfg, g, dims)
        tree_stretch = total_stretch(g, t)
    s = Sparsifier(g, t)
    with timer.measure("heat"):
        hr = aggregate_heat(g, s, t=cfg.t, r=cfg.r, seed=cfg.seed,
                            threads=cfg.threads)
    heat_path = cfg.heat_out or "heat.tsv"
    hr.write_tsv(heat_path)

    off = s.missing_edge_ids
    stretch_path = cfg.stretch_out or "stretch.tsv"
    with timer.measure("stretch"):
        st = stretch_of_edges(t, g.edge_p[off], g.edge_q[off], g.edge_w[off])
        order = np.argsort(-st, kind="stable")
        with open(stretch_path, "w") as fh:
            fh.write("p\tq\tw\tstretch\n")
            for i in order:
                e = off[i]
                fh.write(f"{g.edge_p[e]}\t{g.edge_q[e]}\t{g.edge_w[e]:.17g}\t{st[i]:.17g}\n")

    report = _base_report(cfg, timer)
    report.update({
        "n": g.n,
        "m": g.m,
        "tree_total_stretch": tree_stretch,
        "offtree_edges": int(off.size),
        "heat_identity_rel_gap": hr.identity_rel_gap,
        "max_heat_edge": hr.max_edge_id,
        "files": {"heat_tsv": heat_path, "stretch_tsv": stretch_path},
    })
    _emit(report, cfg)
    return 0


def cmd_oracle_check(cfg: RunConfig) -> int:
    timer = _Timer()
    with timer.measure("load"):
        g, dims = _load_graph(cfg)
    if g.n > ORACLE_SIZE_GUARD:
        raise GraphError(f"oracle checks guarded at n <= {ORACLE_SIZE_GUARD}")
    t = extract_spanning_tree(g, "max-weight")
    p_graph = t.as_graph()
    if cfg.self_test_corrupt:
        w = p_graph.edge_w.copy()
        w[0] *= 1.5  # deliberate corruption; the checks below must catch it
        p_graph = WeightedGraph.from_edges(
            g.n, (p_graph.edge_p, p_graph.edge_q, w), self_weights=g.self_weights)
    checks = {}

    with timer.measure("trace"):
        trace = dense_trace_ratio(g, p_graph)
        st = total_stretch(g, t)
        rel = abs(trace - st) / max(abs(st), 1e-300)
        checks["trace_identity"] = {"trace": trace, "total_stretch": st,
                                    "rel_err": rel, "passed": rel <= 1e-8}

    with timer.measure("spectrum"):
        spec = dense_generalized_eigs(g, p_graph)
        floor = float(spec.nonzero().min()) if spec.nonzero().size else 1.0
        checks["eigen_floor"] = {"min_nonzero": floor, "passed": floor >= 1.0 - 1e-8}

    mask = t.is_tree_edge
    off = np.flatnonzero(~mask)
    with timer.measure("monotonicity"):
        ok = True
        worst = 0.0
        base = np.sort(spec.eigenvalues)
        for e in off[: min(3, off.size)]:
            s2 = Sparsifier(g, t, [e])
            after = np.sort(dense_generalized_eigs(g, s2 if not cfg.self_test_corrupt
                                                   else p_graph).eigenvalues)
            inc = float(np.max(after - base))
            worst = max(worst, inc)
            ok = ok and inc <= 1e-8
        checks["monotonicity"] = {"max_increase": worst, "passed": ok,
                                  "edges_checked": int(min(3, off.size))}

    with timer.measure("rank_one"):
        if off.size:
            hold = off[-1]
            keep = off[:-1]
            p_all_but = Sparsifier(g, t, keep)
            spec_p = dense_generalized_eigs(g, p_all_but.as_graph() if not cfg.self_test_corrupt
                                            else p_graph)
            lam = spec_p.lambda_max
            u = spec_p.eigenvectors[:, 0]
            gamma = rank_one_gamma(p_all_but, (int(g.edge_p[hold]), int(g.edge_q[hold])), u)
            predicted = predicted_eigenvalue_after_add(lam, float(g.edge_w[hold]), gamma)
            rel = abs(predicted - 1.0)
            checks["rank_one"] = {"lambda_before": lam, "predicted_after": predicted,
                                  "rel_err": rel, "passed": rel <= 1e-6}
        else:
            checks["rank_one"] = {"passed": True, "note": "input graph is a tree"}

    all_passed = all(c["passed"] for c in checks.values())
    report = _base_report(cfg, timer)
    report.update({"n": g.n, "m": g.m, "checks": checks, "all_passed": all_passed})
    _emit(report, cfg)
    return 0 if all_passed else 1


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--mtx", help="Matrix Market SDD input")
    sp.add_argument("--grid", help="ROWSxCOLS synthetic mesh")
    sp.add_argument("--weighting", choices=["unit", "random"], default="unit")
    sp.add_argument("--weight-seed", type=int, default=0)
    sp.add_argument("--tree", choices=["low-stretch", "max-weight", "hair-comb"],
                    default="low-stretch")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--report", dest="report_path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ultrasparse",
                                 description="spectral graph sparsification toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sparsify", help="extract a similarity-targeted sparsifier")
    _add_common(sp)
    sp.add_argument("--sigma2", type=float, default=100.0)
    sp.add_argument("--t", type=int, default=2)
    sp.add_argument("--r", type=int)
    sp.add_argument("--max-rounds", type=int, default=20)
    sp.add_argument("--round-cap-frac", type=float, default=0.02, dest="round_cap_fraction")
    sp.add_argument("--edge-budget", type=int)
    sp.add_argument("--out-prefix")

    sp = sub.add_parser("solve", help="PCG solve with a sparsifier preconditioner")
    _add_common(sp)
    sp.add_argument("--sigma2", type=float, default=200.0)
    sp.add_argument("--t", type=int, default=2)
    sp.add_argument("--r", type=int)
    sp.add_argument("--max-rounds", type=int, default=20)
    sp.add_argument("--rhs", help="text file with one value per vertex")
    sp.add_argument("--random-rhs", type=int, dest="random_rhs",
                    help="seed for a random right-hand side")
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.add_argument("--max-iters", type=int, default=1000)

    sp = sub.add_parser("partition", help="sign-cut spectral bipartition")
    _add_common(sp)
    sp.add_argument("--sigma2", type=float, default=200.0)
    sp.add_argument("--t", type=int, default=2)
    sp.add_argument("--r", type=int)
    sp.add_argument("--max-rounds", type=int, default=20)
    sp.add_argument("--iters", type=int, default=8)
    sp.add_argument("--inner-tol", type=float, default=1e-3, dest="inner_tol")
    sp.add_argument("--compare-direct", action="store_true")
    sp.add_argument("--signs-out")

    sp = sub.add_parser("stats", help="heat and stretch tables for plotting")
    _add_common(sp)
    sp.add_argument("--t", type=int, default=2)
    sp.add_argument("--r", type=int)
    sp.add_argument("--heat-out")
    sp.add_argument("--stretch-out")

    sp = sub.add_parser("oracle-check", help="dense-oracle invariant suite (small inputs)")
    _add_common(sp)
    sp.add_argument("--self-test-corrupt", action="store_true",
                    help="corrupt one sparsifier weight to validate the checker")
    return ap


_COMMANDS = {
    "sparsify": cmd_sparsify,
    "solve": cmd_solve,
    "partition": cmd_partition,
    "stats": cmd_stats,
    "oracle-check": cmd_oracle_check,
}


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    fields = {f for f in RunConfig.__dataclass_fields__}
    kwargs = {k: v for k, v in vars(ns).items() if k in fields}
    cfg = RunConfig(**kwargs)
    try:
        return _COMMANDS[cfg.command](cfg)
    except (GraphError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
