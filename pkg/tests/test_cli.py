import json

import numpy as np
import pytest

import ultrasparse as us
from ultrasparse.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def strip_times(report: dict) -> dict:
    report = dict(report)
    report.pop("wall_times", None)
    return report


def test_sparsify_grid_report(capsys, tmp_path):
    prefix = str(tmp_path / "sp")
    code, out, _ = run_cli(capsys, "sparsify", "--grid", "20x20", "--sigma2", "30",
                           "--out-prefix", prefix)
    assert code == 0
    rep = json.loads(out)
    assert rep["format_version"] == "1"
    assert rep["n"] == 400 and rep["m"] == 760
    assert rep["converged"] is True
    assert rep["sigma2_est"] <= 30
    assert rep["config"]["sigma2"] == 30
    assert rep["density"] == pytest.approx((399 + rep["edges_added_total"]) / 400)
    assert (tmp_path / "sp.mtx").exists()
    assert (tmp_path / "sp.edges.tsv").exists()


def test_sparsify_deterministic_reports(capsys):
    args = ("sparsify", "--grid", "16x16", "--sigma2", "40", "--seed", "7")
    code1, out1, _ = run_cli(capsys, *args)
    code2, out2, _ = run_cli(capsys, *args)
    assert code1 == code2 == 0
    a = strip_times(json.loads(out1))
    b = strip_times(json.loads(out2))
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_sparsify_tree_input_zero_offtree(capsys, tmp_path):
    # a tree graph has nothing to recover: sigma^2 is exactly 1
    g = us.random_connected_graph(40, 0, seed=1)
    path = tmp_path / "tree.mtx"
    us.write_matrix_market(g, path)
    code, out, _ = run_cli(capsys, "sparsify", "--mtx", str(path), "--sigma2", "2")
    assert code == 0
    rep = json.loads(out)
    assert rep["rounds"] == 0
    assert rep["edges_added_total"] == 0
    assert rep["sigma2_est"] == pytest.approx(1.0)


def test_solve_random_rhs(capsys):
    code, out, _ = run_cli(capsys, "solve", "--grid", "20x20", "--sigma2", "50",
                           "--random-rhs", "3")
    assert code == 0
    rep = json.loads(out)
    assert rep["converged"] is True
    assert rep["relative_residual"] <= 1e-3
    assert rep["config"]["tol"] == 1e-3  # default honored
    assert rep["iterations"] >= 1


def test_solve_rhs_file(capsys, tmp_path):
    rhs = np.random.default_rng(0).standard_normal(100)
    path = tmp_path / "b.txt"
    np.savetxt(path, rhs)
    code, out, _ = run_cli(capsys, "solve", "--grid", "10x10", "--sigma2", "20",
                           "--rhs", str(path))
    assert code == 0
    assert json.loads(out)["converged"] is True


def test_solve_missing_input_exits_2(capsys):
    code, out, err = run_cli(capsys, "solve", "--mtx", "/no/such/file.mtx")
    assert code == 2
    assert "error" in err.lower()
    assert out == ""


def test_partition_report(capsys, tmp_path):
    signs_path = str(tmp_path / "signs.txt")
    code, out, _ = run_cli(capsys, "partition", "--grid", "24x24",
                           "--weighting", "random", "--weight-seed", "5",
                           "--compare-direct", "--signs-out", signs_path)
    assert code == 0
    rep = json.loads(out)
    assert 0.0 <= rep["disagreement_vs_direct"] <= 0.04
    assert rep["balance_ratio"] > 0
    assert rep["cut_weight"] > 0
    signs = np.loadtxt(signs_path)
    assert signs.size == 576
    assert set(np.unique(signs)) <= {-1.0, 1.0}


def test_stats_outputs(capsys, tmp_path):
    heat = str(tmp_path / "h.tsv")
    stretch = str(tmp_path / "s.tsv")
    code, out, _ = run_cli(capsys, "stats", "--grid", "12x12", "--tree", "hair-comb",
                           "--heat-out", heat, "--stretch-out", stretch)
    assert code == 0
    rep = json.loads(out)
    assert rep["heat_identity_rel_gap"] <= 1e-10
    rows = open(heat).read().strip().splitlines()
    heats = [float(r.split("\t")[2]) for r in rows[1:]]
    assert heats == sorted(heats, reverse=True)
    srows = open(stretch).read().strip().splitlines()
    stretches = [float(r.split("\t")[3]) for r in srows[1:]]
    assert stretches == sorted(stretches, reverse=True)
    assert len(srows) - 1 == rep["offtree_edges"]


def test_stats_triangle_single_row(capsys, tmp_path):
    g = us.WeightedGraph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])
    path = tmp_path / "tri.mtx"
    us.write_matrix_market(g, path)
    heat = str(tmp_path / "h.tsv")
    code, out, _ = run_cli(capsys, "stats", "--mtx", str(path), "--tree", "max-weight",
                           "--heat-out", heat, "--stretch-out", str(tmp_path / "s.tsv"))
    assert code == 0
    assert len(open(heat).read().strip().splitlines()) == 2  # header + 1 row


def test_oracle_check_passes(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "oracle-check", "--grid", "8x8")
    assert code == 0
    rep = json.loads(out)
    assert rep["all_passed"] is True
    assert set(rep["checks"]) == {"trace_identity", "eigen_floor", "monotonicity", "rank_one"}


def test_oracle_check_corruption_detected(capsys):
    code, out, _ = run_cli(capsys, "oracle-check", "--grid", "8x8",
                           "--self-test-corrupt")
    assert code == 1
    rep = json.loads(out)
    assert rep["all_passed"] is False


def test_oracle_check_deterministic(capsys):
    code1, out1, _ = run_cli(capsys, "oracle-check", "--grid", "9x7", "--seed", "3")
    code2, out2, _ = run_cli(capsys, "oracle-check", "--grid", "9x7", "--seed", "3")
    assert code1 == code2 == 0
    assert strip_times(json.loads(out1)) == strip_times(json.loads(out2))


def test_hair_comb_requires_grid(capsys, tmp_path):
    g = us.random_connected_graph(10, 4, seed=0)
    path = tmp_path / "g.mtx"
    us.write_matrix_market(g, path)
    code, _, err = run_cli(capsys, "sparsify", "--mtx", str(path), "--tree", "hair-comb")
    assert code == 2
    assert "hair-comb" in err


def test_graph_flags_mutually_exclusive(capsys):
    code, _, err = run_cli(capsys, "sparsify")
    assert code == 2
    code, _, err = run_cli(capsys, "sparsify", "--grid", "4x4", "--mtx", "x.mtx")
    assert code == 2


def test_report_written_to_file(capsys, tmp_path):
    rp = str(tmp_path / "report.json")
    code, out, _ = run_cli(capsys, "sparsify", "--grid", "8x8", "--report", rp)
    assert code == 0
    on_disk = json.load(open(rp))
    assert on_disk == json.loads(out)
