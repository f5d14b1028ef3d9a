import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from oracles import brute_force_problem
from racadmm import __version__
from racadmm.cli import EXIT_ERROR, EXIT_LIMIT, EXIT_OK, main
from racadmm.generators import RandomQpSpec, gen_random_lcqp
from racadmm.mip import gap
from racadmm.problem import Lcqp, load_problem, save_problem


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def trivial(tmp_path):
    p = Lcqp.create(H=2 * np.eye(2), c=[-2.0, -2.0], name="trivial")
    return save_problem(p, tmp_path, stem="trivial")


@pytest.fixture
def hard(tmp_path):
    p = gen_random_lcqp(RandomQpSpec(n=30, m_eq=5, m_ineq=5, seed=2))
    return save_problem(p, tmp_path, stem="hard")


def gen(capsys, tmp_path, *argv):
    code, out, _ = run(capsys, "gen", *argv, "--out-dir", tmp_path)
    assert code == EXIT_OK
    return out.strip()


class TestSolve:
    def test_trivial(self, capsys, trivial, tmp_path):
        code, out, _ = run(capsys, "solve", trivial, "--trace", tmp_path / "t.csv")
        doc = json.loads(out)
        assert code == EXIT_OK
        assert doc["command"] == "solve" and doc["version"] == __version__
        assert doc["result"]["status"] == "Optimal"
        assert doc["result"]["objective"] == pytest.approx(-2.0)
        assert set(doc["timing"]) == {"started_at", "elapsed_s"}
        with open(tmp_path / "t.csv", newline="") as fh:
            assert next(csv.reader(fh)) == ["iter", "r_prim", "r_dual", "objective", "elapsed_ms"]

    def test_iteration_limit(self, capsys, hard):
        code, out, _ = run(capsys, "solve", hard, "--max-iter", 1, "--mode", "rac", "--p", 3)
        assert code == EXIT_LIMIT and json.loads(out)["result"]["status"] == "IterLimit"

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "solve", tmp_path / "nope.json")
        assert code == EXIT_ERROR and err

    def test_rerun_identical(self, capsys, hard, tmp_path):
        docs = []
        for k in range(2):
            out = tmp_path / f"r{k}.json"
            run(capsys, "solve", hard, "--seed", 4, "--p", 3, "--out", out)
            d = json.loads(out.read_text())
            d.pop("timing")
            docs.append(d)
        assert docs[0] == docs[1]
        assert docs[0]["seed"] == 4 and docs[0]["config"]["p"] == 3

    def test_config_file_and_override(self, capsys, hard, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"p": 5, "max_iter": 2}))
        code, out, _ = run(capsys, "solve", hard, "--config", cfg, "--max-iter", 3)
        doc = json.loads(out)
        assert code == EXIT_LIMIT
        assert doc["config"]["p"] == 5 and doc["config"]["max_iter"] == 3
        assert doc["result"]["iterations"] == 3

    def test_unknown_config_key(self, capsys, hard, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        code, _, err = run(capsys, "solve", hard, "--config", cfg)
        assert code == EXIT_ERROR and "bogus" in err


class TestAnalyze:
    def test_rac_fixture(self, capsys):
        code, out, _ = run(capsys, "analyze", "--fixture", "example2", "--mode", "rac")
        r = json.loads(out)["result"]
        assert code == EXIT_OK
        assert abs(r["rho_T"] - 1.0948) <= 1e-3 and abs(r["rho_M"] - 0.8215) <= 1e-3
        assert r["verdicts"]["almost_sure_convergent"] is False

    def test_rp_fixture(self, capsys):
        code, out, _ = run(capsys, "analyze", "--fixture", "example2", "--mode", "rp", "--partition", 0)
        r = json.loads(out)["result"]
        assert r["partition"] == [[0, 1], [2, 3], [4, 5]]
        assert abs(r["rho_T"] - 0.9852) <= 1e-3 and abs(r["rho_M"] - 0.9887) <= 1e-3
        assert r["verdicts"]["almost_sure_convergent"] is True

    def test_single_block_manifest(self, capsys, tmp_path):
        rng = np.random.default_rng(0)
        p = Lcqp.create(H=np.eye(4), c=np.zeros(4), A_eq=rng.normal(size=(2, 4)), b_eq=np.zeros(2))
        path = save_problem(p, tmp_path, stem="eq")
        code, out, _ = run(capsys, "analyze", path, "--p", 1)
        r = json.loads(out)["result"]
        assert code == EXIT_OK and r["rho_M"] < 1 and r["verdicts"]["expected_convergent"] is True
        assert r["rho_T"] == pytest.approx(r["rho_M"] ** 2, rel=1e-9)

    def test_inequalities_rejected(self, capsys, hard):
        code, _, _ = run(capsys, "analyze", hard)
        assert code == EXIT_ERROR

    def test_needs_input(self, capsys):
        assert run(capsys, "analyze")[0] == EXIT_ERROR


class TestGenAndMip:
    def test_triangle_pipeline(self, capsys, tmp_path):
        edges = tmp_path / "triangle.txt"
        edges.write_text("# triangle\n0 1\n1 2\n0 2\n")
        path = gen(capsys, tmp_path, "maxcut", "--edges", edges, "--stem", "tri")
        ev = tmp_path / "events.csv"
        code, out, _ = run(capsys, "mip", path, "--seed", 0, "--mip-max-iter", 50, "--events", ev)
        res = json.loads(out)["result"]
        ref, _ = brute_force_problem(load_problem(path))
        assert code == EXIT_OK and gap(res["objective"], ref) == 0.0
        with open(ev, newline="") as fh:
            assert next(csv.reader(fh)) == ["time_s", "iteration", "objective"]

    def test_qap_pipeline(self, capsys, tmp_path):
        path = gen(capsys, tmp_path, "qap", "--r", 3, "--seed", 1, "--binary")
        code, out, _ = run(capsys, "mip", path, "--seed", 0, "--mip-max-iter", 300)
        ref, _ = brute_force_problem(load_problem(path))
        assert code == EXIT_OK and json.loads(out)["result"]["objective"] == pytest.approx(ref)

    def test_gen_deterministic(self, capsys, tmp_path):
        a = gen(capsys, tmp_path / "a", "random", "--n", 20, "--m-eq", 3, "--seed", 7)
        b = gen(capsys, tmp_path / "b", "random", "--n", 20, "--m-eq", 3, "--seed", 7)
        pa, pb = load_problem(a), load_problem(b)
        assert (pa.H != pb.H).nnz == 0 and np.array_equal(pa.c, pb.c) and np.array_equal(pa.b_eq, pb.b_eq)

    def test_markowitz_from_returns(self, capsys, tmp_path):
        R = np.random.default_rng(0).normal(0.01, 0.05, size=(30, 6))
        np.savetxt(tmp_path / "R.csv", R, delimiter=",")
        path = gen(capsys, tmp_path, "markowitz", "--returns", tmp_path / "R.csv")
        assert load_problem(path).n == 6

    def test_graph_needs_edges(self, capsys, tmp_path):
        assert run(capsys, "gen", "maxcut", "--out-dir", tmp_path)[0] == EXIT_ERROR

    def test_mip_rejects_continuous(self, capsys, trivial):
        assert run(capsys, "mip", trivial)[0] == EXIT_ERROR


class TestBench:
    def test_p_sweep(self, capsys, tmp_path):
        out = tmp_path / "bench.csv"
        code, _, _ = run(capsys, "bench", "--n", 300, "--seed", 1, "--p-list", "5,10,20", "--csv", out)
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert code == EXIT_OK
        assert [int(r["p"]) for r in rows] == [5, 10, 20]
        assert all(int(r["iterations"]) > 0 and r["status"] == "Optimal" for r in rows)

    def test_stdout_grid(self, capsys):
        code, out, _ = run(capsys, "bench", "--n", 40, "--modes", "rac,cyclic", "--eps-list", "1e-3,1e-4",
                           "--p-list", "4")
        rows = list(csv.DictReader(out.splitlines()))
        assert code == EXIT_OK and len(rows) == 4
        assert {(r["mode"], r["eps"]) for r in rows} == {(m, e) for m in ("rac", "cyclic")
                                                       for e in ("0.001", "0.0001")}


def test_module_entry_point(trivial):
    proc = subprocess.run([sys.executable, "-m", "racadmm", "solve", str(trivial)], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["result"]["status"] == "Optimal"
