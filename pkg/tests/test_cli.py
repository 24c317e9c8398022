import csv
import json
import shutil
import subprocess

import pytest

from radial.cli import main

BOX_QP = {"type": "qp", "c": [0.5, -0.25], "Q": [[2.0, 0.0], [0.0, 1.0]],
          "A": [[1, 0], [0, 1], [-1, 0], [0, -1]], "b": [1, 1, 1, 1]}
UNBOUNDED = {"type": "composite", "pieces": [{"kind": "affine", "c": [1.0, 0.0], "const": 1.0}]}
NONRADIAL = {"type": "composite",
             "pieces": [{"kind": "quadratic", "const": 0.1, "c": [0.0], "Q": [[2.0]]}]}


def write(tmp_path, doc, name="p.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if isinstance(doc, dict) else doc)
    return str(p)


def fields(out):
    return dict(line.split("=", 1) for line in out.splitlines() if "=" in line)


class TestCheck:
    def test_pass(self, tmp_path, capsys):
        assert main(["check", write(tmp_path, BOX_QP)]) == 0
        assert capsys.readouterr().out.splitlines()[0] == "PASS"

    def test_fail_with_witness(self, tmp_path, capsys):
        assert main(["check", write(tmp_path, NONRADIAL)]) == 1
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "FAIL" and lines[1].startswith("witness")


class TestCertify:
    def test_lines(self, tmp_path, capsys):
        assert main(["certify", write(tmp_path, BOX_QP)]) == 0
        out = fields(capsys.readouterr().out)
        for key in ("R", "D", "L", "lipschitz_dual", "smooth_dual_bound"):
            assert key in out
        assert float(out["L"]) == pytest.approx(2.0)
        assert out["R_provenance"] == "exact"

    def test_user_values(self, tmp_path, capsys):
        main(["certify", write(tmp_path, dict(BOX_QP, R=0.25))])
        out = fields(capsys.readouterr().out)
        assert float(out["R"]) == 0.25 and out["R_provenance"] == "user"


class TestSolve:
    def test_unbounded_certificate(self, tmp_path, capsys):
        trace = tmp_path / "t.csv"
        code = main(["solve", write(tmp_path, UNBOUNDED), "--policy", "constant", "--alpha", "0.5",
                     "--iters", "50", "--out", str(trace)])
        out = fields(capsys.readouterr().out)
        assert code == 0 and out["status"] == "unbounded_certificate"
        assert float(out["certificate"].split()[0]) >= 1.0
        assert trace.exists()

    @pytest.mark.parametrize("method", ["radial_subgradient", "radial_smoothing",
                                        "projected_gradient", "accelerated_gradient",
                                        "frank_wolfe"])
    def test_methods_on_box_qp(self, tmp_path, capsys, method):
        # optimum of 1 - (x^T Q x / 2 + c^T x) is x = -Q^{-1} c = (-0.25, 0.25), value 1.09375
        trace = tmp_path / "t.csv"
        code = main(["solve", write(tmp_path, BOX_QP), "--method", method, "--iters", "3000",
                     "--eps", "1e-4", "--p-star", "1.09375", "--out", str(trace)])
        out = fields(capsys.readouterr().out)
        assert code == 0
        assert float(out["best_rel_gap"]) < 1e-3
        rows = list(csv.DictReader(ln for ln in open(trace) if not ln.startswith("#")))
        assert rows and list(rows[0]) == ["k", "dual_value", "primal_value", "rel_gap",
                                          "subgrad_norm", "step", "elapsed_seconds"]

    def test_polyak_requires_d_star(self, tmp_path, capsys):
        assert main(["solve", write(tmp_path, BOX_QP), "--policy", "polyak_gap"]) == 2
        assert "d-star" in capsys.readouterr().err

    def test_accelerated_rejects_constrained(self, tmp_path):
        assert main(["solve", write(tmp_path, BOX_QP), "--method", "radial_accelerated",
                     "--out", str(tmp_path / "t.csv")]) == 2


    def test_accelerated_unconstrained(self, tmp_path, capsys):
        doc = dict(BOX_QP, A=[], b=[])
        code = main(["solve", write(tmp_path, doc), "--method", "radial_accelerated",
                     "--iters", "5000", "--p-star", "1.09375", "--out", str(tmp_path / "t.csv")])
        out = fields(capsys.readouterr().out)
        assert code == 0 and float(out["best_rel_gap"]) < 1e-6


class TestInputErrors:
    @pytest.mark.parametrize("doc, needle", [
        ("type: qp\nc: [1, 2\n", "line"),
        ({"type": "qp", "c": [1.0], "A": [[1.0, 2.0]], "b": [1.0]}, "qp"),
        ({"type": "wat"}, "type"),
        ({"c": [1.0]}, "type"),
        ({"type": "composite", "pieces": [{"kind": "blob"}]}, "pieces[0].kind"),
    ])
    def test_malformed(self, tmp_path, capsys, doc, needle):
        name = "p.yaml" if isinstance(doc, str) else "p.json"
        assert main(["certify", write(tmp_path, doc, name)]) == 2
        assert needle in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["check", str(tmp_path / "nope.yaml")]) == 2


class TestBench:
    def test_small_run(self, tmp_path, capsys):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text("sizes = 5x12x2\nmethods = radial_subgradient,projected_gradient\n"
                       "reference_eta = 1e-6\nreference_max_iter = 20000\n")
        out_dir = tmp_path / "out"
        assert main(["bench", "--config", str(cfg), "--iterations", "50",
                     "--out-dir", str(out_dir), "--seed", "2"]) == 0
        summary = list(csv.DictReader(open(out_dir / "summary.csv")))
        assert [r["method"] for r in summary] == ["radial_subgradient", "projected_gradient"]
        assert all(r["instance"] == "qp_n5_m12_r2_s2" for r in summary)


@pytest.mark.skipif(shutil.which("radial") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["radial", "check", write(tmp_path, BOX_QP)], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("PASS")
