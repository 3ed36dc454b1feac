import io
import json
import subprocess
import sys

import numpy as np
import pytest

from proxdiv import cli


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def as_dict(text):
    rows = [line.split(",", 1) for line in text.strip().splitlines()[1:]]
    return {k: v for k, v in rows}


def test_fit_cauchy_table1(tmp_path):
    trace = tmp_path / "trace.csv"
    code, out, err = call("fit", "--model", "cauchy", "--data", "cauchy_table1", "--phi0", "2.0",
                          "--gamma", "pearson", "--x-tolerance", "1e-12", "--f-tolerance", "1e-18",
                          "--objective-tol", "1e-300", "--param-tol", "1e-8", "--out", str(trace))
    assert code == 0, err
    res = as_dict(out)
    assert float(res["a"]) == pytest.approx(0.90597, abs=1e-4)
    assert res["termination"] in ("param_tol", "no_decrease")
    lines = trace.read_text().splitlines()
    assert lines[0] == "iteration,a,objective,proximal,step_norm"
    assert len(lines) == int(res["iterations"]) + 2


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# EM on a simulated sample\nmodel = gauss\ntruth = 0.35, 2, 1.5\n"
                   "estimator = loglik\nalgorithm = em\nseed = 4\nmax-iters = 3\n")
    code, out, err = call("fit", "--config", str(cfg), "--check-init", "false")
    assert code == 0, err
    assert as_dict(out)["iterations"] == "3"
    code, out, _ = call("fit", "--config", str(cfg), "--check-init", "false", "--max-iters", "5")
    assert as_dict(out)["iterations"] == "5"


def test_trace_command_writes_to_stdout():
    code, out, err = call("trace", "--model", "gauss", "--truth", "0.35,2,1.5", "--estimator", "loglik",
                          "--algorithm", "em", "--max-iters", "4", "--check-init", "false")
    assert code == 0, err
    lines = out.strip().splitlines()
    assert lines[0].startswith("iteration,lambda,mu1,mu2")
    assert len(lines) == 6


def test_mc_table_and_runs(tmp_path):
    runs = tmp_path / "runs.csv"
    code, out, err = call("mc", "--model", "gauss", "--truth", "0.35,2,1.5", "--estimator", "loglik",
                          "--algorithm", "em", "--runs", "3", "--check-init", "false", "--runs-out", str(runs))
    assert code == 0, err
    header, row = out.strip().splitlines()
    assert header.startswith("method,algorithm,runs,failures,tvd_mean")
    assert row.split(",")[2:4] == ["3", "0"]
    assert len(runs.read_text().strip().splitlines()) == 4


def test_check_init_reports_margin():
    code, out, err = call("check-init", "--model", "gauss", "--truth", "0.35,2,1.5", "--estimator", "mdpd",
                          "--phi0", "0.35,2,1.5")
    assert code == 0, err
    res = as_dict(out)
    assert res["ok"] == "true" and res["condition"] == "gauss_mdpd"
    assert float(res["margin"]) > 0
    np.testing.assert_allclose(np.array(res["phi0"].split(), dtype=float), [0.35, 2.0, 1.5])


@pytest.mark.parametrize("argv,code,kind", [
    (("fit", "--model", "nope"), 2, "CliError"),
    (("fit", "--model", "gauss"), 2, "CliError"),
    (("fit", "--model", "gauss", "--truth", "0.35,2,1.5", "--n", "many"), 2, "CliError"),
    (("fit", "--model", "gauss", "--truth", "0.35,2,1.5", "--phi0", "0.99,0,0"), 1, "InfeasibleParameter"),
    (("fit", "--model", "weibull", "--truth", "0.35,0.5,3", "--gamma", "pearson"), 1, "InadmissibleEstimator"),
])
def test_errors_are_json_records(argv, code, kind):
    got, out, err = call(*argv)
    assert got == code
    rec = json.loads(err.strip().splitlines()[-1])
    assert rec["status"] == "error" and rec["command"] == "fit" and rec["error"] == kind
    assert rec["message"]


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    code, _, err = call("fit", "--config", str(cfg))
    assert code == 2 and "unknown key" in json.loads(err)["message"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "proxdiv.cli", "fit", "--model", "cauchy", "--data",
                          "cauchy_table1", "--phi0", "1.0"], capture_output=True, text=True, timeout=300)
    assert res.returncode == 0, res.stderr
    assert res.stdout.startswith("name,value\na,0.90")
