"""Command-line front end: configs, reports, CSV exports, exit codes."""

from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from expbandit import exact_dp
from expbandit.cli import ConfigError, RunConfig, build_prior, main, read_values_csv
from expbandit.model import DiscretePrior


def report(path):
    out = {}
    for line in (path / "report.txt").read_text().splitlines():
        key, _, value = line.partition("=")
        out[key] = value
    return out


def write_config(tmp_path, **data):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(data))
    return str(p)


class TestSolve:
    def test_point_mass_exact(self, tmp_path):
        cfg = write_config(tmp_path, prior={"nodes": [[2.0, 1.0, 1.0]]}, N=5)
        assert main(["solve", "exact", "--config", cfg, "--out", str(tmp_path), "--grid", "16"]) == 0
        rep = report(tmp_path)
        assert float(rep["risk"]) == pytest.approx(0.0, abs=1e-6)
        assert "risk_half" in rep and rep["nodes_half"] == "8"
        # defaults are recorded so the report reproduces the run
        for key in ("quad_panels", "quad_order", "tie_tol", "x_span", "k_trunc", "seed"):
            assert key in rep

    def test_flags_override_config(self, tmp_path):
        cfg = write_config(tmp_path, N=4, nodes_per_axis=12)
        assert main(["solve", "exact", "--config", cfg, "--out", str(tmp_path), "--N", "2", "--grid", "20"]) == 0
        rep = report(tmp_path)
        assert rep["N"] == "2" and rep["nodes_per_axis"] == "20"

    def test_values_round_trip(self, tmp_path):
        cfg = write_config(tmp_path, prior={"symmetric": {"m": 1.0, "d": 0.3}}, N=3, nodes_per_axis=10)
        assert main(["solve", "exact", "--config", cfg, "--out", str(tmp_path), "--values"]) == 0
        cols = read_values_csv(tmp_path / "values.csv")
        assert list(cols) == ["n1", "n2", "x1", "x2", "R1", "R2", "R", "decision"]
        prior = DiscretePrior.symmetric_two_point(1.0, 0.3)
        table, _ = exact_dp.solve_exact(prior, 3, exact_dp.GridSpec.for_prior(prior, 10))
        sel = (cols["n1"] == 1) & (cols["n2"] == 1)
        np.testing.assert_array_equal(cols["R1"][sel], table.R1[1, 1].ravel())
        np.testing.assert_array_equal(cols["R"][sel], table.R(1, 1).ravel())
        assert set(np.unique(cols["decision"])) <= {0.0, 1.0, 2.0}
        text = (tmp_path / "values.csv").read_text()
        assert "," in text.splitlines()[1] and ";" not in text

    def test_unnorm_with_forced_start(self, tmp_path):
        cfg = write_config(tmp_path, N=6, nodes_per_axis=24, n0=2)
        assert main(["solve", "unnorm", "--config", cfg, "--out", str(tmp_path)]) == 0
        rep = report(tmp_path)
        assert float(rep["risk_forced_start"]) >= float(rep["risk"])

    def test_limit_solver_report(self, tmp_path):
        cfg = write_config(tmp_path, prior={"scaled_symmetric": {"d": 1.0}}, eps="1/20", eps0=0.25)
        assert main(["solve", "limit-gauss", "--config", cfg, "--out", str(tmp_path), "--values"]) == 0
        rep = report(tmp_path)
        assert float(rep["risk"]) > 0 and "risk_half" in rep
        cols = read_values_csv(tmp_path / "values.csv")
        assert list(cols)[:4] == ["t1", "t2", "x1", "x2"]

    def test_limit_solver_needs_scaled_prior(self, tmp_path, capsys):
        assert main(["solve", "pde", "--out", str(tmp_path)]) == 2
        err = capsys.readouterr().err.strip()
        assert err.startswith("expbandit: error:") and "\n" not in err


class TestSimulate:
    def test_byte_identical(self, tmp_path):
        args = ["simulate", "--grid", "16", "--N", "5", "--reps", "3000", "--seed", "12"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(a), "--threads", "1"]) == 0
        assert main(args + ["--out", str(b), "--threads", "4"]) == 0
        assert (a / "simulate.csv").read_bytes() == (b / "simulate.csv").read_bytes()

    def test_policy_and_theta(self, tmp_path):
        cfg = write_config(tmp_path, theta=[1.0, 2.0], N=10)
        assert main(["simulate", "--config", cfg, "--policy", "always1", "--reps", "4000",
                     "--out", str(tmp_path)]) == 0
        rep = report(tmp_path)
        assert abs(float(rep["regret_mean"]) - 10.0) <= 3 * float(rep["regret_std_error"])

    def test_forced_policy_needs_n0(self, tmp_path):
        assert main(["simulate", "--policy", "forced", "--out", str(tmp_path)]) == 2


class TestCompareAndMoments:
    def test_compare_ladder(self, tmp_path):
        cfg = write_config(tmp_path, prior={"scaled_symmetric": {"d": 1.0}}, eps_ladder=["1/20", "1/40"],
                           eps0=0.1)
        assert main(["compare", "--config", cfg, "--out", str(tmp_path)]) == 0
        rows = (tmp_path / "compare.csv").read_text().splitlines()
        assert rows[0] == "eps,sup_distance,scaled_risk_exp,scaled_risk_gauss"
        d = [float(r.split(",")[1]) for r in rows[1:]]
        assert len(d) == 2 and d[1] < d[0]

    def test_moments_check_prints_verdicts(self, tmp_path, capsys):
        assert main(["moments-check", "--eps", "1/1000", "--out", str(tmp_path)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 9
        assert all(line.startswith("eps=0.001 ") for line in lines)
        assert all(line.count(":pass") + line.count(":FAIL") == 3 for line in lines)


class TestConfigErrors:
    @pytest.mark.parametrize("data", [
        {"N": 0},
        {"bogus": 1},
        {"eps": 0.03},
        {"prior": {"nodes": [[1.0, 2.0, 0.5]]}},
        {"prior": {"triangle": {}}},
        {"n0": 5, "N": 8},
        {"policy": "ucb"},
    ])
    def test_invalid_configs_exit_2(self, tmp_path, capsys, data):
        cfg = write_config(tmp_path, **data)
        assert main(["solve", "exact", "--config", cfg, "--out", str(tmp_path)]) == 2
        err = capsys.readouterr().err.strip()
        assert err.startswith("expbandit: error:") and "\n" not in err
        assert not (tmp_path / "report.txt").exists()

    def test_unreadable_config(self, tmp_path, capsys):
        assert main(["solve", "exact", "--config", str(tmp_path / "missing.json")]) == 2
        assert capsys.readouterr().err.count("\n") == 1

    def test_bad_flag_single_line(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["solve", "exact", "--eps", "-1"])
        assert exc.value.code == 2
        assert capsys.readouterr().err.count("\n") == 1

    def test_build_prior_kinds(self):
        cfg = RunConfig(prior={"scaled": {"nodes": [[1.0, -1.0, 0.5], [-1.0, 1.0, 0.5]], "N": 25}})
        prior, sp = build_prior(cfg)
        assert sp.N == 25
        np.testing.assert_allclose(prior.m1, [1.2, 0.8])
        with pytest.raises(ConfigError):
            build_prior(RunConfig(prior={"symmetric": {"m": 1.0}}))


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "expbandit", "solve", "exact", "--N", "1", "--grid", "8",
                           "--out", str(tmp_path)], capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert float(report(tmp_path)["risk"]) == pytest.approx(0.3)
