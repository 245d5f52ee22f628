import csv
import json

import numpy as np
import pytest

from trssn import bench
from trssn.bench import (BenchConfig, ConfigError, RunTrace, mask_density, read_trace,
                         run_benchmark)
from trssn.cli import main
from trssn.io import write_pgm
from trssn.problems import make_diagonal_quadl1, synthetic_solution


def test_mask_density_examples():
    assert mask_density(np.zeros(5)) == 0.0
    assert mask_density(np.ones(4)) == 100.0
    assert mask_density(np.array([0.5, 0.0, 0.0, 1.0])) == 50.0


def test_config_rejects_unknown_keys_and_empty_solvers():
    with pytest.raises(ConfigError, match="unknown"):
        BenchConfig.from_dict({"problem": "quadl1", "tolerance": 1e-3})
    with pytest.raises(ConfigError, match="empty"):
        BenchConfig.from_dict({"solvers": []})
    with pytest.raises(ConfigError):
        BenchConfig.from_dict({"solvers": ["newton"]})
    with pytest.raises(ConfigError):
        BenchConfig.from_dict({"max_iters": 0})
    with pytest.raises(ConfigError):
        BenchConfig.from_dict({"data_path": "/no/such/file"})


def test_config_json_roundtrip(tmp_path):
    cfg = BenchConfig(problem="quadl1", solvers=["fista"], dim=7)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert BenchConfig.from_json(path) == cfg
    assert cfg.params_hash() == BenchConfig.from_json(path).params_hash()


def test_quadl1_summary_against_oracle(tmp_path):
    cfg = BenchConfig(problem="quadl1", solvers=["trssn-exact"], dim=20, seed=3,
                      output_dir=str(tmp_path))
    rows = run_benchmark(cfg)
    assert len(rows) == 1
    row = rows[0]
    assert row["converged"]
    assert row["iters_to_1e-10"] != ""
    assert row["final_f_nor_norm"] <= 1e-10
    prob = make_diagonal_quadl1(20, mu=0.5, seed=3)
    assert row["final_psi"] == pytest.approx(prob.psi(synthetic_solution(prob)), rel=1e-12)
    with open(tmp_path / "summary.csv") as fh:
        assert list(csv.DictReader(fh))[0]["solver"] == "trssn-exact"


def test_failed_run_is_isolated(tmp_path, monkeypatch):
    original = bench.run_solver

    def flaky(solver, problem, config, callback=None):
        if solver == "fista":
            callback({"k": 0, "wall_seconds": 0.0, "psi": 1e300})
            raise FloatingPointError("diverged")
        return original(solver, problem, config, callback)

    monkeypatch.setattr(bench, "run_solver", flaky)
    cfg = BenchConfig(problem="quadl1", solvers=["fista", "trssn-lbfgs"], dim=10,
                      output_dir=str(tmp_path))
    rows = {r["solver"]: r for r in run_benchmark(cfg)}
    assert rows["fista"]["status"] == "failed"
    assert "diverged" in rows["fista"]["error"]
    assert rows["trssn-lbfgs"]["converged"]
    assert rows["trssn-lbfgs"]["error"] == ""


def test_unsupported_solver_fails_only_its_run(tmp_path):
    cfg = BenchConfig(problem="compression", image_size=6, solvers=["trssn-exact", "sparsa"],
                      max_iters=20, output_dir=str(tmp_path))
    rows = {r["solver"]: r for r in run_benchmark(cfg)}
    assert rows["trssn-exact"]["status"] == "failed"
    assert rows["sparsa"]["status"] in ("max_iter", "natural_residual")


def test_trace_files_and_rel_err(tmp_path):
    cfg = BenchConfig(problem="logistic", solvers=["trssn-lbfgs", "fista"], n_samples=200,
                      n_features=20, max_iters=50, output_dir=str(tmp_path))
    run_benchmark(cfg)
    for solver in cfg.solvers:
        path = tmp_path / f"logistic-synthetic-200x20__{solver}.csv"
        header = path.read_text().splitlines()[0]
        assert header.startswith(f"# trssn-trace v{bench.TRACE_SCHEMA_VERSION}")
        assert "params_hash=" in header and "seed=0" in header
        rows = read_trace(path)
        ks = [int(r["k"]) for r in rows]
        assert ks == sorted(set(ks))
        walls = [float(r["wall_seconds"]) for r in rows]
        assert walls == sorted(walls)
        assert all(float(r["rel_err"]) >= 0.0 for r in rows)


def test_trace_is_flushed_each_iteration(tmp_path):
    path = tmp_path / "t.csv"
    trace = RunTrace(str(path), {"solver": "x"})
    trace.append({"k": 0, "wall_seconds": 0.0, "psi": 1.0})
    assert len(path.read_text().splitlines()) == 3
    with pytest.raises(ValueError):
        trace.append({"k": 0, "wall_seconds": 0.1, "psi": 1.0})
    trace.close()


def test_benchmark_is_deterministic(tmp_path):
    def traces(out):
        cfg = BenchConfig(problem="logistic", solvers=["trssn-lbfgs", "sparsa"],
                          n_samples=150, n_features=15, max_iters=40, output_dir=str(out))
        run_benchmark(cfg)
        result = {}
        for solver in cfg.solvers:
            rows = read_trace(out / f"logistic-synthetic-150x15__{solver}.csv")
            result[solver] = [{k: v for k, v in r.items() if k != "wall_seconds"} for r in rows]
        return result

    assert traces(tmp_path / "a") == traces(tmp_path / "b")


def test_compression_outputs_images(tmp_path):
    img = tmp_path / "u.pgm"
    write_pgm(img, np.linspace(0, 1, 36).reshape(6, 6))
    cfg = BenchConfig(problem="compression", data_path=str(img), solvers=["trssn-lbfgs"],
                      tol=1e-6, max_iters=300, output_dir=str(tmp_path / "out"))
    row = run_benchmark(cfg)[0]
    assert 0.0 <= row["mask_density"] <= 100.0
    assert (tmp_path / "out" / "compression-u__trssn-lbfgs_mask.pgm").exists()
    assert (tmp_path / "out" / "compression-u__trssn-lbfgs_reconstruction.pgm").exists()


def test_libsvm_problem(tmp_path):
    rng = np.random.default_rng(0)
    lines = []
    for _ in range(40):
        x = rng.standard_normal(4)
        label = 1 if x[0] + 0.3 * rng.standard_normal() > 0 else -1
        lines.append(f"{label} " + " ".join(f"{j + 1}:{v:.6f}" for j, v in enumerate(x)))
    data = tmp_path / "toy.svm"
    data.write_text("\n".join(lines) + "\n")
    cfg = BenchConfig(problem="logistic", data_path=str(data), solvers=["trssn-exact"],
                      output_dir=str(tmp_path / "out"))
    assert run_benchmark(cfg)[0]["problem"] == "logistic-toy"


def test_cli_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "o")
    assert main(["solve", "--problem", "quadl1", "--solver", "trssn-exact",
                 "--output-dir", out, "--quiet"]) == 0
    assert main(["solve", "--problem", "quadl1", "--solver", "fista", "--max-iters", "3",
                 "--output-dir", out, "--quiet"]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "quadl1", "solverz": ["fista"]}))
    assert main(["bench", "--config", str(cfg), "--quiet"]) == 1
    assert "unknown configuration key" in capsys.readouterr().err
    cfg.write_text("{not json")
    assert main(["bench", "--config", str(cfg), "--quiet"]) == 1
    assert main(["bench", "--config", str(tmp_path / "missing.json"), "--quiet"]) == 1


def test_cli_overrides_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "quadl1", "solvers": ["sparsa", "trssn-lbfgs"],
                               "dim": 8}))
    out = tmp_path / "o"
    code = main(["bench", "--config", str(cfg), "--output-dir", str(out), "--tol", "1e-6",
                 "--seed", "4", "--time-budget", "30", "--quiet"])
    assert code == 0
    with open(out / "summary.csv") as fh:
        assert [r["solver"] for r in csv.DictReader(fh)] == ["sparsa", "trssn-lbfgs"]


def test_cli_solve_requires_single_solver(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "quadl1", "solvers": ["sparsa", "fista"]}))
    assert main(["solve", "--config", str(cfg), "--quiet"]) == 1
