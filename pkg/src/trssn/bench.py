"""Benchmark harness: build problems, run solvers, write traces and a summary.

A configuration is a flat JSON object, for example::

    {"problem": "logistic", "solvers": ["trssn-lbfgs", "fista"],
     "n_samples": 2000, "n_features": 200, "tol": 1e-10, "max_iters": 500}

Every run writes ``<problem_id>__<solver>.csv`` into ``output_dir``; the
aggregated table goes to ``summary.csv``.
"""

import csv
from dataclasses import asdict, dataclass, field, fields
import hashlib
import json
import math
import os
import time
import traceback

import numpy as np

from .baselines import fista, sparsa
from .driver import TrssnParams, solve
from .io import read_libsvm, read_pgm, write_pgm
from .problems import (CompressionProblem, LogisticProblem, default_logistic_mu,
                       make_diagonal_quadl1, make_logistic_data)

TRACE_SCHEMA_VERSION = 1
TRACE_COLUMNS = ("k", "wall_seconds", "psi", "f_nor_norm", "f_nat_norm", "chi", "delta",
                 "rho", "accepted", "cg_iters", "cg_status", "L_current", "nu_k")
REL_ERR_THRESHOLDS = (1e-4, 1e-8, 1e-10)
SOLVERS = ("trssn-lbfgs", "trssn-exact", "fista", "sparsa")
PROBLEMS = ("logistic", "compression", "quadl1")


class ConfigError(ValueError):
    """Invalid benchmark configuration."""


@dataclass
class BenchConfig:
    """Flat benchmark configuration; unknown keys are rejected by :meth:`from_dict`.

    ``data_path`` points to a LIBSVM file (logistic) or a PGM image
    (compression). Without it a synthetic instance is generated from ``seed``
    and the size fields. ``mu=None`` selects the problem's default weight.
    """

    problem: str = "logistic"
    solvers: list = field(default_factory=lambda: ["trssn-lbfgs"])
    data_path: str = None
    mu: float = None
    n_samples: int = 2000
    n_features: int = 200
    density: float = 0.1
    image_size: int = 32
    dim: int = 50
    tol: float = 1e-10
    max_iters: int = 1000
    time_budget: float = None
    memory: int = 10
    output_dir: str = "bench_out"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        if isinstance(self.solvers, str):
            self.solvers = [self.solvers]
        if not self.solvers:
            raise ConfigError("solver list is empty")
        bad = [s for s in self.solvers if s not in SOLVERS]
        if bad:
            raise ConfigError(f"unknown solver(s) {bad}; expected a subset of {SOLVERS}")
        if self.mu is not None and not self.mu >= 0:
            raise ConfigError("mu must be nonnegative")
        if not self.tol >= 0:
            raise ConfigError("tol must be nonnegative")
        for name in ("max_iters", "memory", "n_samples", "n_features", "image_size", "dim"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not 0 < self.density <= 1:
            raise ConfigError("density must lie in (0, 1]")
        if self.time_budget is not None and not self.time_budget > 0:
            raise ConfigError("time_budget must be positive")
        if self.data_path is not None and not os.path.isfile(self.data_path):
            raise ConfigError(f"data_path {self.data_path!r} does not exist")

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)

    def params_hash(self):
        """Short digest of everything that influences solver results."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def mask_density(c):
    """Percentage of strictly positive entries of ``c``.

    Examples
    --------
    >>> mask_density(np.array([0.5, 0.0, 0.0, 1.0]))
    50.0
    """
    c = np.asarray(c, dtype=float).ravel()
    if c.size == 0:
        return 0.0
    return 100.0 * np.count_nonzero(c > 0) / c.size


def synthetic_image(size, seed=0):
    """Smooth test image with two flat shapes, values in [0, 1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    fx, fy = rng.uniform(3.0, 7.0, 2)
    img = 0.5 + 0.3 * np.sin(fx * xx) * np.cos(fy * yy)
    cx, cy = rng.uniform(0.3, 0.7, 2)
    img[(xx - cx) ** 2 + (yy - cy) ** 2 < 0.04] = 0.9
    img[(yy > 0.7) & (xx < 0.3)] = 0.15
    return np.clip(img, 0.0, 1.0)


def build_problem(config):
    """Instantiate the configured problem; returns ``(problem, problem_id)``."""
    stem = None if config.data_path is None else os.path.splitext(
        os.path.basename(config.data_path))[0]
    if config.problem == "logistic":
        if stem is None:
            A, b = make_logistic_data(config.n_samples, config.n_features,
                                      density=config.density, seed=config.seed)
            pid = f"logistic-synthetic-{config.n_samples}x{config.n_features}"
        else:
            A, b = read_libsvm(config.data_path)
            pid = f"logistic-{stem}"
        mu = default_logistic_mu(A, b) if config.mu is None else config.mu
        return LogisticProblem(A, b, mu), pid
    if config.problem == "compression":
        if stem is None:
            image = synthetic_image(config.image_size, seed=config.seed)
            pid = f"compression-synthetic-{config.image_size}"
        else:
            image = read_pgm(config.data_path)
            pid = f"compression-{stem}"
        mu = 0.01 if config.mu is None else config.mu
        return CompressionProblem(image, mu), pid
    mu = 0.5 if config.mu is None else config.mu
    return make_diagonal_quadl1(config.dim, mu=mu, seed=config.seed), f"quadl1-{config.dim}"


def run_solver(solver, problem, config, callback=None):
    """Dispatch one solver id; returns a :class:`~trssn.driver.SolveResult`."""
    if solver.startswith("trssn"):
        hessian = "exact" if solver == "trssn-exact" else "lbfgs"
        if hessian == "exact" and problem.hessian_vp is None:
            raise ValueError(f"{problem.name} problem has no Hessian-vector product")
        params = TrssnParams(tol=config.tol, max_iter=config.max_iters, hessian=hessian,
                             memory=config.memory, time_budget=config.time_budget)
        return solve(problem, params, callback=callback)
    runner = fista if solver == "fista" else sparsa
    return runner(problem, tol=config.tol, max_iter=config.max_iters,
                  time_budget=config.time_budget, callback=callback)


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, float):
        return repr(value)
    return value


class RunTrace:
    """CSV trace writer; one row per iteration, flushed immediately.

    The first line is a comment carrying the schema version and run metadata.
    """

    def __init__(self, path, metadata):
        self.path = path
        self.metadata = dict(metadata)
        self.records = []
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._fh.write(self._header_comment() + "\n")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(TRACE_COLUMNS)
        self._fh.flush()

    def _header_comment(self):
        meta = " ".join(f"{k}={v}" for k, v in self.metadata.items())
        return f"# trssn-trace v{TRACE_SCHEMA_VERSION} {meta}".rstrip()

    def append(self, record):
        if self.records and record["k"] <= self.records[-1]["k"]:
            raise ValueError("trace iteration counter must increase strictly")
        self.records.append(record)
        self._writer.writerow([_fmt(record.get(c, "")) for c in TRACE_COLUMNS])
        self._fh.flush()

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def finalize(self, psi_star):
        """Rewrite the file with a trailing ``rel_err`` column."""
        self.close()
        tmp = self.path + ".tmp"
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            fh.write(self._header_comment() + f" psi_star={psi_star!r}\n")
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS + ("rel_err",))
            for rec in self.records:
                writer.writerow([_fmt(rec.get(c, "")) for c in TRACE_COLUMNS]
                                + [repr(rel_err(rec["psi"], psi_star))])
        os.replace(tmp, self.path)


def read_trace(path):
    """Load a trace CSV written by :class:`RunTrace` as a list of dicts of strings."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("# trssn-trace v"):
            raise ValueError(f"{path}: missing trace header")
        return list(csv.DictReader(fh))


def rel_err(psi, psi_star):
    """``(psi - psi*) / max(1, psi*)``."""
    return (psi - psi_star) / max(1.0, psi_star)


def _first_hit(records, psi_star, threshold):
    for rec in records:
        if rel_err(rec["psi"], psi_star) <= threshold:
            return rec["k"], rec["wall_seconds"]
    return None, None


SUMMARY_COLUMNS = (["problem", "solver", "status", "converged", "n_iter", "seconds",
                    "final_psi", "final_f_nor_norm", "final_f_nat_norm", "final_rel_err"]
                   + [f"{kind}_to_{t:.0e}" for t in REL_ERR_THRESHOLDS
                      for kind in ("iters", "seconds")]
                   + ["mask_density", "error"])


def run_benchmark(config, log=None):
    """Run every configured solver on the configured problem.

    Parameters
    ----------
    config : BenchConfig
    log : callable, optional
        Receives one progress line per finished run.

    Returns
    -------
    list of dict
        One summary row per solver, also written to ``summary.csv``. Failed runs
        carry ``status='failed'`` and the exception text in ``error``.
    """
    os.makedirs(config.output_dir, exist_ok=True)
    problem, pid = build_problem(config)
    phash = config.params_hash()
    runs = []
    for solver in config.solvers:
        path = os.path.join(config.output_dir, f"{pid}__{solver}.csv")
        trace = RunTrace(path, dict(solver=solver, problem=pid, params_hash=phash,
                                    seed=config.seed))
        t0 = time.perf_counter()
        result, error = None, ""
        try:
            result = run_solver(solver, problem, config, callback=trace.append)
        except Exception as exc:
            error = f"{type(exc).__name__}: {exc}"
            if log is not None:
                log("".join(traceback.format_exception_only(type(exc), exc)).strip())
        finally:
            trace.close()
        runs.append((solver, trace, result, error, time.perf_counter() - t0))

    psis = [rec["psi"] for _, tr, _, _, _ in runs for rec in tr.records
            if math.isfinite(rec["psi"])]
    psi_star = min(psis) if psis else math.nan

    rows = []
    for solver, trace, result, error, seconds in runs:
        if psis:
            trace.finalize(psi_star)
        row = dict.fromkeys(SUMMARY_COLUMNS, "")
        last = trace.records[-1] if trace.records else None
        row.update(problem=pid, solver=solver, seconds=seconds, error=error,
                   n_iter=last["k"] if last else "")
        if last is not None:
            row.update(final_psi=last["psi"], final_f_nor_norm=last.get("f_nor_norm", ""),
                       final_f_nat_norm=last.get("f_nat_norm", ""),
                       final_rel_err=rel_err(last["psi"], psi_star))
            for t in REL_ERR_THRESHOLDS:
                k, s = _first_hit(trace.records, psi_star, t)
                row[f"iters_to_{t:.0e}"] = "" if k is None else k
                row[f"seconds_to_{t:.0e}"] = "" if s is None else s
        if result is None:
            row.update(status="failed", converged=False)
        else:
            row.update(status=result.status, converged=result.converged)
            if config.problem == "compression":
                row["mask_density"] = mask_density(result.x)
                base = os.path.join(config.output_dir, f"{pid}__{solver}")
                write_pgm(base + "_mask.pgm", result.x.reshape(problem.shape))
                write_pgm(base + "_reconstruction.pgm",
                          problem.reconstruct(result.x).reshape(problem.shape))
        rows.append(row)
        if log is not None:
            log(f"{pid} {solver}: {row['status']} after {row['n_iter']} iterations, "
                f"{seconds:.2f} s")

    with open(os.path.join(config.output_dir, "summary.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    return rows
