"""Benchmark harness: generate instances, run the solvers, emit result tables.

Usage:
    bench <regls|lasso|deconv> --family <dense|sparse|conv> --n N [--n N2 ...]
          [--seed S] [--eps E] [--max-iters M] [--lam L]
          [--format csv|markdown|json] [--out PATH] [--trace] [--jobs J]

Graph build time and solve (evaluation) time are measured separately
with a monotonic clock.  Reports are deterministic for a fixed seed
apart from the timing columns.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass


from . import canon, cg, scs
from .linop import nnz_estimate

OUT_DIR_ENV = "CONEGRAPH_OUT_DIR"

COLUMNS = ["n", "m", "nnz", "build_time", "solve_time", "objective",
           "iters", "avg_cg_iters", "status"]


@dataclass
class RunSpec:
    problem: str                 # regls | lasso | deconv
    family: str | None           # dense | sparse | conv (regls/lasso only)
    n: int
    seed: int = 0
    eps: float = 1e-3
    max_iters: int = 5000
    lam: float = 1.0             # regls only; lasso uses 0.1*||A'b||_inf
    fmt: str = "csv"
    trace: bool = False
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.problem not in ("regls", "lasso", "deconv"):
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.problem == "deconv":
            if self.family is not None:
                raise ValueError("deconv does not take a --family")
        elif self.family not in ("dense", "sparse", "conv"):
            raise ValueError(f"problem {self.problem!r} needs --family dense|sparse|conv")


@dataclass
class RunReport:
    problem: str
    family: str | None
    seed: int
    n: int
    m: int
    nnz: int
    build_time: float
    solve_time: float
    objective: float
    iters: int
    avg_cg_iters: float | None
    status: str


def _trace_path(spec: RunSpec) -> str | None:
    if not spec.trace:
        return None
    base = spec.out_dir or os.environ.get(OUT_DIR_ENV) or "."
    os.makedirs(base, exist_ok=True)
    fam = spec.family or "na"
    return os.path.join(base, f"trace_{spec.problem}_{fam}_{spec.n}_{spec.seed}.jsonl")


def run(spec: RunSpec) -> RunReport:
    """Execute one benchmark run; solver failures land in the status column."""
    if spec.problem == "regls":
        A, b, _ = canon.gen_data(spec.family, spec.n, spec.seed)
        cg_spec = canon.build_regls(canon.RegLsProblem(A, b, spec.lam))
        t0 = time.monotonic()
        graph = cg.build_cg_graph(cg_spec)
        t1 = time.monotonic()
        result = cg.solve_built(graph, cg_spec)
        t2 = time.monotonic()
        return RunReport(
            spec.problem, spec.family, spec.seed, A.cols, A.rows, nnz_estimate(A),
            t1 - t0, t2 - t1,
            canon.regls_objective(A, b, spec.lam, result.x),
            result.iterations, None,
            "solved" if result.converged else "max-iters")

    settings = scs.ScsSettings(eps=spec.eps, max_iters=spec.max_iters)
    if spec.problem == "lasso":
        A, b, _ = canon.gen_data(spec.family, spec.n, spec.seed)
        lam = 0.1 * canon.lasso_lambda_max(A, b)
        t0 = time.monotonic()
        problem = canon.build_lasso(canon.LassoProblem(A, b, lam))
        graph = scs.build_scs_graph(problem, settings)
        t1 = time.monotonic()
        sol = scs.solve_built(problem, settings, graph, _trace_path(spec))
        t2 = time.monotonic()
        objective = canon.lasso_objective(A, b, lam, sol.x[:spec.n])
    else:
        c, b, _ = canon.gen_spike_data(spec.n, spec.seed)
        t0 = time.monotonic()
        problem = canon.build_deconv(canon.DeconvProblem(c, b))
        graph = scs.build_scs_graph(problem, settings)
        t1 = time.monotonic()
        sol = scs.solve_built(problem, settings, graph, _trace_path(spec))
        t2 = time.monotonic()
        objective = canon.deconv_objective(c, b, sol.x[:spec.n])

    n_stuffed, m_stuffed = problem.dims
    return RunReport(
        spec.problem, spec.family, spec.seed, n_stuffed, m_stuffed,
        nnz_estimate(problem.A), t1 - t0, t2 - t1, objective,
        sol.iterations, sol.avg_cg_iterations, sol.status)


def _row(report: RunReport) -> list[str]:
    avg = "" if report.avg_cg_iters is None else f"{report.avg_cg_iters:.2f}"
    return [str(report.n), str(report.m), str(report.nnz),
            f"{report.build_time:.3f}", f"{report.solve_time:.3f}",
            f"{report.objective:.10g}", str(report.iters), avg, report.status]


def emit_table(reports: list[RunReport], fmt: str = "csv") -> str:
    """Render reports in input order with a stable column layout."""
    if not reports:
        raise ValueError("no reports to emit")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in reports:
            writer.writerow(_row(r))
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(COLUMNS) + " |",
                 "|" + "|".join(["---"] * len(COLUMNS)) + "|"]
        for r in reports:
            lines.append("| " + " | ".join(_row(r)) + " |")
        return "\n".join(lines) + "\n"
    if fmt == "json":
        return json.dumps([dataclasses.asdict(r) for r in reports], indent=2) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def parse_reports(text: str) -> list[RunReport]:
    """Inverse of the json table format."""
    return [RunReport(**entry) for entry in json.loads(text)]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Run cone-solver benchmarks and emit a result table.")
    parser.add_argument("problem", choices=["regls", "lasso", "deconv"])
    parser.add_argument("--family", choices=["dense", "sparse", "conv"])
    parser.add_argument("--n", type=int, nargs="+", required=True,
                        help="problem size(s); one run per value")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--eps", type=float, default=1e-3)
    parser.add_argument("--max-iters", type=int, default=5000)
    parser.add_argument("--lam", type=float, default=1.0,
                        help="regularization weight (regls only)")
    parser.add_argument("--format", choices=["csv", "markdown", "json"],
                        default="csv")
    parser.add_argument("--out", help="write the table here (default: stdout)")
    parser.add_argument("--trace", action="store_true",
                        help="write per-iteration JSONL traces")
    parser.add_argument("--jobs", type=int, default=1,
                        help="run independent sizes in parallel")
    args = parser.parse_args(argv)

    out_dir = os.environ.get(OUT_DIR_ENV)
    try:
        specs = [RunSpec(args.problem, args.family, n, args.seed, args.eps,
                         args.max_iters, args.lam, args.format, args.trace, out_dir)
                 for n in args.n]
    except ValueError as exc:
        parser.error(str(exc))

    if args.jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(run, specs))
    else:
        reports = [run(s) for s in specs]

    table = emit_table(reports, args.format)
    if args.out:
        path = args.out
        if out_dir and not os.path.isabs(path):
            os.makedirs(out_dir, exist_ok=True)
            path = os.path.join(out_dir, path)
        with open(path, "w") as fh:
            fh.write(table)
    sys.stdout.write(table)
    return 0


if __name__ == "__main__":
    sys.exit(main())
