"""Instrumented cost benchmarks for the equilibrium solvers.

Work is measured two ways: deterministic operation counters (integrand
evaluations, cell updates and the flop model built on them) and wall
time.  Trends are fitted on the counters; wall time is reported as a
median with its interquartile range.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from ..eqwm import (
    DEFAULT_CONSTANTS,
    Method,
    optimal_point_count,
    solve_with_count,
    synthetic_input,
)

WARMUP = 10
MIN_REPS = 100


@dataclass(frozen=True)
class BenchRecord:
    model: str
    re_tau: float
    n: int
    tau_w_rel_error: float
    integrand_or_sweep_count: int
    newton_or_secant_iters: int
    flops: int
    wall_time_ns: int
    wall_time_iqr_ns: int

    def __post_init__(self):
        if min(self.integrand_or_sweep_count, self.newton_or_secant_iters, self.flops) < 0:
            raise ValueError("counters must be non-negative")


BENCH_HEADER = (
    "model",
    "re_tau",
    "n",
    "tau_w_rel_error",
    "integrand_or_sweep_count",
    "newton_or_secant_iters",
    "flops",
    "wall_time_ns",
    "wall_time_iqr_ns",
)


def time_solve(fn, reps: int = MIN_REPS, warmup: int = WARMUP) -> tuple[int, int]:
    """Median and IQR of ``fn()`` wall time in ns after ``warmup`` untimed calls."""
    for _ in range(warmup):
        fn()
    samples = np.empty(reps)
    for k in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        samples[k] = time.perf_counter_ns() - t0
    q1, med, q3 = np.percentile(samples, [25, 50, 75])
    return int(med), int(q3 - q1)


def bench_one(method: Method, re_tau: float, n: int, reps: int = MIN_REPS, timed: bool = True, constants=DEFAULT_CONSTANTS) -> BenchRecord:
    """Counters and timing for ``n`` points/cells on the synthetic log-law input.

    The error is relative to the exact log-law wall stress of the input (1).
    """
    inp = synthetic_input(re_tau, constants=constants)
    sol = solve_with_count(inp, method, n, constants)
    if method is Method.FINITE_VOLUME:
        count = sol.cell_updates
    else:
        count = sol.integrand_evals
    med, iqr = time_solve(lambda: solve_with_count(inp, method, n, constants), reps) if timed else (0, 0)
    return BenchRecord(
        method.value, float(re_tau), int(n), abs(sol.tau_w - 1.0), int(count), int(sol.iterations), int(sol.flops), med, iqr
    )


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def run_benchmarks(sweep, reps: int = MIN_REPS, timed: bool = True) -> list[BenchRecord]:
    """Benchmark every ``(method, re_tau, n)`` in ``sweep``; ``n=None`` means the optimal count."""
    sweep = list(sweep)
    if not sweep:
        raise ValueError("benchmark sweep is empty")
    out = []
    for method, re_tau, n in sweep:
        method = Method(method)
        if n is None:
            n = optimal_point_count(re_tau, method)
        out.append(bench_one(method, re_tau, n, reps, timed))
    return out


def matched_accuracy_sweep(re_values, methods=tuple(Method)):
    """Sweep entries at each method's optimal count for every Re_tau."""
    return [(m, re, None) for re in re_values for m in methods]


def summarize(records) -> dict[str, float]:
    """Log-log slopes of counters against n and of optimal n against Re_tau."""
    out = {}
    by_model: dict[str, list[BenchRecord]] = {}
    for r in records:
        by_model.setdefault(r.model, []).append(r)
    for model, rs in by_model.items():
        ns = sorted({r.n for r in rs})
        if len(ns) > 1 and len({r.re_tau for r in rs}) == 1:
            out[f"{model}_flops_vs_n_slope"] = fit_loglog_slope([r.n for r in rs], [r.flops for r in rs])
        res = sorted({r.re_tau for r in rs})
        if len(res) > 1:
            pts = sorted((r.re_tau, r.n) for r in rs)
            out[f"{model}_n_vs_re_slope"] = fit_loglog_slope(*zip(*pts))
    return out


def records_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_HEADER)
    for r in records:
        w.writerow(
            [
                r.model,
                repr(r.re_tau),
                r.n,
                repr(float(r.tau_w_rel_error)),
                r.integrand_or_sweep_count,
                r.newton_or_secant_iters,
                r.flops,
                r.wall_time_ns,
                r.wall_time_iqr_ns,
            ]
        )
    return buf.getvalue()
