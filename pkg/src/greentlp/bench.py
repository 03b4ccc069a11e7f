"""Exact-versus-decomposition benchmark rows: one line per instance plus an average row."""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .formulation import Approach, RobustMode, StructuralInfeasibility, build
from .instance import Instance
from .lagrangian import LDConfig, compute_gap, run_ld
from .milp import MilpParams, Status, solve_milp

HEADER = ["id", "exact_obj", "exact_time_s", "ld_obj", "ld_time_s", "gap_percent"]


@dataclass
class BenchRow:
    instance_id: str
    exact_objective: float
    exact_time: float
    ld_bound: float
    ld_time: float
    gap_percent: float
    status: str = "optimal"
    ld_converged: bool = True
    ld_iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def bench_instance(inst: Instance, approach: Approach | int, robust_mode: RobustMode | str,
                   ld_config: LDConfig | None = None, milp_params: MilpParams | None = None,
                   instance_id: str | None = None) -> BenchRow:
    """Solve one instance exactly and with the decomposition; file I/O is not timed."""
    name = instance_id or inst.name
    try:
        bundle = build(inst, approach, robust_mode, (ld_config or LDConfig()).disaggregated)
    except StructuralInfeasibility:
        return BenchRow(name, math.nan, 0.0, math.nan, 0.0, math.nan, status="infeasible")
    t0 = time.perf_counter()
    exact = solve_milp(bundle.model, milp_params)
    exact_time = time.perf_counter() - t0
    if exact.status is not Status.OPTIMAL:
        return BenchRow(name, exact.objective_value, exact_time, math.nan, 0.0, math.nan,
                        status=exact.status.value)
    t0 = time.perf_counter()
    report = run_ld(inst, approach, robust_mode, ld_config)
    ld_time = time.perf_counter() - t0
    gap = compute_gap(exact.objective_value, report.bound) if exact.objective_value != 0 else math.nan
    return BenchRow(name, exact.objective_value, exact_time, report.bound, ld_time, gap,
                    ld_converged=report.converged, ld_iterations=report.iterations)


def _task(args):
    return bench_instance(*args)


def run_bench(instances: list[Instance], approach, robust_mode, ld_config=None, milp_params=None,
              workers: int = 1, ids: list[str] | None = None) -> list[BenchRow]:
    """Benchmark rows in input order, whatever order the workers finish in."""
    ids = ids or [inst.name for inst in instances]
    tasks = [(inst, approach, robust_mode, ld_config, milp_params, iid) for inst, iid in zip(instances, ids)]
    if workers <= 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_task, tasks))


def average_row(rows: list[BenchRow], label: str = "average") -> BenchRow:
    """Mean over successfully solved rows; the id records how many were averaged."""
    good = [r for r in rows if r.ok]
    if not good:
        return BenchRow(f"{label}(n=0)", math.nan, math.nan, math.nan, math.nan, math.nan, status="none")

    def mean(attr):
        return statistics.fmean(getattr(r, attr) for r in good)

    return BenchRow(f"{label}(n={len(good)})", mean("exact_objective"), mean("exact_time"),
                    mean("ld_bound"), mean("ld_time"), mean("gap_percent"))


def _fmt(value: float, digits: int) -> str:
    return "" if value is None or math.isnan(value) else f"{value:.{digits}f}"


def format_csv(blocks: list[list[BenchRow]], labels: list[str] | None = None) -> str:
    """CSV text: every block's rows followed by its average row.

    A trailing ``status`` column is added only when some exact solve failed.
    """
    labels = labels or ["average"] * len(blocks)
    with_status = any(not r.ok for block in blocks for r in block)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(HEADER + (["status"] if with_status else []))
    for block, label in zip(blocks, labels):
        for row in block + [average_row(block, label)]:
            line = [row.instance_id, _fmt(row.exact_objective, 6), _fmt(row.exact_time, 3),
                    _fmt(row.ld_bound, 6), _fmt(row.ld_time, 3), _fmt(row.gap_percent, 9)]
            if with_status:
                line.append(row.status)
            writer.writerow(line)
    return out.getvalue()
