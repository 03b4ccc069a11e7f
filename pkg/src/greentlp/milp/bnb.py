"""Best-bound branch-and-bound over the dense simplex."""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from .model import DenseModel, LinearModel, SolveResult, Status
from .simplex import solve_dense

INT_TOL = 1e-6


@dataclass
class MilpParams:
    gap_tolerance: float = 1e-9
    node_limit: int = 1_000_000
    time_limit: float = math.inf


def _gap_ok(incumbent: float, bound: float, tol: float) -> bool:
    return incumbent - bound <= tol * (1.0 + abs(bound))


def solve_milp(model: LinearModel, params: MilpParams | None = None, **kw) -> SolveResult:
    """Solve ``model`` to optimality within ``params.gap_tolerance``.

    Node selection is best-bound (ties to the older node); branching picks the
    most fractional integer variable, ties to the lowest index.
    """
    params = params or MilpParams(**kw)
    problems = model.check()
    if problems:
        raise ValueError("; ".join(problems))
    return branch_and_bound(model.dense(), model.integer_indices(), params)


def branch_and_bound(dm: DenseModel, ints: np.ndarray, params: MilpParams | None = None) -> SolveResult:
    """:func:`solve_milp` on already densified data; ``ints`` lists the integer columns."""
    params = params or MilpParams()
    t0 = time.perf_counter()
    sense = -1.0 if dm.maximize else 1.0
    lb0 = dm.lb.copy()
    ub0 = dm.ub.copy()
    # integer bounds are rounded inward
    lb0[ints] = np.ceil(lb0[ints] - INT_TOL)
    ub0[ints] = np.floor(ub0[ints] + INT_TOL)

    incumbent = math.inf
    best_x = None
    nodes = 0
    seq = 0
    heap: list = []

    def finish(status, message=""):
        bound = min([heap[0][0]] if heap else [], default=incumbent)
        bound = min(bound, incumbent)
        res = SolveResult(status=status, node_count=nodes, wall_time=time.perf_counter() - t0,
                          message=message)
        if best_x is not None:
            res.primal_values = best_x
            res.objective_value = float(dm.c @ best_x) + dm.constant
        if math.isfinite(bound):
            res.best_bound = sense * bound
        return res

    def lp(lb, ub):
        nonlocal nodes
        nodes += 1
        return solve_dense(dm, lb, ub, want_duals=False)

    root = lp(lb0, ub0)
    if root.status is not Status.OPTIMAL:
        return finish(root.status, root.message)
    heapq.heappush(heap, (sense * root.objective_value, seq, lb0, ub0, root.primal_values))

    while heap:
        bound, _, lb, ub, x = heap[0]
        if _gap_ok(incumbent, bound, params.gap_tolerance):
            break
        if nodes >= params.node_limit:
            return finish(Status.ITERATION_LIMIT, "node limit reached")
        if time.perf_counter() - t0 > params.time_limit:
            return finish(Status.ITERATION_LIMIT, "time limit reached")
        heapq.heappop(heap)

        frac = x[ints] - np.floor(x[ints])
        dist = np.minimum(frac, 1.0 - frac)
        k = int(np.argmax(dist)) if ints.size else 0
        if ints.size == 0 or dist[k] <= INT_TOL:
            if bound < incumbent:
                incumbent = bound
                best_x = x.copy()
                best_x[ints] = np.round(best_x[ints])
            continue

        j = ints[k]
        for side in (0, 1):
            clb, cub = lb.copy(), ub.copy()
            if side == 0:
                cub[j] = math.floor(x[j])
            else:
                clb[j] = math.ceil(x[j])
            child = lp(clb, cub)
            if child.status is Status.OPTIMAL:
                cbound = sense * child.objective_value
                if not _gap_ok(incumbent, cbound, params.gap_tolerance):
                    seq += 1
                    heapq.heappush(heap, (cbound, seq, clb, cub, child.primal_values))
            elif child.status is Status.ITERATION_LIMIT:
                return finish(Status.ITERATION_LIMIT, "LP pivot limit in a node")

    if best_x is None:
        return finish(Status.INFEASIBLE, "no integer-feasible point")
    return finish(Status.OPTIMAL)
