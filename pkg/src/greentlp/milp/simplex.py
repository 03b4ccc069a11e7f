"""Two-phase dense tableau simplex.

Pricing is Dantzig (most negative reduced cost) and switches to Bland's rule
once ``bland_after`` consecutive degenerate pivots have been made, which rules
out cycling. Ratio-test ties go to the basic variable with the lowest index.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .model import DenseModel, LinearModel, SolveResult, Status

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
OPT_TOL = 1e-9
MAX_PIVOTS = 50_000
BLAND_AFTER = 1_000


class _Limit(Exception):
    pass


class _Unbounded(Exception):
    def __init__(self, column: int):
        self.column = column


class Tableau:
    """A dense tableau ``[B^-1 A | B^-1 b]`` with its reduced-cost row."""

    def __init__(self, T: np.ndarray, basis: np.ndarray, max_pivots: int, bland_after: int,
                 pivot_tol: float = PIVOT_TOL):
        self.T = T
        self.basis = basis
        self.pivots = 0
        self.max_pivots = max_pivots
        self.bland_after = bland_after
        self.pivot_tol = pivot_tol
        self.degenerate_run = 0
        self.bland = bland_after <= 0

    def pivot(self, r: int, q: int, obj: np.ndarray) -> None:
        T = self.T
        row = T[r] / T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        T -= np.outer(col, row)
        T[r] = row
        obj -= obj[q] * row
        self.basis[r] = q
        self.pivots += 1

    def run(self, obj: np.ndarray, ncols: int) -> None:
        """Pivot until ``obj`` has no negative reduced cost among the first ``ncols`` columns."""
        T = self.T
        if ncols == 0:
            return
        while True:
            d = obj[:ncols]
            if self.bland:
                cand = np.flatnonzero(d < -OPT_TOL)
                if cand.size == 0:
                    return
                q = int(cand[0])
            else:
                q = int(np.argmin(d))
                if d[q] >= -OPT_TOL:
                    return
            if self.pivots >= self.max_pivots:
                raise _Limit()
            a = T[:, q]
            pos = np.flatnonzero(a > self.pivot_tol)
            if pos.size == 0:
                raise _Unbounded(q)
            ratios = np.maximum(T[pos, -1], 0.0) / a[pos]
            rmin = ratios.min()
            ties = pos[ratios <= rmin + 1e-12 * (1.0 + rmin)]
            r = int(ties[np.argmin(self.basis[ties])])
            if rmin <= 1e-12:
                self.degenerate_run += 1
                if self.degenerate_run >= self.bland_after:
                    self.bland = True
            else:
                self.degenerate_run = 0
            self.pivot(r, q, obj)


def _standard_columns(lb: np.ndarray, ub: np.ndarray):
    """Map original variables onto non-negative columns.

    Returns ``(col_var, col_sign, shift, bounded)`` with
    ``x = shift + sum over columns of sign * x_col`` and ``bounded`` a list of
    ``(column, width)`` pairs for finite two-sided boxes.
    """
    col_var, col_sign, bounded = [], [], []
    shift = np.zeros(lb.size)
    for j in range(lb.size):
        lo, hi = lb[j], ub[j]
        lo_fin, hi_fin = math.isfinite(lo), math.isfinite(hi)
        if lo_fin and hi_fin and hi - lo <= 0.0:
            shift[j] = lo
            continue
        if lo_fin:
            shift[j] = lo
            if hi_fin:
                bounded.append((len(col_var), hi - lo))
            col_var.append(j)
            col_sign.append(1.0)
        elif hi_fin:
            shift[j] = hi
            col_var.append(j)
            col_sign.append(-1.0)
        else:
            col_var += [j, j]
            col_sign += [1.0, -1.0]
    return np.array(col_var, dtype=np.int64), np.array(col_sign), shift, bounded


def solve_dense(dm: DenseModel, lb: np.ndarray | None = None, ub: np.ndarray | None = None, *,
                max_pivots: int = MAX_PIVOTS, bland_after: int = BLAND_AFTER,
                feas_tol: float = FEAS_TOL, want_duals: bool = True) -> SolveResult:
    """Solve the LP in ``dm`` (integrality ignored), optionally with overriding bounds."""
    t0 = time.perf_counter()
    lb = dm.lb if lb is None else lb
    ub = dm.ub if ub is None else ub
    n = dm.c.size
    m0 = dm.rhs.size
    sign = -1.0 if dm.maximize else 1.0

    def done(status, **kw):
        return SolveResult(status=status, wall_time=time.perf_counter() - t0, **kw)

    if np.any(lb > ub + feas_tol):
        return done(Status.INFEASIBLE, message="crossed bounds")

    col_var, col_sign, shift, bounded = _standard_columns(lb, ub)
    N = col_var.size
    A = dm.A[:, col_var] * col_sign if N else np.zeros((m0, 0))
    b = dm.rhs - dm.A @ shift
    c = sign * dm.c[col_var] * col_sign

    # rows with no structural coefficient are checked directly and dropped
    senses = dm.senses
    keep = []
    for i in range(m0):
        if N and np.any(A[i] != 0.0):
            keep.append(i)
            continue
        bi, s = b[i], senses[i]
        tol = feas_tol * (1.0 + abs(dm.rhs[i]))
        if (s == "<=" and bi < -tol) or (s == ">=" and bi > tol) or (s == "=" and abs(bi) > tol):
            return done(Status.INFEASIBLE, message=f"row {i} violated by fixed variables")
    keep = np.array(keep, dtype=np.int64)

    nb = len(bounded)
    m = keep.size + nb
    row_orig = np.concatenate([keep, -np.ones(nb, dtype=np.int64)])
    row_sense = np.concatenate([senses[keep], np.full(nb, "<=")])
    Arows = np.zeros((m, N))
    Arows[: keep.size] = A[keep]
    brows = np.zeros(m)
    brows[: keep.size] = b[keep]
    for t, (col, width) in enumerate(bounded):
        Arows[keep.size + t, col] = 1.0
        brows[keep.size + t] = width

    slack_rows = np.flatnonzero(row_sense != "=")
    ns = slack_rows.size
    S = np.zeros((m, ns))
    S[slack_rows, np.arange(ns)] = np.where(row_sense[slack_rows] == "<=", 1.0, -1.0)
    full = np.hstack([Arows, S])
    flip = brows < 0
    full[flip] *= -1.0
    brows = np.where(flip, -brows, brows)
    row_slack = np.full(m, -1, dtype=np.int64)
    row_slack[slack_rows] = N + np.arange(ns)

    ncols = N + ns
    basis = np.full(m, -1, dtype=np.int64)
    for i in range(m):
        sc = row_slack[i]
        if sc >= 0 and full[i, sc] > 0:
            basis[i] = sc
    art_rows = np.flatnonzero(basis < 0)
    na = art_rows.size
    T = np.zeros((m, ncols + na + 1))
    T[:, :ncols] = full
    T[art_rows, ncols + np.arange(na)] = 1.0
    T[:, -1] = brows
    basis[art_rows] = ncols + np.arange(na)
    tab = Tableau(T, basis, max_pivots, bland_after)

    try:
        if na:
            obj1 = np.zeros(ncols + na + 1)
            obj1[ncols:ncols + na] = 1.0
            obj1 -= T[art_rows].sum(axis=0)
            tab.run(obj1, ncols + na)
            if -obj1[-1] > feas_tol * (1.0 + np.abs(brows).max(initial=0.0)):
                return done(Status.INFEASIBLE, iterations=tab.pivots, message="phase 1 optimum positive")
            # An artificial still basic after phase 1 sits in a tableau row that is
            # zero over the real columns: the original row owning that artificial
            # is a combination of the others and is dropped.
            redundant, owners = [], []
            for r in np.flatnonzero(tab.basis >= ncols):
                row = np.abs(T[r, :ncols])
                j = int(np.argmax(row)) if ncols else -1
                if j >= 0 and row[j] > 1e-7:
                    tab.pivot(int(r), j, obj1)
                else:
                    redundant.append(int(r))
                    owners.append(int(art_rows[tab.basis[r] - ncols]))
            if redundant:
                keep_pos = np.setdiff1d(np.arange(m), redundant)
                T = T[keep_pos]
                tab.basis = tab.basis[keep_pos]
                keep_r = np.setdiff1d(np.arange(m), owners)
                row_orig = row_orig[keep_r]
                full = full[keep_r]
                brows = brows[keep_r]
                flip = flip[keep_r]
            T = np.delete(T, np.s_[ncols:ncols + na], axis=1)
            tab.T = T
        cfull = np.concatenate([c, np.zeros(ns)])
        obj = np.concatenate([cfull, [0.0]])
        obj -= cfull[tab.basis] @ T
        tab.run(obj, ncols)
    except _Limit:
        return done(Status.ITERATION_LIMIT, iterations=tab.pivots, message="pivot limit reached")
    except _Unbounded as exc:
        q = exc.column
        ray = int(col_var[q]) if q < N else None
        return done(Status.UNBOUNDED, iterations=tab.pivots, unbounded_ray=ray,
                    message=f"unbounded direction along column {q}")

    basis = tab.basis
    xs = np.zeros(ncols)
    xs[basis] = np.maximum(T[:, -1], 0.0)
    duals = None
    B = full[:, basis]
    try:
        # cleaner values than the accumulated tableau
        xb = np.linalg.solve(B, brows)
        if np.all(xb >= -1e-9):
            xs[basis] = np.maximum(xb, 0.0)
        if want_duals:
            y = np.linalg.solve(B.T, cfull[basis])
    except np.linalg.LinAlgError:
        y = None
    if want_duals:
        duals = np.zeros(m0)
        if y is not None:
            y = np.where(flip, -y, y)
            for r, orig in enumerate(row_orig):
                if orig >= 0:
                    duals[orig] = sign * y[r]

    x = shift.copy()
    np.add.at(x, col_var, col_sign * xs[:N])
    obj_val = float(dm.c @ x) + dm.constant
    return done(Status.OPTIMAL, objective_value=obj_val, primal_values=x, dual_values=duals,
                iterations=tab.pivots, best_bound=obj_val)


def solve_lp(model: LinearModel, **kw) -> SolveResult:
    """Solve the continuous relaxation of ``model``.

    Integer and binary kinds are relaxed to their bounds; ``result.relaxed``
    records that this happened.
    """
    problems = model.check()
    if problems:
        raise ValueError("; ".join(problems))
    res = solve_dense(model.dense(), **kw)
    res.relaxed = model.is_mip()
    return res
