"""Brute-force reference solvers.

Nothing here touches :mod:`greentlp.formulation` model assembly or the
:mod:`greentlp.milp` simplex: the continuous problems are written straight
from the instance arrays and solved with a small revised simplex of their own
(Dantzig pricing only).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .instance import ChanceConfig, Instance

MAX_BINARIES = 20


class OracleSizeError(ValueError):
    pass


@dataclass
class OracleResult:
    objective: float
    assignment: dict
    enumerated_count: int
    lp_solves: int = 0


def simplex_min(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, max_iter: int = 10_000):
    """``min c x`` s.t. ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``x >= 0``.

    Revised simplex with an explicit basis solve per iteration and a full
    artificial basis for phase 1. Returns ``(status, x, value)`` with status
    one of ``"optimal"``, ``"infeasible"``, ``"unbounded"``, ``"limit"``.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    mu, me = A_ub.shape[0], A_eq.shape[0]
    m = mu + me
    # [x | slacks | artificials]
    A = np.zeros((m, n + mu + m))
    A[:mu, :n] = A_ub
    A[:mu, n:n + mu] = np.eye(mu)
    A[mu:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg, : n + mu] *= -1
    b = np.abs(b)
    A[:, n + mu:] = np.eye(m)
    basis = list(range(n + mu, n + mu + m))
    total = n + mu + m

    def phase(cost, allowed):
        for _ in range(max_iter):
            B = A[:, basis]
            xb = np.linalg.solve(B, b)
            pi = np.linalg.solve(B.T, cost[basis])
            red = cost[:allowed] - pi @ A[:, :allowed]
            q = int(np.argmin(red)) if allowed else 0
            if not allowed or red[q] > -1e-10:
                return "optimal", xb
            d = np.linalg.solve(B, A[:, q])
            rows = np.where(d > 1e-10)[0]
            if rows.size == 0:
                return "unbounded", xb
            ratios = xb[rows] / d[rows]
            basis[int(rows[np.argmin(ratios)])] = q
        return "limit", None

    cost1 = np.zeros(total)
    cost1[n + mu:] = 1.0
    status, xb = phase(cost1, total)
    if status == "limit":
        return "limit", None, math.nan
    if float(cost1[basis] @ xb) > 1e-7 * (1.0 + b.max(initial=0.0)):
        return "infeasible", None, math.nan
    # swap zero-level artificials out where a structural column can replace them
    for r in range(m):
        if basis[r] >= n + mu:
            B_inv_row = np.linalg.solve(A[:, basis].T, np.eye(m)[r])
            row = B_inv_row @ A[:, : n + mu]
            cand = [j for j in np.argsort(-np.abs(row)) if j not in basis and abs(row[j]) > 1e-9]
            if cand:
                basis[r] = int(cand[0])
    # artificials still basic sit on redundant rows: their row of B^-1 A is zero,
    # so no phase-2 pivot can move them off zero
    cost2 = np.zeros(total)
    cost2[:n] = c
    status, xb = phase(cost2, n + mu)
    if status != "optimal":
        return status, None, math.nan
    x = np.zeros(total)
    x[basis] = xb
    return "optimal", x[:n], float(c @ x[:n])


def protection_oracle(dev_plus: float, dev_minus: float, gamma: float, w: float) -> float:
    """Worst-case extra penalty of one (destination, product) cell.

    Maximises ``w (dev_plus * b_up - dev_minus * b_down)`` over the polytope
    ``0 <= b_up, b_down <= 1``, ``b_up + b_down <= gamma`` by checking every vertex.
    """
    lines = [(1.0, 0.0, 0.0), (1.0, 0.0, 1.0), (0.0, 1.0, 0.0), (0.0, 1.0, 1.0), (1.0, 1.0, gamma)]
    best = -math.inf
    for (a1, b1, r1), (a2, b2, r2) in itertools.combinations(lines, 2):
        det = a1 * b2 - a2 * b1
        if abs(det) < 1e-15:
            continue
        up = (r1 * b2 - r2 * b1) / det
        down = (a1 * r2 - a2 * r1) / det
        if -1e-12 <= up <= 1 + 1e-12 and -1e-12 <= down <= 1 + 1e-12 and up + down <= gamma + 1e-12:
            best = max(best, w * (dev_plus * up - dev_minus * down))
    return best


def chance_feasible(y_assignment, link: tuple[int, int], chance: ChanceConfig) -> bool:
    """Direct check of ``sum E y + Z sqrt(sum VAR y^2) <= Td`` on one link.

    ``y_assignment`` is either the full ``(I, J, P)`` array or the ``P`` truck
    values of this link.
    """
    y = np.asarray(y_assignment, dtype=float)
    if y.ndim == 3:
        y = y[link[0], link[1]]
    load = float(chance.mean @ y) + chance.z * math.sqrt(float(chance.var @ (y * y)))
    return load <= float(chance.threshold[link]) + 1e-9


def _bits(count: int) -> np.ndarray:
    """All 0/1 vectors of length ``count`` in lexicographic order."""
    if count == 0:
        return np.zeros((1, 0))
    idx = np.arange(1 << count)
    return ((idx[:, None] >> np.arange(count - 1, -1, -1)) & 1).astype(float)


def _group_rows(keys: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """One 0/1 row per distinct key over the first ``keys.size`` columns."""
    uniq, inv = np.unique(keys, return_inverse=True)
    rows = np.zeros((uniq.size, n))
    rows[inv, np.arange(keys.size)] = 1.0
    return uniq, rows


def _continuous(inst: Instance, y: np.ndarray, z: np.ndarray, robust: bool, disaggregated: bool,
                protection: np.ndarray):
    """Optimal flows for fixed link and origin decisions.

    Returns ``(value, x, penalty_values)``; penalty values are ``u`` or ``v``.
    """
    I, J, P, L = inst.dims.as_tuple()
    cap = inst.b.sum(axis=0)
    open_ = (y[:, :, None, :] > 0.5) & (z[:, None, :, None] > 0.5)
    cols = np.argwhere(open_)
    nx = len(cols)
    npen = 1 if robust and not disaggregated else J * L
    n = nx + npen
    ci, cj, cl, cp = cols.T if nx else (np.zeros(0, int),) * 4
    cost = np.zeros(n)
    cost[:nx] = inst.q[ci, cj, cl, cp]

    links, link_rows = _group_rows((ci * J + cj) * P + cp, n)
    origins, origin_rows = _group_rows(ci * L + cl, n)
    rows = [link_rows, origin_rows]
    rhs = [cap[links % P], inst.k.ravel()[origins]]

    cell = cj * L + cl
    if robust and not disaggregated:
        cost[nx] = 1.0
        row = np.zeros((1, n))
        row[0, :nx] = -inst.w[cj, cl]
        row[0, nx] = -1.0
        rows.append(row)
        rhs.append([-(float((inst.w * inst.D).sum()) + float(protection.sum()))])
    else:
        scale = inst.w.ravel() if robust else np.ones(J * L)
        cost[nx:] = 1.0 if robust else inst.w.ravel()
        block = np.zeros((J * L, n))
        block[cell, np.arange(nx)] = -scale[cell]
        block[np.arange(J * L), nx + np.arange(J * L)] = -1.0
        rows.append(block)
        extra = protection.ravel() if robust else 0.0
        rhs.append(-(scale * inst.D.ravel() + extra))
    status, sol, value = simplex_min(cost, np.vstack(rows), np.concatenate(rhs))
    if status != "optimal":
        raise RuntimeError(f"oracle continuous problem ended {status}")
    x = np.zeros((I, J, L, P))
    x[ci, cj, cl, cp] = sol[:nx]
    return value, x, sol[nx:]


def brute_force_solve(inst: Instance, approach: int, robust_mode: str = "deterministic",
                      disaggregated: bool = False) -> OracleResult:
    """Global optimum by enumerating every link/origin binary assignment.

    Flow cost can only fall when more links or origins open, so the flow
    cost with every link open (per origin pattern) and with every origin open
    (per link pattern) are lower bounds; assignments whose fixed cost plus
    bound exceeds the incumbent are skipped without losing the optimum.
    Equal objectives keep the lexicographically smallest ``(y, z)`` vector.
    """
    approach = int(approach)
    robust = str(getattr(robust_mode, "value", robust_mode)) == "robust"
    I, J, P, L = inst.dims.as_tuple()
    ny, nz = I * J * P, I * L
    if ny + nz > MAX_BINARIES:
        raise OracleSizeError(f"{ny + nz} binaries exceed the enumeration cap of {MAX_BINARIES}")

    Y = _bits(ny)
    Z = _bits(nz)
    ycost = inst.c.ravel().copy()
    if approach == 1:
        ycost += np.tile(inst.cbc, I * J)
    fy = Y @ ycost
    fz = Z @ inst.h.ravel()

    Y3 = Y.reshape(-1, I, J, P)
    ok = Y3.sum(axis=(1, 3)).min(axis=1) >= 1
    if approach == 2:
        patterns = _bits(P)
        allowed = np.zeros((I, J, len(patterns)), dtype=bool)
        for i, j in itertools.product(range(I), range(J)):
            for s, pat in enumerate(patterns):
                allowed[i, j, s] = chance_feasible(pat, (i, j), inst.chance)
        code = (Y3 * (1 << np.arange(P - 1, -1, -1))).sum(axis=3).astype(int)
        for i, j in itertools.product(range(I), range(J)):
            ok &= allowed[i, j, code[:, i, j]]
    ys = np.flatnonzero(ok)
    if ys.size == 0:
        raise RuntimeError("no binary assignment satisfies coverage and emission limits")

    protection = np.array([[protection_oracle(inst.robust.dev_plus[j, l], inst.robust.dev_minus[j, l],
                                              inst.robust.budget[j, l], inst.w[j, l])
                            for l in range(L)] for j in range(J)]).reshape(J, L)
    all_links = np.ones((I, J, P))
    solves = 0

    def flow(y, z):
        nonlocal solves
        solves += 1
        return _continuous(inst, y, z, robust, disaggregated, protection)

    z_floor = np.array([flow(all_links, Z[zi].reshape(I, L))[0] for zi in range(len(Z))])
    z_best = fz + z_floor
    y_lb = fy[ys] + z_best.min()
    best, best_key, best_sol = math.inf, None, None

    def pruned(bound):
        return bound > best + 1e-9 * (1.0 + abs(best))

    for yi in ys[np.lexsort((ys, y_lb))]:
        if pruned(fy[yi] + z_best.min()):
            break
        y = Y[yi].reshape(I, J, P)
        y_floor = flow(y, np.ones((I, L)))[0]
        bounds = fy[yi] + fz + np.maximum(z_floor, y_floor)
        for zi in np.lexsort((np.arange(len(Z)), bounds)):
            if pruned(bounds[zi]):
                break
            z = Z[zi].reshape(I, L)
            value, x, pen = flow(y, z)
            total = fy[yi] + fz[zi] + value
            key = int(yi) * len(Z) + int(zi)
            tol = 1e-9 * (1.0 + abs(best)) if math.isfinite(best) else 0.0
            if total < best - tol or (abs(total - best) <= tol and key < best_key):
                best, best_key, best_sol = total, key, (y, x, z, pen)

    y, x, z, pen = best_sol
    assignment = {"y": y, "x": x, "z": z}
    if robust:
        assignment["v"] = pen.reshape(J, L) if disaggregated else float(pen[0])
    else:
        assignment["u"] = pen.reshape(J, L)
    if approach == 1:
        assignment["nc"] = y.sum(axis=(0, 1))
    return OracleResult(objective=best, assignment=assignment,
                        enumerated_count=int(ys.size * len(Z)), lp_solves=solves)
