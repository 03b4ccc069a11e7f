"""Cutting-plane Lagrangian decomposition.

The link-capacity rows ``sum_l x[i,j,l,p] <= (sum_l b[l,p]) y[i,j,p]`` are
priced out with multipliers ``lam[i,j,p] >= 0``. What is left splits into a
link-design subproblem over ``y`` (and ``nc``) and a flow/opening subproblem
over ``x``, ``z`` and the shortage or robust-penalty columns. Every subproblem
optimum becomes a cut in a master LP over ``(theta, eta, lam)``; the master
optimum gives the next multipliers and an upper estimate of the dual value.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .formulation import Approach, ModelBundle, RobustMode, build
from .instance import Instance
from .milp import LinearModel, ObjSense, Sense, SolveResult, Status, branch_and_bound, solve_lp

log = logging.getLogger(__name__)


class DecompositionError(RuntimeError):
    pass


@dataclass
class Cut:
    """Stored optimum of one subproblem.

    Theta cuts keep ``y`` (and ``nc``); eta cuts keep ``x``, ``z`` and the
    penalty value (``v`` in robust mode, ``sum w u`` otherwise).
    """

    kind: str
    y: np.ndarray | None = None
    nc: np.ndarray | None = None
    x: np.ndarray | None = None
    z: np.ndarray | None = None
    penalty: float = 0.0

    def value(self, inst: Instance, lam: np.ndarray, approach: Approach) -> float:
        """Right-hand side of the cut at multipliers ``lam``."""
        if self.kind == "theta":
            val = float(((inst.c - lam * inst.link_capacity) * self.y).sum())
            if approach is Approach.HYBRID_PURCHASE:
                val += float(inst.cbc @ self.nc)
            return val
        flow = self.x.sum(axis=2)
        return float((inst.q * self.x).sum() + (lam * flow).sum() + (inst.h * self.z).sum() + self.penalty)


@dataclass
class IterationRecord:
    iteration: int
    sp1: float
    sp2: float
    z_lb: float
    z_up: float
    master: float
    sp_time: float
    master_time: float


@dataclass
class LDConfig:
    epsilon: float | None = None  # absolute; default is 1e-6 * (1 + |Z_lb|)
    max_iter: int = 200
    lambda_max: float | None = None  # default 10 * max q
    disaggregated: bool = False


@dataclass
class LDReport:
    bound: float
    iterations: int
    converged: bool
    total_time: float
    history: list[IterationRecord] = field(default_factory=list)
    multipliers: np.ndarray | None = None
    z_up: float = math.inf
    box_active: bool = False
    cuts: list[Cut] = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.z_up - self.bound


def _tolerance(cfg: LDConfig, z_lb: float) -> float:
    if cfg.epsilon is not None:
        return cfg.epsilon
    return 1e-6 * (1.0 + abs(z_lb))


def _restrict(model: LinearModel, cols: np.ndarray, rows: np.ndarray, name: str):
    """Submodel on ``cols`` and ``rows``; rows must only touch ``cols``."""
    sub = LinearModel(name=name)
    remap = np.full(model.num_vars, -1, dtype=np.int64)
    for j in cols:
        var = model.variables[int(j)]
        remap[j] = sub.add_var(var.name, var.lb, var.ub, var.kind)
    for r in rows:
        con = model.constraints[int(r)]
        new = remap[con.indices]
        if np.any(new < 0):
            raise DecompositionError(f"row {con.name} couples the two subproblems")
        sub.add_constraint(zip(new.tolist(), con.values.tolist()), con.sense, con.rhs, con.name)
    return sub, remap


class Decomposition:
    """Both subproblem templates for one instance; only objectives change with ``lam``."""

    def __init__(self, inst: Instance, approach: Approach | int,
                 robust_mode: RobustMode | str = RobustMode.DETERMINISTIC, disaggregated: bool = False):
        self.inst = inst
        self.approach = Approach(approach)
        self.robust_mode = RobustMode(robust_mode)
        self.bundle: ModelBundle = build(inst, self.approach, self.robust_mode, disaggregated)
        vm = self.bundle.varmap
        rows = self.bundle.rows
        full = self.bundle.model
        cols1 = np.concatenate([vm.y.ravel()] + ([vm.nc] if vm.nc is not None else []))
        rows1 = np.concatenate([rows["coverage"], rows.get("counting", []), rows.get("chance", [])]).astype(np.int64)
        self.sp1_model, map1 = _restrict(full, cols1, rows1, "sp1")
        skip = set(rows["link_capacity"].tolist()) | set(rows1.tolist())
        rows2 = np.array([r for r in range(full.num_constraints) if r not in skip], dtype=np.int64)
        cols2 = np.setdiff1d(np.arange(full.num_vars), cols1)
        self.sp2_model, map2 = _restrict(full, cols2, rows2, "sp2")

        self.y1 = map1[vm.y]
        self.nc1 = map1[vm.nc] if vm.nc is not None else None
        self.x2 = map2[vm.x]
        self.z2 = map2[vm.z]
        self.u2 = map2[vm.u] if vm.u is not None else None
        self.v2 = map2[np.atleast_1d(vm.v)] if vm.v is not None else None
        self.dm1, self.ints1 = self.sp1_model.dense(), self.sp1_model.integer_indices()
        self.dm2, self.ints2 = self.sp2_model.dense(), self.sp2_model.integer_indices()

    def sp1_costs(self, lam: np.ndarray) -> np.ndarray:
        inst = self.inst
        c = np.zeros(self.sp1_model.num_vars)
        c[self.y1] = inst.c - lam * inst.link_capacity
        if self.nc1 is not None:
            c[self.nc1] = inst.cbc
        return c

    def sp2_costs(self, lam: np.ndarray) -> np.ndarray:
        inst = self.inst
        c = np.zeros(self.sp2_model.num_vars)
        c[self.x2] = inst.q + lam[:, :, None, :]
        c[self.z2] = inst.h
        if self.u2 is not None:
            c[self.u2] = inst.w
        else:
            c[self.v2] = 1.0
        return c

    def sp1(self, lam: np.ndarray) -> LinearModel:
        self.sp1_model.set_objective(enumerate(self.sp1_costs(lam)), ObjSense.MINIMIZE)
        return self.sp1_model

    def sp2(self, lam: np.ndarray) -> LinearModel:
        self.sp2_model.set_objective(enumerate(self.sp2_costs(lam)), ObjSense.MINIMIZE)
        return self.sp2_model

    def solve_sp1(self, lam: np.ndarray) -> SolveResult:
        self.dm1.c = self.sp1_costs(lam)
        return _check(branch_and_bound(self.dm1, self.ints1), "subproblem 1")

    def solve_sp2(self, lam: np.ndarray) -> SolveResult:
        self.dm2.c = self.sp2_costs(lam)
        return _check(branch_and_bound(self.dm2, self.ints2), "subproblem 2")

    def theta_cut(self, res: SolveResult) -> Cut:
        xs = res.primal_values
        nc = xs[self.nc1] if self.nc1 is not None else None
        return Cut("theta", y=np.round(xs[self.y1]), nc=nc)

    def eta_cut(self, res: SolveResult) -> Cut:
        xs = res.primal_values
        if self.u2 is not None:
            penalty = float((self.inst.w * xs[self.u2]).sum())
        else:
            penalty = float(xs[self.v2].sum())
        return Cut("eta", x=xs[self.x2], z=np.round(xs[self.z2]), penalty=penalty)


def _check(res: SolveResult, label: str) -> SolveResult:
    if res.status is not Status.OPTIMAL:
        raise DecompositionError(f"{label} ended with status {res.status.value}: {res.message}")
    return res


def build_subproblem1(inst: Instance, lam: np.ndarray, approach: Approach | int,
                      robust_mode: RobustMode | str = RobustMode.DETERMINISTIC) -> LinearModel:
    """Link-design subproblem: coverage (+ counting or chance cuts) with priced link capacity."""
    return Decomposition(inst, approach, robust_mode).sp1(np.asarray(lam, dtype=float))


def build_subproblem2(inst: Instance, lam: np.ndarray, robust_mode: RobustMode | str = RobustMode.DETERMINISTIC,
                      approach: Approach | int = Approach.HYBRID_PURCHASE, disaggregated: bool = False) -> LinearModel:
    """Flow subproblem: origin capacity and shortage/robust rows, flows charged ``q + lam``."""
    return Decomposition(inst, approach, robust_mode, disaggregated).sp2(np.asarray(lam, dtype=float))


def default_lambda_max(inst: Instance) -> float:
    return 10.0 * float(inst.q.max())


def _master_shell(inst: Instance, lambda_max: float) -> LinearModel:
    I, J, P, _ = inst.dims.as_tuple()
    m = LinearModel(name="master")
    m.add_var("theta", -math.inf, math.inf)
    m.add_var("eta", -math.inf, math.inf)
    for i, j, p in np.ndindex(I, J, P):
        m.add_var(f"lam_{i}_{j}_{p}", 0.0, lambda_max)
    m.set_objective({0: 1.0, 1: 1.0}, ObjSense.MAXIMIZE)
    return m


def _add_cut(m: LinearModel, cut: Cut, inst: Instance, approach: Approach) -> None:
    """Append ``theta <= rhs(lam)`` or ``eta <= rhs(lam)`` as a row of the master."""
    if cut.kind == "theta":
        weight = (cut.y * inst.link_capacity).ravel()
        head = 0
    else:
        weight = -cut.x.sum(axis=2).ravel()
        head = 1
    nz = np.flatnonzero(weight)
    coeffs = [(head, 1.0)] + list(zip((2 + nz).tolist(), weight[nz].tolist()))
    rhs = cut.value(inst, np.zeros(inst.c.shape), approach)
    m.add_constraint(coeffs, Sense.LE, rhs, f"{cut.kind}_{m.num_constraints}")


def build_master(cuts: list[Cut], inst: Instance, lambda_max: float, approach: Approach | int) -> LinearModel:
    """Max ``theta + eta`` over multipliers boxed to ``[0, lambda_max]`` under all stored cuts.

    Columns are ``theta``, ``eta`` and then ``lam`` in C order over ``(i, j, p)``.
    """
    if {c.kind for c in cuts} != {"theta", "eta"}:
        raise ValueError("master needs at least one theta cut and one eta cut")
    m = _master_shell(inst, lambda_max)
    for cut in cuts:
        _add_cut(m, cut, inst, Approach(approach))
    return m


def run_ld(inst: Instance, approach: Approach | int = Approach.HYBRID_PURCHASE,
           robust_mode: RobustMode | str = RobustMode.DETERMINISTIC,
           config: LDConfig | None = None, trace=None) -> LDReport:
    """Lagrangian lower bound by Kelley cutting planes on the multipliers.

    Each iteration solves both subproblems at the current multipliers,
    raises ``Z_lb`` to their summed value if larger, adds both optima as
    cuts, and solves the master; its value lowers ``Z_up`` and its
    multipliers are used next. Stops once ``Z_up - Z_lb < epsilon`` or after
    ``max_iter`` iterations. ``trace`` (a text stream) receives one CSV line
    per iteration.
    """
    cfg = config or LDConfig()
    t0 = time.perf_counter()
    approach = Approach(approach)
    dec = Decomposition(inst, approach, robust_mode, cfg.disaggregated)
    lam_max = cfg.lambda_max if cfg.lambda_max is not None else default_lambda_max(inst)
    I, J, P, _ = inst.dims.as_tuple()
    lam = np.zeros((I, J, P))
    z_up, z_lb = math.inf, -math.inf
    cuts: list[Cut] = []
    history: list[IterationRecord] = []
    writer = None
    if trace is not None:
        writer = csv.writer(trace, lineterminator="\n")
        writer.writerow(["iter", "sp1", "sp2", "z_lb", "z_up", "gap"])

    master_model = _master_shell(inst, lam_max)
    converged = False
    it = 1
    best_lam = lam
    while it <= cfg.max_iter:
        ts = time.perf_counter()
        r1 = dec.solve_sp1(lam)
        r2 = dec.solve_sp2(lam)
        sp_time = time.perf_counter() - ts
        new = [dec.theta_cut(r1), dec.eta_cut(r2)]
        cuts += new
        for cut in new:
            _add_cut(master_model, cut, inst, approach)
        value = r1.objective_value + r2.objective_value
        if value > z_lb:
            z_lb = value
            best_lam = lam

        tm = time.perf_counter()
        master = solve_lp(master_model, want_duals=False)
        if master.status is not Status.OPTIMAL:
            raise DecompositionError(f"master ended with status {master.status.value}: {master.message}")
        master_time = time.perf_counter() - tm
        z_up = min(z_up, master.objective_value)
        lam = master.primal_values[2:].reshape(I, J, P)

        history.append(IterationRecord(it, r1.objective_value, r2.objective_value, z_lb, z_up,
                                       master.objective_value, sp_time, master_time))
        if writer is not None:
            writer.writerow([it, repr(r1.objective_value), repr(r2.objective_value), repr(z_lb), repr(z_up),
                             repr(z_up - z_lb)])
        if z_up - z_lb < _tolerance(cfg, z_lb):
            converged = True
            break
        it += 1

    box_active = bool(np.any(best_lam >= lam_max - 1e-9))
    if box_active:
        log.warning("multiplier box %.3g is active at the best multipliers", lam_max)
    return LDReport(bound=z_lb, iterations=len(history), converged=converged,
                    total_time=time.perf_counter() - t0, history=history, multipliers=best_lam,
                    z_up=z_up, box_active=box_active, cuts=cuts)


def compute_gap(exact_obj: float, bound: float) -> float:
    """Relative gap in percent, ``(exact - bound) / exact * 100``."""
    if exact_obj == 0:
        raise ZeroDivisionError("gap is undefined for a zero exact objective")
    return (exact_obj - bound) / exact_obj * 100.0
