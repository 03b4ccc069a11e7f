"""MILP builders for both emission-control approaches.

Approach 1 (hybrid purchase) prices every opened truck link at the hybrid
truck cost ``cbc`` via the counting variables ``nc``; approach 2 keeps the
existing fleet and bounds per-link emissions with a normal chance
constraint, which is linearised exactly into cuts over the link binaries.

Both approaches can be robustified against demand deviations with a
per-cell budget ``Gamma[j][l]``: the shortage variables ``u`` are replaced by
one penalty variable ``v`` bounded below by the dualised worst case.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .instance import Instance, require_valid
from .milp import LinearModel, ObjSense, Sense, VarKind

MAX_ENUM_TRUCKS = 12
CHANCE_TOL = 1e-9


class Approach(int, Enum):
    HYBRID_PURCHASE = 1
    CHANCE_CONSTRAINED = 2


class RobustMode(str, Enum):
    DETERMINISTIC = "deterministic"
    ROBUST = "robust"


class StructuralInfeasibility(ValueError):
    """Coverage cannot be met because every link into a destination breaks its emission threshold."""

    def __init__(self, destination: int):
        self.destination = destination
        super().__init__(
            f"destination {destination}: every origin/truck link violates its emission threshold, "
            "so the coverage constraint cannot be satisfied"
        )


class UnsupportedSize(ValueError):
    pass


@dataclass
class VariableMap:
    """Column indices of each logical variable family (``-1`` arrays never occur)."""

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    u: np.ndarray | None = None
    nc: np.ndarray | None = None
    v: np.ndarray | None = None
    alpha1: np.ndarray | None = None
    alpha2: np.ndarray | None = None
    mu: np.ndarray | None = None

    def all_columns(self) -> np.ndarray:
        parts = [a.ravel() for a in (self.y, self.x, self.z, self.u, self.nc, self.v,
                                    self.alpha1, self.alpha2, self.mu) if a is not None]
        return np.concatenate(parts)


@dataclass
class ModelBundle:
    model: LinearModel
    varmap: VariableMap
    approach: Approach
    robust_mode: RobustMode
    disaggregated: bool = False
    rows: dict[str, np.ndarray] = field(default_factory=dict)
    cuts: list = field(default_factory=list)


@dataclass(frozen=True)
class ChanceCut:
    """A linear inequality over the truck binaries of one link.

    ``kind`` is ``"fix"`` (single truck forced to 0), ``"cover"``
    (``sum_{p in trucks} y <= |trucks| - 1``) or ``"nogood"`` (excludes exactly the
    assignment that opens ``trucks`` and closes every other truck on the link).
    """

    link: tuple[int, int]
    trucks: tuple[int, ...]
    kind: str
    num_trucks: int

    def coefficients(self) -> dict[int, float]:
        coeffs = {p: 1.0 for p in self.trucks}
        if self.kind == "nogood":
            for p in range(self.num_trucks):
                coeffs.setdefault(p, -1.0)
        return coeffs

    @property
    def rhs(self) -> float:
        return len(self.trucks) - 1.0

    def satisfied(self, y_link) -> bool:
        lhs = sum(c * y_link[p] for p, c in self.coefficients().items())
        return lhs <= self.rhs + 1e-9


def emission_load(mean, var, z: float, mask: int) -> float:
    """Deterministic-equivalent emission of the trucks in bitmask ``mask``."""
    bits = [p for p in range(len(mean)) if mask >> p & 1]
    return float(sum(mean[p] for p in bits)) + z * math.sqrt(float(sum(var[p] for p in bits)))


def _link_cuts(mean, var, z, td, link, P) -> list[ChanceCut]:
    full = (1 << P) - 1
    bad = [emission_load(mean, var, z, s) > td + CHANCE_TOL for s in range(full + 1)]
    # up-closed: infeasible and every superset infeasible
    up = [False] * (full + 1)
    for s in sorted(range(full + 1), key=lambda m: -bin(m).count("1")):
        up[s] = bad[s] and all(up[s | 1 << p] for p in range(P) if not s >> p & 1)
    cuts = []
    for s in range(1, full + 1):
        trucks = tuple(p for p in range(P) if s >> p & 1)
        if up[s] and not any(up[s & ~(1 << p)] for p in trucks):
            cuts.append(ChanceCut(link, trucks, "fix" if len(trucks) == 1 else "cover", P))
        elif bad[s] and not up[s]:
            cuts.append(ChanceCut(link, trucks, "nogood", P))
    return cuts


def linearize_chance_constraints(inst: Instance) -> list[ChanceCut]:
    """Exact linear description of the emission chance constraint over binary ``y``.

    Loads that grow with every added truck give minimal cover cuts (single
    trucks become fixings). When a negative quantile makes the load
    non-monotone, infeasible truck sets whose supersets are feasible are
    removed one by one with no-good cuts instead, so the cut set never cuts
    off a feasible assignment.
    """
    I, J, P, _ = inst.dims.as_tuple()
    if P > MAX_ENUM_TRUCKS:
        raise UnsupportedSize(f"{P} truck types exceeds the exact enumeration cap of {MAX_ENUM_TRUCKS}")
    ch = inst.chance
    cuts = []
    for i, j in itertools.product(range(I), range(J)):
        cuts += _link_cuts(ch.mean, ch.var, ch.z, float(ch.threshold[i, j]), (i, j), P)
    return cuts


def check_coverage_possible(inst: Instance, cuts: list[ChanceCut]) -> None:
    """Raise :class:`StructuralInfeasibility` for a destination no link can serve."""
    I, J, P, _ = inst.dims.as_tuple()
    by_link: dict[tuple[int, int], list[ChanceCut]] = {}
    for cut in cuts:
        by_link.setdefault(cut.link, []).append(cut)
    for j in range(J):
        servable = False
        for i in range(I):
            link_cuts = by_link.get((i, j), [])
            for mask in range(1, 1 << P):
                y = [mask >> p & 1 for p in range(P)]
                if all(c.satisfied(y) for c in link_cuts):
                    servable = True
                    break
            if servable:
                break
        if not servable:
            raise StructuralInfeasibility(j)


def install_chance_cuts(model: LinearModel, y: np.ndarray, cuts: list[ChanceCut]) -> list[int]:
    rows = []
    for cut in cuts:
        i, j = cut.link
        if cut.kind == "fix":
            model.variables[int(y[i, j, cut.trucks[0]])].ub = 0.0
            continue
        coeffs = {int(y[i, j, p]): a for p, a in cut.coefficients().items()}
        rows.append(model.add_constraint(coeffs, Sense.LE, cut.rhs, f"chance_{i}_{j}_{cut.kind}"))
    return rows


def _add_block(model: LinearModel, prefix: str, shape, **kw) -> np.ndarray:
    idx = np.empty(shape, dtype=np.int64)
    for pos in itertools.product(*(range(s) for s in shape)):
        idx[pos] = model.add_var(prefix + "_" + "_".join(map(str, pos)), **kw)
    return idx


def _build(inst: Instance, approach: Approach) -> ModelBundle:
    require_valid(inst)
    I, J, P, L = inst.dims.as_tuple()
    m = LinearModel(name=f"approach{int(approach)}")
    y = _add_block(m, "y", (I, J, P), kind=VarKind.BINARY)
    x = _add_block(m, "x", (I, J, L, P))
    z = _add_block(m, "z", (I, L), kind=VarKind.BINARY)
    u = _add_block(m, "u", (J, L))
    nc = _add_block(m, "nc", (P,)) if approach is Approach.HYBRID_PURCHASE else None

    obj: dict[int, float] = {}
    for pos in np.ndindex(I, J, P):
        obj[int(y[pos])] = inst.c[pos]
    for pos in np.ndindex(I, L):
        obj[int(z[pos])] = inst.h[pos]
    for pos in np.ndindex(I, J, L, P):
        obj[int(x[pos])] = inst.q[pos]
    for pos in np.ndindex(J, L):
        obj[int(u[pos])] = inst.w[pos]
    if nc is not None:
        for p in range(P):
            obj[int(nc[p])] = inst.cbc[p]
    m.set_objective(obj, ObjSense.MINIMIZE)

    rows: dict[str, list[int]] = {k: [] for k in ("coverage", "link_capacity", "origin_capacity",
                                                  "shortage", "counting")}
    for j in range(J):
        rows["coverage"].append(m.add_constraint(
            {int(y[i, j, p]): 1.0 for i in range(I) for p in range(P)}, Sense.GE, 1.0, f"cover_{j}"))
    cap = inst.link_capacity
    for i, j, p in np.ndindex(I, J, P):
        coeffs = {int(x[i, j, l, p]): 1.0 for l in range(L)}
        coeffs[int(y[i, j, p])] = -cap[p]
        rows["link_capacity"].append(m.add_constraint(coeffs, Sense.LE, 0.0, f"linkcap_{i}_{j}_{p}"))
    for i, l in np.ndindex(I, L):
        coeffs = {int(x[i, j, l, p]): 1.0 for j in range(J) for p in range(P)}
        coeffs[int(z[i, l])] = -inst.k[i, l]
        rows["origin_capacity"].append(m.add_constraint(coeffs, Sense.LE, 0.0, f"origcap_{i}_{l}"))
    for j, l in np.ndindex(J, L):
        coeffs = {int(x[i, j, l, p]): 1.0 for i in range(I) for p in range(P)}
        coeffs[int(u[j, l])] = 1.0
        rows["shortage"].append(m.add_constraint(coeffs, Sense.GE, inst.D[j, l], f"short_{j}_{l}"))
    if nc is not None:
        for p in range(P):
            coeffs = {int(y[i, j, p]): -1.0 for i in range(I) for j in range(J)}
            coeffs[int(nc[p])] = 1.0
            rows["counting"].append(m.add_constraint(coeffs, Sense.EQ, 0.0, f"count_{p}"))

    bundle = ModelBundle(m, VariableMap(y=y, x=x, z=z, u=u, nc=nc), approach, RobustMode.DETERMINISTIC)
    if approach is Approach.CHANCE_CONSTRAINED:
        cuts = linearize_chance_constraints(inst)
        check_coverage_possible(inst, cuts)
        rows["chance"] = install_chance_cuts(m, y, cuts)
        bundle.cuts = cuts
    bundle.rows = {k: np.array(v, dtype=np.int64) for k, v in rows.items()}
    return bundle


def build_approach1(inst: Instance, robust_mode: RobustMode | str = RobustMode.DETERMINISTIC,
                    disaggregated: bool = False) -> ModelBundle:
    """Hybrid-truck purchase model: every opened link buys one truck at ``cbc[p]``."""
    bundle = _build(inst, Approach.HYBRID_PURCHASE)
    if RobustMode(robust_mode) is RobustMode.ROBUST:
        bundle = apply_robust_counterpart(bundle, inst, disaggregated=disaggregated)
    return bundle


def build_approach2(inst: Instance, robust_mode: RobustMode | str = RobustMode.DETERMINISTIC,
                    disaggregated: bool = False) -> ModelBundle:
    """Chance-constrained emission model over the existing fleet."""
    bundle = _build(inst, Approach.CHANCE_CONSTRAINED)
    if RobustMode(robust_mode) is RobustMode.ROBUST:
        bundle = apply_robust_counterpart(bundle, inst, disaggregated=disaggregated)
    return bundle


def build(inst: Instance, approach: Approach | int, robust_mode: RobustMode | str = RobustMode.DETERMINISTIC,
          disaggregated: bool = False) -> ModelBundle:
    if Approach(approach) is Approach.HYBRID_PURCHASE:
        return build_approach1(inst, robust_mode, disaggregated)
    return build_approach2(inst, robust_mode, disaggregated)


def apply_robust_counterpart(bundle: ModelBundle, inst: Instance, disaggregated: bool = False) -> ModelBundle:
    """Replace shortage variables by the budgeted worst-case penalty ``v``.

    The default adds one aggregated row
    ``sum_{j,l} w (D + alpha1 + Gamma*mu - sum_{i,p} x) <= v`` with ``v >= 0``;
    ``disaggregated=True`` uses one ``v[j][l] >= 0`` per cell instead, which stops
    oversupply in one cell from offsetting shortage in another.
    """
    if bundle.robust_mode is RobustMode.ROBUST:
        raise ValueError("robust counterpart already applied")
    J, L = inst.dims.num_destinations, inst.dims.num_products
    src = bundle.model
    vm = bundle.varmap
    drop = set(vm.u.ravel().tolist())
    drop_rows = set(bundle.rows["shortage"].tolist())

    m = LinearModel(name=src.name + "_robust")
    remap = np.full(src.num_vars, -1, dtype=np.int64)
    for j, var in enumerate(src.variables):
        if j not in drop:
            remap[j] = m.add_var(var.name, var.lb, var.ub, var.kind)
    new_rows: dict[str, list[int]] = {k: [] for k in bundle.rows}
    row_group = {int(r): k for k, arr in bundle.rows.items() for r in arr}
    for r, con in enumerate(src.constraints):
        if r in drop_rows:
            continue
        nr = m.add_constraint(zip(remap[con.indices].tolist(), con.values.tolist()), con.sense, con.rhs, con.name)
        new_rows.setdefault(row_group.get(r, "other"), []).append(nr)
    keep = [k for k in range(src.obj_indices.size) if int(src.obj_indices[k]) not in drop]
    obj = {int(remap[src.obj_indices[k]]): float(src.obj_values[k]) for k in keep}

    def mapped(a):
        return None if a is None else remap[a]

    rob = inst.robust
    a1 = _add_block(m, "alpha1", (J, L))
    a2 = _add_block(m, "alpha2", (J, L))
    mu = _add_block(m, "mu", (J, L))
    x = remap[vm.x]
    I, _, _, _ = inst.dims.as_tuple()
    P = inst.dims.num_trucks
    if disaggregated:
        v = _add_block(m, "v", (J, L))
        for vi in v.ravel():
            obj[int(vi)] = 1.0
    else:
        v = np.array(m.add_var("v"))
        obj[int(v)] = 1.0
    m.set_objective(obj, ObjSense.MINIMIZE, src.constant_term)

    penalty_rows = []
    if disaggregated:
        for j, l in np.ndindex(J, L):
            wjl = inst.w[j, l]
            coeffs = {int(x[i, j, l, p]): -wjl for i in range(I) for p in range(P)}
            coeffs[int(a1[j, l])] = wjl
            coeffs[int(mu[j, l])] = wjl * rob.budget[j, l]
            coeffs[int(v[j, l])] = -1.0
            penalty_rows.append(m.add_constraint(coeffs, Sense.LE, -wjl * inst.D[j, l], f"robust_{j}_{l}"))
    else:
        coeffs: dict[int, float] = {}
        for j, l in np.ndindex(J, L):
            wjl = inst.w[j, l]
            for i in range(I):
                for p in range(P):
                    coeffs[int(x[i, j, l, p])] = -wjl
            coeffs[int(a1[j, l])] = wjl
            coeffs[int(mu[j, l])] = wjl * rob.budget[j, l]
        coeffs[int(v)] = -1.0
        penalty_rows.append(m.add_constraint(coeffs, Sense.LE, -float((inst.w * inst.D).sum()), "robust"))
    up_rows, down_rows = [], []
    for j, l in np.ndindex(J, L):
        up_rows.append(m.add_constraint({int(a1[j, l]): 1.0, int(mu[j, l]): 1.0}, Sense.GE,
                                        rob.dev_plus[j, l], f"dev_up_{j}_{l}"))
        down_rows.append(m.add_constraint({int(a2[j, l]): 1.0, int(mu[j, l]): 1.0}, Sense.GE,
                                          rob.dev_minus[j, l], f"dev_down_{j}_{l}"))

    new_rows.pop("shortage", None)
    rows = {k: np.array(v_, dtype=np.int64) for k, v_ in new_rows.items() if k != "other"}
    rows["robust_penalty"] = np.array(penalty_rows, dtype=np.int64)
    rows["deviation_up"] = np.array(up_rows, dtype=np.int64)
    rows["deviation_down"] = np.array(down_rows, dtype=np.int64)
    varmap = VariableMap(y=mapped(vm.y), x=x, z=mapped(vm.z), nc=mapped(vm.nc),
                         v=v, alpha1=a1, alpha2=a2, mu=mu)
    return ModelBundle(m, varmap, bundle.approach, RobustMode.ROBUST, disaggregated, rows, bundle.cuts)


def extract(bundle: ModelBundle, values) -> dict[str, np.ndarray]:
    """Split a solver vector into named arrays.

    ``alpha2`` never enters the objective or the penalty row, so any value at or
    above ``max(0, dev_minus - mu)`` is optimal; it is reported at that floor.
    """
    values = np.asarray(values, dtype=float)
    vm = bundle.varmap
    out = {}
    for name in ("y", "x", "z", "u", "nc", "v", "alpha1", "alpha2", "mu"):
        idx = getattr(vm, name)
        if idx is not None:
            out[name] = values[idx]
    if "alpha2" in out:
        dev_minus = np.array([bundle.model.constraints[r].rhs for r in bundle.rows["deviation_down"]])
        out["alpha2"] = np.maximum(0.0, dev_minus.reshape(out["mu"].shape) - out["mu"])
    return out


def protection_value(inst: Instance) -> np.ndarray:
    """Cheapest dual cover per cell, ``w * min over alpha1 + mu >= dev_plus of (alpha1 + Gamma*mu)``."""
    rob = inst.robust
    return inst.w * rob.dev_plus * np.minimum(1.0, rob.budget)


def evaluate_objective(inst: Instance, assignment: dict, approach: Approach | int,
                       robust_mode: RobustMode | str = RobustMode.DETERMINISTIC,
                       disaggregated: bool = False, check_shortage: bool = False) -> float:
    """Total cost recomputed from raw parameters and the ``y``, ``x``, ``z`` decisions.

    Shortage, truck counts and the robust penalty are derived rather than read
    from the assignment: shortage is ``max(0, D - supplied)`` and the robust
    penalty is the supplied-flow gap plus the per-cell protection value.
    With ``check_shortage`` a supplied ``u`` must equal that derived shortage
    wherever the penalty rate is positive.
    """
    for key in ("y", "x", "z"):
        if key not in assignment:
            raise KeyError(f"assignment is missing variable family {key!r}")
    y = np.asarray(assignment["y"], dtype=float)
    x = np.asarray(assignment["x"], dtype=float)
    z = np.asarray(assignment["z"], dtype=float)
    supplied = x.sum(axis=(0, 3))
    total = float((inst.c * y).sum() + (inst.h * z).sum() + (inst.q * x).sum())
    if Approach(approach) is Approach.HYBRID_PURCHASE:
        total += float(inst.cbc @ y.sum(axis=(0, 1)))
    if RobustMode(robust_mode) is RobustMode.ROBUST:
        cell = inst.w * (inst.D - supplied) + protection_value(inst)
        total += float(np.maximum(cell, 0.0).sum()) if disaggregated else max(float(cell.sum()), 0.0)
    else:
        short = np.maximum(inst.D - supplied, 0.0)
        if check_shortage and "u" in assignment:
            u = np.asarray(assignment["u"], dtype=float)
            off = (inst.w > 0) & (np.abs(u - short) > 1e-6 * (1.0 + short))
            if off.any():
                j, l = map(int, np.argwhere(off)[0])
                raise ValueError(f"u[{j}][{l}] = {u[j, l]} but the shortage is {short[j, l]}")
        total += float((inst.w * short).sum())
    return total
