"""Sparse linear model container shared by every formulation in the package."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np


class VarKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    INTEGER = "integer"


class Sense(str, Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class ObjSense(str, Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


class ModelError(ValueError):
    pass


Coeffs = Mapping[int, float] | Iterable[tuple[int, float]]


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    kind: VarKind = VarKind.CONTINUOUS


@dataclass
class Constraint:
    indices: np.ndarray
    values: np.ndarray
    sense: Sense
    rhs: float
    name: str = ""


def _as_pairs(coeffs: Coeffs) -> tuple[np.ndarray, np.ndarray]:
    items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
    merged: dict[int, float] = {}
    for idx, val in items:
        merged[int(idx)] = merged.get(int(idx), 0.0) + float(val)
    idx = np.fromiter(merged.keys(), dtype=np.int64, count=len(merged))
    val = np.fromiter(merged.values(), dtype=float, count=len(merged))
    return idx, val


@dataclass
class LinearModel:
    """Variables with bounds and kinds, sparse rows, and a linear objective.

    Build a model with :meth:`add_var` / :meth:`add_constraint` /
    :meth:`set_objective`; solvers treat it as read-only afterwards.
    """

    name: str = "model"
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    obj_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    obj_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    obj_sense: ObjSense = ObjSense.MINIMIZE
    constant_term: float = 0.0

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                kind: VarKind | str = VarKind.CONTINUOUS) -> int:
        kind = VarKind(kind)
        if kind is VarKind.BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self.variables.append(Variable(name, float(lb), float(ub), kind))
        return len(self.variables) - 1

    def add_constraint(self, coeffs: Coeffs, sense: Sense | str, rhs: float, name: str = "") -> int:
        idx, val = _as_pairs(coeffs)
        self.constraints.append(Constraint(idx, val, Sense(sense), float(rhs), name))
        return len(self.constraints) - 1

    def set_objective(self, coeffs: Coeffs, sense: ObjSense | str = ObjSense.MINIMIZE,
                      constant: float = 0.0) -> None:
        self.obj_indices, self.obj_values = _as_pairs(coeffs)
        self.obj_sense = ObjSense(sense)
        self.constant_term = float(constant)

    def integer_indices(self) -> np.ndarray:
        return np.array(
            [i for i, v in enumerate(self.variables) if v.kind is not VarKind.CONTINUOUS], dtype=np.int64
        )

    def is_mip(self) -> bool:
        return any(v.kind is not VarKind.CONTINUOUS for v in self.variables)

    def check(self) -> list[str]:
        """Structural problems: dangling indices, bad binary bounds, non-finite data."""
        problems = []
        n = self.num_vars
        for j, v in enumerate(self.variables):
            if v.kind is VarKind.BINARY and (v.lb < 0 or v.ub > 1):
                problems.append(f"variable {v.name}: binary bounds outside [0, 1]")
            if math.isnan(v.lb) or math.isnan(v.ub) or v.lb > v.ub:
                problems.append(f"variable {v.name}: bad bounds [{v.lb}, {v.ub}]")
        for r, con in enumerate(self.constraints):
            if con.indices.size and (con.indices.min() < 0 or con.indices.max() >= n):
                problems.append(f"constraint {con.name or r}: index out of range")
            if not np.all(np.isfinite(con.values)) or not math.isfinite(con.rhs):
                problems.append(f"constraint {con.name or r}: non-finite data")
        if self.obj_indices.size and (self.obj_indices.min() < 0 or self.obj_indices.max() >= n):
            problems.append("objective: index out of range")
        if not np.all(np.isfinite(self.obj_values)):
            problems.append("objective: non-finite coefficient")
        return problems

    def dense(self) -> "DenseModel":
        n, m = self.num_vars, self.num_constraints
        A = np.zeros((m, n))
        rhs = np.zeros(m)
        senses = np.empty(m, dtype="<U2")
        for r, con in enumerate(self.constraints):
            A[r, con.indices] = con.values
            rhs[r] = con.rhs
            senses[r] = con.sense.value
        c = np.zeros(n)
        c[self.obj_indices] = self.obj_values
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        return DenseModel(A, senses, rhs, c, lb, ub, self.obj_sense is ObjSense.MAXIMIZE, self.constant_term)

    def evaluate(self, x: Sequence[float]) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.obj_values @ x[self.obj_indices]) + self.constant_term

    def max_violation(self, x: Sequence[float], scaled: bool = True) -> float:
        """Largest row or bound violation at ``x``; scaled by ``1 + |rhs|`` by default."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for con in self.constraints:
            act = float(con.values @ x[con.indices])
            if con.sense is Sense.LE:
                viol = act - con.rhs
            elif con.sense is Sense.GE:
                viol = con.rhs - act
            else:
                viol = abs(act - con.rhs)
            if scaled:
                viol /= 1.0 + abs(con.rhs)
            worst = max(worst, viol)
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        if x.size:
            worst = max(worst, float(np.max(lb - x)), float(np.max(x - ub)))
        return worst


@dataclass
class DenseModel:
    """Dense arrays of a :class:`LinearModel`; what the simplex actually consumes."""

    A: np.ndarray
    senses: np.ndarray
    rhs: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    maximize: bool = False
    constant: float = 0.0


@dataclass
class SolveResult:
    status: Status
    objective_value: float = math.nan
    primal_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual_values: np.ndarray | None = None
    node_count: int = 0
    wall_time: float = 0.0
    iterations: int = 0
    best_bound: float = math.nan
    relaxed: bool = False
    unbounded_ray: int | None = None
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def x(self) -> np.ndarray:
        return self.primal_values
