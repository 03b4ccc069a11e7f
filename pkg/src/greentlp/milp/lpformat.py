"""Export a :class:`LinearModel` in CPLEX LP text format for external cross-checks."""

from __future__ import annotations

import math
import re

from .model import LinearModel, ObjSense, VarKind

_BAD = re.compile(r"[^A-Za-z0-9_.]")


def _name(raw: str, idx: int) -> str:
    name = _BAD.sub("_", raw) or f"x{idx}"
    if name[0].isdigit() or name[0] in ".eE":
        name = "v_" + name
    return name


def _num(v: float) -> str:
    return repr(float(v))


def _expr(pairs, names) -> str:
    out = []
    for idx, val in pairs:
        if val == 0:
            continue
        sign = "-" if val < 0 else "+"
        out.append(f"{sign} {_num(abs(val))} {names[idx]}")
    if not out:
        return "0 " + names[0] if names else "0"
    text = " ".join(out)
    return text[2:] if text.startswith("+ ") else text


def write_lp(model: LinearModel) -> str:
    names = [_name(v.name, j) for j, v in enumerate(model.variables)]
    seen: dict[str, int] = {}
    for j, nm in enumerate(names):
        if nm in seen:
            names[j] = f"{nm}_{j}"
        seen[nm] = j

    lines = [f"\\ {model.name}", "Maximize" if model.obj_sense is ObjSense.MAXIMIZE else "Minimize"]
    obj = _expr(zip(model.obj_indices.tolist(), model.obj_values.tolist()), names)
    if model.constant_term:
        obj += f" {'+' if model.constant_term > 0 else '-'} {_num(abs(model.constant_term))}"
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    for r, con in enumerate(model.constraints):
        label = _name(con.name, r) if con.name else f"c{r}"
        expr = _expr(zip(con.indices.tolist(), con.values.tolist()), names)
        lines.append(f" {label}_{r}: {expr} {con.sense.value} {_num(con.rhs)}")

    lines.append("Bounds")
    for j, v in enumerate(model.variables):
        if v.kind is VarKind.BINARY and v.lb == 0 and v.ub == 1:
            continue
        lo = "-inf" if v.lb == -math.inf else _num(v.lb)
        hi = "+inf" if v.ub == math.inf else _num(v.ub)
        if v.lb == -math.inf and v.ub == math.inf:
            lines.append(f" {names[j]} free")
        elif v.lb == v.ub:
            lines.append(f" {names[j]} = {lo}")
        elif v.lb == 0 and v.ub == math.inf:
            continue
        else:
            lines.append(f" {lo} <= {names[j]} <= {hi}")

    binaries = [names[j] for j, v in enumerate(model.variables) if v.kind is VarKind.BINARY]
    generals = [names[j] for j, v in enumerate(model.variables) if v.kind is VarKind.INTEGER]
    if binaries:
        lines.append("Binary")
        lines += [f" {nm}" for nm in binaries]
    if generals:
        lines.append("General")
        lines += [f" {nm}" for nm in generals]
    lines.append("End")
    return "\n".join(lines) + "\n"
