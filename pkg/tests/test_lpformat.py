import math
import re

import numpy as np
import pytest

from greentlp.formulation import build
from greentlp.instance import Dimensions, generate_family
from greentlp.milp import LinearModel, ObjSense, VarKind, solve_milp, write_lp
from helpers import fixture_1111

TERM = re.compile(r"([+-])?\s*([0-9.eE+-]+)\s+([A-Za-z_][A-Za-z0-9_.]*)")


def read_lp(text: str) -> LinearModel:
    """Minimal reader for the subset of LP format the writer emits."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("\\")]
    m = LinearModel()
    index: dict[str, int] = {}

    def var(name):
        if name not in index:
            index[name] = m.add_var(name)
        return index[name]

    def terms(expr):
        out = []
        for sign, coef, name in TERM.findall(expr):
            out.append((var(name), -float(coef) if sign == "-" else float(coef)))
        return out

    section = None
    sense = ObjSense.MINIMIZE
    objective = []
    for ln in lines:
        if ln in ("Minimize", "Maximize", "Subject To", "Bounds", "Binary", "General", "End"):
            section = ln
            if ln == "Maximize":
                sense = ObjSense.MAXIMIZE
            continue
        if section in ("Minimize", "Maximize"):
            objective = terms(ln.split(":", 1)[1])
        elif section == "Subject To":
            body = ln.split(":", 1)[1]
            op = re.search(r"(<=|>=|=)\s*(\S+)$", body)
            m.add_constraint(terms(body[: op.start()]), op.group(1), float(op.group(2)))
        elif section == "Bounds":
            if ln.endswith(" free"):
                j = var(ln.split()[0])
                m.variables[j].lb, m.variables[j].ub = -math.inf, math.inf
            elif " = " in ln:
                name, val = ln.split(" = ")
                j = var(name)
                m.variables[j].lb = m.variables[j].ub = float(val)
            else:
                lo, name, hi = re.match(r"(\S+) <= (\S+) <= (\S+)", ln).groups()
                j = var(name)
                m.variables[j].lb, m.variables[j].ub = float(lo), float(hi)
        elif section == "Binary":
            j = var(ln)
            m.variables[j].kind = VarKind.BINARY
            m.variables[j].lb, m.variables[j].ub = 0.0, 1.0
        elif section == "General":
            m.variables[var(ln)].kind = VarKind.INTEGER
    m.set_objective(objective, sense)
    return m


def test_sections_present():
    text = write_lp(build(fixture_1111(), 1, "robust").model)
    for head in ("Minimize", "Subject To", "Bounds", "Binary", "End"):
        assert f"\n{head}\n" in "\n" + text
    assert "cover_0_0" in text


@pytest.mark.parametrize("approach, mode", [(1, "deterministic"), (2, "robust")])
def test_round_trip_through_text_keeps_optimum(approach, mode):
    inst = generate_family(6, Dimensions(2, 2, 2, 1), 1, 0.05)[0]
    model = build(inst, approach, mode).model
    back = read_lp(write_lp(model))
    a, b = solve_milp(model), solve_milp(back)
    assert a.objective_value == pytest.approx(b.objective_value, rel=1e-12)


def test_bounds_and_generals():
    m = LinearModel(name="bits")
    a = m.add_var("a", -math.inf, math.inf)
    b = m.add_var("b", 1.0, 4.0, VarKind.INTEGER)
    c = m.add_var("c", 2.0, 2.0)
    m.add_constraint({a: 1.0, b: 1.0, c: 1.0}, ">=", -3.5)
    m.add_constraint({a: 1.0}, ">=", -10.0)
    m.set_objective({a: 1.0, b: 2.0, c: -1.0}, ObjSense.MINIMIZE)
    text = write_lp(m)
    assert " a free" in text and "1.0 <= b <= 4.0" in text and " c = 2.0" in text and "General" in text
    back = read_lp(text)
    assert solve_milp(back).objective_value == pytest.approx(solve_milp(m).objective_value)
    assert np.isclose(solve_milp(back).x[index_of(back, "b")], 1.0)


def index_of(model, name):
    return [v.name for v in model.variables].index(name)
