import io
import itertools
import math
from dataclasses import replace

import numpy as np
import pytest

from greentlp.formulation import Approach, build
from greentlp.instance import Dimensions, generate_family
from greentlp.lagrangian import (
    Cut,
    Decomposition,
    LDConfig,
    build_master,
    build_subproblem1,
    build_subproblem2,
    compute_gap,
    default_lambda_max,
    run_ld,
)
from greentlp.milp import Status, solve_lp, solve_milp
from greentlp.oracle import brute_force_solve
from helpers import fixture_1111, make_instance

SMALL = Dimensions(2, 3, 2, 2)


def opt(model):
    res = solve_milp(model)
    assert res.status is Status.OPTIMAL
    return res.objective_value


def lam_like(inst, value=0.0):
    return np.full(inst.c.shape, float(value))


# ---- gap -------------------------------------------------------------------

def test_gap_values():
    assert compute_gap(7258546.335, 7252045.364) == pytest.approx(0.089563, abs=1e-5)
    assert compute_gap(12691067, 12690733) == pytest.approx(0.002632, abs=1e-4)
    assert compute_gap(42.0, 42.0) == 0.0
    with pytest.raises(ZeroDivisionError):
        compute_gap(0.0, 1.0)


# ---- subproblems -------------------------------------------------------------

def test_sp1_zero_costs():
    inst = make_instance(2, 3, 2, 1, c=0, cbc=0)
    assert opt(build_subproblem1(inst, lam_like(inst), 1)) == pytest.approx(0.0)


def test_sp1_single_link_with_multiplier():
    inst = make_instance(c=0, b=5)
    assert opt(build_subproblem1(inst, lam_like(inst, 2.0), 1)) == pytest.approx(-10.0)


def test_sp1_matches_enumeration():
    inst = generate_family(12, Dimensions(2, 3, 2, 1), 1, 0.05)[0]
    cost = inst.c + inst.cbc[None, None, :]
    # with non-negative costs only the cheapest link per destination opens
    expected = cost.min(axis=(0, 2)).sum()
    assert opt(build_subproblem1(inst, lam_like(inst), 1)) == pytest.approx(expected)
    best = math.inf
    for bits in itertools.product((0, 1), repeat=cost.size):
        y = np.array(bits).reshape(cost.shape)
        if np.all(y.sum(axis=(0, 2)) >= 1):
            best = min(best, float((cost * y).sum()))
    assert best == pytest.approx(expected)


def test_sp2_fixture():
    inst = fixture_1111()
    assert opt(build_subproblem2(inst, lam_like(inst))) == pytest.approx(5.0)
    # shipping now costs 1 + 9 = 10 per unit, exactly the shortage rate
    assert opt(build_subproblem2(inst, lam_like(inst, 9.0))) == pytest.approx(50.0)


def test_sp2_expensive_origins_ship_nothing():
    inst = make_instance(2, 2, 1, 2, h=1e7, w=[[1.0, 2.0], [3.0, 0.5]], D=[[4.0, 5.0], [6.0, 7.0]], k=100)
    assert opt(build_subproblem2(inst, lam_like(inst))) == pytest.approx(float((inst.w * inst.D).sum()))


def test_sp2_has_no_link_columns():
    inst = generate_family(1, SMALL, 1, 0.05)[0]
    names = [v.name for v in build_subproblem2(inst, lam_like(inst), "robust").variables]
    assert not any(n.startswith("y_") or n.startswith("nc_") for n in names)
    assert "v" in names


@pytest.mark.parametrize("approach, mode", [(1, "deterministic"), (1, "robust"), (2, "deterministic"), (2, "robust")])
def test_decomposition_equals_monolithic_relaxation(approach, mode):
    """SP1 + SP2 at fixed multipliers equals the full model with the link rows priced out."""
    inst = generate_family(5, SMALL, 1, 0.05)[0]
    rng = np.random.default_rng(approach)
    lam = rng.uniform(0, 5, size=inst.c.shape).round(3)
    dec = Decomposition(inst, approach, mode)
    split = dec.solve_sp1(lam).objective_value + dec.solve_sp2(lam).objective_value

    bundle = build(inst, approach, mode)
    m = bundle.model
    keep = np.setdiff1d(np.arange(m.num_constraints), bundle.rows["link_capacity"])
    m.constraints = [m.constraints[r] for r in keep]
    c = np.zeros(m.num_vars)
    c[m.obj_indices] = m.obj_values
    vm = bundle.varmap
    c[vm.x] += lam[:, :, None, :]
    c[vm.y] -= lam * inst.link_capacity
    m.set_objective(enumerate(c))
    assert split == pytest.approx(opt(m), abs=1e-6 * (1 + abs(split)))


# ---- master ----------------------------------------------------------------

def test_master_with_closed_links_is_constant_in_theta():
    inst = generate_family(1, SMALL, 1, 0.05)[0]
    I, J, P, L = inst.dims.as_tuple()
    nc = np.array([2.0, 1.0])
    theta = Cut("theta", y=np.zeros((I, J, P)), nc=nc)
    eta = Cut("eta", x=np.zeros((I, J, L, P)), z=np.zeros((I, L)), penalty=100.0)
    res = solve_lp(build_master([theta, eta], inst, 50.0, 1))
    assert res.x[0] == pytest.approx(float(inst.cbc @ nc))
    assert res.objective_value == pytest.approx(float(inst.cbc @ nc) + 100.0)


def test_master_after_first_iteration_bounds_the_fixture():
    inst = fixture_1111()
    theta = Cut("theta", y=np.ones((1, 1, 1)), nc=np.ones(1))
    eta = Cut("eta", x=np.full((1, 1, 1, 1), 5.0), z=np.ones((1, 1)), penalty=0.0)
    m = build_master([theta, eta], inst, default_lambda_max(inst), 1)
    res = solve_lp(m)
    assert res.status is Status.OPTIMAL and math.isfinite(res.objective_value)
    assert res.objective_value >= 5.0 - 1e-9
    again = solve_lp(build_master([theta, eta, theta, eta], inst, default_lambda_max(inst), 1))
    assert again.objective_value == pytest.approx(res.objective_value)


def test_master_needs_both_cut_kinds():
    inst = fixture_1111()
    with pytest.raises(ValueError):
        build_master([Cut("theta", y=np.ones((1, 1, 1)), nc=np.ones(1))], inst, 10.0, 1)


def test_default_box():
    inst = generate_family(1, SMALL, 1, 0.05)[0]
    assert default_lambda_max(inst) == pytest.approx(10 * inst.q.max())


# ---- full runs -------------------------------------------------------------

def test_fixture_converges_to_five():
    rep = run_ld(make_instance(budget=0.0), 1)
    assert rep.converged and rep.iterations <= 10
    assert rep.bound == pytest.approx(5.0, abs=1e-6 * 6)


def test_slack_coupling_gives_zero_multipliers():
    for approach in (1, 2):
        inst = generate_family(3, SMALL, 1, 0.05)[0]
        inst = replace(inst, b=inst.b * 1e6, k=inst.k * 1e6)
        rep = run_ld(inst, approach)
        dec = Decomposition(inst, approach)
        zero = lam_like(inst)
        first = dec.solve_sp1(zero).objective_value + dec.solve_sp2(zero).objective_value
        assert rep.converged
        assert rep.history[0].z_lb == pytest.approx(first)
        assert rep.bound == pytest.approx(first, abs=1e-6 * (1 + abs(first)))
        assert np.allclose(rep.multipliers, 0.0)


def _check_history(rep, exact):
    lbs = [h.z_lb for h in rep.history]
    ups = [h.z_up for h in rep.history]
    assert all(b >= a for a, b in zip(lbs, lbs[1:]))
    assert all(b <= a for a, b in zip(ups, ups[1:]))
    slack = 1e-6 * (1 + abs(exact))
    assert all(lb <= exact + slack for lb in lbs)
    assert all(up >= lb - 1e-6 * (1 + abs(lb)) for up, lb in zip(ups, lbs))
    if rep.converged:
        assert rep.z_up - rep.bound < 1e-6 * (1 + abs(rep.bound))


@pytest.mark.parametrize("approach, mode", [(1, "deterministic"), (1, "robust"), (2, "deterministic"), (2, "robust")])
def test_weak_duality_and_monotone_bounds(approach, mode):
    for inst in generate_family(21, Dimensions(2, 2, 2, 1), 2, 0.1):
        exact = brute_force_solve(inst, approach, mode).objective
        rep = run_ld(inst, approach, mode)
        _check_history(rep, exact)
        assert compute_gap(exact, rep.bound) >= -1e-6


def test_cuts_dominate_master_values():
    inst = generate_family(2, SMALL, 1, 0.05)[0]
    rep = run_ld(inst, 1, "robust", LDConfig(max_iter=15))
    master = solve_lp(build_master(rep.cuts, inst, default_lambda_max(inst), 1))
    theta, eta = master.x[0], master.x[1]
    lam = master.x[2:].reshape(inst.c.shape)
    for cut in rep.cuts:
        value = cut.value(inst, lam, Approach.HYBRID_PURCHASE)
        assert value >= (theta if cut.kind == "theta" else eta) - 1e-6 * (1 + abs(value))


def test_iteration_cap_reports_not_converged():
    inst = generate_family(2, SMALL, 1, 0.05)[0]
    rep = run_ld(inst, 1, "deterministic", LDConfig(max_iter=2))
    assert rep.iterations == 2 and not rep.converged
    assert rep.bound <= rep.z_up


def test_trace_csv():
    buf = io.StringIO()
    rep = run_ld(fixture_1111(), 1, trace=buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "iter,sp1,sp2,z_lb,z_up,gap"
    assert len(lines) == rep.iterations + 1
    last = lines[-1].split(",")
    assert int(last[0]) == rep.iterations
    assert float(last[3]) == pytest.approx(rep.bound)


def test_explicit_epsilon_is_honoured():
    inst = generate_family(2, SMALL, 1, 0.05)[0]
    loose = run_ld(inst, 1, "robust", LDConfig(epsilon=1e9))
    assert loose.converged and loose.iterations == 1
