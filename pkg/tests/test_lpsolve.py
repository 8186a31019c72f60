import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from fedfairlp.core import FairnessSpec, Metric
from fedfairlp.lpbuild import build_lp, build_lp_auto, generic_lp, params_from_tables, z_blocks
from fedfairlp.lpsolve import (
    INFEASIBLE,
    NUMERICAL_FAILURE,
    SolverConfig,
    check_farkas,
    max_violation,
    solve,
)

from conftest import spread_params


def _as_inequalities(inst):
    """All constraints of an instance as ``A x <= b``."""
    n = inst.num_vars
    parts = [
        (inst.A_fair, inst.b_fair),
        (-inst.A_fair, inst.b_fair),
        (inst.A_ub, inst.b_ub),
        (inst.A_eq, inst.b_eq),
        (-inst.A_eq, -inst.b_eq),
        (-np.eye(n), -inst.lb),
        (np.eye(n)[np.isfinite(inst.ub)], inst.ub[np.isfinite(inst.ub)]),
    ]
    return np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _vertex_optimum(inst):
    A, b = _as_inequalities(inst)
    n = inst.num_vars
    c = inst.c_vec if inst.sense == "min" else -inst.c_vec
    best = math.inf
    for rows in itertools.combinations(range(A.shape[0]), n):
        S = A[list(rows)]
        if abs(np.linalg.det(S)) < 1e-12:
            continue
        x = np.linalg.solve(S, b[list(rows)])
        if np.all(A @ x <= b + 1e-9):
            best = min(best, float(c @ x))
    return best


def test_one_variable():
    sol = solve(generic_lp([-1.0], [[1.0]], [0.7]))
    assert sol.optimal
    assert sol.x[0] == pytest.approx(0.7, abs=1e-12)
    assert sol.objective_value == pytest.approx(-0.7, abs=1e-12)


def test_maximize_sense():
    sol = solve(generic_lp([1.0, 2.0], [[1.0, 1.0]], [1.5], sense="max"))
    assert sol.objective_value == pytest.approx(2.5)
    np.testing.assert_allclose(sol.x, [0.5, 1.0], atol=1e-12)


def test_eps_one_gives_tp1_and_accuracy():
    params = spread_params(4, N=3, K=2)
    inst = build_lp(params, FairnessSpec.uniform("eo", 1, 1, 2))
    sol = solve(inst)
    for (a, c), z in z_blocks(inst, sol.x).items():
        np.testing.assert_allclose(z, params.tp1[:, a, c - 1], atol=1e-12)
    assert sol.objective_value == pytest.approx(-float(np.sum(params.p * params.tp1)), abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_matches_vertex_enumeration(seed):
    params = spread_params(seed, N=2, K=1)
    eps = [0.0, 0.02, 0.1][seed % 3]
    inst = build_lp(params, FairnessSpec.uniform("eo", eps, eps / 2, 1))
    sol = solve(inst)
    assert sol.optimal
    assert sol.objective_value == pytest.approx(_vertex_optimum(inst), abs=1e-7)


@pytest.mark.parametrize("seed", range(4))
def test_random_generic_lp_matches_vertex_enumeration(seed):
    g = np.random.default_rng(seed)
    n = 5
    A = g.normal(size=(6, n))
    b = g.uniform(0.2, 1.0, size=6)
    inst = generic_lp(g.normal(size=n), A, b)
    sol = solve(inst)
    assert sol.optimal
    assert sol.objective_value == pytest.approx(_vertex_optimum(inst), abs=1e-7)


def test_beale_cycling_example_terminates():
    c = [-0.75, 20.0, -0.5, 6.0]
    A = [[0.25, -8.0, -1.0, 9.0], [0.5, -12.0, -0.5, 3.0], [0.0, 0.0, 1.0, 0.0]]
    sol = solve(generic_lp(c, A, [0.0, 0.0, 1.0], ub=np.inf))
    assert sol.optimal
    assert sol.objective_value == pytest.approx(-1.25, abs=1e-12)


def test_infeasible_bounds_give_farkas_certificate():
    inst = generic_lp([1.0], [[1.0], [-1.0]], [0.2, -0.5])
    sol = solve(inst)
    assert sol.status == INFEASIBLE
    assert check_farkas(inst, sol.farkas)
    assert not check_farkas(inst, np.zeros_like(sol.farkas))


def test_infeasible_equality_certificate():
    inst = generic_lp([1.0, 1.0], A_eq=[[1.0, 1.0]], b_eq=[3.0])
    sol = solve(inst)
    assert sol.status == INFEASIBLE
    assert check_farkas(inst, sol.farkas)


def test_iteration_cap_reports_failure():
    params = spread_params(2, N=3, K=3)
    inst = build_lp(params, FairnessSpec.uniform("eo", 0.01, 0.01, 3))
    sol = solve(inst, SolverConfig(max_iter=2))
    assert sol.status == NUMERICAL_FAILURE
    assert "stopped" in sol.message
    assert sol.x.shape == (inst.num_vars,)


def test_determinism():
    params = spread_params(8, N=3, K=4)
    inst = build_lp(params, FairnessSpec.uniform("eo", 0.03, 0.05, 4))
    a, b = solve(inst), solve(inst)
    assert np.array_equal(a.x, b.x) and a.objective_value == b.objective_value


def test_against_highs_on_random_fairness_lps():
    g = np.random.default_rng(0)
    worst = 0.0
    for trial in range(150):
        N = int(g.integers(2, 4))
        K = int(g.integers(1, 6))
        p = g.random((N, 2, K))
        p /= p.sum()
        tp = g.uniform(0.3, 1.0, (N, 2, K))
        spu = g.random((N, N, 2, K))
        spu /= spu.sum()
        metric = list(Metric)[trial % 3]
        spec = FairnessSpec(metric, float(g.choice([0, 0.01, 0.1, 1])), tuple(float(g.choice([0, 0.05, 0.2, 1])) for _ in range(K)))
        inst = build_lp_auto(params_from_tables(p, tp, spu), spec)
        ours = solve(inst)
        A, b = _as_inequalities(inst)
        c = inst.c_vec if inst.sense == "min" else -inst.c_vec
        ref = linprog(c, A_ub=A, b_ub=b, bounds=(None, None), method="highs")
        assert ref.status == 0 and ours.optimal, ours.message
        worst = max(worst, abs(ref.fun - float(c @ ours.x)))
        assert ours.dual_gap < 1e-7
        assert max_violation(inst, ours.x) <= 1e-9
    assert worst < 1e-8
