import itertools

import numpy as np
import pytest

from fedfairlp.core import FairnessSpec, RngStream
from fedfairlp.lpbuild import build_lp_auto
from fedfairlp.lpsolve import solve
from fedfairlp.oracle import (
    DiscreteInstance,
    _max_last,
    bruteforce_fair_optimum,
    builtin_instances,
    convexity_check,
    derived_table,
    enumerate_cell_predictors,
    enumerate_deterministic_predictors,
    frontier_check,
    region_check,
    run_suite,
    simplex_grid,
    tp_of_table,
    unrestricted_optimum,
)


def _argmax_accuracy(inst):
    return float(np.sum(tp_of_table(inst, derived_table(inst, np.ones(inst.N))) * inst.base))


def test_enumeration_count_and_bound():
    inst = DiscreteInstance.random(RngStream(0), 2, 2, 1)
    assert len(enumerate_deterministic_predictors(inst)) == 16
    big = DiscreteInstance.random(RngStream(0), 8, 3, 2)
    with pytest.raises(ValueError, match="enumeration bound"):
        enumerate_deterministic_predictors(big)


def test_instance_limits():
    with pytest.raises(ValueError):
        DiscreteInstance(np.full((9, 2, 1, 2), 1 / 36))
    with pytest.raises(ValueError):
        DiscreteInstance(np.full((2, 2, 1, 2), 0.2))


def test_simplex_grid_size():
    assert simplex_grid(3, 0.02).shape == (1326, 3)
    np.testing.assert_allclose(simplex_grid(4, 0.25).sum(axis=1), 1.0)


@pytest.mark.parametrize("inst", builtin_instances(), ids=lambda i: f"M{i.M}N{i.N}K{i.K}")
def test_region_and_convexity(inst):
    assert region_check(inst).passed
    assert convexity_check(inst, pairs=30).passed


@pytest.mark.parametrize("inst", builtin_instances()[:3], ids=lambda i: f"M{i.M}N{i.N}K{i.K}")
def test_frontier(inst):
    rep = frontier_check(inst, samples=8)
    assert rep.passed, rep.lines


def test_frontier_at_argmax_point():
    inst = builtin_instances()[0]
    _, tps = enumerate_cell_predictors(inst, 0, 1)
    tp1 = tp_of_table(inst, derived_table(inst, np.ones(2)))[:, 0, 0]
    best, _ = _max_last(tps, tp1[:1])
    assert best == pytest.approx(tp1[1], abs=1e-9)
    assert _max_last(tps, np.array([1.01]))[0] is None


def test_frontier_class_one_fixed_against_mixture_grid():
    inst = DiscreteInstance.random(RngStream(5, "tests/frontier"), 2, 2, 1)
    _, tps = enumerate_cell_predictors(inst, 1, 1)
    best, _ = _max_last(tps, np.array([1.0]))
    grid = simplex_grid(tps.shape[0], 0.01)
    pts = grid @ tps
    ok = np.abs(pts[:, 0] - 1.0) <= 1e-12
    assert best == pytest.approx(pts[ok, 1].max(), abs=1e-9)


def test_bruteforce_corners():
    inst = DiscreteInstance.random(RngStream(8, "tests/bf"), 3, 2, 2)
    acc1 = _argmax_accuracy(inst)
    bf = bruteforce_fair_optimum(inst, FairnessSpec.uniform("eo", 1, 1, 2))
    assert bf.accuracy == pytest.approx(acc1, abs=1e-12)
    # groups distributed identically: already fair at eps = 0
    half = inst.joint.sum(axis=1, keepdims=True) / 2
    sym = DiscreteInstance(np.repeat(half, 2, axis=1))
    bf0 = bruteforce_fair_optimum(sym, FairnessSpec.uniform("eo", 0, 0, 2))
    assert bf0.accuracy == pytest.approx(_argmax_accuracy(sym), abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_lp_against_grid_and_full_enumeration(seed):
    inst = DiscreteInstance.random(RngStream(seed, "tests/asym"), 3, 2, 2)
    spec = FairnessSpec.uniform("eo", 0.05, 0.05, 2)
    from fedfairlp.oracle import exact_params

    lp = solve(build_lp_auto(exact_params(inst), spec))
    bf = bruteforce_fair_optimum(inst, spec)
    assert bf.accuracy <= lp.accuracy_estimate + 1e-6
    assert lp.accuracy_estimate <= bf.accuracy + 0.02 * 2
    # derived mixtures can only be as good as the best randomized predictor
    assert lp.accuracy_estimate <= unrestricted_optimum(inst, spec) + 1e-9


def test_suites_pass():
    for name in ("region", "lp"):
        reps = run_suite(name)
        assert all(r.passed for r in reps), [r.lines for r in reps]
    with pytest.raises(ValueError):
        run_suite("nope")
