import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedfairlp.clientstats import (
    STATS_FIELDS,
    DpConfig,
    apply_laplace,
    compute_client_stats,
    stats_from_message,
    stats_to_json,
    stats_to_message,
)
from fedfairlp.core import DataError, RngStream
from fedfairlp.fedsim import message_roundtrip

from conftest import rows_dataset


def _five_rows():
    # (Y1, Y, A) per record
    recs = [(1, 1, 0), (1, 2, 0), (2, 2, 1), (2, 2, 1), (1, 1, 1)]
    data = rows_dataset([(a, 1, y) for _, y, a in recs])
    return data, np.array([j for j, _, _ in recs])


def test_hand_counted_table():
    data, pred = _five_rows()
    s = compute_client_stats(data, pred)
    assert s.joint_tp[0, 0] == 0.2
    assert s.base[1, 1] == 0.4
    assert s.joint_tp[1, 1] == 0.4
    assert s.n == 5 and s.client == 1
    np.testing.assert_allclose(s.group_mass, [0.4, 0.6])
    # sp_joint[y, j, a]
    assert s.sp_joint[1, 0, 0] == 0.2
    np.testing.assert_allclose(s.sp_pred.sum(), 1.0)


def test_point_mass():
    data = rows_dataset([(0, 1, 1)] * 7)
    s = compute_client_stats(data, np.ones(7, dtype=int))
    expected = np.zeros((2, 2))
    expected[0, 0] = 1.0
    np.testing.assert_array_equal(s.joint_tp, expected)
    np.testing.assert_array_equal(s.base, expected)


def test_empty_and_foreign_slices_rejected():
    data = rows_dataset([(0, 1, 1), (1, 2, 2)], num_clients=2)
    with pytest.raises(DataError):
        compute_client_stats(data.subset(np.array([], dtype=int)), np.array([], dtype=int))
    with pytest.raises(DataError):
        compute_client_stats(data, np.array([1, 2]), client=1)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.integers(2, 4), st.integers(0, 2**31 - 1))
def test_frequencies_are_exact_counts(n, N, seed):
    g = np.random.default_rng(seed)
    data = rows_dataset(np.c_[g.integers(0, 2, n), np.ones(n, dtype=int), g.integers(1, N + 1, n)], num_classes=N)
    pred = g.integers(1, N + 1, n)
    s = compute_client_stats(data, pred)
    for y in range(1, N + 1):
        for a in (0, 1):
            m = (data.y == y) & (data.a == a)
            cnt = int(np.sum(m & (pred == y)))
            assert s.joint_tp[y - 1, a] == cnt / n
            assert np.rint(s.joint_tp[y - 1, a] * n) == cnt
            assert np.rint(s.base[y - 1, a] * n) == int(m.sum())
    assert np.all(s.joint_tp <= s.base)
    assert math.isclose(s.base.sum(), 1.0, abs_tol=1e-12)


def test_dp_scale():
    assert DpConfig(0.5, True).scale(100) == 0.02
    assert DpConfig().scale(100) == 0.0
    assert DpConfig(math.inf, True).scale(100) == 0.0
    with pytest.raises(ValueError):
        DpConfig(0.0, True)


def test_infinite_epsilon_is_identity():
    data, pred = _five_rows()
    s = compute_client_stats(data, pred)
    out = apply_laplace(s, DpConfig(math.inf, True), RngStream(0))
    assert out.same_as(s)


def test_laplace_determinism_and_sanitation():
    data, pred = _five_rows()
    s = compute_client_stats(data, pred)
    dp = DpConfig(0.3, True)
    one = apply_laplace(s, dp, RngStream(4))
    two = apply_laplace(s, dp, RngStream(4))
    other = apply_laplace(s, dp, RngStream(5))
    assert one.same_as(two)
    assert not one.same_as(other)
    assert np.all(one.joint_tp >= 0) and np.all(one.joint_tp <= one.base)
    assert one.base.sum() == pytest.approx(1.0)
    assert one.sp_joint.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(one.group_mass, one.sp_joint.sum(axis=(0, 1)))


def test_laplace_noise_has_the_right_scale():
    # interior entries (0.125 against a base of 0.25) are never clipped or capped
    n = 1000
    rows = [(i % 2, 1, 1 + (i // 2) % 2) for i in range(n)]
    data = rows_dataset(rows)
    pred = np.array([1 if (i // 4) % 2 == 0 else 2 for i in range(n)])
    s = compute_client_stats(data, pred)
    assert s.joint_tp[0, 0] == 0.125
    dp = DpConfig(1.0, True)
    dev = np.array([apply_laplace(s, dp, RngStream(k)).joint_tp[0] - s.joint_tp[0] for k in range(2000)])
    assert np.mean(np.abs(dev)) == pytest.approx(dp.scale(n), rel=0.05)
    assert abs(np.mean(dev)) < 1e-4


def test_message_roundtrip():
    data, pred = _five_rows()
    s = compute_client_stats(data, pred)
    msg = stats_to_message(s)
    assert set(msg) == STATS_FIELDS
    back = stats_from_message(message_roundtrip(msg))
    assert back.same_as(s)
    assert json.loads(stats_to_json(s))["n"] == 5
    with pytest.raises(DataError):
        stats_from_message({**msg, "version": 99})
    with pytest.raises(DataError):
        stats_from_message({k: v for k, v in msg.items() if k != "base"})
