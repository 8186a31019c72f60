import math

import numpy as np
import pytest

from fedfairlp.core import (
    ClientGroupDataset,
    DataError,
    FairnessSpec,
    Metric,
    RngStream,
    SpecError,
    dataset_from_csv,
    dataset_to_csv,
    load_csv,
    save_csv,
    split_dataset,
    validate_spec,
)


def _data(n_per_client=(10,), N=2, seed=0):
    g = np.random.default_rng(seed)
    K = len(n_per_client)
    c = np.repeat(np.arange(1, K + 1), n_per_client)
    n = len(c)
    return ClientGroupDataset(g.normal(size=(n, 3)), g.integers(0, 2, n), c, g.integers(1, N + 1, n), N, K)


def test_metric_parse():
    assert Metric.parse("EO") is Metric.EQUALIZED_ODDS
    assert Metric.parse(Metric.STATISTICAL_PARITY) is Metric.STATISTICAL_PARITY
    with pytest.raises(SpecError):
        Metric.parse("dp")


def test_rng_streams_are_reproducible_and_independent():
    a = RngStream(7).child("x").generator().random(5)
    b = RngStream(7).child("x").generator().random(5)
    c = RngStream(7).child("y").generator().random(5)
    d = RngStream(8).child("x").generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_dataset_validation():
    with pytest.raises(DataError):
        ClientGroupDataset(np.zeros((2, 1)), [0, 2], [1, 1], [1, 1], 2, 1)
    with pytest.raises(DataError):
        ClientGroupDataset(np.zeros((2, 1)), [0, 1], [1, 3], [1, 1], 2, 2)
    with pytest.raises(DataError):
        ClientGroupDataset(np.zeros((2, 1)), [0, 1], [1, 1], [0, 1], 2, 1)
    with pytest.raises(DataError):
        ClientGroupDataset(np.zeros((3, 1)), [0, 1], [1, 1], [1, 1], 2, 1)
    with pytest.raises(DataError):
        ClientGroupDataset(np.array([[np.nan], [0.0]]), [0, 1], [1, 1], [1, 1], 2, 1)


def test_dataset_is_read_only():
    d = _data()
    with pytest.raises(ValueError):
        d.X[0, 0] = 1.0


def test_client_coverage():
    d = ClientGroupDataset(np.zeros((2, 1)), [0, 1], [1, 1], [1, 2], 2, 2)
    with pytest.raises(DataError, match="2"):
        d.check_client_coverage()


def test_csv_roundtrip(tmp_path):
    d = _data((4, 6), N=3)
    path = tmp_path / "d.csv"
    save_csv(d, path)
    back = load_csv(path, 3, 2)
    assert back.same_records(d)
    assert dataset_from_csv(dataset_to_csv(d), 3, 2).same_records(d)


def test_csv_missing_column_named():
    with pytest.raises(DataError, match="'c'"):
        dataset_from_csv("f0,a,y\n0.1,0,1\n")


def test_csv_malformed_row_has_line_number():
    text = "f0,a,c,y\n0.1,0,1,1\n0.2,zero,1,2\n"
    with pytest.raises(DataError, match="line 3"):
        dataset_from_csv(text)
    with pytest.raises(DataError, match="line 2"):
        dataset_from_csv("f0,a,c,y\n0.1,0,1\n")


def test_split_counts_per_client():
    d = _data((10, 10))
    train, val, test = split_dataset(d, (0.6, 0.2, 0.2), RngStream(3))
    for part, want in ((train, 6), (val, 2), (test, 2)):
        assert list(part.client_sizes()) == [want, want]
    assert len(train) + len(val) + len(test) == len(d)


def test_split_identity_and_determinism():
    d = _data((10, 7))
    train, val, test = split_dataset(d, (1, 0, 0), RngStream(3))
    assert train.same_records(d)
    assert len(val) == 0 and len(test) == 0
    one = split_dataset(d, (0.6, 0.2, 0.2), RngStream(9))
    two = split_dataset(d, (0.6, 0.2, 0.2), RngStream(9))
    assert all(p.same_records(q) for p, q in zip(one, two))


def test_split_too_small_client_named():
    d = _data((10, 2))
    with pytest.raises(DataError, match="client 2"):
        split_dataset(d, (0.6, 0.2, 0.2), RngStream(0))


def test_spec_validation():
    assert validate_spec(FairnessSpec("eo", 0.01, (0.01, 0.01)), 2)
    with pytest.raises(SpecError):
        validate_spec(FairnessSpec("eo", 0.01, (0.01, 0.01, 0.01)), 2)
    with pytest.raises(SpecError):
        validate_spec(FairnessSpec("eo", 1.2, (0.01, 0.01)), 2)
    with pytest.raises(SpecError):
        validate_spec(FairnessSpec("eo", 0.1, (math.nan, 0.01)), 2)
    assert FairnessSpec.uniform("sp", 0.1, 0.2, 3).eps_local == (0.2, 0.2, 0.2)
