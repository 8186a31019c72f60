import numpy as np
import pytest

from fedfairlp.core import ClientGroupDataset, RngStream
from fedfairlp.eval import gaussian_benchmark, synthetic_seed_data


def rows_dataset(rows, num_classes=2, num_clients=1, dim=1):
    """Dataset from ``(a, c, y)`` triples with zero features."""
    rows = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
    return ClientGroupDataset(np.zeros((len(rows), dim)), rows[:, 0], rows[:, 1], rows[:, 2], num_classes, num_clients)


@pytest.fixture(scope="session")
def small_benchmark():
    """(stats data, test data, oracle) for a 5-client, 3-class benchmark."""
    return synthetic_seed_data(gaussian_benchmark([0.2, 0.3, 0.4, 0.5, 0.6], 600), test_samples=800)(0)


@pytest.fixture
def rng():
    return RngStream(1234, "tests")


def random_params(seed, N=2, K=2, M=4):
    """Exact LP parameters of a seeded random discrete instance."""
    from fedfairlp.oracle import DiscreteInstance, exact_params

    return exact_params(DiscreteInstance.random(RngStream(seed, "tests/params"), M, N, K))


def spread_params(seed, N=2, K=2):
    """Random aggregates with every tp1 vector strictly above the simplex."""
    from fedfairlp.lpbuild import params_from_tables

    g = np.random.default_rng(seed)
    p = g.dirichlet(np.ones(N * 2 * K)).reshape(N, 2, K)
    tp1 = g.uniform(0.55, 0.98, size=(N, 2, K))
    return params_from_tables(p, tp1)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
