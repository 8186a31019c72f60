import json

import numpy as np
import pytest

import fedfairlp.fedsim as fedsim
from fedfairlp.clientstats import DpConfig, compute_client_stats, stats_to_message
from fedfairlp.core import FairnessSpec, RngStream
from fedfairlp.eval import gaussian_benchmark, synthetic_seed_data
from fedfairlp.fedsim import (
    MessageError,
    ProtocolConfig,
    ProtocolInfeasible,
    Transcript,
    client_statistics,
    decode_message,
    encode_message,
    message_roundtrip,
    privacy_violations,
    run_protocol,
    server_solve,
    targets_message,
)
from fedfairlp.lpbuild import build_lp, generic_lp
from fedfairlp.lpsolve import solve
from fedfairlp.scorefn import FedAvgConfig, argmax_predictor

from conftest import rows_dataset, spread_params


@pytest.fixture(scope="module")
def tiny():
    return synthetic_seed_data(gaussian_benchmark([0.3, 0.6], 300, balanced=True), test_samples=300)(1)


def test_full_protocol_transcript_structure(tiny):
    data, test, _ = tiny
    cfg = ProtocolConfig(FairnessSpec.uniform("eo", 0.05, 0.05, 2), fedavg=FedAvgConfig(rounds=3), seed=2)
    run = run_protocol(data, cfg, test=test, repeats=2)
    t = run.transcript
    assert t.count(1, "model", "server") == {"client1": 3, "client2": 3}
    assert t.count(1, "model", "client") == {"client1": 3, "client2": 3}
    assert t.count(2, "stats", "client") == {"client1": 1, "client2": 1}
    assert t.count(3, "targets", "server") == {"client1": 1, "client2": 1}
    assert privacy_violations(t) == []
    assert run.report.lp_objective == run.solution.accuracy_estimate
    for line in t.to_ndjson().splitlines():
        json.loads(json.loads(line)["payload"])


def test_privacy_check_flags_raw_payloads():
    t = Transcript()
    t.deliver(2, "client1", "server", {"type": "model", "version": 1, "direction": "up", "round": 0, "client": 1, "params": {}})
    data = rows_dataset([(0, 1, 1), (1, 1, 2)])
    msg = stats_to_message(compute_client_stats(data, np.array([1, 2])))
    msg["X"] = [[0.1]]
    t.deliver(2, "client1", "server", msg)
    bad = privacy_violations(t)
    assert len(bad) == 2 and "'X'" in bad[1]


def test_identity_at_eps_one(tiny):
    data, test, oracle = tiny
    for metric in ("eo", "eop", "sp"):
        run = run_protocol(data, ProtocolConfig(FairnessSpec.uniform(metric, 1, 1, 2)), model=oracle, test=test)
        base = argmax_predictor(oracle).predict_dataset(test)
        assert np.array_equal(run.predictor.predict_dataset(test), base)
        assert run.report.accuracy == float(np.count_nonzero(base == test.y)) / len(test)


def test_single_client_global_and_local_coincide():
    params = spread_params(3, N=3, K=1)
    both = solve(build_lp(params, FairnessSpec("eo", 0.04, (0.04,))))
    only_local = solve(build_lp(params, FairnessSpec("eo", 1.0, (0.04,))))
    only_global = solve(build_lp(params, FairnessSpec("eo", 0.04, (1.0,))))
    assert both.objective_value == pytest.approx(only_local.objective_value, abs=1e-12)
    assert both.objective_value == pytest.approx(only_global.objective_value, abs=1e-12)


def test_seeded_runs_are_byte_identical(tiny):
    data, test, oracle = tiny
    cfg = ProtocolConfig(FairnessSpec.uniform("eo", 0.02, 0.05, 2), dp=DpConfig(2.0, True), seed=5)
    one = run_protocol(data, cfg, model=oracle, test=test)
    two = run_protocol(data, cfg, model=oracle, test=test)
    assert one.transcript.to_ndjson() == two.transcript.to_ndjson()
    assert one.report.to_json() == two.report.to_json()


def test_dp_infinity_matches_no_dp(tiny):
    data, test, oracle = tiny
    spec = FairnessSpec.uniform("eo", 0.02, 0.05, 2)
    plain = run_protocol(data, ProtocolConfig(spec, seed=5), model=oracle, test=test)
    inf = run_protocol(data, ProtocolConfig(spec, dp=DpConfig(float("inf"), True), seed=5), model=oracle, test=test)
    assert plain.transcript.to_ndjson() == inf.transcript.to_ndjson()
    assert plain.report.to_json() == inf.report.to_json()


def test_message_roundtrips():
    data = rows_dataset([(0, 1, 1), (1, 1, 2), (1, 1, 2), (0, 1, 1), (1, 1, 1)])
    msg = stats_to_message(compute_client_stats(data, np.array([1, 2, 1, 1, 2])))
    assert message_roundtrip(msg) == msg
    params = spread_params(2, N=2, K=3)
    inst = build_lp(params, FairnessSpec.uniform("eo", 0.1, 0.1, 3))
    sol = solve(inst)
    for k in (1, 2, 3):
        t = targets_message(inst, sol.x, k)
        assert message_roundtrip(t) == t


def test_bad_messages():
    wire = encode_message({"type": "targets", "version": 1, "client": 1})
    with pytest.raises(MessageError):
        decode_message(wire[:-3])
    with pytest.raises(MessageError, match="version"):
        decode_message(wire.replace('"version":1', '"version":2'))
    with pytest.raises(MessageError):
        encode_message({"type": "raw"})
    with pytest.raises(MessageError):
        decode_message("[]")


def test_zero_epsilon_remains_feasible(tiny):
    data, _, oracle = tiny
    stats = client_statistics(data, oracle, DpConfig(0.05, True), RngStream(0))
    for metric in ("eo", "eop", "sp"):
        _, sol = server_solve(stats, FairnessSpec.uniform(metric, 0.0, 0.0, 2))
        assert sol.optimal


def test_infeasible_server_lp_raises_with_certificate(tiny, monkeypatch):
    data, _, oracle = tiny
    bad = solve(generic_lp([1.0], [[1.0], [-1.0]], [0.2, -0.5]))
    monkeypatch.setattr(fedsim, "solve", lambda inst, cfg=None: bad)
    with pytest.raises(ProtocolInfeasible) as info:
        run_protocol(data, ProtocolConfig(FairnessSpec.uniform("eo", 0.0, 0.0, 2)), model=oracle)
    assert info.value.certificate is not None


def test_missing_client_data_rejected():
    data = rows_dataset([(0, 1, 1), (1, 1, 2)], num_clients=2)
    with pytest.raises(Exception, match="clients without records"):
        run_protocol(data, ProtocolConfig(FairnessSpec.uniform("eo", 0.1, 0.1, 2)))
