"""In-process simulation of the four-step federated post-processing protocol.

Every exchange between the server and a client goes through
:func:`encode_message` / :func:`decode_message`, and every delivered message is
appended to the run transcript.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .clientstats import (
    STATS_FIELDS,
    STATS_MESSAGE_VERSION,
    ClientStats,
    DpConfig,
    apply_laplace,
    compute_client_stats,
    stats_from_message,
    stats_to_message,
)
from .core import ClientGroupDataset, DataError, FairnessSpec, Metric, RngStream, validate_spec
from .fairpredict import FairPredictor, MixWeights, SpRandomization, sp_table_from_solution, weights_for_cell
from .lpbuild import LpInstance, aggregate, build_lp, build_lp_auto, mix_blocks, tp1_from_tables, z_blocks
from .lpsolve import INFEASIBLE, LpSolution, SolverConfig, solve
from .scorefn import FedAvgConfig, ScoreModel, argmax_predictor, train_fedavg_softmax

MESSAGE_VERSIONS = {"model": 1, "stats": STATS_MESSAGE_VERSION, "targets": 1}


class MessageError(DataError):
    pass


class ProtocolInfeasible(RuntimeError):
    """The server LP has no feasible point; carries the solver's certificate."""

    def __init__(self, solution: LpSolution):
        super().__init__(f"fairness LP is infeasible ({solution.message})")
        self.solution = solution
        self.certificate = solution.farkas


class ProtocolNumericalFailure(RuntimeError):
    def __init__(self, solution: LpSolution):
        super().__init__(f"LP solver failed: {solution.message}")
        self.solution = solution


# -- messages -----------------------------------------------------------------------


def encode_message(msg: dict) -> str:
    kind = msg.get("type")
    if kind not in MESSAGE_VERSIONS:
        raise MessageError(f"unknown message type {kind!r}")
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


def decode_message(text: str) -> dict:
    try:
        msg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MessageError(f"cannot parse message: {exc}") from None
    if not isinstance(msg, dict):
        raise MessageError("message is not an object")
    kind = msg.get("type")
    if kind not in MESSAGE_VERSIONS:
        raise MessageError(f"unknown message type {kind!r}")
    if msg.get("version") != MESSAGE_VERSIONS[kind]:
        raise MessageError(f"{kind} message version {msg.get('version')!r} is not supported")
    return msg


def message_roundtrip(msg: dict) -> dict:
    return decode_message(encode_message(msg))


def model_message(direction: str, rnd: int, client: int, params: dict) -> dict:
    return {
        "type": "model",
        "version": MESSAGE_VERSIONS["model"],
        "direction": direction,
        "round": rnd,
        "client": client,
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in sorted(params.items())},
    }


def targets_message(inst: LpInstance, x: np.ndarray, client: int) -> dict:
    """Step 3 payload for one client: its two z blocks (and barycentric weights
    or SP tables where applicable)."""
    blocks = z_blocks(inst, x)
    mixes = mix_blocks(inst, x)
    msg = {
        "type": "targets",
        "version": MESSAGE_VERSIONS["targets"],
        "client": client,
        "metric": inst.metric.value,
        "form": inst.form,
    }
    for a in (0, 1):
        msg[f"z{a}"] = blocks[(a, client)].tolist()
        if mixes is not None:
            msg[f"f{a}"] = mixes[(a, client)].tolist()
    return msg


# -- transcript ---------------------------------------------------------------------


@dataclass
class Transcript:
    records: list[dict] = field(default_factory=list)

    def deliver(self, step: int, sender: str, receiver: str, msg: dict) -> dict:
        """Serialize, record and parse one message; returns what the receiver sees."""
        wire = encode_message(msg)
        self.records.append({"seq": len(self.records), "step": step, "from": sender, "to": receiver, "payload": wire})
        return decode_message(wire)

    def to_ndjson(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_ndjson(), encoding="utf-8")

    def count(self, step: int, kind: str, sender_prefix: str) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.records:
            if r["step"] == step and r["from"].startswith(sender_prefix) and json.loads(r["payload"])["type"] == kind:
                key = r["from"] if sender_prefix == "client" else r["to"]
                out[key] = out.get(key, 0) + 1
        return out


def privacy_violations(transcript: Transcript) -> list[str]:
    """Client-to-server payloads after Step 1 must be statistics messages with
    only the known statistics fields."""
    bad = []
    for r in transcript.records:
        if r["step"] < 2 or not r["from"].startswith("client"):
            continue
        msg = json.loads(r["payload"])
        if msg.get("type") != "stats":
            bad.append(f"record {r['seq']}: unexpected {msg.get('type')!r} message from {r['from']}")
            continue
        extra = set(msg) - STATS_FIELDS
        if extra:
            bad.append(f"record {r['seq']}: non-statistics fields {sorted(extra)}")
    return bad


# -- protocol -----------------------------------------------------------------------


@dataclass(frozen=True)
class ProtocolConfig:
    spec: FairnessSpec
    fedavg: FedAvgConfig = FedAvgConfig()
    dp: DpConfig = DpConfig()
    seed: int = 0
    solver: SolverConfig = SolverConfig()
    form: str = "auto"  # auto | halfspace | barycentric


@dataclass(eq=False)
class ProtocolRun:
    config: ProtocolConfig
    transcript: Transcript
    model: ScoreModel
    stats: list[ClientStats]
    instance: LpInstance
    solution: LpSolution
    predictor: FairPredictor
    report: object | None = None


def client_statistics(
    data: ClientGroupDataset, model: ScoreModel, dp: DpConfig, rng: RngStream
) -> list[ClientStats]:
    """Step 2 on every client: exact statistics, then the Laplace mechanism."""
    base = argmax_predictor(model)
    out = []
    for k in range(1, data.num_clients + 1):
        part = data.client_slice(k)
        if len(part) == 0:
            raise DataError(f"client {k} holds no records")
        s = compute_client_stats(part, base.predict_dataset(part), client=k)
        out.append(apply_laplace(s, dp, rng))
    return out


def server_solve(
    stats: Sequence[ClientStats], spec: FairnessSpec, solver: SolverConfig = SolverConfig(), form: str = "auto"
) -> tuple[LpInstance, LpSolution]:
    """Step 3 on the server: aggregate, build and solve."""
    params = aggregate(stats, num_clients=len(spec.eps_local))
    if form == "auto":
        inst = build_lp_auto(params, spec)
    else:
        inst = build_lp(params, spec, form)
    return inst, solve(inst, solver)


def client_install(target: dict, own: ClientStats) -> dict[tuple[int, int], np.ndarray]:
    """Step 4 on one client: turn its targets into per-group weights or tables."""
    c = int(target["client"])
    if c != own.client:
        raise MessageError(f"targets for client {c} delivered to client {own.client}")
    out = {}
    if target["metric"] == Metric.STATISTICAL_PARITY.value:
        for a in (0, 1):
            out[(a, c)] = sp_table_from_solution(np.array(target[f"z{a}"]))
        return out
    tp1 = tp1_from_tables(own.joint_tp, own.base)
    for a in (0, 1):
        f = np.array(target[f"f{a}"]) if f"f{a}" in target else None
        out[(a, c)] = weights_for_cell(tp1[:, a], np.array(target[f"z{a}"]), f)
    return out


def postprocess(
    model: ScoreModel,
    stats: list[ClientStats],
    config: ProtocolConfig,
    transcript: Transcript,
    rng: RngStream,
) -> tuple[LpInstance, LpSolution, FairPredictor]:
    """Steps 2 (upload) through 4 given already computed client statistics."""
    received = []
    for s in stats:
        msg = transcript.deliver(2, f"client{s.client}", "server", stats_to_message(s))
        received.append(stats_from_message(msg))
    inst, sol = server_solve(received, config.spec, config.solver, config.form)
    if sol.status == INFEASIBLE:
        raise ProtocolInfeasible(sol)
    if not sol.optimal:
        raise ProtocolNumericalFailure(sol)
    cells: dict = {}
    for s in stats:
        msg = transcript.deliver(3, "server", f"client{s.client}", targets_message(inst, sol.x, s.client))
        cells.update(client_install(msg, s))
    if inst.metric == Metric.STATISTICAL_PARITY:
        weights: MixWeights | SpRandomization = SpRandomization(cells)
        tp1 = None
    else:
        weights = MixWeights(cells)
        tp1 = {(a, s.client): tp1_from_tables(s.joint_tp, s.base)[:, a] for s in stats for a in (0, 1)}
    pred = FairPredictor(model, config.spec.metric, weights, rng.child("predict"), tp1)
    return inst, sol, pred


def run_protocol(
    data: ClientGroupDataset,
    config: ProtocolConfig,
    rng: RngStream | None = None,
    model: ScoreModel | None = None,
    test: ClientGroupDataset | None = None,
    repeats: int = 5,
) -> ProtocolRun:
    """Run Steps 1 to 4. ``model`` skips FedAvg (pre-trained or oracle scores);
    ``test`` adds an evaluation report."""
    validate_spec(config.spec, data)
    data.check_client_coverage()
    rng = rng or RngStream(config.seed)
    transcript = Transcript()
    if model is None:
        def hook(direction, rnd, client, params):
            sender, receiver = ("server", f"client{client}") if direction == "down" else (f"client{client}", "server")
            transcript.deliver(1, sender, receiver, model_message(direction, rnd, client, params))

        model = train_fedavg_softmax(data, config.fedavg, rng.child("fedavg"), on_message=hook)
    stats = client_statistics(data, model, config.dp, rng.child("dp"))
    inst, sol, pred = postprocess(model, stats, config, transcript, rng)
    run = ProtocolRun(config, transcript, model, stats, inst, sol, pred)
    if test is not None:
        from .eval import evaluate

        run.report = evaluate(pred, test, config.spec.metric, rng.child("eval"), repeats, lp_objective=sol.accuracy_estimate)
    return run
