"""Command-line entry point: ``fedfairlp {train,postprocess,sweep,oracle}``.

Exit codes: 0 success, 2 infeasible LP, 3 input error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .clientstats import DpConfig
from .core import DataError, FairnessSpec, Metric, RngStream, SpecError, load_csv
from .eval import evaluate, sweep
from .fairpredict import save_bundle
from .fedsim import MessageError, ProtocolConfig, ProtocolInfeasible, ProtocolNumericalFailure, run_protocol
from .oracle import run_suite
from .scorefn import FedAvgConfig, TrainingError, argmax_predictor, load_checkpoint, save_checkpoint, train_fedavg_softmax

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("fedfairlp")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors are input errors
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise DataError("config must be a JSON object")
    return doc


def _fedavg(cfg: dict) -> FedAvgConfig:
    try:
        return FedAvgConfig(**cfg.get("fedavg", {}))
    except TypeError as exc:
        raise DataError(f"config fedavg section: {exc}") from None


def _eps_local(text, K: int) -> tuple[float, ...]:
    if isinstance(text, (int, float)):
        return (float(text),) * K
    if isinstance(text, list):
        vals = [float(v) for v in text]
    else:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    if len(vals) == 1:
        return (vals[0],) * K
    if len(vals) != K:
        raise SpecError(f"eps-local lists {len(vals)} values for {K} clients")
    return tuple(vals)


def _spec(args, cfg: dict, K: int) -> FairnessSpec:
    fair = cfg.get("fairness", {})
    metric = args.metric or fair.get("metric")
    if metric is None:
        raise SpecError("no fairness metric given (--metric or config fairness.metric)")
    eg = args.eps_global if args.eps_global is not None else fair.get("eps_global")
    el = args.eps_local if args.eps_local is not None else fair.get("eps_local")
    if eg is None or el is None:
        raise SpecError("eps-global and eps-local are required")
    return FairnessSpec(Metric.parse(metric), float(eg), _eps_local(el, K))


def _dp(args, cfg: dict) -> DpConfig:
    eps = args.dp_epsilon if getattr(args, "dp_epsilon", None) is not None else cfg.get("dp", {}).get("epsilon")
    if eps is None:
        return DpConfig()
    return DpConfig(float(eps), True)


def _seed(args, cfg: dict) -> int:
    return int(args.seed if args.seed is not None else cfg.get("seed", 0))


def cmd_train(args) -> int:
    cfg = _read_config(args.config)
    data = load_csv(args.data)
    fed = _fedavg(cfg)
    model = train_fedavg_softmax(data, fed, RngStream(_seed(args, cfg), "train"))
    save_checkpoint(model, args.out)
    log_path = Path(str(args.out) + ".log")
    log_path.write_text("".join(json.dumps(r) + "\n" for r in model.training_log), encoding="utf-8")
    for r in model.training_log:
        print(f"round {r['round']}: loss {r['loss']:.6f}")
    print(f"wrote {args.out} ({len(model.training_log)} rounds)")
    return EXIT_OK


def cmd_postprocess(args) -> int:
    cfg = _read_config(args.config)
    model = load_checkpoint(args.model)
    data = load_csv(args.data, model.num_classes, model.num_clients)
    if data.feature_dim != model.feature_dim:
        raise DataError(f"data has {data.feature_dim} features, model expects {model.feature_dim}")
    test = load_csv(args.test, model.num_classes, model.num_clients) if args.test else data
    spec = _spec(args, cfg, data.num_clients)
    dp = _dp(args, cfg)
    seed = _seed(args, cfg)
    pcfg = ProtocolConfig(spec=spec, dp=dp, seed=seed)
    run = run_protocol(data, pcfg, RngStream(seed, "postprocess"), model=model, test=test, repeats=args.repeats)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run.predictor.model_ref = str(args.model)
    save_bundle(run.predictor, out / "predictor.json")
    run.transcript.save(out / "transcript.ndjson")
    report = run.report
    base = evaluate(argmax_predictor(model), test, spec.metric, RngStream(seed, "base"), 1)
    report.notes.append(f"argmax accuracy {base.accuracy!r}")
    if dp.enabled:
        sizes = data.client_sizes()
        for k in range(1, data.num_clients + 1):
            report.notes.append(f"dp scale client {k}: {dp.scale(int(sizes[k - 1]))!r}")
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    print(json.dumps({
        "accuracy": report.accuracy,
        "global_disparity": report.global_max,
        "local_disparity_mean": report.local_mean,
        "local_disparity_max": report.local_max,
        "lp_objective": report.lp_objective,
    }, indent=1))
    return EXIT_OK


def _grid(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise DataError(f"bad grid {text!r}") from None
    if not vals:
        raise DataError("empty grid")
    return vals


def cmd_sweep(args) -> int:
    cfg = _read_config(args.config)
    model = load_checkpoint(args.model)
    data = load_csv(args.data, model.num_classes, model.num_clients)
    test = load_csv(args.test, model.num_classes, model.num_clients) if args.test else data
    metric = Metric.parse(args.metric or cfg.get("fairness", {}).get("metric", "eo"))
    gg = _grid(args.grid_global or args.grid)
    gl = _grid(args.grid_local or args.grid)
    base_seed = _seed(args, cfg)
    seeds = [base_seed + i for i in range(args.seeds)]
    grid = sweep(lambda s: (data, test, model), metric, gg, gl, seeds, _dp(args, cfg), args.repeats)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("accuracy", "lp_objective", "global_max", "local_mean"):
        (out / f"{name}.csv").write_text(grid.to_csv(name), encoding="utf-8")
    (out / "sweep.json").write_text(grid.to_json(), encoding="utf-8")
    print(grid.to_csv("accuracy"), end="")
    return EXIT_OK


def cmd_oracle(args) -> int:
    reports = run_suite(args.suite)
    ok = True
    for r in reports:
        for line in r.lines:
            print(line)
        ok &= r.passed
    print(f"suite {args.suite}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fedfairlp", description="Federated fairness post-processing toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a FedAvg softmax score model")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    pp = sub.add_parser("postprocess", help="run statistics, LP and mixing steps")
    pp.add_argument("--data", required=True, help="records used for client statistics")
    pp.add_argument("--test", help="evaluation records (defaults to --data)")
    pp.add_argument("--model", required=True)
    pp.add_argument("--config")
    pp.add_argument("--metric", choices=[m.value for m in Metric])
    pp.add_argument("--eps-global", type=float)
    pp.add_argument("--eps-local")
    pp.add_argument("--dp-epsilon", type=float)
    pp.add_argument("--repeats", type=int, default=5)
    pp.add_argument("--seed", type=int)
    pp.add_argument("--out", required=True, help="output directory")
    pp.set_defaults(func=cmd_postprocess)

    s = sub.add_parser("sweep", help="accuracy over an epsilon grid")
    s.add_argument("--data", required=True)
    s.add_argument("--test")
    s.add_argument("--model", required=True)
    s.add_argument("--config")
    s.add_argument("--metric", choices=[m.value for m in Metric])
    s.add_argument("--grid", default="0.01,0.05,0.1,0.3,1", help="comma list used for both axes")
    s.add_argument("--grid-global")
    s.add_argument("--grid-local")
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--repeats", type=int, default=5)
    s.add_argument("--dp-epsilon", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle", help="run a brute-force oracle battery")
    o.add_argument("--suite", required=True, choices=["region", "frontier", "lp"])
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ProtocolInfeasible as exc:
        cert = exc.certificate
        summary = "none" if cert is None else f"{int((abs(cert) > 1e-12).sum())} nonzero multipliers"
        print(f"error: {exc}; Farkas certificate: {summary}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ProtocolNumericalFailure, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, SpecError, MessageError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
