"""Accuracy and disparity measurement, epsilon-grid sweeps, heterogeneity runs."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .clientstats import DpConfig
from .core import ClientGroupDataset, FairnessSpec, Metric, RngStream
from .fairpredict import FairPredictor, MixWeights, expected_operating_point
from .fedsim import ProtocolConfig, ProtocolInfeasible, ProtocolNumericalFailure, Transcript, client_statistics, postprocess
from .lpbuild import AggregatedParams
from .lpsolve import SolverConfig
from .scorefn import ScoreModel, SyntheticSpec, argmax_predictor, generate_synthetic


@dataclass
class FairnessReport:
    metric: str
    accuracy: float
    global_disparity: list[float]  # per class
    global_max: float
    local_disparity: list[list[float]]  # [client][class], nan where skipped
    local_client_max: list[float]
    local_mean: float
    local_max: float
    lp_objective: float | None = None
    accuracy_passes: list[float] = field(default_factory=list)
    global_max_passes: list[float] = field(default_factory=list)
    local_mean_passes: list[float] = field(default_factory=list)
    cell_counts: dict[str, int] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=True)


def _rate_diff(hit: np.ndarray, tot: np.ndarray) -> float:
    """|hit0/tot0 - hit1/tot1|, nan if either group is empty."""
    if tot[0] == 0 or tot[1] == 0:
        return math.nan
    return abs(hit[0] / tot[0] - hit[1] / tot[1])


def disparities(
    y: np.ndarray, pred: np.ndarray, a: np.ndarray, c: np.ndarray, N: int, K: int, metric: Metric
) -> tuple[np.ndarray, np.ndarray]:
    """Empirical ``(global[class], local[client, class])`` disparities; nan marks
    terms without support in one of the groups."""
    metric = Metric.parse(metric)
    classes = [1] if metric == Metric.EQUAL_OPPORTUNITY else list(range(1, N + 1))
    # hits[y, a, c] and totals[y, a, c]
    hits = np.zeros((N, 2, K))
    tots = np.zeros((N, 2, K))
    if metric == Metric.STATISTICAL_PARITY:
        np.add.at(hits, (pred - 1, a, c - 1), 1.0)
        grp = np.zeros((2, K))
        np.add.at(grp, (a, c - 1), 1.0)
        tots[:] = grp[None]
    else:
        correct = pred == y
        np.add.at(hits, (y[correct] - 1, a[correct], c[correct] - 1), 1.0)
        np.add.at(tots, (y - 1, a, c - 1), 1.0)
    g = np.full(N, math.nan)
    loc = np.full((K, N), math.nan)
    for yy in classes:
        g[yy - 1] = _rate_diff(hits[yy - 1].sum(axis=1), tots[yy - 1].sum(axis=1))
        for k in range(K):
            loc[k, yy - 1] = _rate_diff(hits[yy - 1, :, k], tots[yy - 1, :, k])
    return g, loc


def _nanmax(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(np.max(v[~np.isnan(v)])) if np.any(~np.isnan(v)) else math.nan


def _summaries(g: np.ndarray, loc: np.ndarray) -> tuple[float, np.ndarray, float, float]:
    client_max = np.array([_nanmax(r) for r in loc])
    valid = client_max[~np.isnan(client_max)]
    local_mean = float(valid.mean()) if valid.size else math.nan
    local_max = float(valid.max()) if valid.size else math.nan
    return _nanmax(g), client_max, local_mean, local_max


def evaluate(
    predictor,
    test: ClientGroupDataset,
    metric: Metric | str,
    rng: RngStream,
    repeats: int = 5,
    lp_objective: float | None = None,
) -> FairnessReport:
    """Measure accuracy and disparities, averaging ``repeats`` seeded passes of
    a randomized predictor. ``predictor`` may also be a deterministic
    :class:`~fedfairlp.scorefn.Predictor`."""
    metric = Metric.parse(metric)
    if len(test) == 0:
        raise ValueError("test set is empty")
    N, K = test.num_classes, test.num_clients
    randomized = isinstance(predictor, FairPredictor)
    passes = repeats if randomized else 1
    base = argmax_predictor(predictor.model).predict_dataset(test) if randomized else None
    accs, gs, locs, gmax, lmean = [], [], [], [], []
    hits = 0
    for k in range(passes):
        if randomized:
            out = predictor.predict_from_base(base, test.a, test.c, rng.child(f"pass{k}"))
        else:
            out = predictor.predict_dataset(test)
        h = int(np.count_nonzero(out == test.y))
        hits += h
        accs.append(h / len(test))
        g, loc = disparities(test.y, out, test.a, test.c, N, K, metric)
        gs.append(g)
        locs.append(loc)
        gm, _, lm, _ = _summaries(g, loc)
        gmax.append(gm)
        lmean.append(lm)
    g = np.mean(gs, axis=0)
    loc = np.mean(locs, axis=0)
    _, client_max, _, local_max = _summaries(g, loc)
    counts = {}
    skipped = []
    classes = [1] if metric == Metric.EQUAL_OPPORTUNITY else range(1, N + 1)
    for c in range(1, K + 1):
        for a in (0, 1):
            m = (test.c == c) & (test.a == a)
            if metric == Metric.STATISTICAL_PARITY:
                counts[f"a{a}_c{c}"] = int(m.sum())
                if not m.any():
                    skipped.append(f"a{a}_c{c}")
            else:
                for y in classes:
                    n = int((m & (test.y == y)).sum())
                    counts[f"y{y}_a{a}_c{c}"] = n
                    if n == 0:
                        skipped.append(f"y{y}_a{a}_c{c}")
    return FairnessReport(
        metric=metric.value,
        accuracy=hits / (passes * len(test)),  # exact ratio, so identical passes reproduce one pass
        global_disparity=[float(v) for v in g],
        global_max=float(np.mean(gmax)),
        local_disparity=[[float(v) for v in row] for row in loc],
        local_client_max=[float(v) for v in client_max],
        local_mean=float(np.nanmean(lmean)) if np.any(~np.isnan(lmean)) else math.nan,
        local_max=local_max,
        lp_objective=lp_objective,
        accuracy_passes=accs,
        global_max_passes=gmax,
        local_mean_passes=lmean,
        cell_counts=counts,
        skipped=skipped,
    )


def closed_form(params: AggregatedParams, predictor: FairPredictor) -> dict:
    """Expected accuracy and disparities implied by the installed weights and the
    population quantities in ``params`` (no sampling)."""
    N, K = params.num_classes, params.num_clients
    metric = predictor.metric
    g = np.full(N, math.nan)
    loc = np.full((K, N), math.nan)
    if isinstance(predictor.weights, MixWeights):
        tp = np.zeros((N, 2, K))
        for (a, c), beta in predictor.weights.beta.items():
            tp[:, a, c - 1] = expected_operating_point(beta, params.tp1[:, a, c - 1])
        acc = float(np.sum(params.p * tp))
        classes = [1] if metric == Metric.EQUAL_OPPORTUNITY else range(1, N + 1)
        for y in classes:
            al = params.alpha[y - 1]
            if al[0] > 0 and al[1] > 0:
                rate = (params.p[y - 1] * tp[y - 1]).sum(axis=1) / al
                g[y - 1] = abs(rate[0] - rate[1])
            for c in range(K):
                if not (params.vacuous[y - 1, 0, c] or params.vacuous[y - 1, 1, c]):
                    loc[c, y - 1] = abs(tp[y - 1, 0, c] - tp[y - 1, 1, c])
    else:
        out = np.zeros((N, 2, K))  # Pr(out = y, A = a, C = c)
        acc = 0.0
        for (a, c), t in predictor.weights.tables.items():
            out[:, a, c - 1] = t @ params.sp_uj[:, a, c - 1]
            acc += float(np.sum(t * params.sp_u[:, :, a, c - 1]))
        ua, uac = params.sp_ua, params.sp_uac
        for y in range(N):
            if ua[0] > 0 and ua[1] > 0:
                rate = out[y].sum(axis=1) / ua
                g[y] = abs(rate[0] - rate[1])
            for c in range(K):
                if uac[0, c] > 0 and uac[1, c] > 0:
                    loc[c, y] = abs(out[y, 0, c] / uac[0, c] - out[y, 1, c] / uac[1, c])
    return {"accuracy": acc, "global": g, "local": loc}


# -- sweeps -------------------------------------------------------------------------


@dataclass
class SweepGrid:
    """Reports indexed ``[i_local][j_global][seed]``; ``None`` marks failed cells."""

    eps_global: list[float]
    eps_local: list[float]
    seeds: list[int]
    reports: list[list[list[FairnessReport | None]]]
    status: list[list[list[str]]]

    def mean(self, field_name: str = "accuracy") -> np.ndarray:
        out = np.full((len(self.eps_local), len(self.eps_global)), math.nan)
        for i in range(len(self.eps_local)):
            for j in range(len(self.eps_global)):
                vals = [getattr(r, field_name) for r in self.reports[i][j] if r is not None]
                if vals:
                    out[i, j] = float(np.mean(vals))
        return out

    def cell(self, eps_global: float, eps_local: float) -> list[FairnessReport | None]:
        return self.reports[self.eps_local.index(eps_local)][self.eps_global.index(eps_global)]

    def merge(self, other: "SweepGrid") -> "SweepGrid":
        if other.eps_global != self.eps_global or other.eps_local != self.eps_local:
            raise ValueError("cannot merge sweeps over different grids")
        reports = [[self.reports[i][j] + other.reports[i][j] for j in range(len(self.eps_global))] for i in range(len(self.eps_local))]
        status = [[self.status[i][j] + other.status[i][j] for j in range(len(self.eps_global))] for i in range(len(self.eps_local))]
        return SweepGrid(self.eps_global, self.eps_local, self.seeds + other.seeds, reports, status)

    def to_csv(self, field_name: str = "accuracy") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"{field_name}: eps_local \\ eps_global"] + [repr(v) for v in self.eps_global])
        m = self.mean(field_name)
        for i, el in enumerate(self.eps_local):
            w.writerow([repr(el)] + [repr(float(v)) for v in m[i]])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "eps_global": self.eps_global,
                "eps_local": self.eps_local,
                "seeds": self.seeds,
                "status": self.status,
                "mean_accuracy": self.mean("accuracy").tolist(),
                "mean_lp_objective": self.mean("lp_objective").tolist(),
                "reports": [[[r.to_dict() if r else None for r in cell] for cell in row] for row in self.reports],
            },
            sort_keys=True,
        )


SeedData = Callable[[int], tuple[ClientGroupDataset, ClientGroupDataset, ScoreModel]]


def sweep(
    seed_data: SeedData,
    metric: Metric | str,
    eps_global: Sequence[float],
    eps_local: Sequence[float],
    seeds: Sequence[int],
    dp: DpConfig = DpConfig(),
    repeats: int = 5,
    solver: SolverConfig = SolverConfig(),
) -> SweepGrid:
    """One post-processing run per (cell, seed).

    ``seed_data(seed)`` returns ``(stats_data, test_data, model)``; the client
    statistics are computed once per seed and every cell only re-solves the LP
    and the clients' mixing systems.
    """
    metric = Metric.parse(metric)
    eg = [float(v) for v in eps_global]
    el = [float(v) for v in eps_local]
    for v in eg + el:
        if not 0.0 <= v <= 1.0:
            raise ValueError("grid values must lie in [0, 1]")
    reports = [[[] for _ in eg] for _ in el]
    status = [[[] for _ in eg] for _ in el]
    for seed in seeds:
        data, test, model = seed_data(seed)
        rng = RngStream(seed, "sweep")
        stats = client_statistics(data, model, dp, rng.child("dp"))
        for i, l in enumerate(el):
            for j, g in enumerate(eg):
                spec = FairnessSpec.uniform(metric, g, l, data.num_clients)
                cfg = ProtocolConfig(spec=spec, dp=dp, seed=seed, solver=solver)
                try:
                    _, sol, pred = postprocess(model, stats, cfg, Transcript(), rng)
                except ProtocolInfeasible:
                    reports[i][j].append(None)
                    status[i][j].append("infeasible")
                    continue
                except ProtocolNumericalFailure:
                    reports[i][j].append(None)
                    status[i][j].append("numerical-failure")
                    continue
                rep = evaluate(pred, test, metric, rng.child(f"eval/l{i}/g{j}"), repeats, sol.accuracy_estimate)
                reports[i][j].append(rep)
                status[i][j].append("optimal")
    return SweepGrid(eg, el, list(seeds), reports, status)


@dataclass
class HeterogeneityResult:
    grids: list[SweepGrid]
    loss: list[float]  # mean measured accuracy loss per scenario
    lp_loss: list[float]  # mean LP-objective loss per scenario
    loose: float
    tight: float


def synthetic_seed_data(spec: SyntheticSpec, test_samples: int | None = None) -> SeedData:
    """Seed -> (statistics split, independent test split, exact-posterior oracle)."""

    def make(seed: int):
        data, oracle = generate_synthetic(spec, RngStream(seed, "data/stats"))
        tspec = spec if test_samples is None else SyntheticSpec(
            spec.means, spec.spreads, spec.class_prior, spec.sensitive_proportion, test_samples
        )
        test, _ = generate_synthetic(tspec, RngStream(seed, "data/test"))
        return data, test, oracle

    return make


def heterogeneity_experiment(
    scenarios: Sequence[SyntheticSpec],
    metric: Metric | str,
    grid: Sequence[float],
    seeds: Sequence[int],
    loose: float = 0.3,
    tight: float = 0.05,
    repeats: int = 5,
    seed_data: Callable[[SyntheticSpec], SeedData] = synthetic_seed_data,
) -> HeterogeneityResult:
    """Sweep each scenario over the same square grid and summarize the
    accuracy lost when both epsilons tighten from ``loose`` to ``tight``."""
    grid = [float(v) for v in grid]
    if loose not in grid or tight not in grid:
        raise ValueError("loose and tight values must be grid points")
    grids, loss, lp_loss = [], [], []
    for spec in scenarios:
        sg = sweep(seed_data(spec), metric, grid, grid, seeds, repeats=repeats)
        grids.append(sg)
        acc, lp = sg.mean("accuracy"), sg.mean("lp_objective")
        il, it = grid.index(loose), grid.index(tight)
        loss.append(float(acc[il, il] - acc[it, it]))
        lp_loss.append(float(lp[il, il] - lp[it, it]))
    return HeterogeneityResult(grids, loss, lp_loss, loose, tight)


# -- benchmark generator --------------------------------------------------------------

# per-client class priors; heterogeneous so true-positive rates differ by client
_CLIENT_PRIORS = np.array(
    [
        [0.7, 0.2, 0.1],
        [0.1, 0.7, 0.2],
        [0.2, 0.1, 0.7],
        [0.45, 0.45, 0.1],
        [0.34, 0.33, 0.33],
    ]
)


def gaussian_benchmark(
    sensitive_proportion: Sequence[float],
    samples_per_client: int = 10_000,
    radius: float = 2.0,
    group_shift: float = 0.7,
    spread: float = 1.0,
    balanced: bool = False,
) -> SyntheticSpec:
    """Three-class, two-feature Gaussian benchmark for up to five clients.

    Class centres sit on a circle of ``radius``. Group 1's class-1 centre and
    group 0's class-2 centre are pulled ``group_shift`` toward the origin, so
    each group is disadvantaged on one class. Class priors differ across
    clients but not across groups within a client, unless ``balanced`` asks
    for uniform priors everywhere.
    """
    K = len(sensitive_proportion)
    if not 1 <= K <= len(_CLIENT_PRIORS):
        raise ValueError(f"benchmark supports 1..{len(_CLIENT_PRIORS)} clients")
    ang = np.deg2rad([90.0, 210.0, 330.0])
    centres = np.stack([np.cos(ang), np.sin(ang)], axis=1) * radius
    means = np.stack([centres, centres], axis=1)  # (N, 2, d)
    pull = 1.0 - group_shift / radius
    means[0, 1] *= pull
    means[1, 0] *= pull
    sd = np.full((3, 2), float(spread))
    prior = np.full((K, 3), 1.0 / 3.0) if balanced else _CLIENT_PRIORS[:K]
    class_prior = np.repeat(prior[:, None, :], 2, axis=1)
    return SyntheticSpec(means, sd, class_prior, np.asarray(sensitive_proportion, dtype=np.float64), samples_per_client)


HETEROGENEITY_SCENARIOS = (
    (0.4, 0.4, 0.4, 0.4, 0.4),
    (0.2, 0.3, 0.4, 0.5, 0.6),
    (0.1, 0.3, 0.5, 0.7, 0.9),
)
