"""Randomized fair predictors built from LP targets.

For EO/EOp each (group, client) cell mixes the argmax predictor with constant
class predictors using weights ``beta = [beta0, beta1, ..., betaN]``. For SP
each cell carries a column-stochastic table ``z[y, j] = Pr(out = y | argmax = j)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import ClientGroupDataset, DataError, Metric, RngStream
from .lpbuild import LpInstance, mix_blocks, z_blocks
from .scorefn import Predictor, ScoreModel, argmax_predictor

BUNDLE_FORMAT = "fedfairlp.predictor"
BUNDLE_VERSION = 1

CLAMP_TOL = 1e-9
HULL_TOL = 1e-7


class SingularLaeError(ValueError):
    """``sum(tp1) == 1``: the mixing system has no unique solution."""


class InfeasibleTargetError(ValueError):
    """The requested operating point lies outside the reachable simplex."""


class WeightError(ValueError):
    pass


def _clamp_simplex(v: np.ndarray, what: str) -> np.ndarray:
    v = np.array(v, dtype=np.float64)
    if np.any(v < -CLAMP_TOL) or np.any(v > 1 + CLAMP_TOL):
        raise WeightError(f"{what} leaves [0, 1] beyond tolerance: {v.tolist()}")
    v = np.where(np.abs(v) <= CLAMP_TOL, 0.0, v)
    v = np.where(np.abs(v - 1.0) <= CLAMP_TOL, 1.0, v)
    total = v.sum()
    if abs(total - 1.0) > CLAMP_TOL * v.size:
        raise WeightError(f"{what} does not sum to 1: {total!r}")
    return v / total


def solve_lae(tp1: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Mixing weights whose expected true-positive vector equals ``z``.

    ``beta0 = (sum z - 1) / (sum tp1 - 1)`` and ``beta_y = z_y - tp1_y beta0``.
    """
    tp1 = np.asarray(tp1, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if tp1.shape != z.shape or tp1.ndim != 1:
        raise ValueError("tp1 and z must be vectors of equal length")
    denom = tp1.sum() - 1.0
    if abs(denom) <= 1e-9:
        raise SingularLaeError("sum of argmax true-positive rates equals 1; use the barycentric LP form")
    b0 = (z.sum() - 1.0) / denom
    beta = np.concatenate([[b0], z - tp1 * b0])
    if np.any(beta < -HULL_TOL) or np.any(beta > 1 + HULL_TOL):
        raise InfeasibleTargetError(f"target {z.tolist()} lies outside the reachable simplex")
    # inside the hull tolerance: pull round-off back onto the simplex
    beta = np.clip(beta, 0.0, 1.0)
    return _clamp_simplex(beta / beta.sum(), "mixing weights")


def expected_operating_point(beta: np.ndarray, tp1: np.ndarray) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    return np.asarray(tp1, dtype=np.float64) * beta[0] + beta[1:]


@dataclass(frozen=True, eq=False)
class MixWeights:
    beta: Mapping[tuple[int, int], np.ndarray]  # (a, c) -> [beta0, ..., betaN]

    def __post_init__(self) -> None:
        for key, b in self.beta.items():
            b = np.asarray(b)
            if np.any(b < 0) or np.any(b > 1) or abs(b.sum() - 1.0) > CLAMP_TOL:
                raise WeightError(f"invalid mixing weights for cell {key}")


@dataclass(frozen=True, eq=False)
class SpRandomization:
    tables: Mapping[tuple[int, int], np.ndarray]  # (a, c) -> [y, j]

    def __post_init__(self) -> None:
        for key, t in self.tables.items():
            t = np.asarray(t)
            if np.any(t < 0) or np.any(t > 1) or np.any(np.abs(t.sum(axis=0) - 1.0) > CLAMP_TOL):
                raise WeightError(f"table for cell {key} is not column-stochastic")


def _cell_draws(rng: RngStream, a: int, c: int, count: int) -> np.ndarray:
    return rng.child(f"a{a}/c{c}").generator().random(count)


def _sample_bands(cum: np.ndarray, s: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cum, s, side="left")
    return np.minimum(idx, cum.size - 1)


@dataclass(eq=False)
class FairPredictor:
    model: ScoreModel
    metric: Metric
    weights: MixWeights | SpRandomization
    rng: RngStream
    tp1: Mapping[tuple[int, int], np.ndarray] | None = None
    model_ref: str | None = None

    def __post_init__(self) -> None:
        want = SpRandomization if self.metric == Metric.STATISTICAL_PARITY else MixWeights
        if not isinstance(self.weights, want):
            raise WeightError(f"{self.metric.value} predictor needs {want.__name__}")

    @property
    def base(self) -> Predictor:
        return argmax_predictor(self.model)

    def cells(self) -> set[tuple[int, int]]:
        w = self.weights
        return set(w.tables if isinstance(w, SpRandomization) else w.beta)

    def predict(self, X, a, c, rng: RngStream | None = None) -> np.ndarray:
        """Vectorized prediction; draws come from ``rng`` (or the bound stream)
        split per (a, c) cell, so results do not depend on record order across cells."""
        rng = rng or self.rng
        a = np.atleast_1d(np.asarray(a, dtype=np.int64))
        c = np.atleast_1d(np.asarray(c, dtype=np.int64))
        base = self.base(np.asarray(X, dtype=np.float64).reshape(len(a), -1), a, c)
        return self.predict_from_base(base, a, c, rng)

    def predict_from_base(self, base: np.ndarray, a, c, rng: RngStream | None = None) -> np.ndarray:
        rng = rng or self.rng
        a = np.asarray(a, dtype=np.int64)
        c = np.asarray(c, dtype=np.int64)
        out = np.array(base, dtype=np.int64, copy=True)
        cells = self.cells()
        for aa, cc in sorted(set(zip(a.tolist(), c.tolist()))):
            if (aa, cc) not in cells:
                raise WeightError(f"no fair-predictor weights for group {aa}, client {cc}")
            idx = np.flatnonzero((a == aa) & (c == cc))
            s = _cell_draws(rng, aa, cc, idx.size)
            if isinstance(self.weights, MixWeights):
                cum = np.cumsum(self.weights.beta[(aa, cc)])
                band = _sample_bands(cum, s)
                out[idx] = np.where(band == 0, base[idx], band)
            else:
                table = self.weights.tables[(aa, cc)]
                cum = np.cumsum(table, axis=0)  # [y, j]
                j = base[idx] - 1
                ys = np.empty(idx.size, dtype=np.int64)
                for jj in np.unique(j):
                    m = j == jj
                    ys[m] = _sample_bands(cum[:, jj], s[m]) + 1
                out[idx] = ys
        return out

    def predict_dataset(self, data: ClientGroupDataset, rng: RngStream | None = None) -> np.ndarray:
        return self.predict(data.X, data.a, data.c, rng)


def predict_eo(predictor: FairPredictor, x, a, c, rng: RngStream) -> np.ndarray:
    if predictor.metric == Metric.STATISTICAL_PARITY:
        raise WeightError("predict_eo needs an EO or EOp predictor")
    return predictor.predict(x, a, c, rng)


def predict_sp(predictor: FairPredictor, x, a, c, rng: RngStream) -> np.ndarray:
    if predictor.metric != Metric.STATISTICAL_PARITY:
        raise WeightError("predict_sp needs a statistical-parity predictor")
    return predictor.predict(x, a, c, rng)


def sp_table_from_solution(z_table: np.ndarray) -> np.ndarray:
    t = np.array(z_table, dtype=np.float64)
    if np.any(t < -CLAMP_TOL) or np.any(t > 1 + CLAMP_TOL):
        raise WeightError("randomization table leaves [0, 1] beyond tolerance")
    t = np.clip(t, 0.0, 1.0)
    col = t.sum(axis=0)
    if np.any(np.abs(col - 1.0) > CLAMP_TOL * t.shape[0]):
        raise WeightError("randomization table columns do not sum to 1")
    return t / col


def weights_for_cell(tp1: np.ndarray, z: np.ndarray, f: np.ndarray | None = None) -> np.ndarray:
    """Client-side Step 4 for one cell: LAE, or the barycentric weights directly."""
    if f is not None:
        return _clamp_simplex(f, "barycentric weights")
    return solve_lae(tp1, z)


def install_from_solution(
    inst: LpInstance, x: np.ndarray, model: ScoreModel, rng: RngStream, model_ref: str | None = None
) -> FairPredictor:
    """Build the predictor for every cell from a full LP solution vector."""
    blocks = z_blocks(inst, x)
    if inst.metric == Metric.STATISTICAL_PARITY:
        tables = {k: sp_table_from_solution(v) for k, v in blocks.items()}
        return FairPredictor(model, inst.metric, SpRandomization(tables), rng, None, model_ref)
    mixes = mix_blocks(inst, x) or {}
    tp1 = {(a, c): inst.params.tp1[:, a, c - 1].copy() for (a, c) in blocks}
    beta = {k: weights_for_cell(tp1[k], blocks[k], mixes.get(k)) for k in blocks}
    return FairPredictor(model, inst.metric, MixWeights(beta), rng, tp1, model_ref)


# -- bundle file --------------------------------------------------------------------


def bundle_to_json(pred: FairPredictor) -> str:
    doc = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "metric": pred.metric.value,
        "model": pred.model_ref,
        "rng": {"seed": pred.rng.seed, "label": pred.rng.label},
    }
    if isinstance(pred.weights, MixWeights):
        doc["cells"] = [
            {
                "a": a,
                "c": c,
                "beta": pred.weights.beta[(a, c)].tolist(),
                "tp1": None if pred.tp1 is None else pred.tp1[(a, c)].tolist(),
            }
            for a, c in sorted(pred.weights.beta)
        ]
    else:
        doc["cells"] = [
            {"a": a, "c": c, "table": pred.weights.tables[(a, c)].tolist()}
            for a, c in sorted(pred.weights.tables)
        ]
    return json.dumps(doc, sort_keys=True, indent=1)


def bundle_from_json(text: str, model: ScoreModel) -> FairPredictor:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"predictor bundle is not valid JSON: {exc}") from None
    if doc.get("format") != BUNDLE_FORMAT:
        raise DataError("not a predictor bundle")
    if doc.get("version") != BUNDLE_VERSION:
        raise DataError(f"unsupported predictor bundle version {doc.get('version')}")
    metric = Metric.parse(doc["metric"])
    rng = RngStream(int(doc["rng"]["seed"]), doc["rng"]["label"])
    cells = doc["cells"]
    if metric == Metric.STATISTICAL_PARITY:
        tables = {(e["a"], e["c"]): np.array(e["table"], dtype=np.float64) for e in cells}
        return FairPredictor(model, metric, SpRandomization(tables), rng, None, doc.get("model"))
    beta = {(e["a"], e["c"]): np.array(e["beta"], dtype=np.float64) for e in cells}
    tp1 = None
    if cells and cells[0].get("tp1") is not None:
        tp1 = {(e["a"], e["c"]): np.array(e["tp1"], dtype=np.float64) for e in cells}
    return FairPredictor(model, metric, MixWeights(beta), rng, tp1, doc.get("model"))


def save_bundle(pred: FairPredictor, path: str | Path) -> None:
    Path(path).write_text(bundle_to_json(pred), encoding="utf-8")


def load_bundle(path: str | Path, model: ScoreModel) -> FairPredictor:
    return bundle_from_json(Path(path).read_text(encoding="utf-8"), model)
