"""Score functions: a pluggable ``R(x, a, c)``, FedAvg-trained softmax
regression, and synthetic generators with closed-form Bayes posteriors."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .core import ClientGroupDataset, DataError, RngStream

CHECKPOINT_FORMAT = "fedfairlp.scoremodel"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """FedAvg produced a non-finite loss."""

    def __init__(self, round_index: int, loss: float):
        super().__init__(f"training diverged at round {round_index} (loss={loss})")
        self.round_index = round_index


class ScoreModel(Protocol):
    num_classes: int
    feature_dim: int

    def scores(self, X: np.ndarray, a: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Return an ``(n, N)`` array of class probabilities."""
        ...


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def score_dataset(model: ScoreModel, data: ClientGroupDataset) -> np.ndarray:
    return model.scores(data.X, data.a, data.c)


# -- predictors ------------------------------------------------------------------


class Predictor:
    """Deterministic map ``(x, a, c) -> y`` built on a score model."""

    def __init__(self, model: ScoreModel, theta: np.ndarray | None = None):
        self.model = model
        self.theta = None if theta is None else np.asarray(theta, dtype=np.float64)

    def from_scores(self, R: np.ndarray) -> np.ndarray:
        R = np.atleast_2d(R)
        weighted = R if self.theta is None else R * self.theta
        # np.argmax returns the first maximum, i.e. the lowest class index.
        return np.argmax(weighted, axis=1).astype(np.int64) + 1

    def __call__(self, X: np.ndarray, a: np.ndarray, c: np.ndarray) -> np.ndarray:
        return self.from_scores(self.model.scores(X, a, c))

    def predict_dataset(self, data: ClientGroupDataset) -> np.ndarray:
        return self(data.X, data.a, data.c)


def argmax_predictor(model: ScoreModel) -> Predictor:
    return Predictor(model)


def derived_predictor(model: ScoreModel, theta: Sequence[float]) -> Predictor:
    th = np.asarray(theta, dtype=np.float64)
    if th.shape != (model.num_classes,):
        raise ValueError(f"theta must have length {model.num_classes}")
    if np.any(th < 0) or not np.any(th > 0):
        raise ValueError("theta must be nonnegative and not all zero")
    return Predictor(model, th)


# -- softmax regression / FedAvg ----------------------------------------------------


@dataclass(frozen=True)
class FedAvgConfig:
    rounds: int = 50
    local_epochs: int = 1
    batch_size: int = 64
    learning_rate: float = 0.1
    hidden_units: int = 0
    include_client: bool = False
    l2: float = 0.0

    def __post_init__(self) -> None:
        if self.rounds < 1 or self.local_epochs < 1 or self.batch_size < 1:
            raise ValueError("rounds, local_epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.hidden_units < 0 or self.l2 < 0:
            raise ValueError("hidden_units and l2 must be nonnegative")


@dataclass
class SoftmaxModel:
    """Softmax regression on ``[x, a]`` (optionally one-hot ``c``), with an
    optional ReLU hidden layer."""

    num_classes: int
    feature_dim: int
    params: dict[str, np.ndarray]
    include_client: bool = False
    num_clients: int = 1
    training_log: list[dict] = field(default_factory=list)

    @property
    def hidden_units(self) -> int:
        return int(self.params["W1"].shape[1]) if "W1" in self.params else 0

    @property
    def input_dim(self) -> int:
        return self.feature_dim + 1 + (self.num_clients if self.include_client else 0)

    def inputs(self, X: np.ndarray, a: np.ndarray, c: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.feature_dim)
        cols = [X, np.asarray(a, dtype=np.float64).reshape(-1, 1)]
        if self.include_client:
            onehot = np.zeros((X.shape[0], self.num_clients))
            onehot[np.arange(X.shape[0]), np.asarray(c, dtype=np.int64) - 1] = 1.0
            cols.append(onehot)
        return np.hstack(cols)

    def logits_from_inputs(self, Z: np.ndarray) -> np.ndarray:
        p = self.params
        if "W1" in p:
            H = np.maximum(Z @ p["W1"] + p["b1"], 0.0)
            return H @ p["W"] + p["b"]
        return Z @ p["W"] + p["b"]

    def scores(self, X: np.ndarray, a: np.ndarray, c: np.ndarray) -> np.ndarray:
        return softmax(self.logits_from_inputs(self.inputs(X, a, c)))

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}


def init_softmax_model(
    num_classes: int, feature_dim: int, cfg: FedAvgConfig, num_clients: int, rng: RngStream
) -> SoftmaxModel:
    model = SoftmaxModel(num_classes, feature_dim, {}, cfg.include_client, num_clients)
    p_in = model.input_dim
    if cfg.hidden_units:
        g = rng.child("init").generator()
        h = cfg.hidden_units
        model.params = {
            "W1": g.normal(0.0, np.sqrt(2.0 / p_in), size=(p_in, h)),
            "b1": np.zeros(h),
            "W": g.normal(0.0, np.sqrt(1.0 / h), size=(h, num_classes)),
            "b": np.zeros(num_classes),
        }
    else:
        # Convex objective: zero init keeps training fully deterministic.
        model.params = {"W": np.zeros((p_in, num_classes)), "b": np.zeros(num_classes)}
    return model


def cross_entropy_and_grad(
    model: SoftmaxModel, Z: np.ndarray, y0: np.ndarray, l2: float = 0.0
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean categorical cross-entropy and its gradient; ``y0`` is 0-based."""
    p = model.params
    n = Z.shape[0]
    if "W1" in p:
        pre = Z @ p["W1"] + p["b1"]
        H = np.maximum(pre, 0.0)
        logits = H @ p["W"] + p["b"]
    else:
        H = Z
        logits = Z @ p["W"] + p["b"]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(logsum - shifted[np.arange(n), y0]))
    probs = np.exp(shifted - logsum[:, None])
    delta = probs
    delta[np.arange(n), y0] -= 1.0
    delta /= n
    grads = {"W": H.T @ delta, "b": delta.sum(axis=0)}
    if "W1" in p:
        dH = (delta @ p["W"].T) * (pre > 0)
        grads["W1"] = Z.T @ dH
        grads["b1"] = dH.sum(axis=0)
    if l2:
        for k in ("W", "W1"):
            if k in p:
                loss += 0.5 * l2 * float(np.sum(p[k] ** 2))
                grads[k] = grads[k] + l2 * p[k]
    return loss, grads


def local_update(
    model: SoftmaxModel, Z: np.ndarray, y0: np.ndarray, cfg: FedAvgConfig, rng: RngStream
) -> dict[str, np.ndarray]:
    """Run ``local_epochs`` of mini-batch SGD from the model's current weights."""
    local = SoftmaxModel(model.num_classes, model.feature_dim, model.copy_params(), model.include_client, model.num_clients)
    n = Z.shape[0]
    for epoch in range(cfg.local_epochs):
        order = rng.child(f"epoch{epoch}").generator().permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grads = cross_entropy_and_grad(local, Z[batch], y0[batch], cfg.l2)
            for k, g in grads.items():
                local.params[k] -= cfg.learning_rate * g
    return local.params


MessageHook = Callable[[str, int, int, dict[str, np.ndarray]], None]


def train_fedavg_softmax(
    train: ClientGroupDataset,
    cfg: FedAvgConfig,
    rng: RngStream,
    on_message: MessageHook | None = None,
) -> SoftmaxModel:
    """Federated averaging of softmax-regression clients.

    Each round the server broadcasts the global weights, every client with
    data runs ``local_epochs`` of SGD, and the server averages the returned
    weights in proportion to client sample counts. ``on_message`` receives
    ``(direction, round, client, params)`` for every weight transfer.
    """
    if len(train) == 0:
        raise DataError("training set is empty")
    model = init_softmax_model(train.num_classes, train.feature_dim, cfg, train.num_clients, rng)
    clients = [k for k in range(1, train.num_clients + 1) if np.any(train.c == k)]
    local_data = {}
    for k in clients:
        part = train.client_slice(k)
        local_data[k] = (model.inputs(part.X, part.a, part.c), part.y - 1)
    sizes = np.array([len(local_data[k][1]) for k in clients], dtype=np.float64)
    weights = sizes / sizes.sum()
    Z_all = model.inputs(train.X, train.a, train.c)
    y_all = train.y - 1
    # non-finite values are caught below and reported with their round
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for t in range(1, cfg.rounds + 1):
            updates = []
            for k in clients:
                if on_message:
                    on_message("down", t, k, model.params)
                Z, y0 = local_data[k]
                # Shuffle streams are keyed by round only, so clients holding the
                # same data take identical local steps.
                new = local_update(model, Z, y0, cfg, rng.child(f"round{t}"))
                if on_message:
                    on_message("up", t, k, new)
                updates.append(new)
            model.params = {
                key: sum(w * u[key] for w, u in zip(weights, updates)) for key in model.params
            }
            loss, _ = cross_entropy_and_grad(model, Z_all, y_all, cfg.l2)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(v)) for v in model.params.values()):
                raise TrainingError(t, loss)
            model.training_log.append({"round": t, "loss": loss})
    return model


def save_checkpoint(model: SoftmaxModel, path: str | Path) -> None:
    Path(path).write_text(checkpoint_to_json(model), encoding="utf-8")


def checkpoint_to_json(model: SoftmaxModel) -> str:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "num_classes": model.num_classes,
        "feature_dim": model.feature_dim,
        "input_convention": "x+a+onehot(c)" if model.include_client else "x+a",
        "num_clients": model.num_clients,
        "params": {
            k: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]}
            for k, v in sorted(model.params.items())
        },
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def checkpoint_from_json(text: str) -> SoftmaxModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint is not valid JSON: {exc}") from None
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError("not a score-model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {doc.get('version')}")
    params = {
        k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()
    }
    return SoftmaxModel(
        int(doc["num_classes"]),
        int(doc["feature_dim"]),
        params,
        doc["input_convention"] != "x+a",
        int(doc["num_clients"]),
    )


def load_checkpoint(path: str | Path) -> SoftmaxModel:
    return checkpoint_from_json(Path(path).read_text(encoding="utf-8"))


# -- synthetic data with exact posteriors ------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian class/group mixtures with client-specific group and class mix.

    ``means`` has shape ``(N, 2, d)`` and ``spreads`` ``(N, 2)`` (isotropic
    standard deviations) indexed by ``(class-1, a)``; ``class_prior`` has
    shape ``(K, 2, N)``; ``sensitive_proportion`` is ``Pr(A=1 | C=c)``.
    """

    means: np.ndarray
    spreads: np.ndarray
    class_prior: np.ndarray
    sensitive_proportion: np.ndarray
    samples_per_client: int | Sequence[int] = 1000

    @property
    def num_classes(self) -> int:
        return int(np.asarray(self.means).shape[0])

    @property
    def num_clients(self) -> int:
        return int(np.asarray(self.class_prior).shape[0])

    @property
    def feature_dim(self) -> int:
        return int(np.asarray(self.means).shape[2])


@dataclass(frozen=True)
class DiscreteSyntheticSpec:
    """Single categorical feature with values ``0..M-1``.

    ``feature_table[y-1, a, x] = Pr(X=x | Y=y, A=a)``.
    """

    feature_table: np.ndarray
    class_prior: np.ndarray
    sensitive_proportion: np.ndarray
    samples_per_client: int | Sequence[int] = 1000

    @property
    def num_classes(self) -> int:
        return int(np.asarray(self.feature_table).shape[0])

    @property
    def num_clients(self) -> int:
        return int(np.asarray(self.class_prior).shape[0])

    @property
    def feature_dim(self) -> int:
        return 1


def _check_common(prior: np.ndarray, prop: np.ndarray, K: int, N: int) -> None:
    if prior.shape != (K, 2, N):
        raise ValueError(f"class_prior must have shape {(K, 2, N)}")
    if np.any(prior < 0) or not np.allclose(prior.sum(axis=2), 1.0, atol=1e-9):
        raise ValueError("class priors must be nonnegative and sum to 1 per (client, group)")
    if prop.shape != (K,) or np.any(prop < 0) or np.any(prop > 1):
        raise ValueError("sensitive_proportion must be K values in [0, 1]")


@dataclass(frozen=True)
class GaussianOracle:
    """Exact posterior ``Pr(Y=y | x, a, c)`` of a :class:`SyntheticSpec`."""

    spec: SyntheticSpec

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    @property
    def feature_dim(self) -> int:
        return self.spec.feature_dim

    def scores(self, X: np.ndarray, a: np.ndarray, c: np.ndarray) -> np.ndarray:
        means = np.asarray(self.spec.means, dtype=np.float64)
        spreads = np.asarray(self.spec.spreads, dtype=np.float64)
        prior = np.asarray(self.spec.class_prior, dtype=np.float64)
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.feature_dim)
        a = np.asarray(a, dtype=np.int64)
        c = np.asarray(c, dtype=np.int64)
        d = self.feature_dim
        mu = means[:, a, :].transpose(1, 0, 2)  # (n, N, d)
        s = spreads[:, a].T  # (n, N)
        sq = np.sum((X[:, None, :] - mu) ** 2, axis=2)
        with np.errstate(divide="ignore"):
            logp = np.log(prior[c - 1, a, :])
        logp = logp - sq / (2 * s**2) - d * np.log(s)
        return _normalize_log(logp)


@dataclass(frozen=True)
class DiscreteOracle:
    spec: DiscreteSyntheticSpec

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    @property
    def feature_dim(self) -> int:
        return 1

    def scores(self, X: np.ndarray, a: np.ndarray, c: np.ndarray) -> np.ndarray:
        table = np.asarray(self.spec.feature_table, dtype=np.float64)
        prior = np.asarray(self.spec.class_prior, dtype=np.float64)
        x = np.asarray(X, dtype=np.float64).reshape(-1).astype(np.int64)
        a = np.asarray(a, dtype=np.int64)
        c = np.asarray(c, dtype=np.int64)
        joint = prior[c - 1, a, :] * table[:, a, x].T
        total = joint.sum(axis=1, keepdims=True)
        if np.any(total <= 0):
            raise ValueError("feature value has zero probability under the generating table")
        return joint / total


def _normalize_log(logp: np.ndarray) -> np.ndarray:
    m = logp.max(axis=1, keepdims=True)
    e = np.exp(logp - m)
    return e / e.sum(axis=1, keepdims=True)


def _client_counts(samples: int | Sequence[int], K: int) -> list[int]:
    if np.isscalar(samples):
        return [int(samples)] * K
    counts = [int(s) for s in samples]
    if len(counts) != K:
        raise ValueError("samples_per_client must be a scalar or have one entry per client")
    return counts


def generate_synthetic(
    spec: SyntheticSpec | DiscreteSyntheticSpec, rng: RngStream
) -> tuple[ClientGroupDataset, ScoreModel]:
    """Sample a dataset from ``spec`` and return it with its exact-posterior oracle."""
    N, K = spec.num_classes, spec.num_clients
    prior = np.asarray(spec.class_prior, dtype=np.float64)
    prop = np.asarray(spec.sensitive_proportion, dtype=np.float64)
    _check_common(prior, prop, K, N)
    if isinstance(spec, SyntheticSpec):
        means = np.asarray(spec.means, dtype=np.float64)
        spreads = np.asarray(spec.spreads, dtype=np.float64)
        if means.ndim != 3 or means.shape[:2] != (N, 2):
            raise ValueError("means must have shape (N, 2, d)")
        if spreads.shape != (N, 2) or not np.all(np.isfinite(spreads)) or np.any(spreads <= 0):
            raise ValueError("spreads must be positive and finite, shape (N, 2)")
        oracle: ScoreModel = GaussianOracle(spec)
    else:
        table = np.asarray(spec.feature_table, dtype=np.float64)
        if table.ndim != 3 or table.shape[:2] != (N, 2):
            raise ValueError("feature_table must have shape (N, 2, M)")
        if np.any(table < 0) or not np.allclose(table.sum(axis=2), 1.0, atol=1e-12):
            raise ValueError("feature_table rows must be distributions")
        oracle = DiscreteOracle(spec)
    Xs, As, Cs, Ys = [], [], [], []
    for k, n in enumerate(_client_counts(spec.samples_per_client, K), start=1):
        g = rng.child(f"synthetic/client{k}").generator()
        a = (g.random(n) < prop[k - 1]).astype(np.int64)
        u = g.random(n)
        cdf = np.cumsum(prior[k - 1, a, :], axis=1)
        y0 = np.minimum((u[:, None] > cdf).sum(axis=1), N - 1)
        if isinstance(spec, SyntheticSpec):
            noise = g.standard_normal((n, spec.feature_dim))
            X = means[y0, a, :] + noise * spreads[y0, a][:, None]
        else:
            u2 = g.random(n)
            fcdf = np.cumsum(table[y0, a, :], axis=1)
            X = np.minimum((u2[:, None] > fcdf).sum(axis=1), table.shape[2] - 1).astype(np.float64)[:, None]
        Xs.append(X)
        As.append(a)
        Cs.append(np.full(n, k))
        Ys.append(y0 + 1)
    data = ClientGroupDataset(
        np.vstack(Xs), np.concatenate(As), np.concatenate(Cs), np.concatenate(Ys), N, K
    )
    return data, oracle
