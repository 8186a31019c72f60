"""Domain types shared by every stage of the pipeline.

Class labels and client ids are 1-based everywhere outside this package's
array internals: ``y`` in ``1..N`` and ``c`` in ``1..K``. Code that indexes
numpy tables subtracts one at the point of indexing and nowhere else.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed datasets, CSV input, or inconsistent labels."""


class SpecError(ValueError):
    """Raised when a fairness specification is out of range or mis-sized."""


class Metric(str, enum.Enum):
    EQUALIZED_ODDS = "eo"
    EQUAL_OPPORTUNITY = "eop"
    STATISTICAL_PARITY = "sp"

    @classmethod
    def parse(cls, value: "str | Metric") -> "Metric":
        if isinstance(value, Metric):
            return value
        key = str(value).strip().lower()
        aliases = {
            "eo": cls.EQUALIZED_ODDS,
            "equalizedodds": cls.EQUALIZED_ODDS,
            "equalized_odds": cls.EQUALIZED_ODDS,
            "eop": cls.EQUAL_OPPORTUNITY,
            "equalopportunity": cls.EQUAL_OPPORTUNITY,
            "equal_opportunity": cls.EQUAL_OPPORTUNITY,
            "sp": cls.STATISTICAL_PARITY,
            "statisticalparity": cls.STATISTICAL_PARITY,
            "statistical_parity": cls.STATISTICAL_PARITY,
        }
        if key not in aliases:
            raise SpecError(f"unknown fairness metric {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible source of randomness.

    The generator is derived from ``seed`` and a SHA-256 digest of ``label``
    through numpy's ``SeedSequence``/``PCG64``, both of which are specified
    bit-for-bit independently of platform. Python's ``hash`` is never used.
    """

    seed: int
    label: str = "root"

    def child(self, name: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{name}")

    def generator(self) -> np.random.Generator:
        digest = hashlib.sha256(self.label.encode("utf-8")).digest()
        words = tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4))
        seed = int(self.seed) & ((1 << 64) - 1)
        ss = np.random.SeedSequence(entropy=[seed & 0xFFFFFFFF, seed >> 32], spawn_key=words)
        return np.random.Generator(np.random.PCG64(ss))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ClientGroupDataset:
    """Labeled records ``(x, a, c, y)`` held as parallel read-only arrays."""

    X: np.ndarray
    a: np.ndarray
    c: np.ndarray
    y: np.ndarray
    num_classes: int
    num_clients: int

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DataError("features must be a 2-D array")
        n = X.shape[0]
        a = np.asarray(self.a, dtype=np.int64).reshape(-1)
        c = np.asarray(self.c, dtype=np.int64).reshape(-1)
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if not (len(a) == len(c) == len(y) == n):
            raise DataError("features and labels have different lengths")
        if self.num_classes < 2:
            raise DataError("num_classes must be at least 2")
        if self.num_clients < 1:
            raise DataError("num_clients must be at least 1")
        if X.shape[1] < 1:
            raise DataError("feature dimension must be at least 1")
        if n and not np.all(np.isfinite(X)):
            raise DataError("features must be finite")
        if np.any((a != 0) & (a != 1)):
            raise DataError("sensitive attribute must be 0 or 1")
        if np.any((c < 1) | (c > self.num_clients)):
            raise DataError(f"client id outside 1..{self.num_clients}")
        if np.any((y < 1) | (y > self.num_classes)):
            raise DataError(f"class label outside 1..{self.num_classes}")
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "a", _readonly(a))
        object.__setattr__(self, "c", _readonly(c))
        object.__setattr__(self, "y", _readonly(y))

    def __len__(self) -> int:
        return int(self.X.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.X.shape[1])

    def client_sizes(self) -> np.ndarray:
        return np.bincount(self.c - 1, minlength=self.num_clients)

    def check_client_coverage(self) -> None:
        empty = [k + 1 for k, n in enumerate(self.client_sizes()) if n == 0]
        if empty:
            raise DataError(f"clients without records: {empty}")

    def subset(self, mask_or_index: np.ndarray) -> "ClientGroupDataset":
        idx = np.asarray(mask_or_index)
        return ClientGroupDataset(
            self.X[idx], self.a[idx], self.c[idx], self.y[idx], self.num_classes, self.num_clients
        )

    def client_slice(self, client: int) -> "ClientGroupDataset":
        return self.subset(self.c == client)

    def same_records(self, other: "ClientGroupDataset") -> bool:
        return (
            self.num_classes == other.num_classes
            and self.num_clients == other.num_clients
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.c, other.c)
            and np.array_equal(self.y, other.y)
        )

    @staticmethod
    def concat(parts: Sequence["ClientGroupDataset"]) -> "ClientGroupDataset":
        if not parts:
            raise DataError("nothing to concatenate")
        first = parts[0]
        return ClientGroupDataset(
            np.concatenate([p.X for p in parts]),
            np.concatenate([p.a for p in parts]),
            np.concatenate([p.c for p in parts]),
            np.concatenate([p.y for p in parts]),
            first.num_classes,
            first.num_clients,
        )


# -- CSV ---------------------------------------------------------------------


def dataset_to_csv(data: ClientGroupDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"f{i}" for i in range(data.feature_dim)] + ["a", "c", "y"])
    for row, a, c, y in zip(data.X, data.a, data.c, data.y):
        writer.writerow([repr(float(v)) for v in row] + [int(a), int(c), int(y)])
    return buf.getvalue()


def dataset_from_csv(
    text: str, num_classes: int | None = None, num_clients: int | None = None
) -> ClientGroupDataset:
    """Parse the ``f0,...,f{d-1},a,c,y`` CSV layout.

    ``num_classes``/``num_clients`` default to the largest label seen.
    Errors carry the 1-based line number of the offending row.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty CSV: missing header row") from None
    for col in ("a", "c", "y"):
        if col not in header:
            raise DataError(f"missing required column '{col}'")
    feat_cols = [h for h in header if h not in ("a", "c", "y")]
    expected = [f"f{i}" for i in range(len(feat_cols))]
    if feat_cols != expected:
        raise DataError(f"feature columns must be {expected[:3]}... in order, got {feat_cols[:3]}...")
    if not feat_cols:
        raise DataError("no feature columns")
    pos = {h: i for i, h in enumerate(header)}
    fidx = [pos[h] for h in feat_cols]
    rows_x, rows_a, rows_c, rows_y = [], [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            rows_x.append([float(row[i]) for i in fidx])
            rows_a.append(int(row[pos["a"]]))
            rows_c.append(int(row[pos["c"]]))
            rows_y.append(int(row[pos["y"]]))
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        if rows_a[-1] not in (0, 1):
            raise DataError(f"line {lineno}: a must be 0 or 1")
        if rows_c[-1] < 1 or rows_y[-1] < 1:
            raise DataError(f"line {lineno}: c and y are 1-based")
    if not rows_y:
        raise DataError("CSV has no records")
    N = num_classes if num_classes is not None else max(2, max(rows_y))
    K = num_clients if num_clients is not None else max(rows_c)
    return ClientGroupDataset(
        np.array(rows_x, dtype=np.float64).reshape(len(rows_y), len(fidx)),
        np.array(rows_a),
        np.array(rows_c),
        np.array(rows_y),
        N,
        K,
    )


def save_csv(data: ClientGroupDataset, path: str | Path) -> None:
    Path(path).write_text(dataset_to_csv(data), encoding="utf-8")


def load_csv(path: str | Path, num_classes: int | None = None, num_clients: int | None = None) -> ClientGroupDataset:
    return dataset_from_csv(Path(path).read_text(encoding="utf-8"), num_classes, num_clients)


# -- splitting ----------------------------------------------------------------


def _apportion(n: int, fractions: np.ndarray) -> np.ndarray:
    raw = fractions * n
    counts = np.floor(raw + 1e-12).astype(np.int64)
    remainder = n - int(counts.sum())
    if remainder > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:remainder]] += 1
    return counts


def split_dataset(
    data: ClientGroupDataset, fractions: Iterable[float], rng: RngStream
) -> tuple[ClientGroupDataset, ClientGroupDataset, ClientGroupDataset]:
    """Split every client's records into train/validation/test parts.

    Counts per client are within one record of ``fraction * n_c``; records
    keep their original relative order inside each part.
    """
    fr = np.asarray(list(fractions), dtype=np.float64)
    if fr.shape != (3,):
        raise DataError("fractions must have exactly three entries")
    if np.any(fr < 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise DataError("fractions must be nonnegative and sum to 1")
    parts_needed = int(np.count_nonzero(fr))
    parts: list[list[np.ndarray]] = [[], [], []]
    for client in range(1, data.num_clients + 1):
        idx = np.flatnonzero(data.c == client)
        if len(idx) < parts_needed:
            raise DataError(f"client {client} has {len(idx)} records, fewer than the {parts_needed} parts requested")
        perm = rng.child(f"split/client{client}").generator().permutation(len(idx))
        counts = _apportion(len(idx), fr)
        start = 0
        for k in range(3):
            chosen = idx[perm[start : start + counts[k]]]
            parts[k].append(np.sort(chosen))
            start += counts[k]
    out = []
    for k in range(3):
        sel = np.sort(np.concatenate(parts[k])) if parts[k] else np.array([], dtype=np.int64)
        out.append(data.subset(sel.astype(np.int64)))
    return out[0], out[1], out[2]


# -- fairness specification ------------------------------------------------------


@dataclass(frozen=True)
class FairnessSpec:
    metric: Metric
    eps_global: float
    eps_local: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        object.__setattr__(self, "eps_global", float(self.eps_global))
        object.__setattr__(self, "eps_local", tuple(float(e) for e in np.atleast_1d(self.eps_local)))

    @classmethod
    def uniform(cls, metric: "Metric | str", eps_global: float, eps_local: float, num_clients: int) -> "FairnessSpec":
        return cls(Metric.parse(metric), eps_global, (float(eps_local),) * num_clients)


def validate_spec(spec: FairnessSpec, data: ClientGroupDataset | int) -> FairnessSpec:
    """Check ranges and that there is one local tolerance per client."""
    K = data if isinstance(data, int) else data.num_clients
    if len(spec.eps_local) != K:
        raise SpecError(f"eps_local has {len(spec.eps_local)} entries but there are {K} clients")
    values = (spec.eps_global,) + spec.eps_local
    for v in values:
        if not (0.0 <= v <= 1.0) or not np.isfinite(v):
            raise SpecError(f"fairness tolerance {v} outside [0, 1]")
    return spec
