"""Client-side statistics and the Laplace mechanism applied before upload.

Tables are numpy arrays indexed ``[y-1, a]`` (``joint_tp``, ``base``),
``[y-1, j-1, a]`` (``sp_joint``) and ``[j-1, a]`` (``sp_pred``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import ClientGroupDataset, DataError, RngStream

STATS_MESSAGE_VERSION = 1


@dataclass(frozen=True, eq=False)
class ClientStats:
    client: int
    n: int
    joint_tp: np.ndarray  # Pr(Y1 = y, Y = y, A = a | C = c)
    base: np.ndarray  # Pr(Y = y, A = a | C = c)
    sp_joint: np.ndarray  # Pr(Y = y, Y1 = j, A = a | C = c)
    sp_pred: np.ndarray  # Pr(Y1 = j, A = a | C = c)
    group_mass: np.ndarray  # Pr(A = a | C = c)

    @property
    def num_classes(self) -> int:
        return int(self.base.shape[0])

    def same_as(self, other: "ClientStats") -> bool:
        return (
            self.client == other.client
            and self.n == other.n
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("joint_tp", "base", "sp_joint", "sp_pred", "group_mass")
            )
        )


@dataclass(frozen=True)
class DpConfig:
    epsilon: float = math.inf
    enabled: bool = False

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("DP epsilon must be positive")

    def scale(self, n: int) -> float:
        """Laplace scale ``b_c = 1 / (n_c * epsilon)`` (sensitivity 1/n_c)."""
        if not self.enabled or math.isinf(self.epsilon):
            return 0.0
        return 1.0 / (n * self.epsilon)


def compute_client_stats(
    data: ClientGroupDataset, base_pred: np.ndarray, client: int | None = None
) -> ClientStats:
    """Relative frequencies over one client's records.

    ``base_pred`` holds the argmax predictor's 1-based outputs on ``data``.
    """
    n = len(data)
    if n == 0:
        raise DataError("client slice is empty")
    ids = np.unique(data.c)
    if client is None:
        if len(ids) != 1:
            raise DataError("records belong to more than one client")
        client = int(ids[0])
    elif np.any(data.c != client):
        raise DataError(f"slice contains records not owned by client {client}")
    N = data.num_classes
    y0 = data.y - 1
    j0 = np.asarray(base_pred, dtype=np.int64) - 1
    a = data.a
    if j0.shape != y0.shape:
        raise DataError("base predictions do not match the slice length")
    counts = np.zeros((N, N, 2))
    np.add.at(counts, (y0, j0, a), 1.0)
    sp_joint = counts / n
    base = counts.sum(axis=1) / n
    diag = counts[np.arange(N), np.arange(N), :]
    joint_tp = diag / n
    sp_pred = counts.sum(axis=0) / n
    group_mass = np.bincount(a, minlength=2) / n
    return ClientStats(int(client), n, joint_tp, base, sp_joint, sp_pred, group_mass)


def apply_laplace(stats: ClientStats, dp: DpConfig, rng: RngStream) -> ClientStats:
    """Perturb every transmitted table with Laplace(0, b_c) noise, then sanitize.

    Sanitation clips to [0, 1], renormalizes ``base`` and ``sp_joint`` to unit
    mass, caps ``joint_tp`` at ``base``, and re-derives ``sp_pred`` and
    ``group_mass`` from the noised ``sp_joint``. With zero scale the input
    object is returned unchanged.
    """
    b = dp.scale(stats.n)
    if b == 0.0:
        return stats
    g = rng.child(f"laplace/client{stats.client}").generator()
    joint = stats.joint_tp + g.laplace(0.0, b, size=stats.joint_tp.shape)
    base = stats.base + g.laplace(0.0, b, size=stats.base.shape)
    sp_joint = stats.sp_joint + g.laplace(0.0, b, size=stats.sp_joint.shape)
    joint = np.clip(joint, 0.0, 1.0)
    base = _renormalize(np.clip(base, 0.0, 1.0))
    joint = np.minimum(joint, base)
    sp_joint = _renormalize(np.clip(sp_joint, 0.0, 1.0))
    sp_pred = sp_joint.sum(axis=0)
    group_mass = sp_pred.sum(axis=0)
    return ClientStats(stats.client, stats.n, joint, base, sp_joint, sp_pred, group_mass)


def _renormalize(t: np.ndarray) -> np.ndarray:
    total = t.sum()
    if total <= 0:
        return np.full_like(t, 1.0 / t.size)
    return t / total


# -- wire format -------------------------------------------------------------------


def stats_to_message(stats: ClientStats) -> dict:
    return {
        "type": "stats",
        "version": STATS_MESSAGE_VERSION,
        "client": stats.client,
        "n": stats.n,
        "joint_tp": stats.joint_tp.tolist(),
        "base": stats.base.tolist(),
        "sp_joint": stats.sp_joint.tolist(),
        "sp_pred": stats.sp_pred.tolist(),
        "group_mass": stats.group_mass.tolist(),
    }


STATS_FIELDS = frozenset(
    {"type", "version", "client", "n", "joint_tp", "base", "sp_joint", "sp_pred", "group_mass"}
)


def stats_from_message(msg: dict) -> ClientStats:
    if msg.get("type") != "stats":
        raise DataError("not a statistics message")
    if msg.get("version") != STATS_MESSAGE_VERSION:
        raise DataError(f"unsupported statistics message version {msg.get('version')}")
    try:
        return ClientStats(
            int(msg["client"]),
            int(msg["n"]),
            np.array(msg["joint_tp"], dtype=np.float64),
            np.array(msg["base"], dtype=np.float64),
            np.array(msg["sp_joint"], dtype=np.float64),
            np.array(msg["sp_pred"], dtype=np.float64),
            np.array(msg["group_mass"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed statistics message: {exc}") from None


def stats_to_json(stats: ClientStats) -> str:
    return json.dumps(stats_to_message(stats), sort_keys=True)
