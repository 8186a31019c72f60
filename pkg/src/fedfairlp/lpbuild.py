"""Server-side LP assembly for the three fairness metrics.

Equalized-odds variables are true-positive rates ``z[y, a, c]`` laid out in
blocks ``(a=0, c=1), (a=1, c=1), (a=0, c=2), ...``, classes ``1..N`` inside
each block. Statistical-parity variables are ``z[y, j, a, c] =
Pr(out = y | argmax = j, a, c)`` ordered by ``(c, a, j, y)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clientstats import ClientStats
from .core import FairnessSpec, Metric, SpecError, validate_spec

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9


class DegenerateSimplexError(ValueError):
    """``sum_y tp1[y, a, c] <= 1`` for some cell: the half-space form is invalid.

    Rebuild with ``form="barycentric"``.
    """

    def __init__(self, cells: list[tuple[int, int]]):
        super().__init__(
            "true-positive vertex does not lie above the unit simplex for (a, c) cells "
            f"{cells}; use the barycentric formulation"
        )
        self.cells = cells


@dataclass(frozen=True, eq=False)
class AggregatedParams:
    """Population quantities the LP is built from; arrays use 0-based class
    and client axes: ``p[y, a, c]``, ``alpha[y, a]``, ``tp1[y, a, c]``,
    ``sp_u[y, j, a, c]``, ``sp_uj[j, a, c]``, ``sp_uac[a, c]``, ``sp_ua[a]``."""

    p: np.ndarray
    alpha: np.ndarray
    p_client: np.ndarray
    tp1: np.ndarray
    vacuous: np.ndarray
    sp_u: np.ndarray | None = None
    sp_uj: np.ndarray | None = None
    sp_uac: np.ndarray | None = None
    sp_ua: np.ndarray | None = None

    @property
    def num_classes(self) -> int:
        return int(self.p.shape[0])

    @property
    def num_clients(self) -> int:
        return int(self.p.shape[2])


def params_from_tables(
    p: np.ndarray,
    tp1: np.ndarray,
    sp_u: np.ndarray | None = None,
) -> AggregatedParams:
    """Derive every aggregate from ``p[y, a, c]``, ``tp1`` and optionally ``sp_u``."""
    p = np.asarray(p, dtype=np.float64)
    tp1 = np.asarray(tp1, dtype=np.float64).copy()
    vacuous = p <= 0
    tp1[vacuous] = 1.0
    alpha = p.sum(axis=2)
    p_client = p.sum(axis=(0, 1))
    sp = {}
    if sp_u is not None:
        sp_u = np.asarray(sp_u, dtype=np.float64)
        sp_uj = sp_u.sum(axis=0)
        sp_uac = sp_uj.sum(axis=0)
        sp = dict(sp_u=sp_u, sp_uj=sp_uj, sp_uac=sp_uac, sp_ua=sp_uac.sum(axis=1))
    return AggregatedParams(p, alpha, p_client, tp1, vacuous, **sp)


def tp1_from_tables(joint: np.ndarray, base: np.ndarray) -> np.ndarray:
    """``joint / base`` clipped to [0, 1]; vacuous cells (``base == 0``) get 1."""
    vacuous = base <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        tp1 = np.where(vacuous, 1.0, joint / np.where(vacuous, 1.0, base))
    return np.clip(tp1, 0.0, 1.0)


def aggregate(stats: Sequence[ClientStats], num_clients: int | None = None) -> AggregatedParams:
    """Combine per-client statistics into LP parameters.

    ``p[y,a,c] = base_c(y,a) * n_c / sum(n)``, ``alpha = sum_c p`` and
    ``tp1 = joint_tp / base``; cells with ``base == 0`` are flagged vacuous and
    carry ``tp1 = 1``.
    """
    by_client = {s.client: s for s in stats}
    if len(by_client) != len(stats):
        raise ValueError("duplicate client statistics")
    K = num_clients if num_clients is not None else max(by_client)
    missing = [k for k in range(1, K + 1) if k not in by_client]
    if missing:
        raise ValueError(f"missing statistics for clients {missing}")
    if set(by_client) - set(range(1, K + 1)):
        raise ValueError("statistics for unknown client ids")
    ordered = [by_client[k] for k in range(1, K + 1)]
    n = np.array([s.n for s in ordered], dtype=np.float64)
    p_client = n / n.sum()
    base = np.stack([s.base for s in ordered], axis=2)
    joint = np.stack([s.joint_tp for s in ordered], axis=2)
    p = base * p_client
    vacuous = base <= 0
    tp1 = tp1_from_tables(joint, base)
    sp_u = np.stack([s.sp_joint for s in ordered], axis=3) * p_client
    sp_uj = np.stack([s.sp_pred for s in ordered], axis=2) * p_client
    sp_uac = sp_uj.sum(axis=0)
    return AggregatedParams(
        p=p,
        alpha=p.sum(axis=2),
        p_client=p_client,
        tp1=tp1,
        vacuous=vacuous,
        sp_u=sp_u,
        sp_uj=sp_uj,
        sp_uac=sp_uac,
        sp_ua=sp_uac.sum(axis=1),
    )


@dataclass(eq=False)
class LpInstance:
    """A dense LP: ``sense`` of ``c_vec @ x`` subject to two-sided fairness rows
    ``-b_fair <= A_fair x <= b_fair``, one-sided rows ``A_ub x <= b_ub``,
    equalities ``A_eq x = b_eq`` and box bounds ``lb <= x <= ub``."""

    metric: Metric
    form: str
    sense: str
    c_vec: np.ndarray
    A_fair: np.ndarray
    b_fair: np.ndarray
    fair_rows: list[tuple]
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    var_names: list[str]
    num_z: int
    params: AggregatedParams | None
    spec: FairnessSpec | None
    regions: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return int(self.c_vec.shape[0])


def eo_index(y: int, a: int, c: int, N: int) -> int:
    """Position of ``z[y, a, c]`` (1-based ``y`` and ``c``)."""
    return (2 * (c - 1) + a) * N + (y - 1)


def sp_index(y: int, j: int, a: int, c: int, N: int) -> int:
    return ((2 * (c - 1) + a) * N + (j - 1)) * N + (y - 1)


def simplex_halfspaces(tp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(K, l)`` with ``K u <= l`` describing conv{e_1..e_N, tp}.

    Row 0 is ``-sum(u) <= -1``; row ``y`` has ``1 - sum_{i != y} tp_i`` on the
    diagonal and ``tp_y`` elsewhere, with bound ``tp_y``.
    """
    tp = np.asarray(tp, dtype=np.float64)
    N = tp.shape[0]
    K = np.empty((N + 1, N))
    K[0, :] = -1.0
    total = tp.sum()
    for y in range(N):
        K[y + 1, :] = tp[y]
        K[y + 1, y] = 1.0 - (total - tp[y])
    l = np.concatenate([[-1.0], tp])
    return K, l


def _check_region(K: np.ndarray, l: np.ndarray, tp: np.ndarray) -> None:
    N = tp.shape[0]
    for pt in list(np.eye(N)) + [tp]:
        if np.any(K @ pt > l + SIMPLEX_TOL):
            raise AssertionError("simplex row construction excludes one of its own vertices")


def _eo_fair_rows(params: AggregatedParams, spec: FairnessSpec, classes: list[int], nvar: int):
    N, K = params.num_classes, params.num_clients
    rows, bounds, labels = [], [], []
    for y in classes:
        a0, a1 = params.alpha[y - 1, 0], params.alpha[y - 1, 1]
        if a0 <= 0 or a1 <= 0:
            log.warning("dropping global row for class %d: empty group", y)
            continue
        r = np.zeros(nvar)
        for c in range(1, K + 1):
            r[eo_index(y, 0, c, N)] = params.p[y - 1, 0, c - 1] / a0
            r[eo_index(y, 1, c, N)] = -params.p[y - 1, 1, c - 1] / a1
        rows.append(r)
        bounds.append(spec.eps_global)
        labels.append(("global", y))
    for c in range(1, K + 1):
        for y in classes:
            if params.vacuous[y - 1, 0, c - 1] or params.vacuous[y - 1, 1, c - 1]:
                log.warning("dropping local row for client %d class %d: empty cell", c, y)
                continue
            r = np.zeros(nvar)
            r[eo_index(y, 0, c, N)] = 1.0
            r[eo_index(y, 1, c, N)] = -1.0
            rows.append(r)
            bounds.append(spec.eps_local[c - 1])
            labels.append(("local", c, y))
    A = np.array(rows).reshape(len(rows), nvar)
    return A, np.array(bounds, dtype=np.float64), labels


def _build_tp_lp(params: AggregatedParams, spec: FairnessSpec, classes: list[int], form: str) -> LpInstance:
    validate_spec(spec, params.num_clients)
    if form not in ("halfspace", "barycentric"):
        raise ValueError(f"unknown LP form {form!r}")
    N, K = params.num_classes, params.num_clients
    nz = 2 * N * K
    names = [f"z_y{y}_a{a}_c{c}" for c in range(1, K + 1) for a in (0, 1) for y in range(1, N + 1)]
    if form == "barycentric":
        names += [f"f{i}_a{a}_c{c}" for c in range(1, K + 1) for a in (0, 1) for i in range(N + 1)]
    nvar = len(names)
    c_vec = np.zeros(nvar)
    for c in range(1, K + 1):
        for a in (0, 1):
            for y in range(1, N + 1):
                c_vec[eo_index(y, a, c, N)] = -params.p[y - 1, a, c - 1]
    A_fair, b_fair, labels = _eo_fair_rows(params, spec, classes, nvar)
    regions = {}
    ub_rows, ub_b, eq_rows, eq_b = [], [], [], []
    if form == "halfspace":
        bad = [
            (a, c)
            for c in range(1, K + 1)
            for a in (0, 1)
            if params.tp1[:, a, c - 1].sum() <= 1.0 + SIMPLEX_TOL
        ]
        if bad:
            raise DegenerateSimplexError(bad)
        for c in range(1, K + 1):
            for a in (0, 1):
                tp = params.tp1[:, a, c - 1]
                Kac, lac = simplex_halfspaces(tp)
                _check_region(Kac, lac, tp)
                regions[(a, c)] = (Kac, lac)
                start = eo_index(1, a, c, N)
                for r, bound in zip(Kac, lac):
                    row = np.zeros(nvar)
                    row[start : start + N] = r
                    ub_rows.append(row)
                    ub_b.append(bound)
    else:
        for c in range(1, K + 1):
            for a in (0, 1):
                tp = params.tp1[:, a, c - 1]
                blk = 2 * (c - 1) + a
                f0 = nz + blk * (N + 1)
                for y in range(1, N + 1):
                    row = np.zeros(nvar)
                    row[eo_index(y, a, c, N)] = 1.0
                    row[f0] = -tp[y - 1]
                    row[f0 + y] = -1.0
                    eq_rows.append(row)
                    eq_b.append(0.0)
                row = np.zeros(nvar)
                row[f0 : f0 + N + 1] = 1.0
                eq_rows.append(row)
                eq_b.append(1.0)
    metric = Metric.EQUALIZED_ODDS if len(classes) == N and spec.metric != Metric.EQUAL_OPPORTUNITY else spec.metric
    return LpInstance(
        metric=metric,
        form=form,
        sense="min",
        c_vec=c_vec,
        A_fair=A_fair,
        b_fair=b_fair,
        fair_rows=labels,
        A_ub=np.array(ub_rows).reshape(len(ub_rows), nvar),
        b_ub=np.array(ub_b, dtype=np.float64),
        A_eq=np.array(eq_rows).reshape(len(eq_rows), nvar),
        b_eq=np.array(eq_b, dtype=np.float64),
        lb=np.zeros(nvar),
        ub=np.ones(nvar),
        var_names=names,
        num_z=nz,
        params=params,
        spec=spec,
        regions=regions,
    )


def build_lp_eo(params: AggregatedParams, spec: FairnessSpec, form: str = "halfspace") -> LpInstance:
    if spec.metric != Metric.EQUALIZED_ODDS:
        raise SpecError("build_lp_eo needs an equalized-odds spec")
    return _build_tp_lp(params, spec, list(range(1, params.num_classes + 1)), form)


def build_lp_eop(params: AggregatedParams, spec: FairnessSpec, form: str = "halfspace") -> LpInstance:
    if spec.metric != Metric.EQUAL_OPPORTUNITY:
        raise SpecError("build_lp_eop needs an equal-opportunity spec")
    return _build_tp_lp(params, spec, [1], form)


def build_lp_sp(params: AggregatedParams, spec: FairnessSpec) -> LpInstance:
    """Statistical-parity LP over column-stochastic randomization tables."""
    if spec.metric != Metric.STATISTICAL_PARITY:
        raise SpecError("build_lp_sp needs a statistical-parity spec")
    if params.sp_u is None:
        raise ValueError("statistical-parity tables are missing from the aggregated parameters")
    validate_spec(spec, params.num_clients)
    N, K = params.num_classes, params.num_clients
    nvar = 2 * K * N * N
    names = [
        f"z_y{y}_j{j}_a{a}_c{c}"
        for c in range(1, K + 1)
        for a in (0, 1)
        for j in range(1, N + 1)
        for y in range(1, N + 1)
    ]
    c_vec = np.zeros(nvar)
    for c in range(1, K + 1):
        for a in (0, 1):
            for j in range(1, N + 1):
                for y in range(1, N + 1):
                    c_vec[sp_index(y, j, a, c, N)] = params.sp_u[y - 1, j - 1, a, c - 1]
    rows, bounds, labels = [], [], []
    u0, u1 = params.sp_ua
    if u0 <= 0 or u1 <= 0:
        log.warning("dropping global statistical-parity rows: a group has no mass")
    else:
        for y in range(1, N + 1):
            r = np.zeros(nvar)
            for c in range(1, K + 1):
                for j in range(1, N + 1):
                    r[sp_index(y, j, 0, c, N)] = params.sp_uj[j - 1, 0, c - 1] / u0
                    r[sp_index(y, j, 1, c, N)] = -params.sp_uj[j - 1, 1, c - 1] / u1
            rows.append(r)
            bounds.append(spec.eps_global)
            labels.append(("global", y))
    for c in range(1, K + 1):
        u0c, u1c = params.sp_uac[0, c - 1], params.sp_uac[1, c - 1]
        if u0c <= 0 or u1c <= 0:
            log.warning("dropping local statistical-parity rows for client %d: a group has no mass", c)
            continue
        for y in range(1, N + 1):
            r = np.zeros(nvar)
            for j in range(1, N + 1):
                r[sp_index(y, j, 0, c, N)] = params.sp_uj[j - 1, 0, c - 1] / u0c
                r[sp_index(y, j, 1, c, N)] = -params.sp_uj[j - 1, 1, c - 1] / u1c
            rows.append(r)
            bounds.append(spec.eps_local[c - 1])
            labels.append(("local", c, y))
    eq_rows = []
    for c in range(1, K + 1):
        for a in (0, 1):
            for j in range(1, N + 1):
                r = np.zeros(nvar)
                for y in range(1, N + 1):
                    r[sp_index(y, j, a, c, N)] = 1.0
                eq_rows.append(r)
    return LpInstance(
        metric=Metric.STATISTICAL_PARITY,
        form="stochastic",
        sense="max",
        c_vec=c_vec,
        A_fair=np.array(rows).reshape(len(rows), nvar),
        b_fair=np.array(bounds, dtype=np.float64),
        fair_rows=labels,
        A_ub=np.zeros((0, nvar)),
        b_ub=np.zeros(0),
        A_eq=np.array(eq_rows),
        b_eq=np.ones(len(eq_rows)),
        lb=np.zeros(nvar),
        ub=np.ones(nvar),
        var_names=names,
        num_z=nvar,
        params=params,
        spec=spec,
    )


def build_lp(params: AggregatedParams, spec: FairnessSpec, form: str = "halfspace") -> LpInstance:
    if spec.metric == Metric.EQUALIZED_ODDS:
        return build_lp_eo(params, spec, form)
    if spec.metric == Metric.EQUAL_OPPORTUNITY:
        return build_lp_eop(params, spec, form)
    return build_lp_sp(params, spec)


def build_lp_auto(params: AggregatedParams, spec: FairnessSpec) -> LpInstance:
    """Half-space form when valid, otherwise the barycentric fallback."""
    try:
        return build_lp(params, spec, "halfspace")
    except DegenerateSimplexError as exc:
        log.info("falling back to barycentric LP: %s", exc)
        return build_lp(params, spec, "barycentric")


def generic_lp(
    c,
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    lb=0.0,
    ub=1.0,
    sense: str = "min",
) -> LpInstance:
    """Wrap a plain LP in an :class:`LpInstance` (no fairness structure), so the
    solver can be exercised and cross-checked on arbitrary problems."""
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    n = c.shape[0]
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")

    def rows(A, b):
        if A is None:
            return np.zeros((0, n)), np.zeros(0)
        A = np.asarray(A, dtype=np.float64).reshape(-1, n)
        return A, np.asarray(b, dtype=np.float64).reshape(-1)

    A_ub, b_ub = rows(A_ub, b_ub)
    A_eq, b_eq = rows(A_eq, b_eq)
    return LpInstance(
        metric=Metric.EQUALIZED_ODDS,
        form="generic",
        sense=sense,
        c_vec=c,
        A_fair=np.zeros((0, n)),
        b_fair=np.zeros(0),
        fair_rows=[],
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        lb=np.broadcast_to(np.asarray(lb, dtype=np.float64), (n,)).copy(),
        ub=np.broadcast_to(np.asarray(ub, dtype=np.float64), (n,)).copy(),
        var_names=[f"x{i}" for i in range(n)],
        num_z=n,
        params=None,
        spec=None,
    )


# -- views on a solution vector -----------------------------------------------------


def z_blocks(inst: LpInstance, x: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Per-``(a, c)`` slices of the solution: TP vectors for EO/EOp, ``[y, j]``
    tables for SP."""
    N, K = inst.params.num_classes, inst.params.num_clients
    out = {}
    for c in range(1, K + 1):
        for a in (0, 1):
            blk = 2 * (c - 1) + a
            if inst.metric == Metric.STATISTICAL_PARITY:
                flat = x[blk * N * N : (blk + 1) * N * N]
                out[(a, c)] = flat.reshape(N, N).T.copy()  # [y, j]
            else:
                out[(a, c)] = x[blk * N : (blk + 1) * N].copy()
    return out


def mix_blocks(inst: LpInstance, x: np.ndarray) -> dict[tuple[int, int], np.ndarray] | None:
    """Barycentric weights ``f`` per cell, when the instance carries them."""
    if inst.form != "barycentric":
        return None
    N, K = inst.params.num_classes, inst.params.num_clients
    out = {}
    for c in range(1, K + 1):
        for a in (0, 1):
            blk = 2 * (c - 1) + a
            start = inst.num_z + blk * (N + 1)
            out[(a, c)] = x[start : start + N + 1].copy()
    return out


# -- text dump ------------------------------------------------------------------------


def _expr(row: np.ndarray, names: list[str]) -> str:
    terms = [f"{v:+.17g} {names[i]}" for i, v in enumerate(row) if v != 0.0]
    return " ".join(terms) if terms else "0 " + names[0]


def to_lp_text(inst: LpInstance) -> str:
    """CPLEX-style LP text (objective, rows, bounds) for external solvers."""
    out = ["\\ fedfairlp " + inst.metric.value + " " + inst.form]
    out.append("Minimize" if inst.sense == "min" else "Maximize")
    out.append(" obj: " + _expr(inst.c_vec, inst.var_names))
    out.append("Subject To")
    for i, (row, b) in enumerate(zip(inst.A_fair, inst.b_fair)):
        out.append(f" fair{i}_hi: {_expr(row, inst.var_names)} <= {b:.17g}")
        out.append(f" fair{i}_lo: {_expr(row, inst.var_names)} >= {-b:.17g}")
    for i, (row, b) in enumerate(zip(inst.A_ub, inst.b_ub)):
        out.append(f" region{i}: {_expr(row, inst.var_names)} <= {b:.17g}")
    for i, (row, b) in enumerate(zip(inst.A_eq, inst.b_eq)):
        out.append(f" eq{i}: {_expr(row, inst.var_names)} = {b:.17g}")
    out.append("Bounds")
    for name, lo, hi in zip(inst.var_names, inst.lb, inst.ub):
        out.append(f" {lo:.17g} <= {name} <= {hi:.17g}")
    out.append("End")
    return "\n".join(out) + "\n"


def parse_lp_text(text: str) -> dict:
    """Read back the subset of LP text that :func:`to_lp_text` writes.

    Returns ``sense``, ``c``, ``A_ub``, ``b_ub``, ``A_eq``, ``b_eq``, ``bounds``
    and ``names`` in the form ``scipy.optimize.linprog`` expects (``>=`` rows
    are negated into ``<=`` rows).
    """
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("\\")]
    section = None
    objective = ""
    cons: list[tuple[str, str, float]] = []
    bounds: list[tuple[str, float, float]] = []
    sense = "min"
    for ln in lines:
        low = ln.lower()
        if low in ("minimize", "maximize"):
            sense = "min" if low == "minimize" else "max"
            section = "obj"
            continue
        if low == "subject to":
            section = "st"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low == "end":
            break
        if section == "obj":
            objective = ln.split(":", 1)[1]
        elif section == "st":
            body = ln.split(":", 1)[1]
            for op in ("<=", ">=", "="):
                if op in body:
                    lhs, rhs = body.split(op)
                    cons.append((lhs, op, float(rhs)))
                    break
        elif section == "bounds":
            lo, name, hi = ln.split("<=")
            bounds.append((name.strip(), float(lo), float(hi)))
    names = [b[0] for b in bounds]
    pos = {n: i for i, n in enumerate(names)}

    def parse_expr(expr: str) -> np.ndarray:
        v = np.zeros(len(names))
        toks = expr.split()
        for coef, name in zip(toks[0::2], toks[1::2]):
            v[pos[name]] += float(coef)
        return v

    c = parse_expr(objective)
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for lhs, op, rhs in cons:
        row = parse_expr(lhs)
        if op == "<=":
            A_ub.append(row)
            b_ub.append(rhs)
        elif op == ">=":
            A_ub.append(-row)
            b_ub.append(-rhs)
        else:
            A_eq.append(row)
            b_eq.append(rhs)
    n = len(names)
    return {
        "sense": sense,
        "c": c,
        "A_ub": np.array(A_ub).reshape(len(A_ub), n),
        "b_ub": np.array(b_ub),
        "A_eq": np.array(A_eq).reshape(len(A_eq), n),
        "b_eq": np.array(b_eq),
        "bounds": [(lo, hi) for _, lo, hi in bounds],
        "names": names,
    }
