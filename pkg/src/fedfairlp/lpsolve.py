"""Dense two-phase tableau simplex for the fairness LPs.

The instance is rewritten as ``min c x`` with ``x >= 0``, ``<=`` rows (both
sides of every fairness row, region rows, box rows) and equality rows. Phase 1
minimizes the artificial mass; its dual solution doubles as a Farkas
certificate when the LP is infeasible. At an optimal basis the primal point is
recomputed from the tight constraints alone, so that two LPs sharing an optimal
vertex report bit-identical solutions regardless of their inactive rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Metric
from .lpbuild import LpInstance

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"

_PIVOT_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-8
    opt_tol: float = 1e-8
    max_iter: int = 50_000
    bland: bool = True

    def __post_init__(self) -> None:
        if not (self.feas_tol > 0 and self.opt_tol > 0):
            raise ValueError("solver tolerances must be positive")
        if self.max_iter <= 0:
            raise ValueError("max_iter must be positive")


@dataclass(eq=False)
class LpSolution:
    status: str
    x: np.ndarray
    z: np.ndarray
    objective_value: float
    accuracy_estimate: float
    iterations: int
    message: str = ""
    duals: np.ndarray | None = None  # one multiplier per standard-form row, min-form sign
    dual_gap: float = math.nan
    farkas: np.ndarray | None = None  # infeasibility certificate over standard-form rows
    row_labels: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass(eq=False)
class StandardForm:
    """``min c x  s.t.  G x <= h,  E x = e,  x >= 0`` with ``x`` shifted by ``lb``."""

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    E: np.ndarray
    e: np.ndarray
    shift: np.ndarray
    labels: list


def standard_form(inst: LpInstance) -> StandardForm:
    n = inst.num_vars
    lb, ub = inst.lb, inst.ub
    c = inst.c_vec if inst.sense == "min" else -inst.c_vec
    G_parts, h_parts, labels = [], [], []
    if inst.A_fair.shape[0]:
        G_parts += [inst.A_fair, -inst.A_fair]
        h_parts += [inst.b_fair, inst.b_fair]
        labels += [("fair_hi", i) for i in range(inst.A_fair.shape[0])]
        labels += [("fair_lo", i) for i in range(inst.A_fair.shape[0])]
    if inst.A_ub.shape[0]:
        G_parts.append(inst.A_ub)
        h_parts.append(inst.b_ub)
        labels += [("region", i) for i in range(inst.A_ub.shape[0])]
    finite = np.isfinite(ub)
    if finite.any():
        G_parts.append(np.eye(n)[finite])
        h_parts.append(ub[finite])
        labels += [("box", int(j)) for j in np.flatnonzero(finite)]
    G = np.vstack(G_parts) if G_parts else np.zeros((0, n))
    h = np.concatenate(h_parts) if h_parts else np.zeros(0)
    h = h - G @ lb
    e = inst.b_eq - inst.A_eq @ lb
    labels += [("eq", i) for i in range(inst.A_eq.shape[0])]
    return StandardForm(np.asarray(c, float), G, h, inst.A_eq, e, lb.astype(float), labels)


class _Tableau:
    """Row-reduced tableau ``[B^-1 M | B^-1 rhs]`` plus the basis index list."""

    def __init__(self, M: np.ndarray, rhs: np.ndarray, basis: list[int]):
        self.T = np.hstack([M, rhs[:, None]]).astype(np.float64)
        self.basis = list(basis)

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.flatnonzero(col)
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j


def _run_simplex(tab: _Tableau, cost: np.ndarray, allowed: np.ndarray, cfg: SolverConfig, budget: int):
    """Minimize ``cost`` over the tableau. Returns (status, iterations)."""
    it = 0
    while True:
        T = tab.T
        cb = cost[tab.basis]
        reduced = cost - cb @ T[:, :-1]
        reduced[~allowed] = 0.0
        reduced[tab.basis] = 0.0
        if cfg.bland:
            cand = np.flatnonzero(reduced < -cfg.opt_tol)
            if cand.size == 0:
                return OPTIMAL, it
            j = int(cand[0])
        else:
            j = int(np.argmin(reduced))
            if reduced[j] >= -cfg.opt_tol:
                return OPTIMAL, it
        if it >= budget:
            return NUMERICAL_FAILURE, it
        col = T[:, j]
        rows = np.flatnonzero(col > _PIVOT_TOL)
        if rows.size == 0:
            return "unbounded", it
        ratios = np.maximum(T[rows, -1], 0.0) / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, best)]
        r = int(min(ties, key=lambda i: tab.basis[i])) if len(ties) > 1 else int(ties[0])
        tab.pivot(r, j)
        it += 1
        if not np.isfinite(tab.T[r]).all():
            return NUMERICAL_FAILURE, it


def solve(inst: LpInstance, cfg: SolverConfig | None = None) -> LpSolution:
    cfg = cfg or SolverConfig()
    sf = standard_form(inst)
    n = inst.num_vars
    m_le, m_eq = sf.G.shape[0], sf.E.shape[0]
    m = m_le + m_eq
    A = np.vstack([sf.G, sf.E]) if m else np.zeros((0, n))
    rhs = np.concatenate([sf.h, sf.e])
    # Rows with negative right-hand side are negated; they and all equalities get artificials.
    sign = np.where(rhs < 0, -1.0, 1.0)
    needs_art = np.concatenate([sf.h < 0, np.ones(m_eq, dtype=bool)])
    art_rows = np.flatnonzero(needs_art)
    ncols = n + m_le + art_rows.size
    M = np.zeros((m, ncols))
    M[:, :n] = A * sign[:, None]
    M[np.arange(m_le), n + np.arange(m_le)] = sign[:m_le]
    M[art_rows, n + m_le + np.arange(art_rows.size)] = 1.0
    b = rhs * sign
    basis = []
    art_of_row = {int(r): n + m_le + k for k, r in enumerate(art_rows)}
    for i in range(m):
        basis.append(art_of_row[i] if i in art_of_row else n + i)
    tab = _Tableau(M, b, basis)
    iters = 0
    is_art = np.zeros(ncols, dtype=bool)
    is_art[n + m_le :] = True

    def fail(msg: str) -> LpSolution:
        x = _current_x(tab, n) + sf.shift
        return _finish(inst, NUMERICAL_FAILURE, x, iters, msg, sf.labels)

    if art_rows.size:
        cost1 = is_art.astype(float)
        status, k = _run_simplex(tab, cost1, np.ones(ncols, dtype=bool), cfg, cfg.max_iter)
        iters += k
        if status != OPTIMAL:
            return fail(f"phase 1 stopped: {status}")
        infeas = float(tab.T[:, -1] @ cost1[tab.basis])
        if infeas > cfg.feas_tol:
            y = _duals(M, cost1, tab.basis)
            farkas = -y * sign  # multipliers for the unsigned rows [G; E]
            sol = _finish(inst, INFEASIBLE, _current_x(tab, n) + sf.shift, iters,
                          f"phase 1 residual {infeas:.3e}", sf.labels)
            sol.farkas = farkas
            return sol
        # Drive zero-level artificials out of the basis; drop redundant rows.
        keep = np.ones(tab.T.shape[0], dtype=bool)
        for r in range(tab.T.shape[0]):
            if is_art[tab.basis[r]]:
                row = tab.T[r, : n + m_le]
                j = int(np.argmax(np.abs(row)))
                if abs(row[j]) > 1e-7:
                    tab.T[r, -1] = 0.0  # artificial level is within tolerance of zero
                    tab.pivot(r, j)
                else:
                    keep[r] = False
        if not keep.all():
            tab.T = tab.T[keep]
            tab.basis = [bidx for bidx, k in zip(tab.basis, keep) if k]
            M = M[keep]
            b = b[keep]
            sign = sign[keep]
        kept_rows = np.flatnonzero(keep)
    else:
        kept_rows = np.arange(m)

    cost2 = np.zeros(ncols)
    cost2[:n] = sf.c
    allowed = ~is_art
    status, k = _run_simplex(tab, cost2, allowed, cfg, cfg.max_iter - iters)
    iters += k
    if status != OPTIMAL:
        return fail(f"phase 2 stopped: {status}")

    x = _polish(M, b, tab.basis, n, ncols, is_art)
    if x is None:
        x = _current_x(tab, n)
    x = x + sf.shift
    sol = _finish(inst, OPTIMAL, x, iters, "", sf.labels)
    y_kept = _duals(M, cost2, tab.basis)
    y = np.zeros(m)
    y[kept_rows] = y_kept * sign
    sol.duals = y
    xs = x - sf.shift
    sol.dual_gap = abs(float(sf.c @ xs) - float(y @ rhs))
    viol = max_violation(inst, x)
    if viol > cfg.feas_tol:
        sol.status = NUMERICAL_FAILURE
        sol.message = f"optimal basis violates constraints by {viol:.3e}"
    return sol


def _current_x(tab: _Tableau, n: int) -> np.ndarray:
    x = np.zeros(n)
    for r, j in enumerate(tab.basis):
        if j < n:
            x[j] = tab.T[r, -1]
    return np.maximum(x, 0.0)


def _duals(M: np.ndarray, cost: np.ndarray, basis: list[int]) -> np.ndarray:
    B = M[:, basis]
    try:
        return np.linalg.solve(B.T, cost[basis])
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(B.T, cost[basis], rcond=None)[0]


def _polish(M, b, basis, n, ncols, is_art) -> np.ndarray | None:
    """Solve for ``x`` from the constraints made tight by the nonbasic columns."""
    in_basis = np.zeros(ncols, dtype=bool)
    in_basis[basis] = True
    rows, rhs = [], []
    for j in range(n):
        if not in_basis[j]:
            r = np.zeros(n)
            r[j] = 1.0
            rows.append(r)
            rhs.append(0.0)
    for i in range(M.shape[0]):
        slack_cols = np.flatnonzero(M[i, n:] != 0) + n
        slack_cols = [s for s in slack_cols if not is_art[s]]
        if not slack_cols or not in_basis[slack_cols[0]]:
            rows.append(M[i, :n])
            rhs.append(b[i])
    if len(rows) != n:
        return None
    S = np.array(rows)
    try:
        x = np.linalg.solve(S, np.array(rhs))
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(x)):
        return None
    return np.where(np.abs(x) < 1e-13, 0.0, x)


def _finish(inst: LpInstance, status: str, x: np.ndarray, iters: int, msg: str, labels) -> LpSolution:
    obj = math.fsum(inst.c_vec * x)
    acc = obj if inst.metric == Metric.STATISTICAL_PARITY else -obj
    return LpSolution(
        status=status,
        x=x,
        z=x[: inst.num_z].copy(),
        objective_value=obj,
        accuracy_estimate=acc,
        iterations=iters,
        message=msg,
        row_labels=list(labels),
    )


def max_violation(inst: LpInstance, x: np.ndarray) -> float:
    """Largest constraint violation of ``x``, computed from the instance alone."""
    v = [0.0]
    if inst.A_fair.shape[0]:
        v.append(float(np.max(np.abs(inst.A_fair @ x) - inst.b_fair)))
    if inst.A_ub.shape[0]:
        v.append(float(np.max(inst.A_ub @ x - inst.b_ub)))
    if inst.A_eq.shape[0]:
        v.append(float(np.max(np.abs(inst.A_eq @ x - inst.b_eq))))
    v.append(float(np.max(inst.lb - x)))
    v.append(float(np.max(x - inst.ub)))
    return max(v)


def check_farkas(inst: LpInstance, y: np.ndarray, tol: float = 1e-9) -> bool:
    """``y >= 0`` on inequality rows, ``y^T [G; E] >= 0`` and ``y^T [h; e] < 0``
    together prove the standard form (hence the instance) infeasible."""
    sf = standard_form(inst)
    m_le = sf.G.shape[0]
    A = np.vstack([sf.G, sf.E])
    rhs = np.concatenate([sf.h, sf.e])
    if np.any(y[:m_le] < -tol):
        return False
    return bool(np.all(A.T @ y >= -tol) and y @ rhs < -tol)
