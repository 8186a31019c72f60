"""Brute-force certifiers on tiny discrete instances.

Everything here is computed straight from the joint probability table
``P[x, a, c, y]``; nothing is shared with the LP builder except the result
types used for comparison.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from .core import FairnessSpec, Metric, RngStream
from .lpbuild import AggregatedParams, params_from_tables
from .scorefn import DiscreteSyntheticSpec

MAX_PREDICTORS = 1_000_000


@dataclass(frozen=True, eq=False)
class DiscreteInstance:
    """Exact joint table ``joint[x, a, c-1, y-1] = Pr(X=x, A=a, C=c, Y=y)``."""

    joint: np.ndarray

    def __post_init__(self) -> None:
        P = np.asarray(self.joint, dtype=np.float64)
        if P.ndim != 4 or P.shape[1] != 2:
            raise ValueError("joint table must have shape (M, 2, K, N)")
        M, _, K, N = P.shape
        if M > 8 or N > 3 or K > 2 or N < 2:
            raise ValueError("discrete instances are limited to |X| <= 8, 2 <= N <= 3, K <= 2")
        if np.any(P < 0) or abs(P.sum() - 1.0) > 1e-12:
            raise ValueError("joint table must be a probability distribution")
        object.__setattr__(self, "joint", P)

    @property
    def M(self) -> int:
        return self.joint.shape[0]

    @property
    def K(self) -> int:
        return self.joint.shape[2]

    @property
    def N(self) -> int:
        return self.joint.shape[3]

    @property
    def posterior(self) -> np.ndarray:
        """``R[x, a, c-1, y-1]``; uniform where the conditioning event is null."""
        tot = self.joint.sum(axis=3, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            R = np.where(tot > 0, self.joint / np.where(tot > 0, tot, 1.0), 1.0 / self.N)
        return R

    @property
    def base(self) -> np.ndarray:
        """``base[y-1, a, c-1] = Pr(Y=y, A=a, C=c)``."""
        return self.joint.sum(axis=0).transpose(2, 0, 1)

    @classmethod
    def from_spec(cls, spec: DiscreteSyntheticSpec) -> "DiscreteInstance":
        table = np.asarray(spec.feature_table, dtype=np.float64)  # [y, a, x]
        prior = np.asarray(spec.class_prior, dtype=np.float64)  # [c, a, y]
        prop = np.asarray(spec.sensitive_proportion, dtype=np.float64)
        K = prior.shape[0]
        n = np.broadcast_to(np.asarray(spec.samples_per_client, dtype=np.float64), (K,))
        pc = n / n.sum()
        pa = np.stack([1 - prop, prop], axis=1)  # [c, a]
        # P[x, a, c, y] = p(c) p(a|c) p(y|a,c) p(x|y,a)
        P = np.einsum("c,ca,cay,yax->xacy", pc, pa, prior, table)
        return cls(P)

    @classmethod
    def random(cls, rng: RngStream, M: int, N: int, K: int, sharpness: float = 1.0) -> "DiscreteInstance":
        g = rng.generator()
        P = g.gamma(sharpness, size=(M, 2, K, N))
        return cls(P / P.sum())


def derived_table(inst: DiscreteInstance, theta) -> np.ndarray:
    """``h[x, a, c-1]`` = argmax of theta-weighted posteriors, lowest class on ties."""
    theta = np.asarray(theta, dtype=np.float64)
    return np.argmax(inst.posterior * theta, axis=3) + 1


def tp_of_table(inst: DiscreteInstance, h: np.ndarray) -> np.ndarray:
    """Exact ``TP[y-1, a, c-1]`` of a deterministic table ``h[x, a, c-1]``."""
    N = inst.N
    onehot = (h[..., None] == np.arange(1, N + 1)).astype(np.float64)
    return tp_of_randomized(inst, onehot)


def tp_of_randomized(inst: DiscreteInstance, q: np.ndarray) -> np.ndarray:
    """Exact TP of a randomized table ``q[x, a, c-1, y-1] = Pr(out=y | x, a, c)``."""
    hit = (inst.joint * q).sum(axis=0).transpose(2, 0, 1)
    base = inst.base
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(base > 0, hit / np.where(base > 0, base, 1.0), 1.0)


def mixture_table(inst: DiscreteInstance, beta: dict[tuple[int, int], np.ndarray]) -> np.ndarray:
    """Randomized table of the argmax/constant-class mixture ``beta[(a, c)]``."""
    N = inst.N
    h1 = derived_table(inst, np.ones(N))
    q = np.zeros(inst.joint.shape)
    for (a, c), b in beta.items():
        b = np.asarray(b, dtype=np.float64)
        q[:, a, c - 1, :] = b[1:][None, :]
        q[np.arange(inst.M), a, c - 1, h1[:, a, c - 1] - 1] += b[0]
    return q


def exact_params(inst: DiscreteInstance) -> AggregatedParams:
    """LP inputs computed directly from the joint table."""
    h1 = derived_table(inst, np.ones(inst.N))
    tp1 = tp_of_table(inst, h1)
    onehot = (h1[..., None] == np.arange(1, inst.N + 1)).astype(np.float64)  # [x, a, c, j]
    sp_u = np.einsum("xacy,xacj->yjac", inst.joint, onehot)
    return params_from_tables(inst.base, tp1, sp_u)


def exact_disparities(inst: DiscreteInstance, q: np.ndarray, metric: Metric | str) -> dict:
    """Accuracy and global/local disparities of a randomized table, from definitions."""
    metric = Metric.parse(metric)
    P = inst.joint
    N, K = inst.N, inst.K
    acc = float(sum((P[..., y] * q[..., y]).sum() for y in range(N)))
    classes = [0] if metric == Metric.EQUAL_OPPORTUNITY else list(range(N))
    glob = np.full(N, math.nan)
    loc = np.full((K, N), math.nan)
    if metric == Metric.STATISTICAL_PARITY:
        out = np.einsum("xacy,xacj->jac", P, q)  # Pr(out=j, a, c)
        mass = P.sum(axis=(0, 3))  # [a, c]
        for j in range(N):
            ga = out[j].sum(axis=1) / mass.sum(axis=1)
            glob[j] = abs(ga[0] - ga[1])
            for c in range(K):
                loc[c, j] = abs(out[j, 0, c] / mass[0, c] - out[j, 1, c] / mass[1, c])
    else:
        hit = (P * q).sum(axis=0)  # [a, c, y]
        base = P.sum(axis=0)
        for y in classes:
            ga = hit[:, :, y].sum(axis=1) / base[:, :, y].sum(axis=1)
            glob[y] = abs(ga[0] - ga[1])
            for c in range(K):
                if base[0, c, y] > 0 and base[1, c, y] > 0:
                    loc[c, y] = abs(hit[0, c, y] / base[0, c, y] - hit[1, c, y] / base[1, c, y])
    return {"accuracy": acc, "global": glob, "local": loc}


# -- enumeration --------------------------------------------------------------------


def enumerate_cell_predictors(inst: DiscreteInstance, a: int, c: int) -> tuple[np.ndarray, np.ndarray]:
    """All maps ``X -> Y`` for one (a, c) cell and their exact TP vectors."""
    M, N = inst.M, inst.N
    tables = np.array(list(itertools.product(range(1, N + 1), repeat=M)), dtype=np.int64)
    P = inst.joint[:, a, c - 1, :]  # [x, y]
    base = P.sum(axis=0)
    hit = np.zeros((tables.shape[0], N))
    for y in range(N):
        hit[:, y] = ((tables == y + 1) * P[:, y]).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        tp = np.where(base > 0, hit / np.where(base > 0, base, 1.0), 1.0)
    return tables, tp


def enumerate_deterministic_predictors(inst: DiscreteInstance, limit: int = MAX_PREDICTORS):
    """Every map ``X x A x C -> Y`` as ``(table[x, a, c-1], TP[y-1, a, c-1])``."""
    count = inst.N ** (inst.M * 2 * inst.K)
    if count > limit:
        raise ValueError(f"{count} predictors exceed the enumeration bound {limit}")
    cells = [(a, c) for c in range(1, inst.K + 1) for a in (0, 1)]
    per_cell = [enumerate_cell_predictors(inst, a, c) for a, c in cells]
    out = []
    for combo in itertools.product(*[range(t.shape[0]) for t, _ in per_cell]):
        table = np.zeros((inst.M, 2, inst.K), dtype=np.int64)
        tp = np.zeros((inst.N, 2, inst.K))
        for (a, c), (tabs, tps), i in zip(cells, per_cell, combo):
            table[:, a, c - 1] = tabs[i]
            tp[:, a, c - 1] = tps[i]
        out.append((table, tp))
    return out


def theta_grid(N: int, count: int = 200, seed: int = 0) -> np.ndarray:
    """Deterministic nonnegative weight vectors: quarter-circle for N=2,
    unit vectors, ones and seeded Dirichlet draws otherwise."""
    if N == 2:
        ang = np.linspace(0.0, np.pi / 2, count)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    fixed = [np.eye(N)[i] for i in range(N)] + [np.ones(N)]
    g = RngStream(seed, "oracle/theta").generator()
    rest = g.dirichlet(np.ones(N), size=count - len(fixed))
    return np.vstack([np.array(fixed), rest])


@dataclass
class OracleReport:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    lines: list[str] = field(default_factory=list)


def region_check(inst: DiscreteInstance, thetas: np.ndarray | None = None, tol: float = 1e-9) -> OracleReport:
    """Every deterministic TP vector satisfies ``v_theta . TP <= v_theta . TP(derived_theta)``
    with ``v_theta[y] = theta_y Pr(Y=y | a, c)``."""
    thetas = theta_grid(inst.N) if thetas is None else np.asarray(thetas)
    worst = -math.inf
    checked = 0
    base = inst.base
    for c in range(1, inst.K + 1):
        for a in (0, 1):
            _, tps = enumerate_cell_predictors(inst, a, c)
            cond = base[:, a, c - 1] / base[:, a, c - 1].sum()
            for th in thetas:
                v = th * cond
                ref = tp_of_table(inst, derived_table(inst, th))[:, a, c - 1]
                excess = float(np.max(tps @ v - v @ ref))
                worst = max(worst, excess)
                checked += tps.shape[0]
    ok = worst <= tol
    return OracleReport(
        "region", ok, {"worst_excess": worst, "checked": checked, "thetas": len(thetas)},
        [f"region: {checked} (predictor, theta) pairs, worst excess {worst:.3e} -> {'pass' if ok else 'FAIL'}"],
    )


def _fractions(arr: np.ndarray) -> np.ndarray:
    return np.vectorize(Fraction, otypes=[object])(arr)


def convexity_check(inst: DiscreteInstance, pairs: int = 200, seed: int = 0) -> OracleReport:
    """The 50/50 mixture of two deterministic predictors has exactly the
    midpoint TP vector (rational arithmetic on the float table entries)."""
    g = RngStream(seed, "oracle/convexity").generator()
    P = _fractions(inst.joint)
    fails = 0
    half = Fraction(1, 2)
    for c in range(1, inst.K + 1):
        for a in (0, 1):
            tables, _ = enumerate_cell_predictors(inst, a, c)
            Pc = P[:, a, c - 1, :]
            base = [sum(Pc[:, y]) for y in range(inst.N)]
            for _ in range(pairs):
                i, j = g.integers(0, tables.shape[0], size=2)
                h1, h2 = tables[i], tables[j]
                for y in range(inst.N):
                    if base[y] == 0:
                        continue
                    t1 = sum(Pc[x, y] for x in range(inst.M) if h1[x] == y + 1) / base[y]
                    t2 = sum(Pc[x, y] for x in range(inst.M) if h2[x] == y + 1) / base[y]
                    mix = sum(Pc[x, y] * (half * (h1[x] == y + 1) + half * (h2[x] == y + 1)) for x in range(inst.M)) / base[y]
                    if mix != (t1 + t2) / 2:
                        fails += 1
    ok = fails == 0
    return OracleReport("convexity", ok, {"failures": fails}, [f"convexity: {fails} midpoint mismatches -> {'pass' if ok else 'FAIL'}"])


def is_derived(inst: DiscreteInstance, a: int, c: int, table: np.ndarray, tol: float = 1e-12) -> bool:
    """Whether some theta >= 0 (summing to 1) makes ``table`` a weighted argmax
    on every feature value with positive mass."""
    N = inst.N
    R = inst.posterior[:, a, c - 1, :]
    mass = inst.joint[:, a, c - 1, :].sum(axis=1)
    rows = []
    for x in range(inst.M):
        if mass[x] <= 0:
            continue
        h = table[x] - 1
        for y in range(N):
            if y != h:
                r = np.zeros(N)
                r[y] = R[x, y]
                r[h] -= R[x, h]
                rows.append(r)  # theta_y r_y - theta_h r_h <= 0
    if not rows:
        return True
    res = linprog(
        np.zeros(N), A_ub=np.array(rows), b_ub=np.full(len(rows), tol),
        A_eq=np.ones((1, N)), b_eq=[1.0], bounds=[(0, None)] * N, method="highs",
    )
    return res.status == 0


def _max_last(points: np.ndarray, phi: np.ndarray):
    """max TP_N over conv(points) with TP_g = phi_g for g < N."""
    n, N = points.shape
    A_eq = np.vstack([points[:, : N - 1].T, np.ones((1, n))])
    b_eq = np.concatenate([phi, [1.0]])
    res = linprog(-points[:, N - 1], A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * n, method="highs")
    if res.status != 0:
        return None, None
    return -res.fun, res.x


def frontier_check(inst: DiscreteInstance, samples: int = 20, seed: int = 0, tol: float = 1e-6) -> OracleReport:
    """For attainable ``phi``, the best ``TP_N`` over all randomized predictors is
    matched by mixtures of derived predictors alone."""
    g = RngStream(seed, "oracle/frontier").generator()
    worst_gap = 0.0
    max_support = 0
    infeasible_ok = True
    lines = []
    N = inst.N
    for c in range(1, inst.K + 1):
        for a in (0, 1):
            tables, tps = enumerate_cell_predictors(inst, a, c)
            derived = np.array([is_derived(inst, a, c, t) for t in tables])
            dpts = tps[derived]
            h1 = derived_table(inst, np.ones(N))[:, a, c - 1]
            tp1 = tp_of_table(inst, derived_table(inst, np.ones(N)))[:, a, c - 1]
            phis = [tp1[: N - 1]]
            for _ in range(samples):
                w = g.dirichlet(np.ones(min(3, tps.shape[0])))
                idx = g.choice(tps.shape[0], size=w.size, replace=False)
                phis.append(w @ tps[idx, : N - 1])
            for phi in phis:
                v_all, _ = _max_last(tps, phi)
                v_der, wts = _max_last(dpts, phi)
                if v_all is None or v_der is None:
                    worst_gap = math.inf
                    continue
                worst_gap = max(worst_gap, abs(v_all - v_der))
                max_support = max(max_support, int(np.sum(wts > 1e-9)))
            # phi beyond every attainable value is reported infeasible by both searches
            v_bad, _ = _max_last(tps, np.full(N - 1, 1.0 + 1e-3))
            infeasible_ok &= v_bad is None
            lines.append(f"frontier a={a} c={c}: {int(derived.sum())}/{len(tables)} derived maps, argmax map derived: {bool(is_derived(inst, a, c, h1))}")
    ok = worst_gap <= tol and infeasible_ok
    lines.append(f"frontier: worst gap {worst_gap:.3e}, largest derived support {max_support} -> {'pass' if ok else 'FAIL'}")
    return OracleReport("frontier", ok, {"worst_gap": worst_gap, "max_support": max_support, "infeasible_detected": infeasible_ok}, lines)


# -- grid search over mixing weights ------------------------------------------------


def simplex_grid(dim: int, step: float) -> np.ndarray:
    """All points of the probability simplex in R^dim with coordinates on ``step``."""
    m = int(round(1.0 / step))
    if abs(m * step - 1.0) > 1e-12:
        raise ValueError("step must divide 1")
    pts = [
        comp
        for comp in itertools.product(range(m + 1), repeat=dim - 1)
        if sum(comp) <= m
    ]
    arr = np.array([list(p) + [m - sum(p)] for p in pts], dtype=np.float64)
    return arr / m


@dataclass
class BruteForceResult:
    accuracy: float
    beta: dict[tuple[int, int], np.ndarray] | None
    candidates: int


def bruteforce_fair_optimum(inst: DiscreteInstance, spec: FairnessSpec, step: float = 0.02) -> BruteForceResult:
    """Best accuracy over per-cell grid mixtures of the argmax map with constant
    classes, subject to the EO/EOp bounds in ``spec`` evaluated exactly."""
    if spec.metric == Metric.STATISTICAL_PARITY:
        raise ValueError("grid search covers the equalized-odds family only")
    N, K = inst.N, inst.K
    if len(spec.eps_local) != K:
        raise ValueError("spec does not match the instance's client count")
    cls = [0] if spec.metric == Metric.EQUAL_OPPORTUNITY else list(range(N))
    grid = simplex_grid(N + 1, step)
    tp1 = tp_of_table(inst, derived_table(inst, np.ones(N)))
    base = inst.base  # [y, a, c]
    alpha = base.sum(axis=2)
    slack = 1e-12
    per_client = []
    for c in range(K):
        T = [grid[:, :1] * tp1[:, a, c] + grid[:, 1:] for a in (0, 1)]  # (G, N)
        acc = [T[a] @ base[:, a, c] for a in (0, 1)]
        w = [base[cls, a, c] / alpha[cls, a] for a in (0, 1)]
        diff = T[0][:, None, cls] - T[1][None, :, cls]  # (G, G, m)
        ok = np.all(np.abs(diff) <= spec.eps_local[c] + slack, axis=2)
        i, j = np.nonzero(ok)
        d = w[0] * T[0][i][:, cls] - w[1] * T[1][j][:, cls]
        order = np.argsort(-(acc[0][i] + acc[1][j]), kind="stable")
        per_client.append((i[order], j[order], (acc[0][i] + acc[1][j])[order], d[order]))
    eps0 = spec.eps_global + slack
    candidates = sum(len(p[2]) for p in per_client)

    def witness(choice):
        return {(a, c + 1): grid[choice[c][a]] for c in range(K) for a in (0, 1)}

    if K == 1:
        i, j, acc, d = per_client[0]
        feas = np.flatnonzero(np.all(np.abs(d) <= eps0, axis=1))
        if feas.size == 0:
            return BruteForceResult(-math.inf, None, candidates)
        k = feas[0]
        return BruteForceResult(float(acc[k]), witness([(i[k], j[k])]), candidates)
    (i1, j1, a1, d1), (i2, j2, a2, d2) = per_client
    if a1.size == 0 or a2.size == 0:
        return BruteForceResult(-math.inf, None, candidates)
    best, k, m = _combine_clients(a1, d1, a2, d2, eps0)
    if k is None:
        return BruteForceResult(-math.inf, None, candidates)
    return BruteForceResult(float(best), witness([(i1[k], j1[k]), (i2[m], j2[m])]), candidates)


def _bins(e: np.ndarray, lo: np.ndarray, width: float) -> dict[tuple, np.ndarray]:
    idx = np.floor((e - lo) / width).astype(np.int64)
    keys, inv = np.unique(idx, axis=0, return_inverse=True)
    inv = np.asarray(inv).reshape(-1)
    order = np.argsort(inv, kind="stable")
    splits = np.searchsorted(inv[order], np.arange(1, len(keys)))
    return {tuple(int(v) for v in key): grp for key, grp in zip(keys, np.split(order, splits))}


def _pair_search(a1, e1, g1, a2, e2, g2, eps, best, arg, rows=128, cols=8192):
    """Blockwise search of one bin pair; both index lists run by decreasing accuracy."""
    A2 = a2[g2]
    for s in range(0, g1.size, rows):
        blk = g1[s : s + rows]
        if a1[blk[0]] + A2[0] <= best:
            break
        for t in range(0, g2.size, cols):
            if a1[blk[0]] + A2[t] <= best:
                break
            sub = g2[t : t + cols]
            feas = np.all(np.abs(e1[blk][:, None, :] - e2[sub][None, :, :]) <= eps, axis=2)
            if not feas.any():
                continue
            vals = np.where(feas, a1[blk][:, None] + a2[sub][None, :], -np.inf)
            r, col = np.unravel_index(int(np.argmax(vals)), vals.shape)
            v = float(vals[r, col])
            cand = (int(blk[r]), int(sub[col]))
            if v > best or (v == best and (arg[0] is None or cand < arg)):
                best, arg = v, cand
    return best, arg


def _combine_clients(a1, d1, a2, d2, eps: float):
    """max a1[k] + a2[m] subject to |d1[k] + d2[m]| <= eps componentwise.

    Inputs are sorted by decreasing accuracy. Both sides are bucketed by the
    constrained quantity in bins at least ``eps`` wide, so compatible points
    sit in neighbouring bins; bin pairs are visited by decreasing upper bound.
    """
    e1, e2 = d1, -d2  # feasible iff |e1 - e2| <= eps
    lo = np.minimum(e1.min(axis=0), e2.min(axis=0))
    span = float(np.max(np.maximum(e1.max(axis=0), e2.max(axis=0)) - lo))
    width = max(eps, span / 256.0, 1e-12)
    b1, b2 = _bins(e1, lo, width), _bins(e2, lo, width)
    top2 = {key: a2[g].max() for key, g in b2.items()}
    offsets = list(itertools.product((-1, 0, 1), repeat=e1.shape[1]))
    pairs = []
    for key, g in b1.items():
        t1 = a1[g].max()
        for off in offsets:
            nb = tuple(k + o for k, o in zip(key, off))
            if nb in top2:
                pairs.append((-(t1 + top2[nb]), key, nb))
    pairs.sort()
    best, arg = -math.inf, (None, None)
    for neg_ub, key, nb in pairs:
        if -neg_ub <= best:
            break
        g1 = b1[key]  # ascending index == descending accuracy
        g2 = b2[nb]
        g1 = g1[a1[g1] + a2[g2[0]] > best]
        g2 = g2[a2[g2] + a1[g1[0]] > best] if g1.size else g2[:0]
        if g1.size == 0 or g2.size == 0:
            continue
        best, arg = _pair_search(a1, e1, g1, a2, e2, g2, eps, best, arg)
    return best, arg[0], arg[1]


def unrestricted_optimum(inst: DiscreteInstance, spec: FairnessSpec) -> float:
    """Best accuracy over all randomized predictors (mixtures of every
    deterministic cell map) under the EO/EOp bounds; informational only."""
    N, K = inst.N, inst.K
    cls = [0] if spec.metric == Metric.EQUAL_OPPORTUNITY else list(range(N))
    base = inst.base
    alpha = base.sum(axis=2)
    cells = [(a, c) for c in range(1, K + 1) for a in (0, 1)]
    pts = [enumerate_cell_predictors(inst, a, c)[1] for a, c in cells]
    sizes = [p.shape[0] for p in pts]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    nv = offs[-1]
    cost = np.zeros(nv)
    for k, (a, c) in enumerate(cells):
        cost[offs[k] : offs[k + 1]] = -(pts[k] @ base[:, a, c - 1])
    A_eq = np.zeros((len(cells), nv))
    for k in range(len(cells)):
        A_eq[k, offs[k] : offs[k + 1]] = 1.0
    rows, b = [], []
    for y in cls:
        g = np.zeros(nv)
        for k, (a, c) in enumerate(cells):
            sgn = 1.0 if a == 0 else -1.0
            g[offs[k] : offs[k + 1]] = sgn * base[y, a, c - 1] / alpha[y, a] * pts[k][:, y]
        rows += [g, -g]
        b += [spec.eps_global] * 2
        for c in range(1, K + 1):
            l = np.zeros(nv)
            k0, k1 = cells.index((0, c)), cells.index((1, c))
            l[offs[k0] : offs[k0 + 1]] = pts[k0][:, y]
            l[offs[k1] : offs[k1 + 1]] = -pts[k1][:, y]
            rows += [l, -l]
            b += [spec.eps_local[c - 1]] * 2
    res = linprog(cost, A_ub=np.array(rows), b_ub=np.array(b), A_eq=A_eq, b_eq=np.ones(len(cells)),
                  bounds=[(0, None)] * nv, method="highs")
    return -res.fun if res.status == 0 else -math.inf


# -- built-in suites ----------------------------------------------------------------


def builtin_instances() -> list[DiscreteInstance]:
    out = []
    for k, (M, N, K) in enumerate([(3, 2, 1), (4, 2, 2), (3, 3, 1), (5, 2, 2), (2, 3, 2)]):
        out.append(DiscreteInstance.random(RngStream(100 + k, "oracle/instances"), M, N, K))
    return out


def run_suite(name: str) -> list[OracleReport]:
    from .lpbuild import build_lp_auto
    from .lpsolve import solve

    if name == "region":
        reps = []
        for inst in builtin_instances():
            reps.append(region_check(inst))
            reps.append(convexity_check(inst, pairs=50))
        return reps
    if name == "frontier":
        return [frontier_check(inst, samples=10) for inst in builtin_instances()]
    if name == "lp":
        reps = []
        for k in range(3):
            inst = DiscreteInstance.random(RngStream(200 + k, "oracle/lp"), 4, 2, 2)
            for eg, el in [(1.0, 1.0), (0.1, 0.1), (0.05, 0.2)]:
                spec = FairnessSpec.uniform(Metric.EQUALIZED_ODDS, eg, el, 2)
                lp = solve(build_lp_auto(exact_params(inst), spec))
                bf = bruteforce_fair_optimum(inst, spec)
                ok = lp.optimal and bf.accuracy <= lp.accuracy_estimate + 1e-6 and lp.accuracy_estimate <= bf.accuracy + 0.04
                reps.append(OracleReport(
                    "lp", ok, {"lp": lp.accuracy_estimate, "grid": bf.accuracy},
                    [f"lp instance {k} eps=({eg}, {el}): LP {lp.accuracy_estimate:.6f} grid {bf.accuracy:.6f} -> {'pass' if ok else 'FAIL'}"],
                ))
        return reps
    raise ValueError(f"unknown oracle suite {name!r}")
