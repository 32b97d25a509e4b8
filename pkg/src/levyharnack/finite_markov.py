"""Brute-force verification of the abstract Harnack consequences on finite
state spaces: minimal constants and their sup-oracle counterparts, the two
kernel inequalities implied by a Harnack bound, the hyperboundedness bound,
and the exact entropy-transport inequality.

Everything here standardizes on the multiplicative constant
``C(x, y) = e^{Psi(x, y)}``; conversions to the additive form happen at the
call sites that want it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass
class FiniteMarkov:
    """State count, stochastic matrix, strictly positive reference measure."""

    P: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        n = self.P.shape[0]
        if self.P.shape != (n, n) or self.mu.shape != (n,):
            raise ValueError("shape mismatch")
        if np.any(self.P < 0) or np.any(np.abs(self.P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("P must be row-stochastic")
        if np.any(self.mu <= 0) or abs(self.mu.sum() - 1.0) > 1e-12:
            raise ValueError("mu must be a strictly positive probability vector")

    @property
    def n(self) -> int:
        return len(self.mu)

    def invariant(self, tol: float = 1e-10) -> bool:
        return bool(np.max(np.abs(self.mu @ self.P - self.mu)) <= tol)


@dataclass
class PsiMatrix:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < 0) or np.any(np.diag(self.values) != 0.0):
            raise ValueError("Psi must be nonnegative with zero diagonal")


def kernel(fm: FiniteMarkov) -> np.ndarray:
    """``p(x, y) = P(x, y) / mu(y)`` so that ``Pf = sum_y p(., y) f(y) mu(y)``."""
    return fm.P / fm.mu[None, :]


def ratio_kernel(fm: FiniteMarkov, x: int, y: int) -> np.ndarray:
    """``p_{x,y}(z) = P(x, z) / P(y, z)``; ``inf`` where the rows are not
    absolutely continuous, with the convention 0/0 = 0."""
    px, py = fm.P[x], fm.P[y]
    out = np.zeros_like(px)
    pos = py > 0
    out[pos] = px[pos] / py[pos]
    out[(~pos) & (px > 0)] = math.inf
    return out


# ---------------------------------------------------------------------------
# minimal constants
# ---------------------------------------------------------------------------

def minimal_harnack_constant(fm: FiniteMarkov, x: int, y: int, p: float) -> float:
    """Least ``C`` with ``(Pf(x))^p <= C Pf^p(y)`` for all f >= 0:
    ``C = (P{p_{x,y}^{1/(p-1)}}(x))^{p-1}``; infinite when row x charges a
    state that row y does not."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    r = ratio_kernel(fm, x, y)
    if np.any(np.isinf(r) & (fm.P[x] > 0)):
        return math.inf
    mask = fm.P[x] > 0
    # log-space evaluation keeps the p -> 1 limit (ess-sup of the ratio)
    # representable: log C = (p-1) * logsumexp(log P(x,.) + log r / (p-1))
    log_val = logsumexp(np.log(fm.P[x, mask]) + np.log(r[mask]) / (p - 1.0))
    out = (p - 1.0) * float(log_val)
    return math.exp(out) if out < 709.0 else math.inf


def minimal_logharnack_constant(fm: FiniteMarkov, x: int, y: int) -> float:
    """Least additive ``Psi`` with ``P log f(x) <= log Pf(y) + Psi`` over
    f >= 1: the relative entropy ``P{log p_{x,y}}(x)``."""
    r = ratio_kernel(fm, x, y)
    mask = fm.P[x] > 0
    if np.any(np.isinf(r[mask])):
        return math.inf
    return float(np.sum(fm.P[x, mask] * np.log(r[mask])))


# ---------------------------------------------------------------------------
# sup oracles (independent maximization routes)
# ---------------------------------------------------------------------------

def harnack_sup_oracle(fm: FiniteMarkov, x: int, y: int, p: float,
                       restarts: int = 1000, iters: int = 250,
                       seed: int = 0) -> float:
    """``sup_{f >= 0} (Pf(x))^p / Pf^p(y)`` by multi-restart local ascent.

    The objective is scale-invariant, so ``f = exp([0, u])`` pins the first
    coordinate and L-BFGS maximizes over the remaining ``n - 1`` log values
    (analytic gradient); ``iters`` caps the inner iteration count."""
    from scipy.optimize import minimize

    rng = np.random.default_rng(seed)
    n = fm.n
    px, py = fm.P[x], fm.P[y]

    def neg_obj(u):
        f = np.exp(np.clip(np.concatenate([[0.0], u]), -200.0, 200.0))
        a = f @ px
        b = (f ** p) @ py
        val = p * math.log(a) - math.log(b)
        grad_f = p * (px / a - (f ** (p - 1.0)) * py / b)
        return -val, -(grad_f * f)[1:]

    best = -math.inf
    for _ in range(restarts):
        u0 = rng.normal(size=n - 1)
        res = minimize(neg_obj, u0, jac=True, method="L-BFGS-B",
                       options={"maxiter": iters, "ftol": 1e-14, "gtol": 1e-12})
        best = max(best, -float(res.fun))
    return math.exp(best)


def logharnack_sup_oracle(fm: FiniteMarkov, x: int, y: int,
                          restarts: int = 400, iters: int = 250,
                          scales=(1e2, 1e4, 1e6, 1e8), seed: int = 0) -> float:
    """``sup_{f >= 1} P log f(x) - log Pf(y)`` by ascent over directions of
    ``f = 1 + M v`` at growing scales M (the sup is approached, not
    attained)."""
    rng = np.random.default_rng(seed)
    n = fm.n
    px, py = fm.P[x], fm.P[y]
    best = -math.inf
    for M in scales:
        V = rng.dirichlet(np.ones(n), size=restarts)
        step = np.full(restarts, 0.5)

        def obj(V):
            return np.log1p(M * V) @ px - np.log1p(M * (V @ py))

        cur = obj(V)
        for _ in range(iters):
            grad_v = (M * px[None, :] / (1.0 + M * V)
                      - (M / (1.0 + M * (V @ py)))[:, None] * py[None, :])
            V_new = V * np.exp(np.clip(step[:, None] * grad_v, -60.0, 60.0))
            V_new /= V_new.sum(axis=1, keepdims=True)
            new = obj(V_new)
            better = new >= cur
            V = np.where(better[:, None], V_new, V)
            step = np.where(better, np.minimum(step * 1.1, 2.0), step * 0.5)
            cur = np.maximum(new, cur)
        best = max(best, float(np.max(cur)))
    return best


# ---------------------------------------------------------------------------
# kernel consequences of a Harnack bound
# ---------------------------------------------------------------------------

def check_kernel_bounds(fm: FiniteMarkov, psi: PsiMatrix, p: float) -> dict:
    """The two kernel inequalities implied by the power-p Harnack bound with
    constants ``e^{Psi}`` (convex power case):

    * ``sum_z p(x,z) (p(x,z)/p(y,z))^{1/p} mu(z) <= e^{Psi(x,y)/p}``
    * ``sum_z p(x,z) p(y,z) mu(z) >= e^{-Psi(x,y)}``

    Returns the worst signed slack of each (negative = violation).
    """
    n = fm.n
    worst5 = math.inf
    worst6 = math.inf
    k = kernel(fm)
    for x in range(n):
        for y in range(n):
            if x == y:
                continue
            r = ratio_kernel(fm, x, y)
            mask = fm.P[x] > 0
            if np.any(np.isinf(r[mask])):
                continue
            lhs5 = float(np.sum(fm.P[x, mask] * r[mask] ** (1.0 / p)))
            worst5 = min(worst5, math.exp(psi.values[x, y] / p) - lhs5)
            lhs6 = float(np.sum(k[x] * k[y] * fm.mu))
            worst6 = min(worst6, lhs6 - math.exp(-psi.values[x, y]))
    return {"power_mean_slack": worst5, "overlap_slack": worst6}


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------

def random_markov(n: int, rng: np.random.Generator) -> FiniteMarkov:
    """Rows from a flat Dirichlet; uniform reference measure."""
    P = rng.dirichlet(np.ones(n), size=n)
    return FiniteMarkov(P, np.full(n, 1.0 / n))


def random_reversible(n: int, rng: np.random.Generator) -> FiniteMarkov:
    """Reversible chain with a random invariant law: symmetric weights
    scaled by a symmetric Sinkhorn iteration so that ``P(x,y) =
    d_x S(x,y) d_y mu(y)`` is row-stochastic; detailed balance is then
    automatic."""
    mu = rng.dirichlet(np.full(n, 5.0))
    S = rng.random((n, n)) + 0.2
    S = 0.5 * (S + S.T)
    d = np.ones(n)
    for _ in range(500):
        row = S @ (d * mu)
        d_new = np.sqrt(d / row)
        if np.max(np.abs(d_new - d)) < 1e-15:
            d = d_new
            break
        d = d_new
    P = (d[:, None] * S * d[None, :]) * mu[None, :]
    P /= P.sum(axis=1, keepdims=True)  # remove the last 1e-16 drift
    return FiniteMarkov(P, mu)


# ---------------------------------------------------------------------------
# hyperboundedness
# ---------------------------------------------------------------------------

def hyperbound_check(fm: FiniteMarkov, psi: PsiMatrix, p: float, delta: float,
                     restarts: int = 200, iters: int = 300, seed: int = 0) -> dict:
    """``||P||_{p -> delta p}`` (by multi-restart projected ascent over
    ``f >= 0`` with ``||f||_p = 1``) against the closed-form majorant
    ``sum_x mu(x) / (sum_y e^{-Psi(x,y)} mu(y))^delta``."""
    if not (p > 1 and delta > 1):
        raise ValueError("need p > 1 and delta > 1")
    if not fm.invariant():
        raise ValueError("mu must be invariant for P")
    rng = np.random.default_rng(seed)
    n = fm.n
    dp = delta * p

    def norm_ratio(F):
        # callers keep ||f||_p = 1, so this is the p -> delta p norm ratio
        Pf = F @ fm.P.T
        return ((Pf ** dp) @ fm.mu) ** (1.0 / dp)

    F = np.abs(rng.normal(size=(restarts, n))) + 1e-3
    # deterministic starts: the constant function and near-point masses
    F[0] = 1.0
    for k in range(min(n, restarts - 1)):
        F[k + 1] = 1e-6
        F[k + 1, k] = 1.0
    F /= (((F ** p) @ fm.mu) ** (1.0 / p))[:, None]
    step = np.full(restarts, 0.3)
    cur = norm_ratio(F)
    for _ in range(iters):
        Pf = F @ fm.P.T
        base = ((Pf ** dp) @ fm.mu) ** (1.0 / dp - 1.0)
        grad = (base[:, None] * ((Pf ** (dp - 1.0)) * fm.mu[None, :]) @ fm.P)
        F_new = np.maximum(F + step[:, None] * grad, 1e-12)
        F_new /= (((F_new ** p) @ fm.mu) ** (1.0 / p))[:, None]
        new = norm_ratio(F_new)
        better = new >= cur
        F = np.where(better[:, None], F_new, F)
        step = np.where(better, np.minimum(step * 1.2, 2.0), step * 0.5)
        cur = np.maximum(new, cur)
    lhs = float(np.max(cur))
    rhs = float(np.sum(fm.mu / (np.exp(-psi.values) @ fm.mu) ** delta))
    return {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs}


# ---------------------------------------------------------------------------
# exact transport and the entropy-cost inequality
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _spanning_trees(m: int, n: int) -> tuple:
    """All spanning trees of the complete bipartite graph K_{m,n} as edge
    tuples ((i, j), ...); exhaustive over edge subsets of size m + n - 1."""
    edges = [(i, j) for i in range(m) for j in range(n)]
    need = m + n - 1
    trees = []
    for subset in itertools.combinations(range(len(edges)), need):
        parent = list(range(m + n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        ok = True
        for idx in subset:
            i, j = edges[idx]
            ra, rb = find(i), find(m + j)
            if ra == rb:
                ok = False
                break
            parent[ra] = rb
        if ok:
            trees.append(tuple(edges[idx] for idx in subset))
    return tuple(trees)


def _tree_flow(tree, supply, demand):
    """Unique conservation flow on a spanning tree by leaf stripping;
    returns None when some flow is negative beyond tolerance."""
    m, n = len(supply), len(demand)
    rem = np.concatenate([supply, -np.asarray(demand, dtype=float)])
    adj = {k: [] for k in range(m + n)}
    for e, (i, j) in enumerate(tree):
        adj[i].append((e, m + j))
        adj[m + j].append((e, i))
    deg = {k: len(v) for k, v in adj.items()}
    used = [False] * len(tree)
    flows = np.zeros(len(tree))
    stack = [k for k, dg in deg.items() if dg == 1]
    while stack:
        leaf = stack.pop()
        nxt = next(((e, o) for e, o in adj[leaf] if not used[e]), None)
        if nxt is None:
            continue
        e, other = nxt
        used[e] = True
        # flow from the row side to the column side
        f = rem[leaf] if leaf < m else -rem[leaf]
        flows[e] = f
        rem[other] += rem[leaf]
        rem[leaf] = 0.0
        deg[other] -= 1
        if deg[other] == 1:
            stack.append(other)
    if np.any(flows < -1e-12):
        return None
    return np.maximum(flows, 0.0)


def transport_cost(supply, demand, cost: np.ndarray) -> float:
    """Exact minimum-cost transport between two balanced nonnegative vectors
    by enumerating the basic feasible solutions (spanning-tree vertices) of
    the transportation polytope.  Exponential but immediate for n <= 5."""
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    if abs(supply.sum() - demand.sum()) > 1e-10:
        raise ValueError("transport sides must balance")
    m, n = len(supply), len(demand)
    if max(m, n) > 5:
        raise ValueError("exact enumeration supported up to 5 states")
    best = math.inf
    for tree in _spanning_trees(m, n):
        flows = _tree_flow(tree, supply, demand)
        if flows is None:
            continue
        c = sum(f * cost[i, j] for f, (i, j) in zip(flows, tree))
        best = min(best, c)
    return best


def adjoint_apply(fm: FiniteMarkov, f: np.ndarray) -> np.ndarray:
    """``P* f`` for the adjoint in L^2(mu): ``(P*f)(x) = sum_y P(y,x) mu(y)
    f(y) / mu(x)``."""
    return (fm.P.T @ (fm.mu * f)) / fm.mu


def entropy_cost_check(fm: FiniteMarkov, psi: PsiMatrix, f: np.ndarray) -> dict:
    """``int (P*f) log P*f dmu <= W_Psi(f mu, mu)`` for a density f w.r.t. mu
    (the transport cost is exact)."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0) or abs(float(f @ fm.mu) - 1.0) > 1e-10:
        raise ValueError("f must be a nonnegative density w.r.t. mu")
    if not fm.invariant():
        raise ValueError("mu must be invariant for P")
    pf = adjoint_apply(fm, f)
    ent = float(np.sum(np.where(pf > 0, pf * np.log(np.maximum(pf, 1e-300)), 0.0) * fm.mu))
    w = transport_cost(f * fm.mu, fm.mu, psi.values)
    return {"lhs": ent, "rhs": w, "slack": w - ent}


def minimal_psi_matrix(fm: FiniteMarkov, p: float = None) -> PsiMatrix:
    """Matrix of minimal constants: log of the power-p constants when p is
    given, otherwise the minimal additive log-Harnack constants."""
    n = fm.n
    out = np.zeros((n, n))
    for x in range(n):
        for y in range(n):
            if x == y:
                continue
            out[x, y] = (math.log(minimal_harnack_constant(fm, x, y, p))
                         if p is not None else
                         minimal_logharnack_constant(fm, x, y))
    return PsiMatrix(out)
