"""Deterministic linear flow ``dT/dt = A_t T`` and the derived matrices.

Constant coefficients get closed forms (scaling-and-squaring matrix
exponential via scipy for general matrices, plain scalar/diagonal
exponentials otherwise, which also unlock vectorized per-atom evaluation in
the samplers).  Time-dependent coefficients are integrated with fixed-step
RK4 whose step is halved until the result moves by less than 1e-9.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import expm


MatrixLike = Union[float, np.ndarray, Callable[[float], np.ndarray]]


def _classify(m: MatrixLike, dim: int):
    """Return (kind, payload): kind in {zero, scalar, diag, matrix, callable}."""
    if callable(m):
        return "callable", m
    m = np.asarray(m, dtype=float)
    if m.ndim == 0:
        return ("zero", None) if float(m) == 0.0 else ("scalar", float(m))
    if m.ndim == 1:
        if m.shape != (dim,):
            raise ValueError("diagonal spec has wrong length")
        return "diag", m.copy()
    if m.shape != (dim, dim):
        raise ValueError("matrix spec has wrong shape")
    if np.allclose(m, 0.0):
        return "zero", None
    if np.allclose(m, np.diag(np.diag(m))):
        d = np.diag(m).copy()
        return ("scalar", float(d[0])) if np.allclose(d, d[0]) else ("diag", d)
    return "matrix", m.copy()


@dataclass
class FlowSpec:
    """Coefficient pair ``(A_t, sigma_t)`` plus the scalar envelopes
    ``A_s <= alpha_bound * I`` and ``||sigma_s^{-1}|| <= lambda_bound``."""

    dim: int
    A: MatrixLike = 0.0
    sigma: MatrixLike = 1.0
    alpha_bound: Optional[float] = None
    lambda_bound: Optional[float] = None
    rk_steps: int = 4096
    _a_kind: str = field(init=False, repr=False)
    _a_val: object = field(init=False, repr=False)
    _s_kind: str = field(init=False, repr=False)
    _s_val: object = field(init=False, repr=False)

    def __post_init__(self):
        self._a_kind, self._a_val = _classify(self.A, self.dim)
        self._s_kind, self._s_val = _classify(self.sigma, self.dim)
        if self._s_kind == "zero":
            raise ValueError("sigma must be invertible")
        if self.alpha_bound is None and self._a_kind in ("zero", "scalar", "diag", "matrix"):
            self.alpha_bound = _matrix_alpha(self._a_kind, self._a_val, self.dim)
        if self.lambda_bound is None and self._s_kind in ("scalar", "diag", "matrix"):
            try:
                self.lambda_bound = _sigma_lambda(self._s_kind, self._s_val, self.dim)
            except np.linalg.LinAlgError:
                pass  # validate() flags the ill-conditioned sigma

    # -- raw coefficient evaluation ------------------------------------------
    def A_at(self, s: float) -> np.ndarray:
        return _materialize(self._a_kind, self._a_val, self.dim, s)

    def sigma_at(self, s: float) -> np.ndarray:
        return _materialize(self._s_kind, self._s_val, self.dim, s)

    @property
    def constant(self) -> bool:
        return self._a_kind != "callable" and self._s_kind != "callable"

    @property
    def separable(self) -> bool:
        """True when T_{s,t} sigma_s acts diagonally (vectorizable per atom)."""
        return self._a_kind in ("zero", "scalar", "diag") and \
            self._s_kind in ("scalar", "diag")

    def validate(self, t_max: float = 2.0, n_times: int = 33) -> list:
        """Invariant sweep: sigma well conditioned, A below alpha_bound,
        ||sigma^{-1}|| below lambda_bound.  Returns list of violations."""
        bad = []
        for s in np.linspace(0.0, t_max, n_times):
            sig = self.sigma_at(s)
            if np.linalg.cond(sig) >= 1e12:
                bad.append(f"sigma ill-conditioned at s={s:.4g}")
                continue
            if self.lambda_bound is not None:
                nrm = np.linalg.norm(np.linalg.inv(sig), 2)
                if nrm > self.lambda_bound + 1e-9:
                    bad.append(f"||sigma^-1||={nrm:.6g} exceeds bound at s={s:.4g}")
            if self.alpha_bound is not None:
                a = self.A_at(s)
                top = float(np.max(np.linalg.eigvalsh(0.5 * (a + a.T))))
                if top > self.alpha_bound + 1e-9:
                    bad.append(f"A_s top eigenvalue {top:.6g} exceeds bound at s={s:.4g}")
        return bad


def _materialize(kind, val, dim, s) -> np.ndarray:
    if kind == "zero":
        return np.zeros((dim, dim))
    if kind == "scalar":
        return val * np.eye(dim)
    if kind == "diag":
        return np.diag(val)
    if kind == "matrix":
        return val
    return np.asarray(val(s), dtype=float)


def _matrix_alpha(kind, val, dim) -> float:
    if kind == "zero":
        return 0.0
    if kind == "scalar":
        return float(val)
    if kind == "diag":
        return float(np.max(val))
    return float(np.max(np.linalg.eigvalsh(0.5 * (val + val.T))))


def _sigma_lambda(kind, val, dim) -> float:
    m = _materialize(kind, val, dim, 0.0)
    return float(np.linalg.norm(np.linalg.inv(m), 2))


def linear_diag_A(rates: np.ndarray) -> Callable[[float], np.ndarray]:
    """Named time-dependent family: ``A_s = s * diag(rates)``."""
    rates = np.asarray(rates, dtype=float)
    return lambda s: s * np.diag(rates)


# ---------------------------------------------------------------------------
# flow evaluation
# ---------------------------------------------------------------------------

def flow_eval(spec: FlowSpec, s: float, t: float) -> np.ndarray:
    """``T_{s,t}`` solving ``dT/du = A_u T`` with ``T_{s,s} = I``."""
    if s > t:
        raise ValueError("need s <= t")
    d = spec.dim
    if s == t:
        return np.eye(d)
    kind, val = spec._a_kind, spec._a_val
    if kind == "zero":
        return np.eye(d)
    if kind == "scalar":
        return math.exp(val * (t - s)) * np.eye(d)
    if kind == "diag":
        return np.diag(np.exp(val * (t - s)))
    if kind == "matrix":
        return expm((t - s) * val)
    return _rk4_flow(spec, s, t)


def _rk4_flow(spec: FlowSpec, s: float, t: float) -> np.ndarray:
    steps = max(8, int(round(spec.rk_steps * (t - s) / max(t, 1.0))))
    prev = _rk4_run(spec, s, t, steps)
    for _ in range(12):
        steps *= 2
        cur = _rk4_run(spec, s, t, steps)
        if np.max(np.abs(cur - prev)) < 1e-9:
            return cur
        prev = cur
    return prev


def _rk4_run(spec: FlowSpec, s: float, t: float, steps: int) -> np.ndarray:
    A = spec._a_val
    h = (t - s) / steps
    T = np.eye(spec.dim)
    u = s
    for _ in range(steps):
        k1 = A(u) @ T
        k2 = A(u + 0.5 * h) @ (T + 0.5 * h * k1)
        k3 = A(u + 0.5 * h) @ (T + 0.5 * h * k2)
        k4 = A(u + h) @ (T + h * k3)
        T = T + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        u += h
    return T


def sigma_inv_T(spec: FlowSpec, s: float) -> np.ndarray:
    """``sigma_s^{-1} T_{0,s}`` by linear solve (never an explicit inverse)."""
    sig = spec.sigma_at(s)
    if abs(np.linalg.det(sig)) < 1e-300:
        raise np.linalg.LinAlgError("sigma_s is singular")
    return np.linalg.solve(sig, flow_eval(spec, 0.0, s))


def sigma_inv_T_norm(spec: FlowSpec, s: float) -> float:
    return float(np.linalg.norm(sigma_inv_T(spec, s), 2))


# ---------------------------------------------------------------------------
# vectorized per-atom kernels (separable specs only)
# ---------------------------------------------------------------------------

def _diag_of(kind, val, dim) -> np.ndarray:
    if kind == "zero":
        return np.zeros(dim)
    if kind == "scalar":
        return np.full(dim, val)
    return np.asarray(val, dtype=float)


def decay_apply(spec: FlowSpec, s: np.ndarray, t: float, z: np.ndarray) -> np.ndarray:
    """Rows ``T_{s_i,t} sigma_{s_i} z_i`` for separable specs: elementwise
    ``exp(a (t - s_i)) * sigma_diag * z_i``."""
    if not spec.separable:
        out = np.empty_like(z)
        for i, si in enumerate(s):
            out[i] = flow_eval(spec, float(si), t) @ (spec.sigma_at(float(si)) @ z[i])
        return out
    a = _diag_of(spec._a_kind, spec._a_val, spec.dim)
    sd = _diag_of(spec._s_kind, spec._s_val, spec.dim)
    return np.exp(np.outer(t - s, a)) * (sd[None, :] * z)


def weight_apply(spec: FlowSpec, s: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Rows ``(sigma_{s_i}^{-1} T_{s_i})^T vec_i`` (the adjoint weight in the
    derivative formulas)."""
    if not spec.separable:
        out = np.empty_like(vec)
        for i, si in enumerate(s):
            out[i] = sigma_inv_T(spec, float(si)).T @ vec[i]
        return out
    a = _diag_of(spec._a_kind, spec._a_val, spec.dim)
    sd = _diag_of(spec._s_kind, spec._s_val, spec.dim)
    return np.exp(np.outer(s, a)) / sd[None, :] * vec
