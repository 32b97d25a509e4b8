"""Radial quadrature helpers shared by the model and bound modules.

Two recurring shapes of integral live here:

* one-dimensional radial integrals ``int_a^b f(r) dr`` whose integrand may
  blow up at ``a = 0`` or decay slowly toward ``b = inf``.  Improper ends are
  handled by dyadic blocks in log-radius; a block sequence that refuses to
  decay is classified as divergent instead of silently returning a partial
  sum.

* Laplace-type integrals ``int_0^inf r^{theta-1} exp(-t * mu(r)) dr`` for a
  nonnegative, nondecreasing rate ``mu``.  These are evaluated entirely in
  ``u = log r`` coordinates because in the borderline families the integrand
  peaks at radii like ``exp(400)`` which do not fit in a float64.  The
  caller supplies ``mu`` as a vectorized function of ``u``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad


class DivergenceError(ArithmeticError):
    """An improper integral failed to converge.  ``partial`` holds the
    accumulated finite part (a lower bound for a nonnegative integrand)."""

    def __init__(self, message: str, partial: float = math.nan):
        super().__init__(message)
        self.partial = partial


def _quad_finite(f, a: float, b: float, rel_tol: float) -> float:
    if b <= a:
        return 0.0
    val, _ = quad(f, a, b, epsabs=0.0, epsrel=min(rel_tol, 1e-9), limit=200)
    return val


def radial_integral(f, lo: float, hi: float, *, rel_tol: float = 1e-8) -> float:
    """Integrate ``f`` over ``(lo, hi)`` with improper-end handling.

    ``lo == 0`` and ``hi == inf`` are resolved by dyadic blocks; a block
    sequence whose terms stop shrinking raises :class:`DivergenceError`.
    """
    if hi <= lo:
        return 0.0
    lo_improper = lo == 0.0
    hi_improper = math.isinf(hi)

    a = lo if not lo_improper else (min(1.0, hi) if not hi_improper else 1.0)
    b = hi if not hi_improper else max(1.0, lo, a)
    total = _quad_finite(f, a, b, rel_tol)

    if lo_improper:
        total += _dyadic_end(f, b=a, rel_tol=rel_tol, direction=-1, reference=total)
    if hi_improper:
        total += _dyadic_end(f, b=b, rel_tol=rel_tol, direction=+1, reference=total)
    return total


def _dyadic_end(f, b: float, rel_tol: float, direction: int, reference: float) -> float:
    """Sum blocks ``[b 2^{-j-1}, b 2^{-j}]`` (direction -1, toward 0) or
    ``[b 2^j, b 2^{j+1}]`` (direction +1, toward inf)."""
    acc = 0.0
    prev = math.inf
    flat = 0
    for j in range(1100):
        if direction < 0:
            hi_j = b * 2.0 ** (-j)
            lo_j = hi_j / 2.0
            if hi_j < 5e-300:
                break
        else:
            lo_j = b * 2.0 ** j
            hi_j = lo_j * 2.0
            if not math.isfinite(hi_j):
                raise DivergenceError("tail blocks reached float range", acc + reference)
        inc = _quad_finite(f, lo_j, hi_j, rel_tol)
        acc += inc
        scale = max(abs(acc + reference), 1e-300)
        if abs(inc) <= rel_tol * scale:
            # close with the geometric tail estimate from the last two blocks
            ratio = 0.0 if prev == 0 else min(abs(inc) / max(abs(prev), 1e-300), 0.9)
            tail = abs(inc) * ratio / (1.0 - ratio)
            if tail <= rel_tol * scale:
                return acc + math.copysign(tail, inc)
        flat = flat + 1 if abs(inc) >= 0.999 * abs(prev) and inc != 0.0 else 0
        if flat >= 40:
            raise DivergenceError("dyadic blocks are not decaying", acc + reference)
        prev = inc
    # ran out of blocks: decaying but extremely slowly, or mass piled at 0
    if direction < 0 and prev != 0.0 and abs(prev) > rel_tol * max(abs(acc + reference), 1e-300):
        raise DivergenceError("mass keeps accumulating toward the origin", acc + reference)
    return acc


def log_gauss_nodes(lo: float, hi: float, panels: int, order: int = 32):
    """Composite Gauss-Legendre nodes/weights for ``int f(r) dr`` on
    ``[lo, hi]`` placed in log space: returns radii ``r`` and weights that
    already include the ``r`` Jacobian."""
    if not (0.0 < lo < hi):
        raise ValueError("need 0 < lo < hi for log-space nodes")
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(math.log(lo), math.log(hi), panels + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    u = (mids[:, None] + half[:, None] * x[None, :]).ravel()
    wu = (half[:, None] * w[None, :]).ravel()
    r = np.exp(u)
    return r, wu * r


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _block(phi, a: float, b: float, shift: float) -> float:
    """``int_a^b exp(phi(u) - shift) du`` by 24-point Gauss-Legendre."""
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    u = mid + half * _GL_X
    vals = np.exp(np.clip(phi(u) - shift, -745.0, 709.0))
    return half * float(vals @ _GL_W)


def laplace_rate_integral(rate_u, theta: float, *, rel_tol: float = 1e-9,
                          block_width: float = 2.0, max_blocks: int = 60000) -> float:
    """``int_0^inf r^{theta-1} exp(-mu(r)) dr`` with ``mu(e^u) = rate_u(u)``.

    Works in ``u = log r``: the integrand is ``exp(phi(u))`` with
    ``phi(u) = theta u - rate_u(u)``.  Returns ``math.inf`` when the scan
    classifies the integral as divergent (bounded rate, or a power-law
    integrand with exponent >= -1).  ``rate_u`` must accept ndarray input.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")

    def phi(u):
        u = np.asarray(u, dtype=float)
        return theta * u - np.asarray(rate_u(u), dtype=float)

    # --- locate the peak; extend right while phi keeps growing -------------
    u_hi = 60.0
    grid = np.arange(-80.0, u_hi + 1.0, 1.0)
    vals = phi(grid)
    while True:
        k = int(np.argmax(vals))
        if k < len(grid) - 3 or u_hi >= 4.0e6:
            break
        u_hi = min(u_hi * 2.5 + 50.0, 4.0e6)
        step = max(1.0, u_hi / 4000.0)
        grid = np.arange(grid[0], u_hi + step, step)
        vals = phi(grid)
    u_peak = float(grid[int(np.argmax(vals))])

    # divergence by asymptotic slope: if phi has not turned down by u ~ 4e6
    # the rate is (numerically) bounded or exactly cancels theta*u
    far = phi(np.array([u_hi - 1.0, u_hi]))
    if u_hi >= 4.0e6 and far[1] >= far[0] - 1e-12:
        return math.inf

    shift = float(phi(np.array([u_peak]))[0])
    acc = _block(phi, u_peak - block_width, u_peak + block_width, shift)

    # --- march right ---------------------------------------------------------
    a = u_peak + block_width
    prev = math.inf
    flat = 0
    for j in range(max_blocks):
        inc = _block(phi, a, a + block_width, shift)
        acc += inc
        a += block_width
        if inc <= rel_tol * acc * 1e-2:
            break
        flat = flat + 1 if inc >= prev * (1.0 - 1e-9) else 0
        if flat >= 400:
            return math.inf
        prev = inc
    else:
        return math.inf

    # --- march left ----------------------------------------------------------
    b = u_peak - block_width
    for _ in range(max_blocks):
        inc = _block(phi, b - block_width, b, shift)
        acc += inc
        b -= block_width
        rate_b = float(np.asarray(rate_u(np.array([b])), dtype=float)[0])
        if inc <= rel_tol * acc * 1e-2 and rate_b < 1e-3:
            break
        if b < -1.0e5:
            break

    # left analytic head: below b the rate is < 1e-3, so the integrand is
    # e^{theta u} up to that relative error and the head integrates exactly
    head = math.exp(max(min(float(phi(np.array([b]))[0]) - shift, 709.0), -745.0)) / theta
    acc += head

    log_total = shift + math.log(acc)
    if log_total > 709.0:
        return math.inf
    return math.exp(log_total)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d: 2 pi^{d/2} / Gamma(d/2)."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
