"""Driving-noise model: radial lower-bound density, residual part, weights.

The jump measure is decomposed as ``nu >= nu0`` with ``nu0(dz) = rho0(z) dz``
absolutely continuous and radial, ``rho0(z) = phi(|z|)``.  Everything the
estimators and bounds need reduces to one-dimensional radial integrals
``kappa(d) * int f(r) phi(r) r^{d-1} dr`` where ``kappa(d)`` is the area of
the unit sphere.  The residual ``nu - nu0`` is kept deliberately simple: a
finite-activity jump part (total rate + sampler) plus an optional Gaussian
covariance and a constant drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._quad import DivergenceError, log_gauss_nodes, radial_integral, sphere_area


# ---------------------------------------------------------------------------
# radial densities
# ---------------------------------------------------------------------------

@dataclass
class RadialDensity:
    """Radial profile ``phi`` of an absolutely continuous jump density.

    ``profile`` and ``gradient_profile`` must be vectorized over radius and
    return 0 beyond ``support_radius``.
    """

    profile: Callable[[np.ndarray], np.ndarray]
    gradient_profile: Callable[[np.ndarray], np.ndarray]
    support_radius: float = math.inf
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, r):
        return self.profile(np.asarray(r, dtype=float))


def stable_profile(c0: float, alpha: float, d: int, r0: float = math.inf) -> RadialDensity:
    """``phi(r) = c0 r^{-d-alpha}`` on ``(0, r0)`` (alpha-stable-type lower bound)."""
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (0, 2)")
    q = d + alpha

    def profile(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            v = c0 * r ** (-q)
        return np.where((r > 0) & (r < r0), v, 0.0)

    def gradient(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            v = -q * c0 * r ** (-q - 1.0)
        return np.where((r > 0) & (r < r0), v, 0.0)

    return RadialDensity(profile, gradient, r0, "stable" if math.isinf(r0) else "truncated-stable",
                         {"c0": c0, "alpha": alpha, "r0": r0})


def tapered_stable_profile(c0: float, alpha: float, d: int, r0: float,
                           q: float = 2.0) -> RadialDensity:
    """``phi(r) = c0 r^{-d-alpha} ((1 - r/r0)^+)^q``: stable-type near the
    origin with a polynomial taper at the support edge.  Unlike the hard
    cutoff this profile is weakly differentiable across the edge, which the
    derivative formulas require."""
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (0, 2)")
    if q < 1.0:
        raise ValueError("taper power q must be >= 1 for a continuous edge")
    p = d + alpha

    def profile(r):
        r = np.asarray(r, dtype=float)
        inside = (r > 0) & (r < r0)
        rs = np.where(inside, r, 0.5 * r0)
        return np.where(inside, c0 * rs ** (-p) * (1.0 - rs / r0) ** q, 0.0)

    def gradient(r):
        r = np.asarray(r, dtype=float)
        inside = (r > 0) & (r < r0)
        rs = np.where(inside, r, 0.5 * r0)
        base = c0 * rs ** (-p) * (1.0 - rs / r0) ** q
        dlog = -p / rs - q / (r0 - rs)
        return np.where(inside, base * dlog, 0.0)

    return RadialDensity(profile, gradient, r0, "tapered-stable",
                         {"c0": c0, "alpha": alpha, "r0": r0, "q": q})


def log_power_S(c0: float, exponent: float):
    """``S(u) = c0 log^exponent(1 + u)`` with an overflow-free evaluation at
    log arguments (``at_log(w) = S(e^w)``) for the rate machinery."""

    def S(u):
        return c0 * np.log1p(u) ** exponent

    def at_log(w):
        w = np.asarray(w, dtype=float)
        # log(1 + e^w) = w + log1p(e^{-w}) for large w
        small = w < 30.0
        ws = np.where(small, w, 30.0)
        val = np.where(small, np.log1p(np.exp(ws)), w + np.exp(-np.maximum(w, 30.0)))
        return c0 * val ** exponent

    S.at_log = at_log
    return S


def _log1p_inv_sq(r: np.ndarray) -> np.ndarray:
    """``log(1 + r^{-2})`` stable down to denormal radii."""
    return np.log1p(r * r) - 2.0 * np.log(r)


def log_type_profile(c0: float, exponent: float, r0: float, k: float, d: int) -> RadialDensity:
    """Borderline family ``phi(r) = r^{-d} S(r^{-2}) ((1 - r/r0)^+)^k`` with
    ``S(u) = c0 log^exponent(1 + u)``; infinite activity with only
    logarithmic growth of the small-jump mass."""

    def profile(r):
        r = np.asarray(r, dtype=float)
        inside = (r > 0) & (r < r0)
        rs = np.where(inside, r, 0.5 * r0)
        v = rs ** (-float(d)) * c0 * _log1p_inv_sq(rs) ** exponent * (1.0 - rs / r0) ** k
        return np.where(inside, v, 0.0)

    def gradient(r):
        r = np.asarray(r, dtype=float)
        inside = (r > 0) & (r < r0)
        rs = np.where(inside, r, 0.5 * r0)
        L = _log1p_inv_sq(rs)
        base = rs ** (-float(d)) * c0 * L ** exponent * (1.0 - rs / r0) ** k
        # d/dr log S(r^-2) = -2 exponent / (r (1 + r^2) L)
        dlog = -d / rs - 2.0 * exponent / (rs * (1.0 + rs * rs) * L) - k / (r0 - rs)
        return np.where(inside, base * dlog, 0.0)

    return RadialDensity(profile, gradient, r0, "log-type",
                         {"c0": c0, "exponent": exponent, "r0": r0, "k": k})


def table_profile(r_grid, phi_grid) -> RadialDensity:
    """Linearly interpolated radial profile; zero outside the grid hull."""
    r_grid = np.asarray(r_grid, dtype=float)
    phi_grid = np.asarray(phi_grid, dtype=float)
    if np.any(np.diff(r_grid) <= 0) or np.any(phi_grid < 0):
        raise ValueError("grid must be increasing and profile nonnegative")
    slopes = np.gradient(phi_grid, r_grid)

    def profile(r):
        r = np.asarray(r, dtype=float)
        v = np.interp(r, r_grid, phi_grid, left=0.0, right=0.0)
        return np.where(r >= r_grid[0], v, 0.0)

    def gradient(r):
        r = np.asarray(r, dtype=float)
        v = np.interp(r, r_grid, slopes, left=0.0, right=0.0)
        return np.where(r >= r_grid[0], v, 0.0)

    return RadialDensity(profile, gradient, float(r_grid[-1]), "radial-table",
                         {"r_min": float(r_grid[0])})


def flat_profile(c0: float, r0: float) -> RadialDensity:
    """Finite measure ``phi = c0`` on ``(0, r0)`` (used for the degenerate,
    finite-activity checks)."""

    def profile(r):
        r = np.asarray(r, dtype=float)
        return np.where((r > 0) & (r < r0), c0, 0.0)

    def gradient(r):
        return np.zeros_like(np.asarray(r, dtype=float))

    return RadialDensity(profile, gradient, r0, "flat", {"c0": c0, "r0": r0})


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass
class LevyModel:
    """Lower-bound density + residual description + simulation cutoff."""

    dim: int
    rho0: RadialDensity
    truncation_eps: float = 1e-4
    drift: Optional[np.ndarray] = None           # constant drift B, default 0
    gauss_cov: Optional[np.ndarray] = None       # residual Gaussian covariance
    residual_rate: float = 0.0                   # finite-activity residual mass
    residual_sampler: Optional[Callable] = None  # (rng, size) -> (size, dim) jumps

    def __post_init__(self):
        if self.drift is None:
            self.drift = np.zeros(self.dim)
        self.drift = np.asarray(self.drift, dtype=float)
        if self.truncation_eps <= 0 or self.truncation_eps >= self.rho0.support_radius:
            raise ValueError("truncation_eps must lie inside the support")
        if self.residual_rate > 0 and self.residual_sampler is None:
            raise ValueError("residual_rate > 0 needs a residual_sampler")

    # -- radial measure helpers --------------------------------------------
    def radial_intensity(self, r):
        """Density of nu0 against dr after integrating out the sphere:
        ``kappa(d) phi(r) r^{d-1}``."""
        r = np.asarray(r, dtype=float)
        return sphere_area(self.dim) * self.rho0(r) * r ** (self.dim - 1)

    def shell_mass(self, lo: float, hi: float = math.inf) -> float:
        """``nu0({lo <= |z| < hi})``; may raise DivergenceError for lo = 0."""
        hi = min(hi, self.rho0.support_radius)
        if hi <= lo:
            return 0.0
        fam = self.rho0.family
        if fam in ("stable", "truncated-stable") and lo > 0.0:
            c0, alpha = self.rho0.params["c0"], self.rho0.params["alpha"]
            upper = 0.0 if math.isinf(hi) else hi ** -alpha
            return sphere_area(self.dim) * c0 * (lo ** -alpha - upper) / alpha
        return radial_integral(lambda r: float(self.radial_intensity(r)), lo, hi)

    def sample_radius(self, lo: float, hi: float, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF sample of the normalized radial measure on [lo, hi)."""
        hi = min(hi, self.rho0.support_radius)
        fam = self.rho0.family
        if fam in ("stable", "truncated-stable"):
            alpha = self.rho0.params["alpha"]
            a, b = lo ** -alpha, (0.0 if math.isinf(hi) else hi ** -alpha)
            return (a - u * (a - b)) ** (-1.0 / alpha)
        return self._numeric_radius_table(lo, hi)(u)

    def _numeric_radius_table(self, lo: float, hi: float):
        """CDF of the normalized radial measure tabulated at 4096 log-spaced
        edges (4-point Gauss per cell, so the edge values are essentially
        exact); inversion is linear interpolation on the edge table."""
        key = ("radius-cdf", lo, hi)
        table = _model_caches.setdefault(id(self), {}).get(key)
        if table is None:
            edges_u = np.linspace(math.log(lo), math.log(hi), 4097)
            x, w = np.polynomial.legendre.leggauss(4)
            mid = 0.5 * (edges_u[1:] + edges_u[:-1])
            half = 0.5 * np.diff(edges_u)
            u = mid[:, None] + half[:, None] * x[None, :]
            r = np.exp(u)
            cell = (self.radial_intensity(r) * r * (half[:, None] * w[None, :])).sum(axis=1)
            cdf = np.concatenate([[0.0], np.cumsum(cell)])
            cdf /= cdf[-1]
            table = (cdf, np.exp(edges_u))
            _model_caches[id(self)][key] = table
        cdf, radii = table
        return lambda u: np.interp(u, cdf, radii)


_model_caches: dict = {}


# ---------------------------------------------------------------------------
# weight functions g
# ---------------------------------------------------------------------------

@dataclass
class WeightFunction:
    """Nonnegative radial weight ``g`` with its radial slope.

    ``constant_beyond = (R, c)`` declares ``g == c`` exactly for ``r >= R``
    (used to integrate unbounded supports exactly); ``cutoff`` declares
    ``g == 0`` for ``r >= cutoff``.
    """

    radial: Callable[[np.ndarray], np.ndarray]
    radial_slope: Callable[[np.ndarray], np.ndarray]
    family: str = "custom"
    params: dict = field(default_factory=dict)
    cutoff: float = math.inf
    constant_beyond: Optional[tuple] = None

    def value(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return self.radial(np.linalg.norm(z, axis=-1))

    def gradient(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        r = np.linalg.norm(z, axis=-1)
        unit = np.where(r[:, None] > 0, z / np.maximum(r, 1e-300)[:, None], 0.0)
        return self.radial_slope(r)[:, None] * unit


def power_weight(k: float) -> WeightFunction:
    """``g(z) = |z|^k`` (meant for compactly supported lower bounds)."""
    return WeightFunction(
        radial=lambda r: np.asarray(r, dtype=float) ** k,
        radial_slope=lambda r: k * np.asarray(r, dtype=float) ** (k - 1.0),
        family="power", params={"k": k})


def capped_power_weight(k: float, r_cut: float) -> WeightFunction:
    """``g(z) = |z|^k ((1 - |z|/r_cut)^+)^2``: a C^1 cutoff version of the
    power weight for full-support lower bounds."""

    def radial(r):
        r = np.asarray(r, dtype=float)
        return np.where(r < r_cut, r ** k * (1.0 - r / r_cut) ** 2, 0.0)

    def slope(r):
        r = np.asarray(r, dtype=float)
        inside = r < r_cut
        rs = np.where(inside, r, 0.5 * r_cut)
        v = k * rs ** (k - 1.0) * (1.0 - rs / r_cut) ** 2 \
            - 2.0 * rs ** k * (1.0 - rs / r_cut) / r_cut
        return np.where(inside, v, 0.0)

    return WeightFunction(radial, slope, "capped-power",
                          {"k": k, "r_cut": r_cut}, cutoff=r_cut)


def inverse_peak_weight(model: LevyModel) -> WeightFunction:
    """``g = 1 / (1 or rho0)``: equal to ``1/rho0`` where the density exceeds
    one and to ``1`` elsewhere.  For a decreasing profile this makes
    ``rho0 * g = min(rho0, 1)`` with vanishing log-gradient on the peak."""
    phi = model.rho0.profile
    dphi = model.rho0.gradient_profile

    def radial(r):
        return 1.0 / np.maximum(1.0, phi(r))

    def slope(r):
        p = phi(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = -dphi(r) / p ** 2
        return np.where(p > 1.0, v, 0.0)

    const = None
    if model.rho0.family == "stable":
        c0, alpha = model.rho0.params["c0"], model.rho0.params["alpha"]
        r1 = c0 ** (1.0 / (model.dim + alpha))   # phi(r1) = 1
        const = (r1, 1.0)
    return WeightFunction(radial, slope, "inverse-peak", {}, constant_beyond=const)


# ---------------------------------------------------------------------------
# the exponential jump rate  nu0(1 - e^{-r g})
# ---------------------------------------------------------------------------

class JumpRate:
    """Vectorized ``u -> nu0((1 - e^{-e^u g}) 1_{lo <= |z| < hi})``.

    Evaluation happens on cached log-space Gauss nodes.  For ``lo == 0`` the
    node floor adapts to the largest requested ``u``: below the floor the
    integrand is bounded by ``e^u g(s) phi(s) s^{d-1}``, which decays
    polynomially, so the floor is pushed down until the discarded head is
    below 1e-16 of the running value.  A weight that is exactly constant
    beyond some radius contributes its (finite) outer mass in closed form.
    """

    def __init__(self, model: LevyModel, weight: WeightFunction,
                 lo: float = 0.0, hi: float = math.inf):
        self.model = model
        self.weight = weight
        self.lo = float(lo)
        hi = min(hi, model.rho0.support_radius, weight.cutoff)
        self.tail_mass = 0.0
        self.tail_g = 0.0
        if math.isinf(hi):
            if weight.constant_beyond is None:
                raise ValueError("unbounded support needs a weight that is "
                                 "eventually constant or compactly cut off")
            R, c = weight.constant_beyond
            self.tail_mass = model.shell_mass(max(R, lo))
            self.tail_g = c
            hi = max(R, lo)
        self.hi = float(hi)
        self._nodes = None
        self._floor = None
        self._u_cover = None

    def _build(self, u_max: float):
        if self.lo > 0.0:
            floor = self.lo
        else:
            # two head bounds control the discarded error below the floor:
            # the linearized one e^{u} int_0^f g phi s^{d-1} (relevant while
            # the rate is still small) and the plain mass int_0^f phi s^{d-1}
            # (u-independent; finite exactly when the activity is finite).
            s1 = self.hi * 1e-6
            s0 = s1 * math.e
            w0, w1 = (float(self.weight.radial(np.array([s]))[0]
                            * self.model.radial_intensity(np.array([s]))[0] * s)
                      for s in (s0, s1))
            beta = max(math.log(max(w0, 1e-290) / max(w1, 1e-300)), 0.05)
            drop = u_max + math.log(max(w0, 1e-290)) + 40.0
            floor = s0 * math.exp(-max(drop, 2.0) / beta)
            m0, m1 = (float(self.model.radial_intensity(np.array([s]))[0]) * s
                      for s in (s0, s1))
            gam = math.log(max(m0, 1e-290) / max(m1, 1e-300))
            if gam > 0.05:     # integrable head: the mass criterion suffices
                floor_mass = s0 * (1e-13 * gam / max(m0, 1e-290)) ** (1.0 / gam)
                floor = max(floor, floor_mass)
            floor = min(max(floor, 1e-280), self.hi * 1e-3)
        panels = int(24 + 6 * math.log(self.hi / floor))
        r, w = log_gauss_nodes(floor, self.hi, panels=panels, order=24)
        g = np.asarray(self.weight.radial(r), dtype=float)
        dens = self.model.radial_intensity(r) * w
        keep = (g > 0) & (dens != 0)
        self._nodes = (np.log(g[keep]), dens[keep])
        self._floor = floor
        self._u_cover = u_max

    def __call__(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        u_max = float(np.max(u)) if u.size else 0.0
        if self._nodes is None or u_max > self._u_cover:
            self._build(u_max + 8.0)
        log_g, dens = self._nodes
        expo = np.clip(u[:, None] + log_g[None, :], -745.0, 45.0)
        vals = -np.expm1(-np.exp(expo))
        out = vals @ dens
        if self.tail_mass > 0.0:
            out = out + self.tail_mass * (-np.expm1(
                -np.exp(np.clip(u + math.log(self.tail_g), -745.0, 45.0))))
        return out

    def at_radius(self, r: float) -> float:
        """Rate at linear radius ``r`` (r > 0)."""
        return float(self(np.array([math.log(r)]))[0])


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

@dataclass
class ModelDiagnostics:
    levy_integral: float
    mass_ge_1: float
    activity_masses: dict
    infinite_activity: bool
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_model(model: LevyModel) -> ModelDiagnostics:
    """Check the standing assumptions on ``nu0`` and report, not raise."""
    violations = []
    try:
        levy = nu0_integral(model, lambda z: min(1.0, float(np.dot(z, z))), 0.0, math.inf)
    except DivergenceError as exc:
        levy = math.inf
        violations.append(f"levy integrability fails: partial={exc.partial:.6g}")
    try:
        mass1 = model.shell_mass(1.0)
    except DivergenceError as exc:
        mass1 = math.inf
        violations.append(f"nu0(|z|>=1) diverges: partial={exc.partial:.6g}")

    masses = {}
    eps_ladder = [10.0 ** (-j) for j in range(1, 7)]
    big = False
    for eps in eps_ladder:
        if eps >= model.rho0.support_radius:
            continue
        masses[eps] = model.shell_mass(eps)
        if masses[eps] > 1e6:
            big = True
            break
    vals = [masses[e] for e in sorted(masses, reverse=True)]
    increments = np.diff(vals)
    growing = len(increments) >= 2 and increments[-1] >= 0.9 * increments[0] > 0
    infinite = bool(big or growing)

    neg = model.rho0(np.geomspace(model.truncation_eps,
                                  min(model.rho0.support_radius * 0.999999, 1e6), 257))
    if np.any(neg < 0):
        violations.append(f"negative density value {float(np.min(neg)):.6g}")
    return ModelDiagnostics(levy, mass1, masses, infinite, violations)


def nu0_integral(model: LevyModel, integrand, lo: float = 0.0,
                 hi: float = math.inf, *, rel_tol: float = 1e-8) -> float:
    """``int integrand(z) nu0(dz)`` over the annulus ``lo <= |z| < hi`` for a
    radial integrand, factorized as sphere area times a radial integral.

    Raises :class:`DivergenceError` (carrying the partial value) when the
    adaptive refinement classifies the integral as divergent.
    """
    hi = min(hi, model.rho0.support_radius)
    d = model.dim
    e1 = np.zeros(d)

    def radial(r):
        e1_r = e1.copy()
        e1_r[0] = r
        return float(integrand(e1_r)) * float(model.rho0(np.array([r]))[0]) * r ** (d - 1)

    return sphere_area(d) * radial_integral(radial, lo, hi, rel_tol=rel_tol)


def mu_t_exp_integral(model: LevyModel, g: WeightFunction, r: float, t: float,
                      lo: float = 0.0, hi: float = math.inf) -> float:
    """``t * int (1 - e^{-r g(z)}) nu0(dz)`` over the annulus; 0 for r = 0.

    Divergence (infinite value for every r, e.g. g = |z| against an
    inv-square profile) is detected on the linearized integrand and raised.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    if t <= 0:
        raise ValueError("t must be positive")
    if r == 0.0:
        return 0.0
    lo_eff = max(lo, 0.0)
    if lo_eff == 0.0:
        # integrability probe: near 0 the integrand is r*g*rho0; divergence
        # there means the rate is +inf for every r > 0
        probe = min(1.0, model.rho0.support_radius / 2.0, g.cutoff / 2.0)
        def head(z):
            rr = float(np.linalg.norm(z))
            return min(1.0, r * float(g.radial(np.array([rr]))[0]))
        nu0_integral(model, head, 0.0, probe)  # raises DivergenceError if bad
    rate = JumpRate(model, g, lo_eff, hi)
    return t * rate.at_radius(r)
