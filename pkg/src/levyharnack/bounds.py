"""Explicit analytic quantities: negative-moment (Laplace) integrals, the
gradient-estimate multiplier, Harnack and log-Harnack bound expressions, and
the small-jump rate machinery for borderline radial profiles.

All improper integrals go through the log-radius Laplace engine in
:mod:`._quad`; a divergent quantity comes back as ``math.inf`` rather than an
exception so that an infinite (vacuous but valid) bound can be reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from ._quad import DivergenceError, laplace_rate_integral, radial_integral, sphere_area
from .flow import FlowSpec, sigma_inv_T_norm
from .levy_model import JumpRate, LevyModel, RadialDensity, WeightFunction


def gamma_fn(theta: float) -> float:
    """Standard Gamma function (Lanczos rational approximation + reflection
    as provided by the C library)."""
    if theta <= 0.0:
        raise ValueError("gamma_fn requires theta > 0")
    return math.gamma(theta)


# ---------------------------------------------------------------------------
# negative moments of w(g) / the gamma-weighted Laplace integral
# ---------------------------------------------------------------------------

def neg_moment_integral(model: LevyModel, g: WeightFunction, theta: float,
                        t: float, lo: float = 0.0, hi: float = math.inf) -> float:
    """``(1/Gamma(theta)) int_0^inf r^{theta-1} exp[-mu_t(1-e^{-r g})] dr``.

    Equals ``E[w(g)^{-theta}]`` for the configuration measure with intensity
    ``nu0`` restricted to the annulus.  Returns ``inf`` when the integrand
    does not decay (finite restricted mass, or too-slow rate growth).
    """
    if theta <= 0 or t <= 0:
        raise ValueError("theta and t must be positive")
    rate = JumpRate(model, g, lo, hi)
    val = laplace_rate_integral(lambda u: t * rate(u), theta, rel_tol=1e-10)
    return val / math.gamma(theta)


# the same object under its bound-assembly name
gamma_weight_integral = neg_moment_integral


# ---------------------------------------------------------------------------
# gradient-estimate multiplier
# ---------------------------------------------------------------------------

def _flow_norm_integral(spec: FlowSpec, t: float, q: float) -> float:
    """``int_0^t ||sigma_s^{-1} T_s||^q ds``."""
    val, _ = quad(lambda s: sigma_inv_T_norm(spec, s) ** q, 0.0, t,
                  epsabs=0.0, epsrel=1e-10, limit=200)
    return val


def gradient_bound_multiplier(model: LevyModel, g: WeightFunction,
                              spec: FlowSpec, p: float, t: float) -> float:
    """Multiplier ``M`` with ``|grad P_t f| <= (P_t |f|^p)^{1/p} M``:

    ``M = (neg-moment integral at theta=1)^{(p-1)/p}
          * (int {||sigma_s^{-1}T_s|| (g |dlog rho0| + |dlog(rho0 g)|)}^{p/(p-1)}
             g dmu_t)^{(p-1)/p}``

    ``p = inf`` is accepted (both outer exponents become 1).  A divergent
    factor yields ``inf``.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    inner_q = 1.0 if math.isinf(p) else p / (p - 1.0)
    outer_e = 1.0 if math.isinf(p) else (p - 1.0) / p

    f1 = neg_moment_integral(model, g, 1.0, t)
    if math.isinf(f1):
        return math.inf

    phi, dphi = model.rho0.profile, model.rho0.gradient_profile
    hi = min(model.rho0.support_radius, g.cutoff)
    d = model.dim

    def radial(r):
        ra = np.array([r])
        pv = float(phi(ra)[0])
        gv = float(g.radial(ra)[0])
        if pv <= 0.0 or gv <= 0.0:
            return 0.0
        dlog_rho = float(dphi(ra)[0]) / pv
        dlog_rho_g = dlog_rho + float(g.radial_slope(ra)[0]) / gv
        core = gv * abs(dlog_rho) + abs(dlog_rho_g)
        return core ** inner_q * gv * pv * r ** (d - 1)

    try:
        z_part = sphere_area(d) * radial_integral(radial, 0.0, hi)
    except DivergenceError:
        return math.inf
    s_part = _flow_norm_integral(spec, t, inner_q)
    return f1 ** outer_e * (s_part * z_part) ** outer_e


# ---------------------------------------------------------------------------
# small-jump rate of the borderline radial family
# ---------------------------------------------------------------------------

def small_jump_rate(S: Callable, k: float, r0: float, d: int, r: float) -> float:
    """``(1-e^{-1}) kappa(d) / 2^k * int_{(r0/2) ^ r^{-1/k}}^{r0/2} S(s^-2)/s ds``
    (0 when the interval is empty, i.e. r <= (2/r0)^k)."""
    if r <= 0.0:
        raise ValueError("r must be positive")
    lo = min(r0 / 2.0, r ** (-1.0 / k))
    if lo >= r0 / 2.0:
        return 0.0
    val, _ = quad(lambda s: float(S(s ** -2.0)) / s, lo, r0 / 2.0,
                  epsabs=0.0, epsrel=1e-11, limit=200)
    return (1.0 - math.exp(-1.0)) * sphere_area(d) / 2.0 ** k * val


def _rate_u_factory(S, k, r0, d, t):
    """Vectorized ``u -> t * psi(e^u)`` working in log radius: the inner
    integral is done in ``v = log s`` so radii like e^400 never materialize."""
    pref = t * (1.0 - math.exp(-1.0)) * sphere_area(d) / 2.0 ** k
    v_hi = math.log(r0 / 2.0)
    x, w = np.polynomial.legendre.leggauss(16)
    S_log = getattr(S, "at_log", None) or (lambda lw: S(np.exp(np.minimum(lw, 700.0))))

    def rate(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        v_lo = np.minimum(-u / k, v_hi)
        out = np.zeros_like(u)
        act = v_lo < v_hi
        if np.any(act):
            panels = 24
            lo = v_lo[act]
            edges = lo[:, None] + (v_hi - lo)[:, None] * np.linspace(0, 1, panels + 1)[None, :]
            mid = 0.5 * (edges[:, 1:] + edges[:, :-1])
            half = 0.5 * np.diff(edges, axis=1)
            v = mid[:, :, None] + half[:, :, None] * x[None, None, :]
            # int S(e^{-2v}) dv  (the 1/s ds Jacobian cancels in log space)
            vals = S_log(-2.0 * v)
            out[act] = pref * (vals * half[:, :, None] * w[None, None, :]).sum(axis=(1, 2))
        return out

    return rate


def decay_time_integral(S: Callable, k: float, r0: float, d: int, t: float) -> float:
    """``int_0^inf exp(-t psi(r)) dr`` with divergence classification
    (constant S tends to diverge, log-power S converges)."""
    if t <= 0:
        raise ValueError("t must be positive")
    return laplace_rate_integral(_rate_u_factory(S, k, r0, d, t), 1.0, rel_tol=1e-9)


# ---------------------------------------------------------------------------
# sup norms of the weight pair
# ---------------------------------------------------------------------------

def sup_norms(model: LevyModel, g: WeightFunction, r_min: float = 1e-6,
              r_max: Optional[float] = None) -> tuple[float, float]:
    """``(|| dlog(rho0 g) ||_inf, || dg ||_inf)`` over the support.

    Interior suprema come from a refining log grid (4096, 8192, ... points,
    accepted when the change drops below 1e-4).  Each support boundary is
    probed along a geometric sequence; values that keep doubling toward a
    boundary flag the norm as infinite.
    """
    phi, dphi = model.rho0.profile, model.rho0.gradient_profile
    r0 = model.rho0.support_radius
    if r_max is None:
        r_max = 1e6 if math.isinf(r0) else r0 * (1.0 - 1e-6)

    def fields(r):
        pv, gv = phi(r), np.asarray(g.radial(r), dtype=float)
        ok = (pv > 0) & (gv > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = dphi(r) / pv
            b = np.asarray(g.radial_slope(r), dtype=float) / gv
            dlog = a + b
            # a and b can cancel exactly (e.g. the inverse-peak weight on the
            # density peak); residue below the rounding floor is zero
            dlog = np.where(np.abs(dlog) <= 1e-9 * (np.abs(a) + np.abs(b)), 0.0, dlog)
        return (np.abs(np.where(ok, dlog, 0.0)),
                np.abs(np.asarray(g.radial_slope(r), dtype=float)))

    def interior(idx):
        n = 4096
        prev = float(np.max(fields(np.geomspace(r_min, r_max, n))[idx]))
        for _ in range(8):
            n *= 2
            cur = float(np.max(fields(np.geomspace(r_min, r_max, n))[idx]))
            if abs(cur - prev) <= 1e-4 * max(abs(cur), 1.0):
                return cur
            if cur >= 1.9 * max(prev, 1e-300):
                return math.inf
            prev = cur
        return math.inf

    # boundary blow-up probes: values doubling along a sequence into the
    # boundary mean the supremum is infinite
    probes = [r_min * 2.0 ** (-np.arange(1.0, 36.0))]
    if math.isinf(r0):
        probes.append(r_max * 2.0 ** np.arange(1.0, 36.0))
    else:
        probes.append(r0 * (1.0 - (r0 - r_max) / r0 * 2.0 ** (-np.arange(1.0, 36.0))))

    out = []
    for idx in range(2):
        sup = interior(idx)
        for seq in probes:
            vals = fields(seq)[idx]
            tail = vals[-6:]
            if np.max(vals) > 10.0 * max(sup, 1.0) and np.all(np.diff(tail) > 0):
                sup = math.inf
                break
            sup = max(sup, float(np.max(vals)))
        out.append(sup)
    return out[0], out[1]


# ---------------------------------------------------------------------------
# Harnack / log-Harnack bound expressions
# ---------------------------------------------------------------------------

@dataclass
class BoundInputs:
    """Everything the closed-form Harnack-type bounds consume.  Sup norms are
    computed from the model when not supplied."""

    model: LevyModel
    g: WeightFunction
    spec: FlowSpec
    p: float
    t: float
    h_norm: float
    sup_log_rho_g: Optional[float] = None
    sup_grad_g: Optional[float] = None

    def resolved_sups(self) -> tuple[float, float]:
        if self.sup_log_rho_g is None or self.sup_grad_g is None:
            s1, s2 = sup_norms(self.model, self.g)
            if self.sup_log_rho_g is None:
                self.sup_log_rho_g = s1
            if self.sup_grad_g is None:
                self.sup_grad_g = s2
        return self.sup_log_rho_g, self.sup_grad_g


def harnack_power_bound(bi: BoundInputs) -> float:
    """Closed-form multiplier ``C`` in ``(P_t f)^p(x+h) <= C P_t f^p(x)``:

    ``exp[s1 lam e^alpha |h|] *
      {1 + (lam s2 e^alpha |h|)^{1/((p-1) v 1)} * gamma(1/(p-1), t ^ 1)^{(p-1) ^ 1}}^{(p-1) v 1}``

    with ``s1 = ||dlog(rho0 g)||_inf`` and ``s2 = ||dg||_inf``.  For h = 0 the
    bound is exactly 1.  An infinite gamma integral gives ``inf`` (a valid,
    vacuous bound)."""
    if not bi.p > 1:
        raise ValueError("p must exceed 1")
    if bi.h_norm == 0.0:
        return 1.0
    lam, alpha = bi.spec.lambda_bound, bi.spec.alpha_bound
    if lam is None or alpha is None:
        raise ValueError("spec needs alpha_bound and lambda_bound")
    s1, s2 = bi.resolved_sups()
    if math.isinf(s1) or math.isinf(s2):
        return math.inf
    lam_e = lam * math.exp(alpha) * bi.h_norm
    gam = neg_moment_integral(bi.model, bi.g, 1.0 / (bi.p - 1.0), min(bi.t, 1.0))
    if math.isinf(gam):
        return math.inf
    hi_e = max(bi.p - 1.0, 1.0)
    lo_e = min(bi.p - 1.0, 1.0)
    inner = 1.0 + (s2 * lam_e) ** (1.0 / hi_e) * gam ** lo_e
    return math.exp(s1 * lam_e) * inner ** hi_e


def log_harnack_bound(bi: BoundInputs) -> float:
    """Additive bound ``Psi`` in ``P_t log f(x+h) <= log P_t f(x) + Psi``:
    ``lam e^alpha |h| (s1 + s2 gamma(1, t ^ 1))``; linear in |h|."""
    if bi.h_norm == 0.0:
        return 0.0
    lam, alpha = bi.spec.lambda_bound, bi.spec.alpha_bound
    if lam is None or alpha is None:
        raise ValueError("spec needs alpha_bound and lambda_bound")
    s1, s2 = bi.resolved_sups()
    if math.isinf(s1) or math.isinf(s2):
        return math.inf
    gam = neg_moment_integral(bi.model, bi.g, 1.0, min(bi.t, 1.0))
    if math.isinf(gam):
        return math.inf
    return lam * math.exp(alpha) * bi.h_norm * (s1 + s2 * gam)


# ---------------------------------------------------------------------------
# bounds for a decreasing radial lower-bound profile
# ---------------------------------------------------------------------------

def _check_decreasing_c2(phi: RadialDensity, grid: np.ndarray) -> None:
    pv = phi.profile(grid)
    if np.any(np.diff(pv) > 1e-12 * np.maximum(pv[1:], 1.0)):
        raise ValueError("profile must be decreasing")
    dp = np.abs(phi.gradient_profile(grid))
    ratio = dp / (pv + pv ** 2)
    # crude blow-up detection on the sampled grid
    if not np.all(np.isfinite(ratio)) or float(np.max(ratio)) > 1e8:
        raise ValueError("sup |phi'| / (phi + phi^2) looks unbounded")


def decreasing_profile_bounds(phi: RadialDensity, p: float, t: float,
                              h_norm: float, d: int, c1: float, c2: float
                              ) -> tuple[float, float]:
    """For ``nu >= phi(|z|) dz`` with ``phi`` positive decreasing satisfying
    the derivative-ratio condition, the pair

    ``( e^{c2 |h|} (1 + c2 |h|^{1/((p-1) v 1)} I_p)^{(p-1) v 1},  c2 |h| I_1 )``

    with ``I_p = int_0^inf r^{(2-p)/(p-1)} e^{-c1 (t^1) r (phi^{-1}(r))^d} dr``
    and ``I_1`` the same integral without the power factor.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    grid = np.geomspace(1e-8, max(1.0, 1e4), 4097)
    _check_decreasing_c2(phi, grid)

    if phi.family == "stable" and math.isinf(phi.support_radius):
        c0, alpha = phi.params["c0"], phi.params["alpha"]
        q = d + alpha

        def inv_log(u):
            return (math.log(c0) - u) / q
    else:
        lo_v, hi_v = -700.0, math.log(min(phi.support_radius, 1e280))

        def inv_log(u):
            u = np.atleast_1d(u)
            a = np.full_like(u, lo_v)
            b = np.full_like(u, hi_v)
            for _ in range(80):
                mid = 0.5 * (a + b)
                with np.errstate(divide="ignore"):
                    val = np.log(np.maximum(phi.profile(np.exp(mid)), 1e-300))
                high = val > u       # phi still above target -> move right
                a = np.where(high, mid, a)
                b = np.where(high, b, mid)
            return 0.5 * (a + b)

    teff = c1 * min(t, 1.0)

    def rate(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        lg = u + d * np.asarray(inv_log(u), dtype=float)
        return teff * np.exp(np.clip(lg, -745.0, 709.0))

    theta_h = 1.0 / (p - 1.0)
    I_har = laplace_rate_integral(rate, theta_h, rel_tol=1e-9)
    I_log = laplace_rate_integral(rate, 1.0, rel_tol=1e-9)
    if h_norm == 0.0:
        return 1.0, 0.0
    hi_e = max(p - 1.0, 1.0)
    if math.isinf(I_har):
        har = math.inf
    else:
        har = math.exp(c2 * h_norm) * (1.0 + c2 * h_norm ** (1.0 / hi_e) * I_har) ** hi_e
    logh = math.inf if math.isinf(I_log) else c2 * h_norm * I_log
    return har, logh
