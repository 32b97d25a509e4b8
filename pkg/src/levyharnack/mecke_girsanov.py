"""Monte Carlo estimators built on the configuration identities: the
two-sided point-process identity test, semigroup means, the two gradient
representations (an importance-sampled shift form and a pure path-weight
form), a common-random-numbers finite-difference oracle, and the
density-shift (Girsanov-type) transform with its diagnostics.

All estimators consume ε-truncated configurations.  Identity tests are run
against the truncated intensity (where they are exact); estimators that
target the untruncated model carry the discarded weight mass as an explicit
``bias_bound`` on the returned estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._quad import DivergenceError, log_gauss_nodes, sphere_area
from .bounds import neg_moment_integral
from .flow import FlowSpec, decay_apply, flow_eval, weight_apply
from .levy_model import JumpRate, LevyModel, WeightFunction, nu0_integral
from .pathsim import (PathChunk, chunk_X, chunk_weight, gaussian_endpoint_cov,
                      iter_path_chunks, truncation_discard_mass)


# ---------------------------------------------------------------------------
# estimate container and accumulation
# ---------------------------------------------------------------------------

@dataclass
class MCEstimate:
    mean: np.ndarray | float
    stderr: np.ndarray | float
    n: int
    seed: int
    bias_bound: float = 0.0
    warning: str = ""

    def z_against(self, reference) -> float:
        """Largest |z|-score of mean - reference over components."""
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        s = np.atleast_1d(np.asarray(self.stderr, dtype=float))
        r = np.atleast_1d(np.asarray(reference, dtype=float))
        return float(np.max(np.abs(m - r) / np.maximum(s, 1e-300)))


class _Acc:
    """Running sum / sum-of-squares accumulator (componentwise)."""

    def __init__(self):
        self.n = 0
        self.s = None
        self.s2 = None
        self.max_abs = 0.0

    def add(self, vals: np.ndarray):
        vals = np.atleast_1d(vals)
        if vals.ndim == 1:
            vals = vals[:, None]
        self.n += vals.shape[0]
        s = vals.sum(axis=0)
        s2 = (vals * vals).sum(axis=0)
        self.s = s if self.s is None else self.s + s
        self.s2 = s2 if self.s2 is None else self.s2 + s2
        self.max_abs = max(self.max_abs, float(np.max(np.abs(vals), initial=0.0)))

    def estimate(self, seed: int, bias: float = 0.0, squeeze: bool = True) -> MCEstimate:
        mean = self.s / self.n
        var = np.maximum(self.s2 / self.n - mean ** 2, 0.0)
        se = np.sqrt(var / self.n)
        warning = ""
        total = np.abs(self.s).max()
        if total > 0 and self.max_abs > 0.5 * total and self.n > 100:
            warning = "variance proxy exploding: one sample dominates the sum"
        if squeeze and mean.size == 1:
            return MCEstimate(float(mean[0]), float(se[0]), self.n, seed, bias, warning)
        return MCEstimate(mean, se, self.n, seed, bias, warning)


# ---------------------------------------------------------------------------
# the two-sided configuration identity
# ---------------------------------------------------------------------------

class _HCatalog:
    """The three catalog test functionals h(w, z, s); each depends on the
    configuration only through W = w(g), which keeps both sides vectorizable:

    * ``mass``       h = g(z)
    * ``normalized`` h = g(z) / (w(g) + g(z))
    * ``laplace``    h = g(z) e^{-w(g)}
    """

    NAMES = ("mass", "normalized", "laplace", "h1", "h2", "h3")

    def __init__(self, name: str):
        alias = {"h1": "mass", "h2": "normalized", "h3": "laplace"}
        self.name = alias.get(name, name)
        if self.name not in ("mass", "normalized", "laplace"):
            raise ValueError(f"unknown test functional {name!r}")

    def lhs_given_W(self, W, g_nodes, w_nodes, t, mu_g):
        """t * integral of h(w, z) rho0(z) dz over the annulus, given W."""
        if self.name == "mass":
            return np.full_like(W, mu_g)
        if self.name == "normalized":
            return t * (w_nodes[None, :] * g_nodes[None, :]
                        / (W[:, None] + g_nodes[None, :])).sum(axis=1)
        return np.exp(-W) * mu_g

    def rhs_terms(self, W_seg, g_atoms):
        """h(w - atom, z_atom) per atom; removing the atom shifts W by -g."""
        if self.name == "mass":
            return g_atoms
        if self.name == "normalized":
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(W_seg > 0, g_atoms / W_seg, 0.0)
        return g_atoms * np.exp(-(W_seg - g_atoms))


def mecke_two_sides(model: LevyModel, g: WeightFunction, h_name: str, t: float,
                    n: int, seed: int, *, chunk_size: int = 16384
                    ) -> tuple[MCEstimate, MCEstimate]:
    """Estimate both sides of the point-process identity for a catalog test
    functional on the truncated intensity (where the identity is exact):
    intensity-integrated expectation vs atom-summed expectation."""
    h = _HCatalog(h_name)
    eps, hi = model.truncation_eps, min(model.rho0.support_radius, 1e6)
    r_nodes, w_quad = log_gauss_nodes(eps, hi, panels=48, order=16)
    w_nodes = w_quad * model.radial_intensity(r_nodes)
    g_nodes = np.asarray(g.radial(r_nodes), dtype=float)
    mu_g = t * float(w_nodes @ g_nodes)

    acc_l, acc_r = _Acc(), _Acc()
    for chunk in iter_path_chunks(model, t, n, seed, chunk_size=chunk_size):
        W, g_atoms = chunk_weight(chunk, g)
        acc_l.add(h.lhs_given_W(W, g_nodes, w_nodes, t, mu_g))
        seg = chunk.segment_ids()
        terms = h.rhs_terms(W[seg], g_atoms)
        acc_r.add(np.bincount(seg, weights=terms, minlength=chunk.n))
    return acc_l.estimate(seed), acc_r.estimate(seed)


def negative_moment_mc(model: LevyModel, g: WeightFunction, theta: float,
                       t: float, n: int, seed: int, *,
                       chunk_size: int = 16384) -> MCEstimate:
    """Path-MC estimate of ``E[w(g)^{-theta}]`` on truncated configurations.

    A sampled configuration with ``w(g) = 0`` certifies an infinite negative
    moment (the zero-weight event has positive probability), reported as an
    infinite mean.  The attached ``bias_bound`` is the first-order effect of
    the discarded sub-cutoff mass: ``theta * mu_t(g 1_{|z|<eps}) *
    E[w(g)^{-theta-1}]`` estimated from the same sample."""
    acc = _Acc()
    acc_hi = _Acc()
    hit_zero = False
    for chunk in iter_path_chunks(model, t, n, seed, chunk_size=chunk_size):
        W, _ = chunk_weight(chunk, g)
        if np.any(W <= 0.0):
            hit_zero = True
            break
        acc.add(W ** (-theta))
        acc_hi.add(W ** (-theta - 1.0))
    if hit_zero:
        return MCEstimate(math.inf, math.inf, n, seed,
                          warning="zero-weight configuration sampled: "
                                  "negative moment is infinite")
    est = acc.estimate(seed)
    m_b = truncation_discard_mass(model, g, t)
    bias = theta * m_b * float(acc_hi.estimate(seed).mean)
    return MCEstimate(est.mean, est.stderr, est.n, seed, bias_bound=bias)


# ---------------------------------------------------------------------------
# semigroup Monte Carlo
# ---------------------------------------------------------------------------

def semigroup_mc(model: LevyModel, spec: FlowSpec, f: Callable, x, t: float,
                 n: int, seed: int, *, chunk_size: int = 16384,
                 first_index: int = 0) -> MCEstimate:
    """Plain MC mean of ``f(X_t^x)``."""
    return semigroup_many(model, spec, [f], x, t, n, seed, chunk_size=chunk_size,
                          first_index=first_index)[0]


def semigroup_many(model: LevyModel, spec: FlowSpec, fs: list, x, t: float,
                   n: int, seed: int, *, chunk_size: int = 16384,
                   first_index: int = 0) -> list[MCEstimate]:
    """Means of several functionals of the same endpoint sample (one batch)."""
    x = np.asarray(x, dtype=float)
    if t == 0.0:
        return [MCEstimate(float(f(x[None, :])[0]), 0.0, n, seed) for f in fs]
    chol = None
    if model.gauss_cov is not None:
        chol = np.linalg.cholesky(gaussian_endpoint_cov(model, spec, t))
    accs = [_Acc() for _ in fs]
    for chunk in iter_path_chunks(model, t, n, seed, chunk_size=chunk_size,
                                  first_index=first_index):
        X = chunk_X(chunk, model, spec, x, _cov_chol=chol)
        for f, acc in zip(fs, accs):
            acc.add(np.asarray(f(X), dtype=float))
    return [acc.estimate(seed) for acc in accs]


# ---------------------------------------------------------------------------
# gradient estimators
# ---------------------------------------------------------------------------

def derivative_conditions_ok(model: LevyModel, g: WeightFunction, t: float) -> tuple[bool, dict]:
    """Integrability gate for the derivative formulas: the negative-moment
    integral at theta=1 and the density/weight derivative integrals must all
    be finite."""
    report = {}
    gam = neg_moment_integral(model, g, 1.0, t)
    report["neg_moment"] = gam
    phi, dphi = model.rho0.profile, model.rho0.gradient_profile

    # a hard jump of rho0 at a finite support edge breaks the weak
    # differentiability the formulas rest on (the boundary sheds a surface
    # term the estimators cannot see); refuse such profiles
    r0 = model.rho0.support_radius
    report["edge_continuous"] = True
    if math.isfinite(r0):
        edge = float(phi(np.array([r0 * (1.0 - 1e-9)]))[0])
        interior = float(phi(np.array([r0 * 0.5]))[0])
        if edge > 1e-6 * max(interior, 1e-300):
            report["edge_continuous"] = False
            return False, report

    def core(z):
        r = float(np.linalg.norm(z))
        ra = np.array([r])
        pv, gv = float(phi(ra)[0]), float(g.radial(ra)[0])
        return pv * gv + pv * abs(float(g.radial_slope(ra)[0])) + gv * abs(float(dphi(ra)[0]))

    try:
        report["c1_integral"] = t * nu0_integral(
            model, lambda z: core(z) / max(float(phi(np.array([np.linalg.norm(z)]))[0]), 1e-300),
            0.0, min(model.rho0.support_radius, g.cutoff))
    except DivergenceError as exc:
        report["c1_integral"] = math.inf
        report["partial"] = exc.partial
    ok = math.isfinite(gam) and math.isfinite(report["c1_integral"])
    return ok, report


class _WeightedRadiusSampler:
    """Inverse-CDF sampler for the proposal density ``rho0 g r^{d-1}`` on
    ``(lo, inf)``; also exposes the normalizer ``C_g = kappa(d) int rho0 g r^{d-1}``.

    Unbounded supports are handled when the weight is eventually constant:
    the tail beyond that radius is then proportional to the jump measure
    itself and is drawn through the model's exact tail inverse."""

    def __init__(self, model: LevyModel, g: WeightFunction, lo: float = 0.0):
        hi = min(model.rho0.support_radius, g.cutoff)
        self._tail = None
        self._model = model
        if math.isinf(hi):
            if g.constant_beyond is None:
                raise ValueError("unbounded rho0*g support needs a weight with "
                                 "a cutoff or an eventually constant weight")
            R, c = g.constant_beyond
            R = max(R, lo)
            tail_mass = c * model.shell_mass(R)
            self._tail = (R, tail_mass)
            hi = R
        if lo <= 0.0:
            # power-probe the decay of rho0 g r^{d-1} * r toward the origin
            s1 = hi * 1e-6
            s0 = s1 * math.e
            vals = []
            for s in (s0, s1):
                ra = np.array([s])
                vals.append(float(model.radial_intensity(ra)[0] * g.radial(ra)[0]) * s)
            beta = max(math.log(max(vals[0], 1e-290) / max(vals[1], 1e-300)), 0.05)
            lo = max(min(s0 * math.exp(-60.0 / beta), hi * 1e-4), 1e-270)
        edges_u = np.linspace(math.log(lo), math.log(hi), 4097)
        xg, wg = np.polynomial.legendre.leggauss(4)
        mid = 0.5 * (edges_u[1:] + edges_u[:-1])
        half = 0.5 * np.diff(edges_u)
        u = mid[:, None] + half[:, None] * xg[None, :]
        r = np.exp(u)
        dens = model.radial_intensity(r) * np.asarray(g.radial(r), dtype=float) * r
        cell = (dens * (half[:, None] * wg[None, :])).sum(axis=1)
        cdf = np.concatenate([[0.0], np.cumsum(cell)])
        body = float(cdf[-1])
        tail_mass = self._tail[1] if self._tail else 0.0
        self.normalizer = body + tail_mass
        if not (self.normalizer > 0 and math.isfinite(self.normalizer)):
            raise ValueError("proposal rho0*g is not normalizable")
        self._body_frac = body / self.normalizer
        self._cdf = cdf / body
        self._radii = np.exp(edges_u)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self._tail is None:
            return np.interp(u, self._cdf, self._radii)
        body = u < self._body_frac
        out = np.empty_like(u)
        out[body] = np.interp(u[body] / self._body_frac, self._cdf, self._radii)
        if np.any(~body):
            R = self._tail[0]
            v = (u[~body] - self._body_frac) / max(1.0 - self._body_frac, 1e-300)
            out[~body] = self._model.sample_radius(R, math.inf, v)
        return out


def gradient_shift_mc(model: LevyModel, spec: FlowSpec, f: Callable, x, t: float,
                      g: WeightFunction, n: int, seed: int, *,
                      chunk_size: int = 16384, check_conditions: bool = True
                      ) -> MCEstimate:
    """Shift-form gradient estimator: one auxiliary ``(z, s)`` drawn per path
    from the proposal ``rho0 g``; the integrand evaluates ``f`` at the
    shifted endpoint and weights with the derivative kernel

    ``-(sigma_s^{-1} T_s)^T {W grad(rho0 g) + g^2 grad rho0} / (W + g)^2``

    importance-corrected by ``t C_g / (rho0 g)(z)``."""
    if check_conditions:
        ok, rep = derivative_conditions_ok(model, g, t)
        if not ok:
            raise ValueError(f"derivative formula conditions fail: {rep}")
    x = np.asarray(x, dtype=float)
    d = model.dim
    sampler = _WeightedRadiusSampler(model, g)
    M_g = t * sampler.normalizer
    phi, dphi = model.rho0.profile, model.rho0.gradient_profile
    chol = None
    if model.gauss_cov is not None:
        chol = np.linalg.cholesky(gaussian_endpoint_cov(model, spec, t))
    bias = truncation_discard_mass(model, g, t)

    acc = _Acc()
    n_aux_normal = 0 if d == 1 else d
    for chunk in iter_path_chunks(model, t, n, seed, chunk_size=chunk_size,
                                  n_aux=3 if d == 1 else 2, n_aux_normal=n_aux_normal):
        m = chunk.n
        W, _ = chunk_weight(chunk, g)
        X = chunk_X(chunk, model, spec, x, _cov_chol=chol)
        r_aux = sampler(chunk.aux_u[:, 0])
        s_aux = chunk.aux_u[:, 1] * t
        if d == 1:
            unit = np.where(chunk.aux_u[:, 2] < 0.5, -1.0, 1.0)[:, None]
        else:
            unit = chunk.aux_normal / np.linalg.norm(chunk.aux_normal, axis=1, keepdims=True)
        z_aux = r_aux[:, None] * unit

        pv = phi(r_aux)
        dpv = dphi(r_aux)
        gv = np.asarray(g.radial(r_aux), dtype=float)
        dgv = np.asarray(g.radial_slope(r_aux), dtype=float)
        grad_rho_g = dpv * gv + pv * dgv
        kernel = (W * grad_rho_g + gv * gv * dpv) / (W + gv) ** 2
        vec = weight_apply(spec, s_aux, kernel[:, None] * unit)
        shift = decay_apply(spec, s_aux, t, z_aux)
        fx = np.asarray(f(X + shift), dtype=float)
        rows = -fx[:, None] * vec * (M_g / (pv * gv))[:, None]
        acc.add(rows)
    return acc.estimate(seed, bias=bias, squeeze=False)


def gradient_weight_mc(model: LevyModel, spec: FlowSpec, f: Callable, x, t: float,
                       g: WeightFunction, n: int, seed: int, *,
                       chunk_size: int = 16384, check_conditions: bool = True
                       ) -> MCEstimate:
    """Path-weight gradient estimator: no auxiliary sampling; each atom of
    the truncated configuration contributes

    ``(sigma_s^{-1} T_s)^T {rho0 g grad g - W grad(rho0 g)} / (W^2 rho0)``

    and the sum is multiplied by ``f`` at the endpoint."""
    if check_conditions:
        ok, rep = derivative_conditions_ok(model, g, t)
        if not ok:
            raise ValueError(f"derivative formula conditions fail: {rep}")
    x = np.asarray(x, dtype=float)
    d = model.dim
    phi, dphi = model.rho0.profile, model.rho0.gradient_profile
    chol = None
    if model.gauss_cov is not None:
        chol = np.linalg.cholesky(gaussian_endpoint_cov(model, spec, t))
    bias = truncation_discard_mass(model, g, t)

    acc = _Acc()
    for chunk in iter_path_chunks(model, t, n, seed, chunk_size=chunk_size):
        W, g_atoms = chunk_weight(chunk, g)
        X = chunk_X(chunk, model, spec, x, _cov_chol=chol)
        seg = chunk.segment_ids()
        r = chunk.radii
        pv = phi(r)
        grad_rho_g = dphi(r) * g_atoms + pv * np.asarray(g.radial_slope(r), dtype=float)
        num = pv * g_atoms * np.asarray(g.radial_slope(r), dtype=float) \
            - W[seg] * grad_rho_g
        with np.errstate(divide="ignore", invalid="ignore"):
            kernel = np.where(W[seg] > 0, num / (W[seg] ** 2 * pv), 0.0)
        unit = chunk.z / np.maximum(r, 1e-300)[:, None]
        rows = weight_apply(spec, chunk.s, kernel[:, None] * unit)
        per_path = np.zeros((chunk.n, d))
        for j in range(d):
            per_path[:, j] = np.bincount(seg, weights=rows[:, j], minlength=chunk.n)
        acc.add(np.asarray(f(X), dtype=float)[:, None] * per_path)
    return acc.estimate(seed, bias=bias, squeeze=False)


def gradient_fd_oracle(model: LevyModel, spec: FlowSpec, f: Callable, x, t: float,
                       n: int, delta: float, direction, seed: int, *,
                       chunk_size: int = 16384) -> MCEstimate:
    """Central finite difference of the semigroup in ``direction`` with
    common random numbers: the same noise realization drives both shifts, so
    the paired difference has the O(delta^2) FD bias but almost no MC noise
    for smooth ``f``."""
    if not 1e-4 <= delta <= 1e-1:
        raise ValueError("delta must lie in [1e-4, 1e-1]")
    x = np.asarray(x, dtype=float)
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    Tt = flow_eval(spec, 0.0, t)
    chol = None
    if model.gauss_cov is not None:
        chol = np.linalg.cholesky(gaussian_endpoint_cov(model, spec, t))
    base_p = Tt @ (x + delta * e)
    base_m = Tt @ (x - delta * e)
    acc = _Acc()
    for chunk in iter_path_chunks(model, t, n, seed, chunk_size=chunk_size):
        noise = chunk_X(chunk, model, spec, np.zeros_like(x), _cov_chol=chol)
        fp = np.asarray(f(noise + base_p), dtype=float)
        fm = np.asarray(f(noise + base_m), dtype=float)
        acc.add((fp - fm) / (2.0 * delta))
    return acc.estimate(seed)


# ---------------------------------------------------------------------------
# the density-shift transform
# ---------------------------------------------------------------------------

@dataclass
class GirsanovSample:
    """A truncated configuration, one extra marked atom ``(xi, tau)``, and the
    reweighting ``R = 1 / (w(ghat) + ghat(xi))`` for the independent-mark
    construction."""

    path_s: np.ndarray
    path_z: np.ndarray
    xi: np.ndarray
    tau: float
    weight: float


@dataclass
class GirsanovSpec:
    """Precomputed machinery for a normalized jump density ``ghat`` (density
    w.r.t. the product of the jump measure and time on ``[0, t]``)."""

    model: LevyModel
    g_hat: WeightFunction
    t: float
    normalizer_full: float = field(init=False)
    eps_fraction: float = field(init=False)
    empty_prob: float = field(init=False)

    def __post_init__(self):
        model, g, t = self.model, self.g_hat, self.t
        hi = min(model.rho0.support_radius, g.cutoff)
        full = t * _weighted_mass(model, g, 0.0, hi)
        self.normalizer_full = full
        if abs(full - 1.0) > 1e-6:
            raise ValueError(f"ghat is not normalized: mu_t(ghat) = {full:.8g}")
        # the theorem needs infinite mass on {ghat > 0}
        diag_probe = np.geomspace(model.truncation_eps * 1e-3, model.truncation_eps, 17)
        if np.any(np.asarray(g.radial(diag_probe)) <= 0.0):
            raise ValueError("ghat must be positive near the origin "
                             "(mu_t(ghat > 0) must be infinite)")
        trunc = t * _weighted_mass(model, g, model.truncation_eps, hi)
        self.eps_fraction = max(1.0 - trunc / full, 0.0)
        lam = model.shell_mass(model.truncation_eps)
        self.empty_prob = math.exp(-t * lam)
        self._sampler = _WeightedRadiusSampler(model, g, lo=model.truncation_eps)

    @property
    def bias_bound(self) -> float:
        return self.eps_fraction + self.empty_prob


def _weighted_mass(model: LevyModel, g: WeightFunction, lo: float, hi: float) -> float:
    if math.isinf(hi):
        if g.constant_beyond is None:
            raise ValueError("unbounded support needs an eventually constant ghat")
        R, c = g.constant_beyond
        R = max(R, lo)
        return _weighted_mass(model, g, lo, R) + c * model.shell_mass(R)
    return nu0_integral(model, lambda z: float(g.radial(np.array([np.linalg.norm(z)]))[0]),
                        lo, hi)


def normalized_jump_density(model: LevyModel, base: WeightFunction, t: float) -> WeightFunction:
    """Scale ``base`` so that its integral against the jump measure times the
    horizon equals one (a probability density for the independent mark)."""
    hi = min(model.rho0.support_radius, base.cutoff)
    Z = t * _weighted_mass(model, base, 0.0, hi)
    const = None
    if base.constant_beyond is not None:
        R, c = base.constant_beyond
        const = (R, c / Z)
    return WeightFunction(
        radial=lambda r, _b=base.radial, _z=Z: np.asarray(_b(r), dtype=float) / _z,
        radial_slope=lambda r, _b=base.radial_slope, _z=Z: np.asarray(_b(r), dtype=float) / _z,
        family=f"normalized-{base.family}", params=dict(base.params, scale=1.0 / Z),
        cutoff=base.cutoff, constant_beyond=const)


def girsanov_sample(gspec: GirsanovSpec, rng: np.random.Generator) -> GirsanovSample:
    """Draw (configuration, independent mark) and the weight R."""
    from .pathsim import sample_jump_path
    model, t = gspec.model, gspec.t
    path = sample_jump_path(model, t, rng)
    r_xi = float(gspec._sampler(rng.random(1))[0])
    unit = _unit_dir(rng, model.dim)
    xi = r_xi * unit
    tau = float(rng.random() * t)
    W = path.functional(gspec.g_hat)
    R = 1.0 / (W + float(gspec.g_hat.radial(np.array([r_xi]))[0]))
    return GirsanovSample(path.s, path.z, xi, tau, R)


def _unit_dir(rng, d):
    if d == 1:
        return np.array([1.0 if rng.random() < 0.5 else -1.0])
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def girsanov_check(model: LevyModel, g_hat: WeightFunction, t: float, n: int,
                   seed: int, *, count_radius: float = 0.1,
                   cf_scales=(0.5, 1.0, 2.0, 4.0, 8.0),
                   chunk_size: int = 16384) -> dict:
    """Reweighting diagnostics: E[R] = 1, marked-count and bounded linear
    statistics against the reference configuration law, and the empirical
    characteristic functional of ``w(a min(1, |z|))`` at fixed scales.
    Returns per-check (estimate, reference) pairs and the max |z|-score.

    All statistics are functions of ``min(1, |z|)`` so their reference
    integrals stay finite for heavy-tailed jump measures; mass beyond radius
    one enters through the exact shell mass."""
    gspec = GirsanovSpec(model, g_hat, t)
    eps = model.truncation_eps
    hi_fin = min(model.rho0.support_radius, 1.0)

    lam_count = model.shell_mass(max(count_radius, eps))
    campbell_ref = t * nu0_integral(
        model, lambda z: float(np.linalg.norm(z)), max(count_radius, eps), hi_fin)
    mass_beyond_1 = model.shell_mass(max(1.0, eps, count_radius))
    campbell_ref += t * mass_beyond_1

    r_nodes, w_quad = log_gauss_nodes(eps, hi_fin, panels=48, order=16)
    dens_nodes = w_quad * model.radial_intensity(r_nodes)
    cf_refs = []
    for a in cf_scales:
        u_vals = a * np.minimum(1.0, r_nodes)
        re = float(((np.cos(u_vals) - 1.0) * dens_nodes).sum()) \
            + (math.cos(a) - 1.0) * mass_beyond_1
        im = float((np.sin(u_vals) * dens_nodes).sum()) + math.sin(a) * mass_beyond_1
        cf_refs.append(complex(math.exp(t * re) * math.cos(t * im),
                               math.exp(t * re) * math.sin(t * im)))

    accs = {"ER": _Acc(), "count": _Acc(), "campbell": _Acc()}
    cf_accs = [(_Acc(), _Acc()) for _ in cf_scales]

    for chunk in iter_path_chunks(model, t, n, seed, chunk_size=chunk_size, n_aux=2):
        W_hat, _ = chunk_weight(chunk, g_hat)
        r_xi = gspec._sampler(chunk.aux_u[:, 0])
        ghat_xi = np.asarray(g_hat.radial(r_xi), dtype=float)
        R = 1.0 / (W_hat + ghat_xi)
        accs["ER"].add(R)

        seg = chunk.segment_ids()
        capped = np.minimum(1.0, chunk.radii)
        big = (chunk.radii >= count_radius).astype(float)
        count = np.bincount(seg, weights=big, minlength=chunk.n) \
            + (r_xi >= count_radius)
        accs["count"].add(R * count)
        lin = np.bincount(seg, weights=capped * big, minlength=chunk.n) \
            + np.where(r_xi >= count_radius, np.minimum(1.0, r_xi), 0.0)
        accs["campbell"].add(R * lin)

        for (acc_re, acc_im), a in zip(cf_accs, cf_scales):
            tot = np.bincount(seg, weights=a * capped, minlength=chunk.n) \
                + a * np.minimum(1.0, r_xi)
            acc_re.add(R * np.cos(tot))
            acc_im.add(R * np.sin(tot))

    bias = gspec.bias_bound
    report = {
        "ER": (accs["ER"].estimate(seed, bias), 1.0),
        "count": (accs["count"].estimate(seed, bias), t * lam_count),
        "campbell": (accs["campbell"].estimate(seed, bias), campbell_ref),
    }
    for a, (acc_re, acc_im), ref in zip(cf_scales, cf_accs, cf_refs):
        report[f"cf_re_{a}"] = (acc_re.estimate(seed, bias), ref.real)
        report[f"cf_im_{a}"] = (acc_im.estimate(seed, bias), ref.imag)
    report["max_abs_z"] = max(est.z_against(ref) for key, (est, ref) in report.items()
                              if key != "max_abs_z")
    return report
