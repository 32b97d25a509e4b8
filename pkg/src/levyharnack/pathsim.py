"""Sampling of jump configurations and of the SDE solution.

Jumps of the lower-bound part below the cutoff ``eps`` are dropped and (for
the radial densities used here) need no drift compensation because the
shell means vanish by symmetry; the discarded weight mass
``mu_t(g 1_{|z|<eps})`` is exposed so estimators can report it as a bias
bound instead of hiding it.

Reproducibility contract: sample ``i`` of a batch is generated from a
Philox stream whose 256-bit counter block is indexed by ``i``, so it is a
pure function of ``(seed, i)`` -- batches are bit-identical regardless of
chunking, execution order, or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy.integrate import quad_vec

from .flow import FlowSpec, decay_apply, flow_eval
from .levy_model import LevyModel, WeightFunction, nu0_integral


# ---------------------------------------------------------------------------
# RNG substreams
# ---------------------------------------------------------------------------

def _philox_key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(2, np.uint64)


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for sample ``index``: Philox counter block
    ``(0, 0, index, 0)`` under a key derived from ``seed``."""
    bg = np.random.Philox(key=_philox_key(seed), counter=[0, 0, index, 0])
    return np.random.Generator(bg)


class _StreamFamily:
    """Reuses one Philox instance, resetting its counter per sample; this is
    stream-for-stream identical to :func:`substream` but ~6x faster."""

    def __init__(self, seed: int):
        self._bg = np.random.Philox(key=_philox_key(seed))
        self.gen = np.random.Generator(self._bg)
        self._state = self._bg.state

    def at(self, index: int) -> np.random.Generator:
        st = self._state
        st["state"]["counter"][:] = 0
        st["state"]["counter"][2] = index
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bg.state = st
        return self.gen


# ---------------------------------------------------------------------------
# single-path type and sampler
# ---------------------------------------------------------------------------

@dataclass
class JumpPath:
    """One truncated configuration: atoms ``(s_i, z_i)`` with ``|z_i| >= eps``
    on ``[0, horizon]``, sorted by time."""

    horizon: float
    eps: float
    s: np.ndarray          # (n,)
    z: np.ndarray          # (n, d)
    drift: np.ndarray      # constant drift B
    compensator: np.ndarray  # per-unit-time small-jump compensator (0: radial)

    def __post_init__(self):
        if np.any(np.diff(self.s) < 0):
            raise ValueError("atoms must be sorted by time")
        if self.s.size and (self.s.min() < 0 or self.s.max() > self.horizon):
            raise ValueError("atom times outside [0, horizon]")

    @property
    def n_atoms(self) -> int:
        return len(self.s)

    def functional(self, g: WeightFunction) -> float:
        """``w(g) = sum_i g(z_i)``; 0 for the empty configuration."""
        if self.n_atoms == 0:
            return 0.0
        return float(np.sum(g.radial(np.linalg.norm(self.z, axis=1))))


def _unit_vectors(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    if d == 1:
        return (rng.random(n) < 0.5).astype(float)[:, None] * 2.0 - 1.0
    v = rng.standard_normal((n, d))
    nrm = np.linalg.norm(v, axis=1, keepdims=True)
    # a zero draw has probability 0; guard anyway
    nrm[nrm == 0.0] = 1.0
    return v / nrm


def sample_jump_path(model: LevyModel, t: float, rng: np.random.Generator) -> JumpPath:
    """Draw the truncated lower-bound configuration on ``[0, t]``: Poisson
    count with mean ``t nu0(|z| >= eps)``, radii by inverse CDF of the
    normalized radial tail, directions uniform on the sphere."""
    eps, r0 = model.truncation_eps, model.rho0.support_radius
    lam = model.shell_mass(eps)
    if lam <= 0.0:
        raise ValueError("nu0(|z| >= eps) = 0: truncation removes all jumps")
    n = int(rng.poisson(t * lam))
    radii = model.sample_radius(eps, r0, rng.random(n))
    z = radii[:, None] * _unit_vectors(rng, n, model.dim)
    s = np.sort(rng.random(n) * t)
    return JumpPath(t, eps, s, z, model.drift.copy(), np.zeros(model.dim))


def path_functional(path: JumpPath, g: WeightFunction) -> float:
    return path.functional(g)


# ---------------------------------------------------------------------------
# batched sampling
# ---------------------------------------------------------------------------

@dataclass
class PathChunk:
    """Flattened slice of a batch: samples ``index0 .. index0+n-1``.

    Atom rows of sample ``i`` live at ``offsets[i]:offsets[i+1]``; ``gauss``
    holds the per-sample standard normal block when the model carries a
    Gaussian residual, ``res_*`` the finite-activity residual atoms.
    """

    index0: int
    t: float
    counts: np.ndarray
    offsets: np.ndarray
    s: np.ndarray
    z: np.ndarray
    radii: np.ndarray
    gauss: Optional[np.ndarray] = None
    res_counts: Optional[np.ndarray] = None
    res_s: Optional[np.ndarray] = None
    res_z: Optional[np.ndarray] = None
    aux_u: Optional[np.ndarray] = None        # extra per-sample uniforms
    aux_normal: Optional[np.ndarray] = None   # extra per-sample std normals

    @property
    def n(self) -> int:
        return len(self.counts)

    def segment_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), self.counts)


def iter_path_chunks(model: LevyModel, t: float, n: int, seed: int, *,
                     chunk_size: int = 16384, n_aux: int = 0,
                     n_aux_normal: int = 0, first_index: int = 0) -> Iterator[PathChunk]:
    """Yield the batch in chunks; the content of each sample depends only on
    ``(seed, sample index)``, never on the chunking.  ``first_index`` shifts
    the substream indices so that two estimators under one seed can consume
    disjoint, reproducible blocks."""
    eps, r0, d = model.truncation_eps, model.rho0.support_radius, model.dim
    lam = model.shell_mass(eps)
    if lam <= 0.0:
        raise ValueError("nu0(|z| >= eps) = 0: truncation removes all jumps")
    mean_atoms = t * lam
    need_gauss = model.gauss_cov is not None
    need_res = model.residual_rate > 0.0
    fam = _StreamFamily(seed)

    for i0 in range(first_index, first_index + n, chunk_size):
        m = min(chunk_size, first_index + n - i0)
        counts = np.empty(m, dtype=np.int64)
        radius_u, dir_u, time_u = [], [], []
        gauss = np.empty((m, d)) if need_gauss else None
        res_counts = np.empty(m, dtype=np.int64) if need_res else None
        res_s, res_z = [], []
        aux = np.empty((m, n_aux)) if n_aux else None
        aux_n = np.empty((m, n_aux_normal)) if n_aux_normal else None
        for j in range(m):
            rng = fam.at(i0 + j)
            k = int(rng.poisson(mean_atoms))
            counts[j] = k
            radius_u.append(rng.random(k))
            dir_u.append(_unit_vectors(rng, k, d))
            time_u.append(np.sort(rng.random(k)))
            if need_gauss:
                gauss[j] = rng.standard_normal(d)
            if need_res:
                k1 = int(rng.poisson(model.residual_rate * t))
                res_counts[j] = k1
                res_s.append(rng.random(k1) * t)
                res_z.append(model.residual_sampler(rng, k1))
            if n_aux:
                aux[j] = rng.random(n_aux)
            if n_aux_normal:
                aux_n[j] = rng.standard_normal(n_aux_normal)
        offsets = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        radii = model.sample_radius(eps, r0, np.concatenate(radius_u) if m else np.empty(0))
        z = radii[:, None] * (np.concatenate(dir_u) if m else np.empty((0, d)))
        s = np.concatenate(time_u) * t if m else np.empty(0)
        chunk = PathChunk(i0, t, counts, offsets, s, z, radii, gauss,
                          res_counts,
                          np.concatenate(res_s) if need_res else None,
                          np.vstack(res_z) if need_res and res_z else None,
                          aux, aux_n)
        yield chunk


def chunk_weight(chunk: PathChunk, g: WeightFunction) -> tuple[np.ndarray, np.ndarray]:
    """Per-path functional ``W_i = w_i(g)`` and per-atom values ``g(z)``."""
    g_atoms = g.radial(chunk.radii)
    W = np.bincount(chunk.segment_ids(), weights=g_atoms, minlength=chunk.n)
    return W, g_atoms


def path_to_chunk(path: JumpPath) -> PathChunk:
    """View a single path as a one-sample chunk (for the per-path ops)."""
    n = path.n_atoms
    return PathChunk(0, path.horizon, np.array([n]), np.array([0, n]),
                     path.s, path.z, np.linalg.norm(path.z, axis=1) if n else np.empty(0))


# ---------------------------------------------------------------------------
# stochastic integral and solution endpoint
# ---------------------------------------------------------------------------

def _correction_integral(model: LevyModel, spec: FlowSpec, t: float) -> np.ndarray:
    """``int_0^t T_{s,t} sigma_s (B + c_eps) ds`` (c_eps = 0 for radial)."""
    vec = model.drift
    if not np.any(vec):
        return np.zeros(model.dim)
    val, _ = quad_vec(lambda s: flow_eval(spec, s, t) @ (spec.sigma_at(s) @ vec),
                      0.0, t, epsabs=1e-10, epsrel=1e-10)
    return val


def ito_integral(path: JumpPath, spec: FlowSpec, model: Optional[LevyModel] = None) -> np.ndarray:
    """``int_0^t T_{s,t} sigma_s dw_s`` for the truncated configuration:
    atom sum plus the deterministic drift/compensator correction."""
    t = path.horizon
    out = np.zeros(spec.dim)
    if path.n_atoms:
        out = decay_apply(spec, path.s, t, path.z).sum(axis=0)
    vec = path.drift + path.compensator
    if np.any(vec):
        val, _ = quad_vec(lambda s: flow_eval(spec, s, t) @ (spec.sigma_at(s) @ vec),
                          0.0, t, epsabs=1e-10, epsrel=1e-10)
        out = out + val
    return out


def gaussian_endpoint_cov(model: LevyModel, spec: FlowSpec, t: float) -> np.ndarray:
    """``int_0^t T_{s,t} sigma_s C sigma_s^T T_{s,t}^T ds``."""
    C = np.asarray(model.gauss_cov, dtype=float)

    def f(s):
        m = flow_eval(spec, s, t) @ spec.sigma_at(s)
        return m @ C @ m.T

    val, _ = quad_vec(lambda s: f(s).ravel(), 0.0, t, epsabs=1e-12, epsrel=1e-12)
    return val.reshape(model.dim, model.dim)


def chunk_X(chunk: PathChunk, model: LevyModel, spec: FlowSpec,
            x: np.ndarray, *, _cov_chol=None) -> np.ndarray:
    """Endpoint ``X_t`` for every sample of the chunk."""
    t, d, n = chunk.t, model.dim, chunk.n
    base = flow_eval(spec, 0.0, t) @ np.asarray(x, dtype=float)
    out = np.tile(base, (n, 1))
    if chunk.s.size:
        rows = decay_apply(spec, chunk.s, t, chunk.z)
        seg = chunk.segment_ids()
        for j in range(d):
            out[:, j] += np.bincount(seg, weights=rows[:, j], minlength=n)
    out += _correction_integral(model, spec, t)[None, :]
    if chunk.gauss is not None:
        chol = _cov_chol if _cov_chol is not None else \
            np.linalg.cholesky(gaussian_endpoint_cov(model, spec, t))
        out += chunk.gauss @ chol.T
    if chunk.res_counts is not None and chunk.res_s is not None and chunk.res_z is not None:
        rows = decay_apply(spec, chunk.res_s, t, chunk.res_z)
        seg = np.repeat(np.arange(n), chunk.res_counts)
        for j in range(d):
            out[:, j] += np.bincount(seg, weights=rows[:, j], minlength=n)
    return out


def sample_X(model: LevyModel, spec: FlowSpec, x: np.ndarray, t: float,
             rng: np.random.Generator) -> np.ndarray:
    """One draw of the solution endpoint ``X_t^x``."""
    if t == 0.0:
        return np.asarray(x, dtype=float).copy()
    path = sample_jump_path(model, t, rng)
    out = flow_eval(spec, 0.0, t) @ np.asarray(x, dtype=float) + ito_integral(path, spec)
    if model.gauss_cov is not None:
        chol = np.linalg.cholesky(gaussian_endpoint_cov(model, spec, t))
        out = out + chol @ rng.standard_normal(model.dim)
    if model.residual_rate > 0.0:
        k1 = int(rng.poisson(model.residual_rate * t))
        if k1:
            s1 = rng.random(k1) * t
            z1 = model.residual_sampler(rng, k1)
            out = out + decay_apply(spec, s1, t, z1).sum(axis=0)
    return out


def truncation_discard_mass(model: LevyModel, g: WeightFunction, t: float) -> float:
    """``mu_t(g 1_{|z| < eps})``: the weight mass lost to the cutoff, used to
    inflate tolerances of estimators that target the untruncated model."""
    if model.truncation_eps <= 0.0:
        return 0.0
    return t * nu0_integral(
        model, lambda z: float(g.radial(np.array([np.linalg.norm(z)]))[0]),
        0.0, model.truncation_eps)
