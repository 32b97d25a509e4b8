import math

import numpy as np
import pytest
from scipy.stats import chi2

from conftest import make_inv_square, make_log_type, make_tapered
from levyharnack.flow import FlowSpec
from levyharnack.levy_model import LevyModel, power_weight, stable_profile
from levyharnack.pathsim import (JumpPath, chunk_X, chunk_weight, ito_integral,
                                 iter_path_chunks, gaussian_endpoint_cov,
                                 path_functional, sample_jump_path, sample_X,
                                 substream, truncation_discard_mass)


def collect(model, t, n, seed, **kw):
    return list(iter_path_chunks(model, t, n, seed, **kw))


# ---------------------------------------------------------------------------
# sampling law
# ---------------------------------------------------------------------------

def test_poisson_count_mean(inv_square):
    t, n = 0.5, 100_000
    lam = inv_square.shell_mass(inv_square.truncation_eps)
    total = sum(int(c.counts.sum()) for c in collect(inv_square, t, n, 101))
    se = math.sqrt(t * lam / n)
    assert abs(total / n - t * lam) <= 3.0 * se


def test_truncation_beyond_support_raises():
    with pytest.raises(ValueError):
        LevyModel(1, stable_profile(1.0, 1.0, 1, r0=1.0), truncation_eps=1.5)


@pytest.mark.parametrize("factory", [make_inv_square, make_log_type])
def test_radius_goodness_of_fit(factory):
    """20 equiprobable bins against the quadrature CDF, significance 1e-3."""
    model = factory()
    t, n = 0.5, 30_000
    radii = np.concatenate([c.radii for c in collect(model, t, n, 7)])
    edges = model.sample_radius(model.truncation_eps, model.rho0.support_radius,
                                np.linspace(0.0, 1.0, 21))
    edges[0], edges[-1] = 0.0, np.inf
    counts, _ = np.histogram(radii, bins=edges)
    expected = len(radii) / 20.0
    stat = float(np.sum((counts - expected) ** 2 / expected))
    assert stat < chi2.ppf(1.0 - 1e-3, df=19)


def test_reproducible_across_chunking_and_aux(inv_square):
    a = collect(inv_square, 0.5, 700, 9, chunk_size=700, n_aux=2)
    b = collect(inv_square, 0.5, 700, 9, chunk_size=123, n_aux=2)
    assert np.array_equal(np.concatenate([c.z for c in a]),
                          np.concatenate([c.z for c in b]))
    assert np.array_equal(np.vstack([c.aux_u for c in a]),
                          np.vstack([c.aux_u for c in b]))


def test_first_index_gives_disjoint_blocks(inv_square):
    a = collect(inv_square, 0.5, 100, 9)[0]
    b = collect(inv_square, 0.5, 100, 9, first_index=100)[0]
    assert a.counts[0] != b.counts[0] or not np.array_equal(a.z[:3], b.z[:3])
    c = collect(inv_square, 0.5, 50, 9, first_index=50)[0]
    # block [50, 100) of `a` equals the shifted batch
    lo = a.offsets[50]
    assert np.array_equal(a.z[lo:], np.concatenate([c.z for c in [c]]))


def test_single_path_matches_batch_row(inv_square):
    p = sample_jump_path(inv_square, 0.5, substream(9, 3))
    chunk = collect(inv_square, 0.5, 4, 9)[0]
    lo, hi = chunk.offsets[3], chunk.offsets[4]
    assert p.n_atoms == chunk.counts[3]
    assert np.array_equal(p.z, chunk.z[lo:hi])
    assert np.array_equal(p.s, chunk.s[lo:hi])


# ---------------------------------------------------------------------------
# functionals and integrals
# ---------------------------------------------------------------------------

def test_path_functional_examples():
    p = JumpPath(1.0, 0.01, np.array([0.3]), np.array([[0.5]]),
                 np.zeros(1), np.zeros(1))
    g2 = power_weight(2.0)
    assert path_functional(p, g2) == pytest.approx(0.25)
    empty = JumpPath(1.0, 0.01, np.empty(0), np.empty((0, 1)), np.zeros(1), np.zeros(1))
    assert path_functional(empty, g2) == 0.0


def test_path_functional_additive(inv_square):
    g2, g3 = power_weight(2.0), power_weight(3.0)
    both = power_weight(2.0)
    both = type(g2)(radial=lambda r: g2.radial(r) + g3.radial(r),
                    radial_slope=lambda r: g2.radial_slope(r) + g3.radial_slope(r))
    for i in range(5):
        p = sample_jump_path(inv_square, 0.5, substream(33, i))
        assert path_functional(p, both) == pytest.approx(
            path_functional(p, g2) + path_functional(p, g3), rel=1e-12)


def test_ito_integral_examples():
    spec0 = FlowSpec(1, A=0.0, sigma=1.0)
    one = JumpPath(1.0, 0.01, np.array([0.4]), np.array([[1.0]]), np.zeros(1), np.zeros(1))
    assert ito_integral(one, spec0)[0] == pytest.approx(1.0)
    empty = JumpPath(1.0, 0.01, np.empty(0), np.empty((0, 1)), np.zeros(1), np.zeros(1))
    assert ito_integral(empty, spec0)[0] == 0.0
    spec = FlowSpec(1, A=-1.0, sigma=1.0)
    early = JumpPath(1.0, 0.01, np.array([0.0]), np.array([[1.0]]), np.zeros(1), np.zeros(1))
    assert ito_integral(early, spec)[0] == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_drift_correction_integral():
    m = make_inv_square()
    m_drift = LevyModel(1, m.rho0, truncation_eps=0.02, drift=np.array([2.0]))
    spec = FlowSpec(1, A=-1.0, sigma=1.0)
    empty = JumpPath(1.0, 0.02, np.empty(0), np.empty((0, 1)),
                     np.array([2.0]), np.zeros(1))
    # int_0^1 e^{-(1-s)} * 2 ds = 2 (1 - e^{-1})
    assert ito_integral(empty, spec)[0] == pytest.approx(2 * (1 - math.exp(-1)), rel=1e-9)
    X = sample_X(m_drift, spec, np.array([0.0]), 1.0, substream(5, 0))
    assert np.isfinite(X[0])


def test_sample_X_t0_and_mean(inv_square, ou_flow):
    x = np.array([0.3])
    assert sample_X(inv_square, ou_flow, x, 0.0, substream(1, 0))[0] == 0.3
    t, n = 0.5, 60_000
    s = 0.0
    ssq = 0.0
    for c in collect(inv_square, t, n, 55):
        X = chunk_X(c, inv_square, ou_flow, x)
        s += X.sum()
        ssq += float(X[:, 0] @ X[:, 0])
    mean = s / n
    se = math.sqrt((ssq / n - mean ** 2) / n)
    assert abs(mean - 0.3 * math.exp(-0.25)) <= 3.0 * se


def test_campbell_identity(inv_square, g_cubic):
    t, n = 0.5, 50_000
    mu = t * 2.0 * (1.0 - 0.02 ** 2) / 2.0   # t * int |z|^3 nu0_eps closed form
    s = ssq = 0.0
    for c in collect(inv_square, t, n, 21):
        W, _ = chunk_weight(c, g_cubic)
        s += W.sum()
        ssq += float(W @ W)
    mean = s / n
    se = math.sqrt((ssq / n - mean ** 2) / n)
    assert abs(mean - mu) <= 3.0 * se


def test_truncation_discard_mass(inv_square, g_cubic):
    v = truncation_discard_mass(inv_square, g_cubic, 0.5)
    assert v == pytest.approx(0.5 * 2.0 * 0.02 ** 2 / 2.0, rel=1e-9)


def test_stable_law_empirical_cf():
    """X_t - e^{at} x for the full stable driver matches the exact stable
    law through the empirical characteristic function at 5 frequencies."""
    model = LevyModel(1, stable_profile(1.0, 1.0, 1), truncation_eps=1e-3)
    a, t, n = -1.0, 0.5, 40_000
    spec = FlowSpec(1, A=a, sigma=1.0)
    scale = math.pi * (1.0 - math.exp(a * t)) / (-a) if a else math.pi * t
    freqs = np.array([0.25, 0.5, 1.0, 2.0, 4.0])
    re = np.zeros(5)
    re2 = np.zeros(5)
    for c in iter_path_chunks(model, t, n, 88):
        X = chunk_X(c, model, spec, np.array([0.0]))
        vals = np.cos(np.outer(X[:, 0], freqs))
        re += vals.sum(axis=0)
        re2 += (vals ** 2).sum(axis=0)
    mean = re / n
    se = np.sqrt(np.maximum(re2 / n - mean ** 2, 0.0) / n)
    ref = np.exp(-scale * freqs)
    assert np.all(np.abs(mean - ref) <= 4.0 * se + 1e-3)


def test_gaussian_residual_endpoint():
    m = LevyModel(1, stable_profile(1.0, 1.0, 1, r0=1.0), truncation_eps=0.02,
                  gauss_cov=np.array([[1.0]]))
    spec = FlowSpec(1, A=-1.0, sigma=1.0)
    Q = gaussian_endpoint_cov(m, spec, 0.5)
    assert Q[0, 0] == pytest.approx((1 - math.exp(-1.0)) / 2.0, rel=1e-9)
    # Gaussian block is drawn: variance of X exceeds the pure-jump variance
    n = 20_000
    v_with = v_without = 0.0
    m0 = LevyModel(1, m.rho0, truncation_eps=0.02)
    for c in iter_path_chunks(m, 0.5, n, 3):
        v_with += float(chunk_X(c, m, spec, np.zeros(1))[:, 0] @ chunk_X(c, m, spec, np.zeros(1))[:, 0])
    for c in iter_path_chunks(m0, 0.5, n, 3):
        v_without += float(chunk_X(c, m0, spec, np.zeros(1))[:, 0] @ chunk_X(c, m0, spec, np.zeros(1))[:, 0])
    assert v_with / n > v_without / n + 0.2


def test_residual_jappier_matches_rate():
    m = LevyModel(1, stable_profile(1.0, 1.0, 1, r0=1.0), truncation_eps=0.02,
                  residual_rate=3.0,
                  residual_sampler=lambda rng, size: rng.standard_normal((size, 1)))
    n = 20_000
    tot = 0
    for c in iter_path_chunks(m, 0.5, n, 3):
        tot += int(c.res_counts.sum())
    assert abs(tot / n - 1.5) <= 3.0 * math.sqrt(1.5 / n)
