import math

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import make_flat, make_full_stable, make_inv_square, make_log_type, make_tapered
from levyharnack._quad import DivergenceError
from levyharnack.levy_model import (JumpRate, capped_power_weight,
                                    inverse_peak_weight, mu_t_exp_integral,
                                    nu0_integral, power_weight, table_profile,
                                    validate_model)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def test_validate_inv_square(inv_square):
    diag = validate_model(inv_square)
    assert diag.infinite_activity
    # int (1 ^ z^2) nu0 = 2 int_0^1 dz = 2
    assert diag.levy_integral == pytest.approx(2.0, rel=1e-7)
    assert diag.ok


def test_validate_flat_finite_measure():
    diag = validate_model(make_flat())
    assert not diag.infinite_activity
    assert diag.mass_ge_1 == 0.0


def test_validate_full_stable_mass(full_stable):
    # nu0(|z| >= 1) = 2 int_1^inf r^-2 dr = 2
    assert validate_model(full_stable).mass_ge_1 == pytest.approx(2.0, rel=1e-10)


def test_validate_log_type_infinite(log_type):
    assert validate_model(log_type).infinite_activity


def test_gradient_profiles_match_finite_differences():
    h = 1e-6
    for model in (make_tapered(), make_log_type(), make_full_stable()):
        r = np.linspace(0.05, min(model.rho0.support_radius, 3.0) * 0.9, 41)
        fd = (model.rho0.profile(r + h) - model.rho0.profile(r - h)) / (2 * h)
        grad = model.rho0.gradient_profile(r)
        assert np.max(np.abs(fd - grad) / np.maximum(np.abs(grad), 1.0)) < 1e-6


# ---------------------------------------------------------------------------
# nu0 integrals
# ---------------------------------------------------------------------------

def test_nu0_integral_examples(inv_square):
    with pytest.raises(DivergenceError):
        nu0_integral(inv_square, lambda z: float(np.linalg.norm(z)), 0.0, 1.0)
    v = nu0_integral(inv_square, lambda z: float(z @ z), 0.0, 1.0)
    assert v == pytest.approx(2.0, rel=1e-9)
    assert nu0_integral(inv_square, lambda z: 0.0, 0.0, 1.0) == 0.0


def test_nu0_integral_linearity(inv_square):
    rng = np.random.default_rng(5)
    for _ in range(4):
        a, b = rng.uniform(0.2, 3.0, size=2)
        f1 = lambda z: float(z @ z)
        f2 = lambda z: float(np.linalg.norm(z)) ** 3
        combined = nu0_integral(inv_square, lambda z: a * f1(z) + b * f2(z))
        parts = a * nu0_integral(inv_square, f1) + b * nu0_integral(inv_square, f2)
        assert combined == pytest.approx(parts, rel=1e-9)


def test_shell_mass_closed_form(inv_square, full_stable):
    assert inv_square.shell_mass(0.02) == pytest.approx(98.0, rel=1e-12)
    assert full_stable.shell_mass(0.5) == pytest.approx(4.0, rel=1e-12)


# ---------------------------------------------------------------------------
# the exponential moment integral
# ---------------------------------------------------------------------------

def test_mu_exp_zero_rate(inv_square, g_cubic):
    assert mu_t_exp_integral(inv_square, g_cubic, 0.0, 1.0) == 0.0


def test_mu_exp_divergence_for_linear_weight(inv_square):
    # g = |z| against the inverse-square profile is not integrable near 0
    with pytest.raises(DivergenceError):
        mu_t_exp_integral(inv_square, power_weight(1.0), 1.0, 1.0)


def test_mu_exp_truncated_region_pin(inv_square):
    # frozen from an independent high-precision quadrature oracle
    v = mu_t_exp_integral(inv_square, power_weight(1.0), 1.0, 1.0, lo=0.02)
    assert v == pytest.approx(6.9865392494957329, rel=1e-10)
    v2 = mu_t_exp_integral(inv_square, power_weight(1.0), 2.0, 1.0, lo=0.02)
    assert v2 == pytest.approx(12.72117936450978, rel=1e-10)


def test_mu_exp_full_model_pin(inv_square, g_cubic):
    v = mu_t_exp_integral(inv_square, g_cubic, 1.0, 1.0)
    assert v == pytest.approx(0.83513586562736808, rel=1e-10)
    v2 = mu_t_exp_integral(inv_square, g_cubic, 2.0, 1.0)
    assert v2 == pytest.approx(1.4418383629150259, rel=1e-10)


def test_mu_exp_monotone_concave_in_r(inv_square, g_cubic):
    rs = np.array([0.25, 0.5, 1.0, 2.0, 4.0, 8.0])
    vals = np.array([mu_t_exp_integral(inv_square, g_cubic, r, 1.0) for r in rs])
    assert np.all(np.diff(vals) > 0)
    # concavity: chords lie below (equal log-spaced grid, test midpoint rule)
    mids = np.array([mu_t_exp_integral(inv_square, g_cubic, 0.5 * (a + b), 1.0)
                     for a, b in zip(rs[:-1], rs[1:])])
    assert np.all(mids >= 0.5 * (vals[:-1] + vals[1:]) - 1e-12)


def test_jump_rate_matches_scipy_quad(tapered, g_cubic):
    rate = JumpRate(tapered, g_cubic)
    for r in (0.3, 1.0, 7.5, 120.0):
        ref, _ = quad(lambda s: (1 - math.exp(-r * s ** 3))
                      * float(tapered.radial_intensity(np.array([s]))[0]),
                      0, 1, epsabs=1e-13, epsrel=1e-12, limit=300)
        assert rate.at_radius(r) == pytest.approx(ref, rel=1e-9)


def test_jump_rate_constant_tail(full_stable):
    g = inverse_peak_weight(full_stable)
    rate = JumpRate(full_stable, g)
    # closed form: 2 [ int_0^1 (1-e^{-r z^2}) z^-2 dz + (1-e^{-r}) ]
    r = 3.0
    inner, _ = quad(lambda z: (1 - math.exp(-r * z * z)) / z ** 2, 0, 1,
                    epsabs=1e-13, epsrel=1e-12)
    ref = 2.0 * (inner + (1 - math.exp(-r)))
    assert rate.at_radius(r) == pytest.approx(ref, rel=1e-9)


# ---------------------------------------------------------------------------
# samplers and tables
# ---------------------------------------------------------------------------

def test_stable_radius_inverse_cdf(inv_square):
    u = np.linspace(0.0, 1.0, 11)
    r = inv_square.sample_radius(0.02, 1.0, u)
    # tail CDF of r^-2 on [eps, 1]: u = (1/eps - 1/r) / (1/eps - 1)
    ref = 1.0 / (1.0 / 0.02 - u * (1.0 / 0.02 - 1.0))
    assert np.max(np.abs(r - ref)) < 1e-12


def test_numeric_radius_table_matches_closed_form():
    # force the numeric path via a table profile of the same density
    grid = np.geomspace(0.02, 1.0, 4001)
    model = __import__("levyharnack.levy_model", fromlist=["LevyModel"])
    tab = table_profile(grid, grid ** -2.0)
    m = model.LevyModel(1, tab, truncation_eps=0.02)
    u = np.linspace(0.01, 0.99, 21)
    r_num = m.sample_radius(0.021, 0.99, u)
    ref = 1.0 / (1.0 / 0.021 - u * (1.0 / 0.021 - 1.0 / 0.99))
    assert np.max(np.abs(r_num - ref)) < 2e-4


def test_capped_power_weight_is_c1():
    g = capped_power_weight(3.0, 1.0)
    r = np.array([0.999999, 1.000001])
    assert np.all(np.abs(g.radial(r)) < 1e-11)
    assert np.all(np.abs(g.radial_slope(r)) < 1e-5)
    h = 1e-7
    rr = np.linspace(0.1, 0.9, 17)
    fd = (g.radial(rr + h) - g.radial(rr - h)) / (2 * h)
    assert np.max(np.abs(fd - g.radial_slope(rr))) < 1e-5


def test_inverse_peak_weight_shapes(full_stable):
    g = inverse_peak_weight(full_stable)
    r = np.array([0.5, 2.0])
    assert g.radial(r) == pytest.approx([0.25, 1.0])
    # rho0 * g == min(rho0, 1): log-gradient vanishes on the peak region
    assert g.radial_slope(np.array([2.0]))[0] == 0.0
    assert g.constant_beyond == (1.0, 1.0)
