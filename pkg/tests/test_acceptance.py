"""Acceptance suite: every exit criterion at its stated tolerance, one
pass/fail line printed per criterion.

Statistical checks run on fixed seeds, so the suite is deterministic; the
runtime budgets are asserted against wall-clock time.
"""

import math
import time

import numpy as np
import pytest

from conftest import (make_full_stable, make_inv_square, make_log_type,
                      make_tapered, make_tapered_2d, make_flat,
                      quartic_mark_base)
from levyharnack.bounds import (BoundInputs, harnack_power_bound,
                                neg_moment_integral)
from levyharnack.flow import FlowSpec
from levyharnack.harnack_lab import (GridConfig, StableOUOracle1D, f_constant,
                                     f_gauss_bump, f_sigmoid, verify_grid)
from levyharnack.levy_model import (capped_power_weight, inverse_peak_weight,
                                    power_weight, stable_profile,
                                    LevyModel)
from levyharnack.mecke_girsanov import (girsanov_check, gradient_fd_oracle,
                                        gradient_shift_mc, gradient_weight_mc,
                                        mecke_two_sides, negative_moment_mc,
                                        normalized_jump_density, semigroup_mc)
from levyharnack import finite_markov as fmk


def announce(num, name, ok, detail=""):
    print(f"[acceptance {num:>2}] {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def comb_se(*ests):
    return math.sqrt(sum(float(np.max(np.atleast_1d(e.stderr))) ** 2 for e in ests))


# ---------------------------------------------------------------------------
# 1. two-sided configuration identity
# ---------------------------------------------------------------------------

def test_criterion_1_mecke_identity():
    t0 = time.time()
    n = 100_000
    ok = True
    worst = 0.0
    for model in (make_inv_square(), make_log_type()):
        g = power_weight(3.0)
        for h_name in ("mass", "normalized", "laplace"):
            lhs, rhs = mecke_two_sides(model, g, h_name, 0.5, n, seed=101)
            gap = abs(float(lhs.mean) - float(rhs.mean))
            tol = 4.0 * comb_se(lhs, rhs) + 1e-12
            worst = max(worst, gap / max(tol, 1e-300))
            ok &= gap <= tol
    elapsed = time.time() - t0
    ok &= elapsed < 60.0
    announce(1, "two-sided identity (3 functionals x 2 models)", ok,
             f"worst gap/tol={worst:.2f}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. negative-moment identity
# ---------------------------------------------------------------------------

def test_criterion_2_negative_moments():
    t0 = time.time()
    model = make_inv_square()
    g = power_weight(3.0)
    ok = True
    details = []
    for theta in (0.5, 1.0, 2.0):
        quad_side = neg_moment_integral(model, g, theta, 1.0)
        mc_side = negative_moment_mc(model, g, theta, 1.0, 100_000, seed=202)
        gap = abs(float(mc_side.mean) - quad_side)
        tol = 4.0 * float(mc_side.stderr) + mc_side.bias_bound
        ok &= gap <= tol
        details.append(f"theta={theta}: gap/tol={gap / tol:.2f}")
    # finite-measure case: infinite on both sides
    flat = make_flat()
    g2 = power_weight(2.0)
    quad_inf = neg_moment_integral(flat, g2, 1.0, 1.0)
    mc_inf = negative_moment_mc(flat, g2, 1.0, 1.0, 2_000, seed=203)
    ok &= math.isinf(quad_inf) and math.isinf(float(mc_inf.mean))
    elapsed = time.time() - t0
    ok &= elapsed < 60.0
    announce(2, "negative-moment identity + divergence classification", ok,
             "; ".join(details) + f", {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 3. derivative formulas
# ---------------------------------------------------------------------------

def test_criterion_3_derivative_formulas():
    t0 = time.time()
    t = 0.5
    batteries = [
        (make_tapered(), FlowSpec(1, A=-0.5, sigma=1.0), power_weight(3.0)),
        (make_log_type(), FlowSpec(1, A=-0.5, sigma=1.0), power_weight(4.0)),
        (make_tapered_2d(), FlowSpec(2, A=np.array([-1.0, -0.3]),
                                     sigma=np.array([1.0, 0.5])), power_weight(4.0)),
        (make_log_type(d=2), FlowSpec(2, A=np.array([-1.0, -0.3]),
                                      sigma=np.array([1.0, 0.5])), power_weight(4.0)),
    ]
    ok = True
    worst = 0.0
    n = 40_000
    for bi, (model, spec, g) in enumerate(batteries):
        d = model.dim
        x = np.array([0.3, -0.2][:d])
        c = np.array([1.0, 0.5][:d])
        Tt_c = np.diag(np.exp(np.atleast_1d(spec._a_val if spec._a_kind != "scalar"
                                            else np.full(d, spec._a_val)) * t)) @ c
        fs = [("linear", lambda Y: 1.0 + Y @ c, Tt_c),
              ("bump", f_gauss_bump(0.2 * c, 1.0), None),
              ("sigmoid", f_sigmoid(c, 0.1, 0.8, 1.0), None)]
        for name, f, exact in fs:
            seed = 1000 + 17 * bi
            ga = gradient_shift_mc(model, spec, f, x, t, g, n, seed)
            gb = gradient_weight_mc(model, spec, f, x, t, g, n, seed + 1)
            fd_mean, fd_var = np.zeros(d), np.zeros(d)
            for j in range(d):
                e = np.zeros(d)
                e[j] = 1.0
                fd = gradient_fd_oracle(model, spec, f, x, t, n // 2, 1e-2, e,
                                        seed + 2 + j)
                fd_mean[j], fd_var[j] = float(fd.mean), float(fd.stderr) ** 2
            pairs = [(np.asarray(ga.mean), np.asarray(ga.stderr) ** 2,
                      np.asarray(gb.mean), np.asarray(gb.stderr) ** 2),
                     (np.asarray(ga.mean), np.asarray(ga.stderr) ** 2, fd_mean, fd_var),
                     (np.asarray(gb.mean), np.asarray(gb.stderr) ** 2, fd_mean, fd_var)]
            for m1, v1, m2, v2 in pairs:
                tol = 4.0 * np.sqrt(v1 + v2) + 10.0 * ga.bias_bound + 1e-12
                ratio = float(np.max(np.abs(m1 - m2) / tol))
                worst = max(worst, ratio)
                ok &= ratio <= 1.0
            if exact is not None:
                ok &= ga.z_against(exact) <= 3.0
                ok &= gb.z_against(exact) <= 3.0
    elapsed = time.time() - t0
    ok &= elapsed < 300.0
    announce(3, "derivative formulas (2 forms + FD, d in {1,2})", ok,
             f"worst |diff|/tol={worst:.2f}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 4. density-shift transform
# ---------------------------------------------------------------------------

def test_criterion_4_girsanov():
    t0 = time.time()
    model = make_tapered()
    ghat = normalized_jump_density(model, quartic_mark_base(), 0.5)
    rep = girsanov_check(model, ghat, 0.5, 100_000, seed=404)
    zs = {k: v[0].z_against(v[1]) for k, v in rep.items() if k != "max_abs_z"}
    ok = zs["ER"] <= 3.0 and zs["count"] <= 3.0 and zs["campbell"] <= 3.0
    ok &= max(zs.values()) <= 4.0
    elapsed = time.time() - t0
    ok &= elapsed < 60.0
    announce(4, "reweighting identity (E[R]=1, count, linear statistic)", ok,
             f"z: ER={zs['ER']:.2f} count={zs['count']:.2f} "
             f"campbell={zs['campbell']:.2f} max={max(zs.values()):.2f}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 5 & 6. Harnack battery / log-Harnack battery
# ---------------------------------------------------------------------------

def _battery_grid(n, with_power, with_log, with_first, with_grad, seed=505):
    model = make_full_stable()
    spec = FlowSpec(1, A=-0.5, sigma=1.0)
    return GridConfig(model, spec, inverse_peak_weight(model),
                      capped_power_weight(4.0, 1.0),
                      [f_constant(1), f_gauss_bump([0.2], 1.0),
                       f_sigmoid([1.0], 0.1, 0.8, 1.0)],
                      [2.0], [0.25, 0.5, 1.0, 2.0], [0.0, 0.1, 0.25],
                      np.array([0.3]), n, seed,
                      with_power=with_power, with_log=with_log,
                      with_first_bound=with_first, with_gradient=with_grad)


def test_criterion_5_harnack_battery():
    t0 = time.time()
    cfg = _battery_grid(20_000, True, False, True, True)
    reports = verify_grid(cfg)
    ok = all(r.passed for r in reports)
    n_vac = sum(r.vacuous for r in reports)
    h0 = [r for r in reports if r.check == "harnack" and r.h_norm == 0.0]
    ok &= all(r.bound == 1.0 for r in h0)
    ordering_worst = 0.0
    for r in reports:
        if r.check != "first-bound" or r.vacuous:
            continue
        # empirical ratio <= sharper bound <= closed-form bound (3 SE each)
        emp, emp_se = r.extra["empirical_ratio"], r.extra["empirical_ratio_se"]
        first, first_se = float(r.lhs.mean), float(r.lhs.stderr)
        m1 = (first - emp) / math.hypot(emp_se, first_se)
        m2 = (r.bound - first) / max(first_se, 1e-300)
        ordering_worst = max(ordering_worst, -m1, -m2)
        ok &= m1 > -3.0 and m2 > -3.0
    elapsed = time.time() - t0
    ok &= elapsed < 300.0
    announce(5, "power-Harnack battery (ratio/first/closed ordering)", ok,
             f"{len(reports)} checks, vacuous={n_vac}, "
             f"worst ordering z={-ordering_worst:.2f}, {elapsed:.1f}s")


def test_criterion_6_log_harnack_battery():
    t0 = time.time()
    cfg = _battery_grid(20_000, False, True, False, False, seed=606)
    reports = verify_grid(cfg)
    ok = all(r.passed for r in reports)
    h0 = [r for r in reports if r.h_norm == 0.0]
    ok &= all(r.bound == 0.0 for r in h0)    # Jensen reduction at h = 0
    worst = min(r.margin_se for r in reports)
    elapsed = time.time() - t0
    ok &= elapsed < 180.0
    announce(6, "log-Harnack battery", ok,
             f"{len(reports)} checks, worst margin z={worst:.2f}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 7. heavy-tail time scaling of the bound integral
# ---------------------------------------------------------------------------

def test_criterion_7_stable_scaling_exponent():
    from levyharnack.bounds import decreasing_profile_bounds
    phi = stable_profile(1.0, 1.0, 1)
    ts = np.geomspace(0.05, 0.5, 7)
    vals = []
    for t in ts:
        har, _ = decreasing_profile_bounds(phi, 2.0, float(t), 1.0, 1, 1.0, 1.0)
        vals.append(har / math.e - 1.0)   # strip e^{c2 h} (1 + c2 h I): h=c2=1
    slope = float(np.polyfit(np.log(ts), np.log(vals), 1)[0])
    ok = abs(slope + 2.0) <= 0.05
    announce(7, "heavy-tail bound scaling t^-(d+a)/(a(p-1))", ok,
             f"slope={slope:.4f} (target -2 +- 0.05)")


# ---------------------------------------------------------------------------
# 8. exact one-dimensional oracle rows
# ---------------------------------------------------------------------------

def test_criterion_8_stable_ou_oracle_rows():
    t0 = time.time()
    a, t = -1.0, 0.5
    model = LevyModel(1, stable_profile(1.0, 1.0, 1), truncation_eps=2e-3)
    spec = FlowSpec(1, A=a, sigma=1.0)
    orc = StableOUOracle1D(a, 1.0, 1.0, t)
    g = capped_power_weight(3.0, 1.0)
    ok = True
    rows = []
    for f in (f_gauss_bump([0.2], 1.0), f_sigmoid([1.0], 0.1, 0.8, 1.0)):
        ref_p = orc.semigroup(f, 0.3)
        ref_g = orc.gradient(f, 0.3)
        est_p = semigroup_mc(model, spec, f, np.array([0.3]), t, 40_000, seed=808)
        est_g = gradient_weight_mc(model, spec, f, np.array([0.3]), t, g,
                                   40_000, seed=809)
        zp = est_p.z_against(ref_p)
        zg = est_g.z_against([ref_g])
        rows.append(f"{f.name}: z_P={zp:.2f} z_grad={zg:.2f}")
        ok &= zp <= 3.5 and zg <= 4.0
    elapsed = time.time() - t0
    announce(8, "Cauchy-OU oracle rows (semigroup + gradient)", ok,
             "; ".join(rows) + f", {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 9. finite-state consequence suite
# ---------------------------------------------------------------------------

def test_criterion_9_finite_state_suite():
    t0 = time.time()
    p, delta = 2.0, 1.5
    ok = True
    worst = {"tight": 0.0, "kernel": 0.0, "hyper": 0.0, "entropy": 0.0}
    for i in range(100):
        rng = np.random.default_rng((909, i))
        fm = fmk.random_markov(3, rng)
        C = fmk.minimal_harnack_constant(fm, 0, 1, p)
        sup = fmk.harnack_sup_oracle(fm, 0, 1, p, restarts=40, seed=i)
        tight = abs(C - sup) / max(C, 1.0)
        worst["tight"] = max(worst["tight"], tight)
        ok &= tight <= 1e-4
        ok &= sup > C * math.exp(-0.05)           # deflation falsified
        KL = fmk.minimal_logharnack_constant(fm, 0, 1)
        supl = fmk.logharnack_sup_oracle(fm, 0, 1, restarts=40, seed=i)
        ok &= abs(KL - supl) <= 1e-4
        psi = fmk.minimal_psi_matrix(fm, p=p)
        kb = fmk.check_kernel_bounds(fm, psi, p)
        worst["kernel"] = min(worst.get("kernel", 0.0), kb["power_mean_slack"],
                              kb["overlap_slack"])
        ok &= kb["power_mean_slack"] >= -1e-9 and kb["overlap_slack"] >= -1e-9
        fmr = fmk.random_reversible(3, rng)
        hb = fmk.hyperbound_check(fmr, fmk.minimal_psi_matrix(fmr, p=p), p,
                                  delta, restarts=40, seed=i)
        worst["hyper"] = min(worst["hyper"], hb["slack"])
        ok &= hb["slack"] >= -1e-6
        dens = rng.dirichlet(np.ones(3)) / fmr.mu
        dens /= dens @ fmr.mu
        ec = fmk.entropy_cost_check(fmr, fmk.minimal_psi_matrix(fmr), dens)
        worst["entropy"] = min(worst["entropy"], ec["slack"])
        ok &= ec["slack"] >= -1e-9
    elapsed = time.time() - t0
    ok &= elapsed < 120.0
    announce(9, "finite-state suite (100 instances, all consequences)", ok,
             f"worst tightness={worst['tight']:.2e}, worst slacks: "
             f"kernel={worst['kernel']:.1e} hyper={worst['hyper']:.1e} "
             f"entropy={worst['entropy']:.1e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 10. determinism of the full suite
# ---------------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path):
    from levyharnack.cli import main
    t0 = time.time()
    args = ["full-suite", "--samples", "2500", "--seed", "7",
            "--set", "finite_markov.instances=8",
            "--set", "grids.t=[0.25,1.0]", "--set", "grids.h=[0.0,0.2]"]
    outs = []
    for run, workers in (("a", 1), ("b", 1), ("c", 3)):
        out = tmp_path / run
        rc = main(args + ["--out", str(out), "--workers", str(workers)])
        assert rc == 0
        outs.append(out)
    files = sorted(f.name for f in outs[0].iterdir())
    ok = len(files) > 0
    for name in files:
        blobs = [(o / name).read_bytes() for o in outs]
        ok &= blobs[0] == blobs[1] == blobs[2]
    elapsed = time.time() - t0
    announce(10, "byte-identical artifacts across runs and workers", ok,
             f"{len(files)} files compared, {elapsed:.1f}s")
