import math

import numpy as np
import pytest

from levyharnack.flow import (FlowSpec, decay_apply, flow_eval, linear_diag_A,
                              sigma_inv_T, sigma_inv_T_norm, weight_apply)


def test_flow_zero_A_identity():
    spec = FlowSpec(2, A=0.0, sigma=1.0)
    assert np.allclose(flow_eval(spec, 0.3, 1.7), np.eye(2))


def test_flow_scalar_exponential():
    spec = FlowSpec(2, A=-1.0, sigma=1.0)
    T = flow_eval(spec, 0.0, 1.0)
    assert np.allclose(T, math.exp(-1.0) * np.eye(2), atol=1e-13)


def test_flow_self_is_identity():
    spec = FlowSpec(3, A=np.arange(9).reshape(3, 3) / 10.0, sigma=1.0)
    assert np.array_equal(flow_eval(spec, 0.7, 0.7), np.eye(3))


def test_flow_time_reversal_raises():
    spec = FlowSpec(1, A=0.0, sigma=1.0)
    with pytest.raises(ValueError):
        flow_eval(spec, 1.0, 0.5)


def test_flow_time_dependent_linear_diag():
    # A_u = u * I: T_{0,1} = e^{1/2} I, closed form vs RK4
    spec = FlowSpec(2, A=linear_diag_A(np.array([1.0, 1.0])), sigma=1.0,
                    alpha_bound=2.0, lambda_bound=1.0)
    T = flow_eval(spec, 0.0, 1.0)
    assert np.allclose(T, math.exp(0.5) * np.eye(2), atol=1e-9)
    T2 = flow_eval(spec, 0.5, 1.0)
    assert np.allclose(T2, math.exp((1.0 - 0.25) / 2.0) * np.eye(2), atol=1e-9)


def test_cocycle_property():
    rng = np.random.default_rng(11)
    A = rng.normal(size=(2, 2)) * 0.8
    spec = FlowSpec(2, A=A, sigma=1.0)
    for _ in range(6):
        s, u, t = np.sort(rng.uniform(0.0, 2.0, size=3))
        lhs = flow_eval(spec, s, t)
        rhs = flow_eval(spec, u, t) @ flow_eval(spec, s, u)
        assert np.linalg.norm(lhs - rhs) < 1e-8


def test_cocycle_time_dependent():
    spec = FlowSpec(1, A=linear_diag_A(np.array([-1.3])), sigma=1.0,
                    alpha_bound=0.0, lambda_bound=1.0)
    lhs = flow_eval(spec, 0.2, 1.5)
    rhs = flow_eval(spec, 0.9, 1.5) @ flow_eval(spec, 0.2, 0.9)
    assert np.linalg.norm(lhs - rhs) < 1e-8


def test_sigma_inv_T_examples():
    assert sigma_inv_T(FlowSpec(2, A=0.0, sigma=1.0), 0.4) == pytest.approx(np.eye(2))
    assert sigma_inv_T(FlowSpec(1, A=0.0, sigma=2.0), 0.4)[0, 0] == pytest.approx(0.5)
    v = sigma_inv_T(FlowSpec(1, A=-1.0, sigma=1.0), 1.0)[0, 0]
    assert v == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_bound_propagation():
    spec = FlowSpec(2, A=np.array([-1.0, 0.4]), sigma=np.array([1.0, 0.5]))
    lam, alpha = spec.lambda_bound, spec.alpha_bound
    assert alpha == pytest.approx(0.4)
    assert lam == pytest.approx(2.0)
    for s in np.linspace(0.0, 1.5, 9):
        assert sigma_inv_T_norm(spec, s) <= lam * math.exp(alpha * s) * (1 + 1e-6)


def test_validate_catches_violations():
    spec = FlowSpec(1, A=1.0, sigma=1.0, alpha_bound=0.5)
    assert any("eigenvalue" in v for v in spec.validate(t_max=1.0))
    ok = FlowSpec(1, A=1.0, sigma=1.0)
    assert ok.validate(t_max=1.0) == []


def test_decay_and_weight_apply_match_loops():
    rng = np.random.default_rng(3)
    s = np.sort(rng.uniform(0.0, 1.0, size=7))
    z = rng.normal(size=(7, 2))
    # separable spec
    spec = FlowSpec(2, A=np.array([-1.0, -0.3]), sigma=np.array([1.0, 0.5]))
    fast = decay_apply(spec, s, 1.0, z)
    slow = np.stack([flow_eval(spec, float(si), 1.0) @ (spec.sigma_at(float(si)) @ zi)
                     for si, zi in zip(s, z)])
    assert np.allclose(fast, slow, atol=1e-12)
    wf = weight_apply(spec, s, z)
    ws = np.stack([sigma_inv_T(spec, float(si)).T @ zi for si, zi in zip(s, z)])
    assert np.allclose(wf, ws, atol=1e-12)
    # non-separable (general matrix) falls back to the loop internally
    A = rng.normal(size=(2, 2)) * 0.5
    spec2 = FlowSpec(2, A=A, sigma=np.array([1.0, 0.5]))
    fast2 = decay_apply(spec2, s, 1.0, z)
    slow2 = np.stack([flow_eval(spec2, float(si), 1.0) @ (spec2.sigma_at(float(si)) @ zi)
                      for si, zi in zip(s, z)])
    assert np.allclose(fast2, slow2, atol=1e-12)


def test_singular_sigma_raises():
    spec = FlowSpec(2, A=0.0, sigma=np.array([[1.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(np.linalg.LinAlgError):
        sigma_inv_T(spec, 0.0)
