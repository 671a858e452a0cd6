import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from wrenchforge import tracking as tr
from wrenchforge.model import load_model

P2D = load_model("paper2d")
TH0 = np.array([0.1, -0.05, 0.1, 0.3, -0.2])
B = P2D.actuator_map(TH0)
Q = tr.default_weighting(P2D.u_min, P2D.u_max)
LIM = tr.AllocationLimits.from_model(P2D)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_inactive_limits_match_weighted_pinv(seed):
    rng = np.random.default_rng(seed)
    tick = tr.TrackingTick(0, B @ rng.uniform(-0.2, 0.2, 6), rng.uniform(-0.1, 0.1, 6), None, Q, 1.0)
    closed = tick.u_ref + np.linalg.solve(Q, B.T) @ np.linalg.solve(
        B @ np.linalg.solve(Q, B.T), tick.tau_c - B @ tick.u_ref)
    a = tr.allocate_constrained(B, tick, LIM)
    assert a.status == tr.EXACT
    assert np.allclose(a.u, closed, atol=1e-8)
    assert np.allclose(tr.allocate_unconstrained(B, tick), closed, atol=1e-10)


def test_rate_window_is_respected():
    u_prev = np.zeros(6)
    tick = tr.TrackingTick(0, B @ np.full(6, 0.5), np.zeros(6), u_prev, Q, 0.1)
    lim = tr.AllocationLimits(P2D.u_min, P2D.u_max, np.full(6, 1.0))
    a = tr.allocate_constrained(B, tick, lim)
    assert np.all(np.abs(a.u - u_prev) <= 0.1 + 1e-12)


def test_infeasible_request_minimizes_residual():
    tick = tr.TrackingTick(0, np.array([5.0, 0, 0, 0, 0]), np.zeros(6), None, Q, 10.0)
    a = tr.allocate_constrained(B, tick, LIM)
    assert a.status == tr.INFEASIBLE_EXACT
    lo, hi = LIM.box(tick.u_prev, tick.dt)
    G = np.linalg.inv(B @ np.linalg.solve(Q, B.T))
    f = lambda u: float((B @ u - tick.tau_c) @ G @ (B @ u - tick.tau_c))
    ref = minimize(f, np.zeros(6), jac=lambda u: 2 * B.T @ G @ (B @ u - tick.tau_c),
                   bounds=list(zip(lo, hi)), method="L-BFGS-B", options={"ftol": 1e-15, "gtol": 1e-12})
    assert abs(a.residual ** 2 - ref.fun) <= 1e-6 * max(1.0, ref.fun)
    assert np.all(a.u >= lo - 1e-12) and np.all(a.u <= hi + 1e-12)


def test_tick_validation():
    with pytest.raises(tr.AllocationError):
        tr.TrackingTick(0, np.zeros(5), np.zeros(6), Q=-np.eye(6))
    with pytest.raises(tr.AllocationError):
        tr.TrackingTick(0, np.zeros(5), np.zeros(6), Q=np.triu(np.ones((6, 6))))
    with pytest.raises(tr.AllocationError):
        tr.allocate_constrained(B[:, :3], tr.TrackingTick(0, np.zeros(5), np.zeros(6)), LIM)


def test_config_error_wraps_angles():
    e = tr.config_error(P2D, np.array([0, 0, np.pi - 0.1, 0, 0]), np.array([0, 0, -np.pi + 0.1, 0, 0]))
    assert abs(e[2] + 0.2) < 1e-12


def test_regulation_decays():
    ref = tr.Reference(np.array([0.0]), np.zeros((1, 5)), np.zeros((1, 6)))
    log = tr.simulate(P2D, ref, TH0, 10.0, dt=0.05)
    e = log.error_norms(P2D)
    assert tr.regulation_decay(e)
    assert e[-1] < 0.5 * e[0]
    csv = log.to_csv().splitlines()
    assert csv[0].startswith("t,theta_1") and csv[0].endswith(",status")
    assert len(csv) == len(log.t) + 1


def test_reference_interpolation():
    ref = tr.Reference(np.array([0.0, 1.0]), np.array([[0.0], [2.0]]), np.array([[1.0], [3.0]]))
    th, thd, u = ref(0.25)
    assert np.allclose(th, 0.5) and np.allclose(thd, 2.0) and np.allclose(u, 1.5)
    th, thd, u = ref(5.0)
    assert np.allclose(th, 2.0) and np.allclose(thd, 0.0)
