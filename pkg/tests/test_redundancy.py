import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wrenchforge import geometry as g
from wrenchforge import redundancy as rd
from wrenchforge.model import ModelError, load_model

P2D = load_model("paper2d")
UV = load_model("uvms4dof")
DUAL = load_model("paper2d-dual")


def _rand_theta_r(model, rng):
    b = rd.redundant_bounds(model)
    return rng.uniform(b[:, 0], b[:, 1])


def _poses_equal(a, b, tol=1e-9):
    return np.linalg.norm(g.pose_error(a, b)) < tol


@settings(max_examples=40, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-3, 3), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_planar_base_configuration_reaches_pose(x, y, phi, a, b):
    pose = g.PlanarPose(x, y, phi)
    th = rd.base_configuration(P2D, pose, np.array([a, b]))
    assert _poses_equal(P2D.forward_kinematics(th), pose)
    assert np.allclose(rd.extract(P2D, th), [a, b])


def test_spatial_base_configuration_reaches_pose(rng):
    for _ in range(20):
        q = rng.normal(size=4)
        pose = g.SpatialPose(rng.normal(size=3), q)
        tr = _rand_theta_r(UV, rng)
        th = rd.base_configuration(UV, pose, tr)
        assert _poses_equal(UV.forward_kinematics(th), pose)
        assert np.allclose(rd.extract(UV, th), tr)


@pytest.mark.parametrize("model", [P2D, UV], ids=["paper2d", "uvms4dof"])
def test_split_jacobian_identities(model, rng):
    x = g.PlanarPose() if model.variant == "planar" else g.SpatialPose([0, 0, 0], [1, 0, 0, 0])
    for _ in range(10):
        r = rd.realize(model, x, _rand_theta_r(model, rng))
        if r.J_e is None:
            continue
        J = model.jacobian(r.theta)
        assert np.allclose(J @ r.J_e, np.eye(model.d), atol=1e-9)
        assert np.allclose(J @ r.A_r, 0.0, atol=1e-9)
        # theta_r rates drive the primary joints in reverse order
        assert np.allclose(r.A_r[model.joint_dofs(0)], np.eye(len(model.joint_dofs(0)))[::-1])


def test_redundant_motion_keeps_pose_fixed(rng):
    x = g.SpatialPose([0.1, -0.2, 0.3], [1, 0, 0, 0])
    r = rd.realize(UV, x, np.array([0.2, 0.4, -0.3, 0.1]))
    v = rng.normal(size=4)
    h = 1e-6
    th = r.theta + h * (r.A_r @ v)
    assert np.linalg.norm(g.pose_error(UV.forward_kinematics(th), x)) < 1e-9


def test_validity_flags():
    x = g.PlanarPose()
    bad = rd.realize(P2D, x, np.array([0.0, 5.0]))
    assert not bad.valid and bad.reason == "joint limit"
    ok = rd.realize(P2D, x, np.array([0.0, 0.0]))
    assert ok.valid and ok.manipulability > 0
    assert rd.manipulability(np.array([[1.0, 0.0], [0.0, 0.0]])) == 0.0


def test_dual_model_needs_realize_dual():
    with pytest.raises(ModelError):
        rd.realize(DUAL, g.PlanarPose(), np.zeros(2))
    with pytest.raises(ModelError):
        rd.realize_dual(P2D, g.PlanarPose(), np.zeros(2), rd.GraspPoint(np.zeros(2)))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 1.5), st.floats(0.2, 1.5), st.floats(-math.pi, math.pi), st.floats(0.05, 0.99))
def test_two_link_ik_reaches_target(L1, L2, ang, frac):
    r = abs(L1 - L2) + frac * (L1 + L2 - abs(L1 - L2))
    target = r * np.array([math.cos(ang), math.sin(ang)])
    sols = rd.two_link_ik(L1, L2, target)
    assert 1 <= len(sols) <= 2
    for q1, q2 in sols:
        tip = L1 * np.array([math.cos(q1), math.sin(q1)]) + L2 * np.array([math.cos(q1 + q2), math.sin(q1 + q2)])
        assert np.allclose(tip, target, atol=1e-9)


def test_two_link_ik_out_of_reach():
    assert rd.two_link_ik(1.0, 1.0, [3.0, 0.0]) == []


def test_dual_closure_puts_tip_on_grasp(rng):
    grasp = rd.GraspPoint(np.array([-2.0, 0.3]))
    dual = rd.realize_dual(DUAL, g.PlanarPose(), np.array([0.0, 0.0]), grasp)
    assert dual.branches
    for br in dual.branches:
        if br.theta is None or not np.isfinite(br.theta).all():
            continue
        tip = DUAL.forward_kinematics(br.theta, 1)
        if br.reason != "grasp out of reach":
            assert np.allclose([tip.x, tip.y], grasp.position, atol=1e-9)
        if br.J_e is not None:
            # secondary rows keep the grasped tip fixed for any redundant motion
            J2 = DUAL.jacobian(br.theta, 1)[:2]
            assert np.allclose(J2 @ br.A_r, 0.0, atol=1e-8)
            assert np.allclose(DUAL.jacobian(br.theta, 0) @ br.A_r, 0.0, atol=1e-8)
