import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wrenchforge import geometry as g

angles = st.floats(-20.0, 20.0, allow_nan=False)
unit = st.floats(-1.0, 1.0, allow_nan=False)


@given(angles)
def test_wrap_angle_range_and_class(a):
    w = g.wrap_angle(a)
    assert -math.pi <= w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def _quat(a, b, c, d):
    q = np.array([a, b, c, d])
    n = np.linalg.norm(q)
    return None if n < 1e-3 else q / n


@given(unit, unit, unit, unit)
def test_quaternion_matrix_roundtrip(a, b, c, d):
    q = _quat(a, b, c, d)
    if q is None:
        return
    R = g.quat_to_matrix(q)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert math.isclose(np.linalg.det(R), 1.0, abs_tol=1e-12)
    q2 = g.matrix_to_quat(R)
    assert np.allclose(g.quat_to_matrix(q2), R, atol=1e-10)


@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_rotvec_log_inverse(x, y, z):
    r = np.array([x, y, z])
    if np.linalg.norm(r) >= math.pi - 1e-6:
        return
    assert np.allclose(g.quat_log(g.quat_from_rotvec(r)), r, atol=1e-9)


def _spatial(rng):
    q = rng.normal(size=4)
    return g.SpatialPose(rng.normal(size=3), q / np.linalg.norm(q))


def test_compose_inverse_identity(rng):
    for _ in range(20):
        a = _spatial(rng)
        e = g.compose(a, g.inverse(a))
        assert np.allclose(e.position, 0.0, atol=1e-12)
        assert np.allclose(e.rotation, np.eye(3), atol=1e-12)
        p = g.PlanarPose(*rng.normal(size=3))
        e = g.compose(g.inverse(p), p)
        assert np.allclose(e.as_vector(), 0.0, atol=1e-12)


def test_variant_mismatch():
    with pytest.raises(g.VariantMismatch):
        g.compose(g.PlanarPose(), g.SpatialPose([0, 0, 0], [1, 0, 0, 0]))


def test_wrench_transform_preserves_power(rng):
    # v . f + w . n is frame independent when twist and wrench move together
    for _ in range(20):
        a, b = _spatial(rng), _spatial(rng)
        w = rng.normal(size=6)
        v = rng.normal(size=6)
        p1 = float(w @ v)
        p2 = float(g.transform_wrench(w, a, b) @ g.transform_twist(v, a, b))
        assert math.isclose(p1, p2, rel_tol=1e-9, abs_tol=1e-9)
    pa, pb = g.PlanarPose(*rng.normal(size=3)), g.PlanarPose(*rng.normal(size=3))
    w, v = rng.normal(size=3), rng.normal(size=3)
    assert math.isclose(w @ v, g.transform_wrench(w, pa, pb) @ g.transform_twist(v, pa, pb), rel_tol=1e-9)


def test_pose_delta_integrates_back(rng):
    a, b = _spatial(rng), _spatial(rng)
    tw = g.pose_delta(a, b, 0.5)
    assert np.allclose(a.position + 0.5 * tw[:3], b.position)
    R = g.quat_to_matrix(g.quat_from_rotvec(0.5 * tw[3:])) @ a.rotation
    assert np.allclose(R, b.rotation, atol=1e-9)


def test_unit_direction():
    with pytest.warns(UserWarning):
        assert np.allclose(g.unit_direction([3.0, 4.0, 0.0]), [0.6, 0.8, 0.0])
    with pytest.raises(ValueError):
        g.unit_direction([0.0, 0.0, 0.0])
