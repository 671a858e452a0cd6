import numpy as np
import pytest

from wrenchforge.model import ModelError, SystemModel, joint_load_from_wrench, load_model

from conftest import random_theta
from oracles import fk_jacobian

MODELS = ["paper2d", "uvms4dof", "paper2d-dual"]


@pytest.fixture(scope="module", params=MODELS)
def model(request):
    return load_model(request.param)


def test_dimensions(model):
    th = model.neutral_configuration()
    assert model.jacobian(th).shape == (model.d, model.n)
    assert model.actuator_map(th).shape == (model.n, model.m)
    assert model.mass_matrix(th).shape == (model.n, model.n)
    assert model.n == model.d + sum(a.n_joints for a in model.arms)


def test_jacobian_matches_finite_differences(model, rng):
    for _ in range(5):
        th = random_theta(model, rng)
        for arm in range(len(model.arms)):
            J = model.jacobian(th, arm)
            Jfd = fk_jacobian(model, th, arm)
            assert np.linalg.norm(J - Jfd) <= 1e-6 * max(1.0, np.linalg.norm(J))


def test_mass_matrix_spd_and_symmetric(model, rng):
    for _ in range(10):
        M = model.mass_matrix(random_theta(model, rng))
        assert np.allclose(M, M.T, atol=1e-12)
        assert np.min(np.linalg.eigvalsh(M)) > 0


def test_mass_matrix_derivatives(model, rng):
    th = random_theta(model, rng)
    dM = model.mass_matrix_derivatives(th)
    h = 1e-6
    for k in range(model.n):
        e = np.zeros(model.n)
        e[k] = h
        fd = (model.mass_matrix(th + e) - model.mass_matrix(th - e)) / (2 * h)
        assert np.allclose(dM[:, :, k], fd, atol=1e-6)


def test_coriolis_skew_property(model, rng):
    for _ in range(5):
        th = random_theta(model, rng)
        qd = rng.normal(size=model.n)
        dM = model.mass_matrix_derivatives(th)
        Mdot = dM @ qd
        N = Mdot - 2 * model.coriolis_matrix(th, qd)
        assert abs(qd @ N @ qd) < 1e-8
        assert np.allclose(N, -N.T, atol=1e-9)


def potential(model, theta):
    """Gravity minus buoyancy potential from body positions."""
    fr = model.frames(theta)
    up = np.array([0.0, 1.0, 0.0]) if model.variant == "planar" else np.array([0.0, 0.0, 1.0])
    V = 0.0
    for R, pc, _, body in fr.bodies:
        V += body.mass * model.gravity * float(up @ pc)
        if body.buoyancy:
            cob = body.cob if body.cob is not None else body.com
            V -= body.buoyancy * float(up @ (pc + R @ (cob - body.com)))
    return V


def test_gravity_is_potential_gradient(model, rng):
    th = random_theta(model, rng)
    h = 1e-6
    fd = np.array([(potential(model, th + h * e) - potential(model, th - h * e)) / (2 * h)
                   for e in np.eye(model.n)])
    assert np.allclose(model.gravity_buoyancy(th), fd, atol=1e-6)


def test_actuator_map_joint_columns(model):
    B = model.actuator_map()
    nt = len(model.thrusters)
    assert np.array_equal(B[model.d:, nt:], np.eye(model.n - model.d))
    assert np.all(B[model.d:, :nt] == 0)


def test_actuator_map_is_thrust_virtual_work(rng):
    m = load_model("uvms4dof")
    th = random_theta(m, rng)
    B = m.actuator_map(th)
    fr = m.frames(th)
    Rv, pv = fr.R_vehicle, fr.p_vehicle
    h = 1e-6
    for i, t in enumerate(m.thrusters[:3]):
        # generalized force of a unit thrust = d(position of thruster)/dtheta . force
        f = Rv @ t.direction
        col = np.zeros(m.n)
        for k in range(m.n):
            e = np.zeros(m.n)
            e[k] = h
            fp, fm = m.frames(th + e), m.frames(th - e)
            pp = fp.p_vehicle + fp.R_vehicle @ t.position
            pm = fm.p_vehicle + fm.R_vehicle @ t.position
            col[k] = f @ (pp - pm) / (2 * h)
        assert np.allclose(B[:, i], col, atol=1e-6)


def test_dynamic_terms_static_is_gravity(model, rng):
    th = random_theta(model, rng)
    dt = model.dynamic_terms(th)
    assert np.allclose(dt.tau_d, model.gravity_buoyancy(th))
    with pytest.raises(ModelError):
        model.dynamic_terms(np.zeros(model.n + 1))


def test_roundtrip_dict(model):
    again = SystemModel.from_dict(model.to_dict())
    th = np.linspace(-0.2, 0.2, model.n)
    assert np.allclose(again.mass_matrix(th), model.mass_matrix(th))


def test_rejects_bad_documents():
    doc = load_model("paper2d").to_dict()
    doc["vehicle"]["colour"] = "yellow"
    with pytest.raises(ModelError):
        load_model(doc)
    doc = load_model("paper2d").to_dict()
    doc["thrusters"][0]["direction"] = [2.0, 0.0]
    with pytest.raises(ModelError):
        load_model(doc)


def test_joint_load_from_wrench():
    J = np.arange(12.0).reshape(3, 4)
    assert np.allclose(joint_load_from_wrench(J, [1.0, 0.0, 0.0]), J[0])
    with pytest.raises(ModelError):
        joint_load_from_wrench(J, [1.0, 0.0])
