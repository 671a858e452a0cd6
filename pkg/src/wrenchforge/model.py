"""Vehicle-manipulator model: kinematics, actuator map and lumped dynamics.

Everything is evaluated on a 3-D embedding.  The planar variant lives in the
world x-y plane with gravity along -y; its generalized coordinates are
``(x, y, psi, q...)`` and its task rows are ``(vx, vy, wz)``.  The spatial
variant uses ``(x, y, z, roll, pitch, yaw, q...)`` with ZYX Euler angles and
gravity along -z.

Kinematic routines are written to accept complex configurations so the mass
matrix can be differentiated by complex step.
"""
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernels
from .geometry import PlanarPose, SpatialPose, wrap_angle

_PLANAR_ROWS = np.array([0, 1, 5])
_CS_STEP = 1e-30


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Thruster:
    position: np.ndarray
    direction: np.ndarray
    u_min: float
    u_max: float
    rate_limit: float = math.inf


@dataclass(frozen=True, eq=False)
class Joint:
    axis: np.ndarray
    lower: float
    upper: float
    tau_min: float
    tau_max: float
    rate_limit: float = math.inf


@dataclass(frozen=True, eq=False)
class Body:
    """Rigid body with per-body hydrodynamic terms, all in body axes at the COM."""
    mass: float
    inertia: np.ndarray
    com: np.ndarray
    added_mass: np.ndarray
    damping_linear: np.ndarray
    damping_quadratic: np.ndarray
    buoyancy: float = 0.0
    cob: np.ndarray = None

    @cached_property
    def spatial_inertia(self):
        m = np.diag(np.concatenate([[self.mass] * 3, self.inertia]))
        return m + np.diag(self.added_mass)


@dataclass(frozen=True, eq=False)
class Link:
    length: float
    body: Body
    radius: float = 0.02


@dataclass(frozen=True, eq=False)
class Arm:
    mount_position: np.ndarray
    mount_rotation: np.ndarray
    links: tuple
    joints: tuple

    @property
    def n_joints(self):
        return len(self.joints)

    @property
    def reach(self):
        return float(sum(l.length for l in self.links))


@dataclass(frozen=True, eq=False)
class Vehicle:
    body: Body
    hull: np.ndarray


@dataclass(frozen=True, eq=False)
class DynamicTerms:
    inertial: np.ndarray
    coriolis: np.ndarray
    damping: np.ndarray
    gravity_buoyancy: np.ndarray

    @property
    def tau_d(self):
        return self.inertial + self.coriolis + self.damping + self.gravity_buoyancy


# -- small rotation helpers (complex safe) ----------------------------------

def _cross3(a, b):
    # np.cross carries heavy axis handling; this is the hot path of every Jacobian
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _skew(v):
    return np.array([[0 * v[0], -v[2], v[1]], [v[2], 0 * v[0], -v[0]], [-v[1], v[0], 0 * v[0]]])


def axis_rotation(axis, angle):
    """Rodrigues rotation; ``angle`` may be complex."""
    K = _skew(np.asarray(axis, dtype=float))
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0 * c], [s, c, 0 * c], [0 * c, 0 * c, 1 + 0 * c]])


def euler_zyx(roll, pitch, yaw):
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def euler_rate_columns(roll, pitch, yaw):
    """World angular velocity per unit roll/pitch/yaw rate, as columns."""
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    z = 0 * cp
    return np.array([
        [cy * cp, -sy, z],
        [sy * cp, cy, z],
        [-sp, z, 1 + z],
    ])


def matrix_to_euler_zyx(R):
    pitch = -math.asin(max(-1.0, min(1.0, R[2, 0])))
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return roll, pitch, yaw


# -- evaluated frames --------------------------------------------------------

@dataclass
class _Frames:
    """Kinematic state at one configuration."""
    R_vehicle: np.ndarray
    p_vehicle: np.ndarray
    # per body: (rotation, com position, index list of upstream joint dofs)
    bodies: list = field(default_factory=list)
    # per arm: list of (joint world position, joint world axis, dof index)
    joints: list = field(default_factory=list)
    # per arm: (rotation, position) of the end effector
    tips: list = field(default_factory=list)
    # per arm: list of link segment endpoints
    segments: list = field(default_factory=list)


class SystemModel:
    """A floating vehicle with thrusters and up to two serial arms."""

    def __init__(self, name, variant, vehicle, thrusters, arm, gravity=9.81,
                 second_arm=None, raw=None):
        if variant not in ("planar", "spatial"):
            raise ModelError(f"unknown variant {variant!r}")
        self.name = name
        self.variant = variant
        self.vehicle = vehicle
        self.thrusters = tuple(thrusters)
        self.arm = arm
        self.second_arm = second_arm
        self.gravity = float(gravity)
        self.raw = raw
        self._validate()

    # -- sizes ---------------------------------------------------------------
    @property
    def d(self):
        return 3 if self.variant == "planar" else 6

    @property
    def arms(self):
        return (self.arm,) if self.second_arm is None else (self.arm, self.second_arm)

    @property
    def n(self):
        return self.d + sum(a.n_joints for a in self.arms)

    @property
    def m(self):
        return len(self.thrusters) + sum(a.n_joints for a in self.arms)

    @property
    def n_redundant(self):
        return self.arm.n_joints

    def joint_dofs(self, arm_index=0):
        start = self.d + sum(a.n_joints for a in self.arms[:arm_index])
        return list(range(start, start + self.arms[arm_index].n_joints))

    @property
    def u_min(self):
        return np.array([t.u_min for t in self.thrusters]
                        + [j.tau_min for a in self.arms for j in a.joints])

    @property
    def u_max(self):
        return np.array([t.u_max for t in self.thrusters]
                        + [j.tau_max for a in self.arms for j in a.joints])

    @property
    def u_rate(self):
        return np.array([t.rate_limit for t in self.thrusters]
                        + [j.rate_limit for a in self.arms for j in a.joints])

    @property
    def joint_lower(self):
        return np.array([j.lower for a in self.arms for j in a.joints])

    @property
    def joint_upper(self):
        return np.array([j.upper for a in self.arms for j in a.joints])

    @property
    def characteristic_length(self):
        return max(self.arm.reach, float(np.max(self.vehicle.hull)))

    def _validate(self):
        for i, t in enumerate(self.thrusters):
            if abs(np.linalg.norm(t.direction) - 1.0) > 1e-9:
                raise ModelError(f"thruster {i} direction is not unit norm")
            if not t.u_min < t.u_max:
                raise ModelError(f"thruster {i} has u_min >= u_max")
        for a in self.arms:
            if len(a.links) != len(a.joints):
                raise ModelError("each joint needs exactly one link")
            for j in a.joints:
                if not j.tau_min < j.tau_max:
                    raise ModelError("joint tau_min must be < tau_max")
                if not j.lower <= j.upper:
                    raise ModelError("joint lower limit above upper limit")
        bodies = [self.vehicle.body] + [l.body for a in self.arms for l in a.links]
        if any(not b.mass > 0 for b in bodies):
            raise ModelError("all masses must be positive")
        if self.m < self.n:
            raise ModelError("fewer actuators than degrees of freedom")

    # -- kinematics ----------------------------------------------------------
    def _vehicle_pose(self, theta):
        if self.variant == "planar":
            p = np.array([theta[0], theta[1], 0 * theta[0]])
            return rot_z(theta[2]), p
        return euler_zyx(theta[3], theta[4], theta[5]), np.array(theta[:3])

    def _vehicle_rate_columns(self, theta):
        if self.variant == "planar":
            return np.array([[0.0], [0.0], [1.0]])
        return euler_rate_columns(theta[3], theta[4], theta[5])

    def frames(self, theta):
        theta = np.asarray(theta)
        if theta.shape != (self.n,):
            raise ModelError(f"configuration must have dimension {self.n}, got {theta.shape}")
        Rv, pv = self._vehicle_pose(theta)
        fr = _Frames(Rv, pv)
        vb = self.vehicle.body
        fr.bodies.append((Rv, pv + Rv @ vb.com, [], vb))
        dof = self.d
        for arm in self.arms:
            R = Rv @ arm.mount_rotation
            p = pv + Rv @ arm.mount_position
            upstream = []
            jl, segs = [], []
            for link, joint in zip(arm.links, arm.joints):
                axis_w = R @ joint.axis
                jl.append((p, axis_w, dof))
                R = R @ axis_rotation(joint.axis, theta[dof])
                upstream = upstream + [dof]
                fr.bodies.append((R, p + R @ link.body.com, list(upstream), link.body))
                p_next = p + R @ np.array([link.length, 0.0, 0.0])
                segs.append((p, p_next, link.radius))
                p = p_next
                dof += 1
            fr.joints.append(jl)
            fr.tips.append((R, p))
            fr.segments.append(segs)
        return fr

    def _point_jacobian(self, theta, fr, point, upstream_dofs, arm_joint_table):
        """World 6xn Jacobian (v, w) of a point rigidly attached downstream of the listed dofs."""
        J = np.zeros((6, self.n), dtype=np.result_type(theta, float))
        r = point - fr.p_vehicle
        if self.variant == "planar":
            J[0, 0] = 1.0
            J[1, 1] = 1.0
            J[5, 2] = 1.0
            J[:3, 2] = (-r[1], r[0], 0.0 * r[0])
        else:
            J[:3, :3] = np.eye(3)
            W = self._vehicle_rate_columns(theta)
            J[3:, 3:6] = W
            for k in range(3):
                J[:3, 3 + k] = _cross3(W[:, k], r)
        for dof in upstream_dofs:
            pj, aw = arm_joint_table[dof]
            J[3:, dof] = aw
            J[:3, dof] = _cross3(aw, point - pj)
        return J

    @staticmethod
    def _joint_table(fr):
        return {dof: (p, a) for jl in fr.joints for (p, a, dof) in jl}

    def forward_kinematics(self, theta, arm_index=0):
        fr = self.frames(theta)
        R, p = fr.tips[arm_index]
        R = np.real(R)
        p = np.real(p)
        if self.variant == "planar":
            return PlanarPose(p[0], p[1], math.atan2(R[1, 0], R[0, 0]))
        return SpatialPose.from_matrix(R, p)

    def _tip_jacobian6(self, theta, fr, arm_index):
        R, p = fr.tips[arm_index]
        dofs = self.joint_dofs(arm_index)
        return self._point_jacobian(theta, fr, p, dofs, self._joint_table(fr))

    def _task_rows(self, J6):
        return J6[_PLANAR_ROWS] if self.variant == "planar" else J6

    def jacobian(self, theta, arm_index=0):
        """End-effector Jacobian (d x n) mapping theta_dot to the world twist."""
        theta = np.asarray(theta)
        fr = self.frames(theta)
        return self._task_rows(self._tip_jacobian6(theta, fr, arm_index))

    def stacked_jacobian(self, theta):
        fr = self.frames(theta)
        return np.vstack([self._task_rows(self._tip_jacobian6(theta, fr, i))
                          for i in range(len(self.arms))])

    def actuator_map(self, theta=None):
        """B (n x m): thruster body wrenches mapped to generalized forces, joint unit columns."""
        if theta is None:
            theta = self.neutral_configuration()
        theta = np.asarray(theta, dtype=float)
        fr = self.frames(theta)
        Jv = self._point_jacobian(theta, fr, fr.p_vehicle, [], {})
        Rv = fr.R_vehicle
        B = np.zeros((self.n, self.m))
        for i, t in enumerate(self.thrusters):
            f_w = Rv @ t.direction
            n_w = Rv @ np.cross(t.position, t.direction)
            B[:, i] = Jv.T @ np.concatenate([f_w, n_w])
        col = len(self.thrusters)
        for a in range(len(self.arms)):
            for dof in self.joint_dofs(a):
                B[dof, col] = 1.0
                col += 1
        return B

    # -- dynamics ------------------------------------------------------------
    def _body_jacobians(self, theta, fr=None):
        if fr is None:
            fr = self.frames(theta)
        table = self._joint_table(fr)
        out = []
        for R, pc, upstream, body in fr.bodies:
            J = self._point_jacobian(theta, fr, pc, upstream, table)
            Jb = np.vstack([R.T @ J[:3], R.T @ J[3:]])
            out.append((Jb, R, pc, upstream, body))
        return out, fr

    def mass_matrix(self, theta):
        theta = np.asarray(theta)
        M = 0
        for Jb, _, _, _, body in self._body_jacobians(theta)[0]:
            M = M + Jb.T @ body.spatial_inertia @ Jb
        return M

    def mass_matrix_derivatives(self, theta):
        """dM/dtheta_k stacked as (n, n, n) with k last, by complex step."""
        theta = np.asarray(theta, dtype=float)
        dM = np.empty((self.n, self.n, self.n))
        for k in range(self.n):
            tc = theta.astype(complex)
            tc[k] += 1j * _CS_STEP
            dM[:, :, k] = np.imag(self.mass_matrix(tc)) / _CS_STEP
        return dM

    def coriolis_matrix(self, theta, theta_dot):
        dM = self.mass_matrix_derivatives(theta)
        return _kernels.christoffel_matrix(dM, np.asarray(theta_dot, dtype=float))

    def _up(self):
        return np.array([0.0, 1.0, 0.0]) if self.variant == "planar" else np.array([0.0, 0.0, 1.0])

    def gravity_buoyancy(self, theta):
        theta = np.asarray(theta, dtype=float)
        fr = self.frames(theta)
        table = self._joint_table(fr)
        up = self._up()
        g = np.zeros(self.n)
        for R, pc, upstream, body in fr.bodies:
            Jc = self._point_jacobian(theta, fr, pc, upstream, table)
            g += Jc[:3].T @ (body.mass * self.gravity * up)
            if body.buoyancy:
                cob = body.cob if body.cob is not None else body.com
                pb = pc + R @ (cob - body.com)
                Jb = self._point_jacobian(theta, fr, pb, upstream, table)
                g -= Jb[:3].T @ (body.buoyancy * up)
        return g

    def damping(self, theta, theta_dot):
        theta = np.asarray(theta, dtype=float)
        qd = np.asarray(theta_dot, dtype=float)
        tau = np.zeros(self.n)
        for Jb, _, _, _, body in self._body_jacobians(theta)[0]:
            nu = Jb @ qd
            drag = (body.damping_linear + body.damping_quadratic * np.abs(nu)) * nu
            tau += Jb.T @ drag
        return tau

    def dynamic_terms(self, theta, theta_dot=None, theta_ddot=None):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n,):
            raise ModelError(f"configuration must have dimension {self.n}")
        qd = np.zeros(self.n) if theta_dot is None else np.asarray(theta_dot, dtype=float)
        qdd = np.zeros(self.n) if theta_ddot is None else np.asarray(theta_ddot, dtype=float)
        if qd.shape != (self.n,) or qdd.shape != (self.n,):
            raise ModelError("velocity/acceleration dimension mismatch")
        g = self.gravity_buoyancy(theta)
        if not qd.any() and not qdd.any():
            z = np.zeros(self.n)
            return DynamicTerms(z, z.copy(), z.copy(), g)
        inertial = self.mass_matrix(theta) @ qdd if qdd.any() else np.zeros(self.n)
        if qd.any():
            coriolis = self.coriolis_matrix(theta, qd) @ qd
            damping = self.damping(theta, qd)
        else:
            coriolis = np.zeros(self.n)
            damping = np.zeros(self.n)
        return DynamicTerms(inertial, coriolis, damping, g)

    # -- misc ----------------------------------------------------------------
    def neutral_configuration(self):
        return np.zeros(self.n)

    def joint_limits_ok(self, theta, tol=1e-9):
        q = np.asarray(theta)[self.d:]
        return bool(np.all(q >= self.joint_lower - tol) and np.all(q <= self.joint_upper + tol))

    def vehicle_config_from_pose(self, R, p):
        """Generalized vehicle coordinates for a world rotation/position."""
        if self.variant == "planar":
            return np.array([p[0], p[1], wrap_angle(math.atan2(R[1, 0], R[0, 0]))])
        return np.concatenate([p, matrix_to_euler_zyx(R)])

    def without_second_arm(self):
        return SystemModel(self.name, self.variant, self.vehicle, self.thrusters, self.arm,
                           self.gravity, None, None)

    def to_dict(self):
        if self.raw is None:
            raise ModelError("model was not built from a description document")
        return json.loads(json.dumps(self.raw))

    @classmethod
    def from_dict(cls, doc):
        return _model_from_dict(doc)

    def __repr__(self):
        return f"SystemModel({self.name!r}, {self.variant}, n={self.n}, m={self.m})"


def joint_load_from_wrench(J, h_e):
    """Generalized load J^T h_e caused by an end-effector wrench."""
    J = np.asarray(J, dtype=float)
    h_e = np.asarray(h_e, dtype=float)
    if J.shape[0] != h_e.shape[0]:
        raise ModelError("wrench dimension does not match Jacobian rows")
    return J.T @ h_e


# -- description documents ---------------------------------------------------

_MODEL_KEYS = {"name", "variant", "gravity", "vehicle", "thrusters", "arm", "second_arm"}
_VEHICLE_KEYS = {"mass", "inertia", "added_mass", "damping_linear", "damping_quadratic",
                 "center_of_gravity", "center_of_buoyancy", "buoyancy", "hull"}
_THRUSTER_KEYS = {"position", "direction", "u_min", "u_max", "rate_limit"}
_ARM_KEYS = {"mount", "links", "joints"}
_MOUNT_KEYS = {"position", "angle", "rpy"}
_LINK_KEYS = {"length", "mass", "com", "inertia", "added_mass", "damping_linear",
              "damping_quadratic", "buoyancy", "cob", "radius"}
_JOINT_KEYS = {"axis", "limits", "torque", "rate_limit"}


def _reject_unknown(d, allowed, where):
    extra = set(d) - allowed
    if extra:
        raise ModelError(f"unknown field(s) {sorted(extra)} in {where}")


def _vec3(v, planar, default=0.0):
    if v is None:
        return np.full(3, default)
    v = np.asarray(v, dtype=float)
    if planar:
        if v.shape != (2,):
            raise ModelError("planar vectors need 2 components")
        return np.array([v[0], v[1], 0.0])
    if v.shape != (3,):
        raise ModelError("spatial vectors need 3 components")
    return v


def _diag6(v, planar, default=0.0):
    if v is None:
        return np.full(6, default)
    v = np.asarray(v, dtype=float)
    if planar:
        if v.shape != (3,):
            raise ModelError("planar diagonal terms need 3 entries (x, y, yaw)")
        return np.array([v[0], v[1], 0.0, 0.0, 0.0, v[2]])
    if v.shape != (6,):
        raise ModelError("spatial diagonal terms need 6 entries")
    return v


def _inertia3(v, planar):
    if planar:
        v = float(v)
        return np.array([v, v, v])
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ModelError("spatial inertia needs 3 principal moments")
    return v


def _arm_from_dict(d, planar):
    _reject_unknown(d, _ARM_KEYS, "arm")
    mount = d.get("mount", {})
    _reject_unknown(mount, _MOUNT_KEYS, "arm.mount")
    mp = _vec3(mount.get("position"), planar)
    if planar:
        mR = rot_z(float(mount.get("angle", 0.0)))
    else:
        mR = euler_zyx(*mount.get("rpy", [0.0, 0.0, 0.0]))
    links, joints = [], []
    for ld in d["links"]:
        _reject_unknown(ld, _LINK_KEYS, "link")
        L = float(ld["length"])
        com = _vec3(ld.get("com"), planar) if "com" in ld else np.array([L / 2, 0.0, 0.0])
        mass = float(ld["mass"])
        inertia = ld.get("inertia", mass * L * L / 12.0 if planar else [1e-4, mass * L * L / 12, mass * L * L / 12])
        body = Body(mass, _inertia3(inertia, planar), com,
                    _diag6(ld.get("added_mass"), planar),
                    _diag6(ld.get("damping_linear"), planar),
                    _diag6(ld.get("damping_quadratic"), planar),
                    float(ld.get("buoyancy", 0.0)),
                    _vec3(ld["cob"], planar) if "cob" in ld else com)
        links.append(Link(L, body, float(ld.get("radius", 0.02))))
    for jd in d["joints"]:
        _reject_unknown(jd, _JOINT_KEYS, "joint")
        if planar:
            axis = np.array([0.0, 0.0, 1.0])
        else:
            axis = np.asarray(jd.get("axis", [0, 0, 1]), dtype=float)
            axis = axis / np.linalg.norm(axis)
        lo, hi = jd.get("limits", [-math.pi, math.pi])
        tmin, tmax = jd["torque"]
        joints.append(Joint(axis, float(lo), float(hi), float(tmin), float(tmax),
                            float(jd.get("rate_limit", math.inf))))
    return Arm(mp, mR, tuple(links), tuple(joints))


def _model_from_dict(doc):
    _reject_unknown(doc, _MODEL_KEYS, "model")
    variant = doc.get("variant", "planar")
    planar = variant == "planar"
    g = float(doc.get("gravity", 9.81))
    vd = doc["vehicle"]
    _reject_unknown(vd, _VEHICLE_KEYS, "vehicle")
    mass = float(vd["mass"])
    cog = _vec3(vd.get("center_of_gravity"), planar)
    body = Body(mass, _inertia3(vd["inertia"], planar), cog,
                _diag6(vd.get("added_mass"), planar),
                _diag6(vd.get("damping_linear"), planar),
                _diag6(vd.get("damping_quadratic"), planar),
                float(vd.get("buoyancy", mass * g)),
                _vec3(vd.get("center_of_buoyancy"), planar) if "center_of_buoyancy" in vd else cog)
    hull = np.asarray(vd.get("hull", [0.5, 0.5] if planar else [0.5, 0.5, 0.3]), dtype=float)
    if planar:
        hull = np.array([hull[0], hull[1], 0.1])
    thrusters = []
    for td in doc["thrusters"]:
        _reject_unknown(td, _THRUSTER_KEYS, "thruster")
        direction = _vec3(td["direction"], planar)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-6:
            raise ModelError("thruster direction must be unit norm")
        direction = direction / np.linalg.norm(direction)
        thrusters.append(Thruster(_vec3(td["position"], planar), direction,
                                  float(td["u_min"]), float(td["u_max"]),
                                  float(td.get("rate_limit", math.inf))))
    arm = _arm_from_dict(doc["arm"], planar)
    second = _arm_from_dict(doc["second_arm"], planar) if doc.get("second_arm") else None
    return SystemModel(doc.get("name", "model"), variant, Vehicle(body, hull), thrusters, arm,
                       g, second, raw=doc)


BUILTIN_MODELS = ("paper2d", "paper2d-dual", "uvms4dof")


def load_model(ref):
    """Load a model from a builtin name, a JSON path or an already-parsed dict."""
    if isinstance(ref, SystemModel):
        return ref
    if isinstance(ref, dict):
        return _model_from_dict(ref)
    ref = str(ref)
    if ref in BUILTIN_MODELS:
        text = resources.files("wrenchforge.data.models").joinpath(f"{ref}.json").read_text()
        return _model_from_dict(json.loads(text))
    path = Path(ref)
    if not path.exists():
        raise ModelError(f"model {ref!r} is neither builtin nor an existing file")
    return _model_from_dict(json.loads(path.read_text()))
