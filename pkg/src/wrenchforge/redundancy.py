"""Self-motion parameterization at a fixed end-effector pose.

The redundant coordinates are the primary arm's joint angles listed from the
end effector inward.  Given the end-effector pose, the arm shape fixes the
vehicle pose in closed form, so every ``theta_r`` maps to exactly one full
configuration.  A second arm, when present, is closed onto a grasp point by
planar two-link inverse kinematics.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import PlanarPose, SpatialPose
from .model import ModelError

COLLISION_MARGIN = 0.01
SING_EPS = 1e-4


@dataclass
class Realization:
    theta: np.ndarray
    theta_r: np.ndarray
    J_e: np.ndarray
    A_r: np.ndarray
    valid: bool
    manipulability: float
    reason: str = ""
    branch: int = 0


@dataclass
class GraspPoint:
    """A world point the secondary arm tip must reach; ``contact`` is carried through."""
    position: np.ndarray
    contact: object = None


@dataclass
class DualRealization:
    branches: list = field(default_factory=list)

    @property
    def valid(self):
        return any(b.valid for b in self.branches)

    def valid_branches(self):
        return [b for b in self.branches if b.valid]


# -- coordinates -----------------------------------------------------------------

def redundant_bounds(model):
    """Box on theta_r (end-effector joint first)."""
    dofs = model.joint_dofs(0)
    lo = np.array([model.arm.joints[i].lower for i in range(len(dofs))])[::-1]
    hi = np.array([model.arm.joints[i].upper for i in range(len(dofs))])[::-1]
    return np.column_stack([lo, hi])


def extract(model, theta):
    """theta_r of a full configuration."""
    theta = np.asarray(theta, dtype=float)
    return theta[model.joint_dofs(0)][::-1].copy()


def _arm_transform(model, q):
    """Tip pose in the vehicle frame for primary joint angles ``q``."""
    theta0 = np.zeros(model.n)
    theta0[model.joint_dofs(0)] = q
    fr = model.frames(theta0)
    R, p = fr.tips[0]
    return R, p


def _pose_rt(x):
    if isinstance(x, PlanarPose):
        c, s = math.cos(x.phi), math.sin(x.phi)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), np.array([x.x, x.y, 0.0])
    if isinstance(x, SpatialPose):
        return x.rotation, np.asarray(x.position)
    raise TypeError("pose must be a PlanarPose or SpatialPose")


def _check_pose(model, x):
    want = PlanarPose if model.variant == "planar" else SpatialPose
    if not isinstance(x, want):
        raise ModelError(f"{model.variant} model needs a {want.__name__}")


def base_configuration(model, x, theta_r, secondary_q=None):
    """Full configuration for pose ``x`` and redundant coordinates ``theta_r``."""
    _check_pose(model, x)
    theta_r = np.asarray(theta_r, dtype=float)
    dofs = model.joint_dofs(0)
    if theta_r.shape != (len(dofs),):
        raise ModelError(f"theta_r must have dimension {len(dofs)}")
    q = theta_r[::-1]
    R_ve, p_ve = _arm_transform(model, q)
    R_x, p_x = _pose_rt(x)
    R_v = R_x @ R_ve.T
    p_v = p_x - R_v @ p_ve
    theta = np.zeros(model.n)
    theta[:model.d] = model.vehicle_config_from_pose(R_v, p_v)
    theta[dofs] = q
    if model.second_arm is not None and secondary_q is not None:
        theta[model.joint_dofs(1)] = secondary_q
    return theta


# -- differential kinematics -------------------------------------------------------

def split_jacobian(model, theta):
    """``(J_e, A_r)`` with ``J J_e = I`` and ``J A_r = 0`` for the primary tip Jacobian.

    For dual models the secondary joints follow the grasp closure, so their
    rows are filled from the secondary tip's position constraint.
    """
    theta = np.asarray(theta, dtype=float)
    d = model.d
    dofs = model.joint_dofs(0)
    nr = len(dofs)
    J = model.jacobian(theta, 0)
    Jv = J[:, :d]
    Jq = J[:, dofs]
    P = np.eye(nr)[::-1]  # q_dot = P theta_r_dot
    Jv_inv = np.linalg.inv(Jv)
    J_e = np.zeros((model.n, d))
    A_r = np.zeros((model.n, nr))
    J_e[:d] = Jv_inv
    A_r[:d] = -Jv_inv @ Jq @ P
    A_r[dofs] = P
    if model.second_arm is not None:
        dofs2 = model.joint_dofs(1)
        J2 = _secondary_position_jacobian(model, theta)
        K = -np.linalg.solve(J2[:, dofs2], J2[:, :d])
        J_e[dofs2] = K @ J_e[:d]
        A_r[dofs2] = K @ A_r[:d]
    return J_e, A_r


def _secondary_position_jacobian(model, theta):
    J6 = model._tip_jacobian6(theta, model.frames(theta), 1)
    return J6[:2] if model.variant == "planar" else J6[:3]


# -- validity -------------------------------------------------------------------

def manipulability(J):
    JJ = J @ J.T
    det = np.linalg.det(JJ)
    return math.sqrt(max(det, 0.0))


def arm_manipulability(model, theta, arm_index=0):
    """Manipulability of the arm-only positional subchain (vehicle held fixed)."""
    J = model.jacobian(theta, arm_index)
    rows = [0, 1] if model.variant == "planar" else [0, 1, 2]
    return manipulability(J[np.ix_(rows, model.joint_dofs(arm_index))])


def system_manipulability(model, theta):
    if model.second_arm is None:
        return manipulability(model.jacobian(theta, 0))
    return manipulability(model.stacked_jacobian(theta))


def _box_distance(p, half):
    return float(np.linalg.norm(np.maximum(np.abs(p) - half, 0.0)))


def _samples(a, b, skip_near_a=0.0, skip_near_b=0.0, n=12):
    L = float(np.linalg.norm(b - a))
    if L == 0:
        return [a]
    pts = []
    for s in np.linspace(0.0, L, n):
        if s < skip_near_a or s > L - skip_near_b:
            continue
        pts.append(a + (b - a) * (s / L))
    return pts


def self_collision(model, theta, margin=COLLISION_MARGIN):
    """Return a description of the first colliding pair, or ``""``."""
    fr = model.frames(np.asarray(theta, dtype=float))
    Rv, pv = np.real(fr.R_vehicle), np.real(fr.p_vehicle)
    half = 0.5 * np.asarray(model.vehicle.hull, dtype=float)
    caps = []
    for a, segs in enumerate(fr.segments):
        for i, (p, q, r) in enumerate(segs):
            caps.append((a, i, np.real(p), np.real(q), r))
    for a, i, p, q, r in caps:
        skip = 2.0 * (r + margin) if i == 0 else 0.0
        for s in _samples(p, q, skip_near_a=skip):
            if _box_distance(Rv.T @ (s - pv), half) < r + margin:
                return f"arm {a} link {i} hits hull"
    for x in range(len(caps)):
        for y in range(x + 1, len(caps)):
            a1, i1, p1, q1, r1 = caps[x]
            a2, i2, p2, q2, r2 = caps[y]
            lim = r1 + r2 + margin
            if a1 == a2 and i2 == i1 + 1:
                # adjacent links share a joint: only test the part away from it
                pts = _samples(p2, q2, skip_near_a=2.0 * lim)
                if any(_kernels.segment_distance(p1, q1, s, s) < lim for s in pts):
                    return f"arm {a1} links {i1}/{i2} fold"
                continue
            if a1 != a2 and i1 == 0 and i2 == 0:
                # both mounted on the hull; compare only beyond the mounts
                pts = _samples(p2, q2, skip_near_a=2.0 * lim)
                if any(_kernels.segment_distance(p1, q1, s, s) < lim for s in pts):
                    return f"arms cross at links {i1}/{i2}"
                continue
            if _kernels.segment_distance(p1, q1, p2, q2) < lim:
                return f"arm {a1} link {i1} hits arm {a2} link {i2}"
    return ""


def validity(model, theta, chain="system", eps=None):
    """``{'valid', 'manipulability', 'reason'}`` for a configuration.

    ``chain='system'`` measures sqrt(det(J J')) of the full (stacked) task
    Jacobian; ``chain='arm'`` uses the primary arm's positional subchain.
    The threshold is ``SING_EPS`` times the model's characteristic length.
    """
    theta = np.asarray(theta, dtype=float)
    eps = SING_EPS * model.characteristic_length if eps is None else eps
    if chain == "arm":
        w = arm_manipulability(model, theta)
    else:
        w = system_manipulability(model, theta)
    if not model.joint_limits_ok(theta):
        return {"valid": False, "manipulability": w, "reason": "joint limit"}
    if not w > eps:
        return {"valid": False, "manipulability": w, "reason": "near singular"}
    hit = self_collision(model, theta)
    if hit:
        return {"valid": False, "manipulability": w, "reason": "self collision: " + hit}
    return {"valid": True, "manipulability": w, "reason": ""}


# -- realization ----------------------------------------------------------------

def _finish(model, theta, theta_r, branch=0):
    v = validity(model, theta)
    if v["manipulability"] > 0 and (v["valid"] or v["reason"] != "near singular"):
        try:
            J_e, A_r = split_jacobian(model, theta)
        except np.linalg.LinAlgError:
            J_e = A_r = None
            v = {"valid": False, "manipulability": v["manipulability"], "reason": "singular split"}
    else:
        J_e = A_r = None
    return Realization(theta, np.asarray(theta_r, dtype=float).copy(), J_e, A_r,
                       bool(v["valid"]), float(v["manipulability"]), v["reason"], branch)


def realize(model, x, theta_r):
    """Configuration, Jacobian split and validity for pose ``x`` and ``theta_r``.

    Invalid configurations are reported through ``Realization.valid``.
    """
    if model.second_arm is not None:
        raise ModelError("dual-arm models are realized with realize_dual")
    theta = base_configuration(model, x, theta_r)
    return _finish(model, theta, theta_r)


def two_link_ik(L1, L2, target, tol=1e-9):
    """Planar two-link IK; returns a list of ``(q1, q2)`` (two, one or none)."""
    x, y = float(target[0]), float(target[1])
    r2 = x * x + y * y
    c2 = (r2 - L1 * L1 - L2 * L2) / (2.0 * L1 * L2)
    if c2 > 1.0 + tol or c2 < -1.0 - tol:
        return []
    c2 = min(1.0, max(-1.0, c2))
    sols = []
    for sgn in (1.0, -1.0):
        q2 = sgn * math.acos(c2)
        q1 = math.atan2(y, x) - math.atan2(L2 * math.sin(q2), L1 + L2 * math.cos(q2))
        sols.append((math.remainder(q1, 2 * math.pi), q2))
        if abs(c2) >= 1.0 - 1e-15:
            break
    return sols


def realize_dual(model, x1, theta_r, grasp):
    """Primary arm at ``x1`` via ``theta_r``; secondary arm tip on ``grasp``.

    Returns every IK branch as its own :class:`Realization`.
    """
    if model.second_arm is None:
        raise ModelError("model has no second arm")
    if model.variant != "planar" or model.second_arm.n_joints != 2:
        raise ModelError("secondary closure is implemented for planar two-link arms")
    theta = base_configuration(model, x1, theta_r)
    arm2 = model.second_arm
    Rv = np.real(model.frames(theta).R_vehicle)
    pv = theta[:2]
    g = np.asarray(getattr(grasp, "position", grasp), dtype=float)[:2]
    mount_R = arm2.mount_rotation[:2, :2]
    local = mount_R.T @ (Rv[:2, :2].T @ (g - pv) - arm2.mount_position[:2])
    sols = two_link_ik(arm2.links[0].length, arm2.links[1].length, local)
    out = DualRealization()
    if not sols:
        out.branches.append(Realization(theta, np.asarray(theta_r, float), None, None, False, 0.0,
                                        "grasp out of reach"))
        return out
    for b, q2 in enumerate(sols):
        th = theta.copy()
        th[model.joint_dofs(1)] = q2
        out.branches.append(_finish(model, th, theta_r, branch=b))
    return out
