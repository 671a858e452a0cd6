"""Planar and spatial poses, twists and wrenches.

Twists and wrenches are plain numpy vectors of dimension ``d``: ``(vx, vy,
wz)`` / ``(fx, fy, nz)`` for the planar variant and ``(v, w)`` / ``(f, n)``
stacked for the spatial variant.  Quaternions are ``(w, x, y, z)``.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np

UNIT_TOL = 1e-9


class VariantMismatch(ValueError):
    pass


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = math.remainder(float(a), 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


# -- quaternions ------------------------------------------------------------

def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R):
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quat_log(q):
    """Rotation vector (axis * angle) of a unit quaternion, shortest arc."""
    q = np.asarray(q, dtype=float)
    if q[0] < 0:
        q = -q
    v = q[1:]
    s = np.linalg.norm(v)
    if s < 1e-12:
        return 2.0 * v
    angle = 2.0 * math.atan2(s, q[0])
    return v / s * angle


def quat_from_rotvec(r):
    r = np.asarray(r, dtype=float)
    angle = np.linalg.norm(r)
    if angle < 1e-12:
        q = np.array([1.0, 0.5 * r[0], 0.5 * r[1], 0.5 * r[2]])
        return q / np.linalg.norm(q)
    axis = r / angle
    return np.concatenate([[math.cos(0.5 * angle)], math.sin(0.5 * angle) * axis])


# -- poses ------------------------------------------------------------------

@dataclass(frozen=True)
class PlanarPose:
    x: float = 0.0
    y: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    variant = "planar"
    dim = 3

    @property
    def position(self):
        return np.array([self.x, self.y])

    @property
    def rotation(self):
        c, s = math.cos(self.phi), math.sin(self.phi)
        return np.array([[c, -s], [s, c]])

    def as_vector(self):
        return np.array([self.x, self.y, self.phi])


@dataclass(frozen=True, eq=False)
class SpatialPose:
    position: np.ndarray
    orientation: np.ndarray

    variant = "spatial"
    dim = 6

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        q = np.array(self.orientation, dtype=float).reshape(4)
        nq = np.linalg.norm(q)
        if nq == 0:
            raise ValueError("zero quaternion")
        q = q / nq
        if q[0] < 0:
            q = -q
        p.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @property
    def rotation(self):
        return quat_to_matrix(self.orientation)

    @classmethod
    def from_matrix(cls, R, p):
        return cls(p, matrix_to_quat(R))

    def as_vector(self):
        return np.concatenate([self.position, self.orientation])

    def __eq__(self, other):
        return (isinstance(other, SpatialPose)
                and np.array_equal(self.position, other.position)
                and np.array_equal(self.orientation, other.orientation))

    def __repr__(self):
        return f"SpatialPose(position={self.position.tolist()}, orientation={self.orientation.tolist()})"


def identity(variant):
    if variant == "planar":
        return PlanarPose()
    return SpatialPose(np.zeros(3), [1.0, 0.0, 0.0, 0.0])


def _check(a, b):
    if a.variant != b.variant:
        raise VariantMismatch(f"cannot combine {a.variant} and {b.variant} poses")


def compose(a, b):
    """Group product ``a * b`` (apply ``b`` in the frame of ``a``)."""
    _check(a, b)
    if a.variant == "planar":
        p = a.position + a.rotation @ b.position
        return PlanarPose(p[0], p[1], a.phi + b.phi)
    return SpatialPose(a.position + a.rotation @ b.position,
                       quat_mul(a.orientation, b.orientation))


def inverse(a):
    if a.variant == "planar":
        p = -a.rotation.T @ a.position
        return PlanarPose(p[0], p[1], -a.phi)
    qi = quat_conj(a.orientation)
    return SpatialPose(-quat_to_matrix(qi) @ a.position, qi)


def pose_delta(a, b, dt):
    """World-frame twist that carries ``a`` to ``b`` in time ``dt``."""
    _check(a, b)
    if not dt > 0:
        raise ValueError("dt must be positive")
    lin = (b.position - a.position) / dt
    if a.variant == "planar":
        return np.array([lin[0], lin[1], wrap_angle(b.phi - a.phi) / dt])
    dq = quat_mul(b.orientation, quat_conj(a.orientation))
    return np.concatenate([lin, quat_log(dq) / dt])


def pose_error(a, b):
    """``b (-) a`` as a d-vector: position difference and world rotation vector."""
    return pose_delta(a, b, 1.0)


def _cross2(p, f):
    return p[0] * f[1] - p[1] * f[0]


def _relative(frm, to):
    rel = compose(inverse(to), frm)
    return rel.rotation, rel.position


def transform_wrench(w, frm, to):
    """Re-express wrench ``w`` (torque about ``frm`` origin, ``frm`` axes) in ``to``."""
    _check(frm, to)
    w = np.asarray(w, dtype=float)
    R, p = _relative(frm, to)
    if frm.variant == "planar":
        if w.shape != (3,):
            raise VariantMismatch("planar wrench must have 3 components")
        f = R @ w[:2]
        return np.array([f[0], f[1], w[2] + _cross2(p, f)])
    if w.shape != (6,):
        raise VariantMismatch("spatial wrench must have 6 components")
    f = R @ w[:3]
    return np.concatenate([f, R @ w[3:] + np.cross(p, f)])


def transform_twist(v, frm, to):
    """Re-express a twist (velocity of the ``frm`` origin, angular rate) in ``to``."""
    _check(frm, to)
    v = np.asarray(v, dtype=float)
    R, p = _relative(frm, to)
    if frm.variant == "planar":
        lin = R @ v[:2] + v[2] * np.array([p[1], -p[0]])
        return np.array([lin[0], lin[1], v[2]])
    om = R @ v[3:]
    return np.concatenate([R @ v[:3] + np.cross(p, om), om])


def unit_direction(c, warn_tol=1e-6):
    """Normalize a wrench direction, warning when it was noticeably off unit length."""
    c = np.asarray(c, dtype=float)
    n = np.linalg.norm(c)
    if n == 0 or not np.isfinite(n):
        raise ValueError("direction must be a nonzero finite vector")
    if abs(n - 1.0) > warn_tol:
        warnings.warn(f"direction norm {n:.6g} != 1; normalizing", stacklevel=2)
    return c / n


def is_unit(c, tol=UNIT_TOL):
    return abs(np.linalg.norm(c) - 1.0) <= tol
