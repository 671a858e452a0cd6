"""Control-time effort allocation and a simple closed-loop rollout.

At each tick a feedback law asks for a generalized effort ``tau_c``; the
allocator returns actuator efforts close to the planned ``u*`` that realize
it.  When box and rate limits make ``B u = tau_c`` unreachable the allocator
falls back to the reachable effort with the smallest weighted residual.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from .geometry import wrap_angle
from .solvers.qp import QuadraticProgram, solve_qp

EXACT = "optimal"
INFEASIBLE_EXACT = "infeasible_exact"


class AllocationError(ValueError):
    pass


@dataclass
class TrackingTick:
    index: int
    tau_c: np.ndarray
    u_ref: np.ndarray
    u_prev: np.ndarray = None
    Q: np.ndarray = None
    dt: float = 0.01

    def __post_init__(self):
        self.tau_c = np.asarray(self.tau_c, dtype=float)
        self.u_ref = np.asarray(self.u_ref, dtype=float)
        m = self.u_ref.size
        self.u_prev = self.u_ref.copy() if self.u_prev is None else np.asarray(self.u_prev, dtype=float)
        self.Q = np.eye(m) if self.Q is None else np.atleast_2d(np.asarray(self.Q, dtype=float))
        if self.Q.shape != (m, m):
            raise AllocationError("Q must be m x m")
        if np.max(np.abs(self.Q - self.Q.T)) > 1e-12 * max(1.0, np.max(np.abs(self.Q))):
            raise AllocationError("Q must be symmetric")
        if np.min(np.linalg.eigvalsh(self.Q)) <= 0:
            raise AllocationError("Q must be positive definite")
        if self.u_prev.shape != (m,):
            raise AllocationError("u_prev must match u_ref")


@dataclass
class AllocationLimits:
    u_min: np.ndarray
    u_max: np.ndarray
    u_rate: np.ndarray

    @classmethod
    def from_model(cls, model):
        return cls(model.u_min, model.u_max, model.u_rate)

    def box(self, u_prev, dt):
        """Box bounds intersected with the rate window around ``u_prev``."""
        step = np.asarray(self.u_rate, dtype=float) * dt
        lo = np.maximum(self.u_min, u_prev - step)
        hi = np.minimum(self.u_max, u_prev + step)
        return lo, hi


@dataclass
class AllocationResult:
    u: np.ndarray
    status: str
    residual: float = 0.0
    iterations: int = 0


def default_weighting(u_min, u_max):
    """``W_u^2``: inverse squared actuator half-ranges."""
    half = 0.5 * (np.asarray(u_max, float) - np.asarray(u_min, float))
    return np.diag(1.0 / half ** 2)


def weighted_pinv(B, Q):
    """``Q^-1 B' (B Q^-1 B')^-1``."""
    Qi_Bt = np.linalg.solve(Q, B.T)
    G = B @ Qi_Bt
    if np.linalg.matrix_rank(G) < G.shape[0]:
        raise AllocationError("B Q^-1 B' is singular")
    return Qi_Bt @ np.linalg.inv(G)


def allocate_unconstrained(B, tick):
    B = np.asarray(B, dtype=float)
    return tick.u_ref + weighted_pinv(B, tick.Q) @ (tick.tau_c - B @ tick.u_ref)


def _residual_metric(B, Q):
    """Cholesky factor ``L'`` of ``(B Q^-1 B')^-1`` so that ``|L' r|`` is the residual norm."""
    G = B @ np.linalg.solve(Q, B.T)
    return np.linalg.cholesky(np.linalg.inv(G)).T


def _closest(B, tick, target, lo, hi, x0=None):
    d = tick.u_ref
    qp = QuadraticProgram(2.0 * tick.Q, -2.0 * tick.Q @ d, B, target, lb=lo, ub=hi)
    return solve_qp(qp, x0=x0)


def allocate_constrained(B, tick, limits):
    """Closest effort to ``u_ref`` (in the ``Q`` metric) with ``B u = tau_c`` inside box and rate limits.

    If no such effort exists the status is ``infeasible_exact`` and ``u``
    minimizes the residual ``|B u - tau_c|`` in the ``(B Q^-1 B')^-1`` metric
    over the limits; among those minimizers the one closest to ``u_ref`` is
    returned.
    """
    B = np.asarray(B, dtype=float)
    if B.shape != (tick.tau_c.size, tick.u_ref.size):
        raise AllocationError("B must be n x m")
    lo, hi = limits.box(tick.u_prev, tick.dt)
    if np.any(lo > hi + 1e-12):
        raise AllocationError("rate window does not intersect the actuator box")
    hi = np.maximum(hi, lo)
    sol = _closest(B, tick, tick.tau_c, lo, hi)
    if sol.optimal:
        return AllocationResult(sol.x, EXACT, 0.0, sol.iterations)
    L = _residual_metric(B, tick.Q)
    fixed = lo == hi
    free = ~fixed
    u = lo.copy()
    if free.any():
        fit = lsq_linear(L @ B[:, free], L @ (tick.tau_c - B[:, fixed] @ lo[fixed]),
                         bounds=(lo[free], hi[free]), method="bvls", tol=1e-12)
        u[free] = fit.x
    reach = B @ u
    stage2 = _closest(B, tick, reach, lo, hi, x0=u)
    if stage2.optimal:
        u = stage2.x
    res = float(np.linalg.norm(L @ (B @ u - tick.tau_c)))
    return AllocationResult(u, INFEASIBLE_EXACT, res, sol.iterations + stage2.iterations)


# -- feedback ------------------------------------------------------------------------

def angular_mask(model):
    """Coordinates that are angles (wrapped when differenced)."""
    mask = np.zeros(model.n, dtype=bool)
    if model.variant == "planar":
        mask[2] = True
    else:
        mask[3:6] = True
    mask[model.d:] = True
    return mask


def config_error(model, theta_ref, theta):
    e = np.asarray(theta_ref, dtype=float) - np.asarray(theta, dtype=float)
    ang = angular_mask(model)
    e[ang] = [wrap_angle(v) for v in e[ang]]
    return e


@dataclass
class Gains:
    Kp: np.ndarray
    Kd: np.ndarray


def default_gains(model, theta0=None, bandwidth=1.0):
    """Critically damped diagonal gains from the mass-matrix diagonal."""
    theta0 = model.neutral_configuration() if theta0 is None else np.asarray(theta0, float)
    Mi = np.diag(model.mass_matrix(theta0))
    return Gains(Mi * bandwidth ** 2, 2.0 * Mi * bandwidth)


def pd_tracking_effort(model, theta, theta_dot, theta_ref, theta_dot_ref, gains):
    e = config_error(model, theta_ref, theta)
    ed = np.asarray(theta_dot_ref, float) - np.asarray(theta_dot, float)
    return np.asarray(gains.Kp) * e + np.asarray(gains.Kd) * ed + model.gravity_buoyancy(theta)


# -- rollout ---------------------------------------------------------------------------

@dataclass
class Reference:
    """Piecewise-linear reference through plan knots ``times``."""
    times: np.ndarray
    thetas: np.ndarray
    efforts: np.ndarray

    def __call__(self, t):
        ts = self.times
        if t <= ts[0]:
            i, a = 0, 0.0
        elif t >= ts[-1]:
            i, a = len(ts) - 2, 1.0
        else:
            i = int(np.searchsorted(ts, t, side="right") - 1)
            a = (t - ts[i]) / (ts[i + 1] - ts[i])
        if len(ts) == 1:
            return self.thetas[0], np.zeros_like(self.thetas[0]), self.efforts[0]
        th = (1 - a) * self.thetas[i] + a * self.thetas[i + 1]
        thd = (self.thetas[i + 1] - self.thetas[i]) / (ts[i + 1] - ts[i])
        if t >= ts[-1]:
            thd = np.zeros_like(thd)
        u = (1 - a) * self.efforts[i] + a * self.efforts[i + 1]
        return th, thd, u


@dataclass
class TrackingLog:
    t: list
    theta: list
    theta_ref: list
    u: list
    tau: list
    status: list

    def error_norms(self, model):
        return np.array([np.linalg.norm(config_error(model, r, q))
                         for q, r in zip(self.theta, self.theta_ref)])

    def to_csv(self):
        n = len(self.theta[0])
        m = len(self.u[0])
        head = (["t"] + [f"theta_{i + 1}" for i in range(n)] + [f"theta_ref_{i + 1}" for i in range(n)]
                + [f"u_{i + 1}" for i in range(m)] + [f"tau_{i + 1}" for i in range(n)] + ["status"])
        rows = [",".join(head)]
        for k in range(len(self.t)):
            vals = [self.t[k], *self.theta[k], *self.theta_ref[k], *self.u[k], *self.tau[k]]
            rows.append(",".join(f"{v:.9g}" for v in vals) + "," + self.status[k])
        return "\n".join(rows) + "\n"


def simulate(model, reference, theta0, duration, dt=0.01, gains=None, Q=None, limits=None,
             theta_dot0=None, substeps=1):
    """Semi-implicit Euler rollout of PD feedback through the constrained allocator."""
    theta = np.asarray(theta0, dtype=float).copy()
    qd = np.zeros(model.n) if theta_dot0 is None else np.asarray(theta_dot0, float).copy()
    gains = default_gains(model, theta) if gains is None else gains
    limits = AllocationLimits.from_model(model) if limits is None else limits
    Q = default_weighting(model.u_min, model.u_max) if Q is None else Q
    th_ref, _, u_prev = reference(0.0)
    u_prev = np.clip(u_prev, limits.u_min, limits.u_max)
    log = TrackingLog([], [], [], [], [], [])
    steps = int(round(duration / dt))
    h = dt / substeps
    for k in range(steps + 1):
        t = k * dt
        th_ref, thd_ref, u_ref = reference(t)
        tau_c = pd_tracking_effort(model, theta, qd, th_ref, thd_ref, gains)
        B = model.actuator_map(theta)
        alloc = allocate_constrained(B, TrackingTick(k, tau_c, u_ref, u_prev, Q, dt), limits)
        log.t.append(t)
        log.theta.append(theta.copy())
        log.theta_ref.append(np.asarray(th_ref, float).copy())
        log.u.append(alloc.u.copy())
        log.tau.append(tau_c.copy())
        log.status.append(alloc.status)
        if k == steps:
            break
        applied = B @ alloc.u
        for _ in range(substeps):
            M = model.mass_matrix(theta)
            rhs = applied - model.coriolis_matrix(theta, qd) @ qd - model.damping(theta, qd) \
                - model.gravity_buoyancy(theta)
            qd = qd + h * np.linalg.solve(M, rhs)
            theta = theta + h * qd
        u_prev = alloc.u
    return log


def regulation_decay(errors, skip=0.25):
    """True when the error norm is non-increasing after the first ``skip`` fraction."""
    start = int(math.ceil(skip * len(errors)))
    tail = np.asarray(errors[start:])
    return bool(np.all(np.diff(tail) <= 1e-9 * max(1.0, float(np.max(tail, initial=0.0)))))
