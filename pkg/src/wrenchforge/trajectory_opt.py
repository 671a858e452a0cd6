"""Max-min wrench trajectories and wrench impulses.

A trajectory is ``k`` end-effector poses spaced ``dt = T / k`` apart.  The
decision is the stacked redundant coordinates ``Theta_r`` (``k x n_r``).  For a
fixed decision the kinematics and the lumped load ``tau_d`` at every step are
fixed, and one LP over ``(t, u_1..u_k, h_1..h_k)`` certifies the smallest
directional wrench along the path.  The upper level descends on that value
using the LP's equality duals.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import redundancy as rd
from .geometry import is_unit, pose_delta, unit_direction
from .solvers.lp import LinearProgram, solve_lp
from .solvers.search import dykstra_box_rate, latin_hypercube, projected_descent

OPTIMAL = "optimal"
INFEASIBLE = "dynamically_infeasible"
BIG = 1.0e6


class InvalidStep(ValueError):
    def __init__(self, step, reason):
        super().__init__(f"invalid configuration at step {step}: {reason}")
        self.step = step
        self.reason = reason


class NoFeasibleTrajectory(RuntimeError):
    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass
class TrajectorySpec:
    poses: list
    directions: np.ndarray
    T: float

    def __post_init__(self):
        self.poses = list(self.poses)
        if len(self.poses) < 1:
            raise ValueError("a trajectory needs at least one pose")
        D = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if D.shape[0] == 1 and self.k > 1:
            D = np.repeat(D, self.k, axis=0)
        if D.shape[0] != self.k:
            raise ValueError("one direction per pose is required")
        self.directions = np.array([c if is_unit(c) else unit_direction(c) for c in D])
        if not self.T > 0:
            raise ValueError("total time must be positive")

    @property
    def k(self):
        return len(self.poses)

    @property
    def dt(self):
        return self.T / self.k


@dataclass
class TrajectoryLimits:
    u_min: np.ndarray
    u_max: np.ndarray
    u_rate: np.ndarray
    theta_r_bounds: np.ndarray
    theta_r_rate: np.ndarray

    @classmethod
    def from_model(cls, model, u_rate=None, theta_r_rate=None, theta_r_bounds=None):
        nr = model.n_redundant
        rate = np.array(model.u_rate if u_rate is None else np.broadcast_to(u_rate, (model.m,)), float)
        if theta_r_rate is None:
            theta_r_rate = np.column_stack([np.full(nr, -math.inf), np.full(nr, math.inf)])
        theta_r_rate = np.asarray(theta_r_rate, dtype=float)
        if theta_r_rate.ndim == 0 or theta_r_rate.shape == ():
            v = float(theta_r_rate)
            theta_r_rate = np.column_stack([np.full(nr, -v), np.full(nr, v)])
        bounds = rd.redundant_bounds(model) if theta_r_bounds is None else np.asarray(theta_r_bounds, float)
        return cls(model.u_min.copy(), model.u_max.copy(), rate, bounds,
                   np.atleast_2d(theta_r_rate))


@dataclass
class Stacked:
    thetas: np.ndarray
    theta_dot: np.ndarray
    theta_ddot: np.ndarray
    J: np.ndarray
    B: np.ndarray
    tau_d: np.ndarray
    xdot: np.ndarray
    directions: np.ndarray
    dt: float
    realizations: list = field(default_factory=list)


@dataclass
class TrajectoryLPResult:
    status: str
    value: float = math.nan
    t: float = math.nan
    u: np.ndarray = None
    h: np.ndarray = None
    lambda_eq: np.ndarray = None
    fallback_value: float = math.nan
    iterations: int = 0
    objective: str = "maxmin"
    t_h: int = None

    @property
    def optimal(self):
        return self.status == OPTIMAL


# -- operators and stacking ---------------------------------------------------------

def finite_difference_operator(k, i, dt):
    """Forward differences over ``k`` blocks of size ``i``; the last block row is zero."""
    if k < 1 or i < 1:
        raise ValueError("k and i must be positive")
    if not dt > 0:
        raise ValueError("dt must be positive")
    Dk = np.zeros((k, k))
    for r in range(k - 1):
        Dk[r, r] = -1.0
        Dk[r, r + 1] = 1.0
    return np.kron(Dk / dt, np.eye(i))


def pose_rates(spec):
    k, dt = spec.k, spec.dt
    d = spec.directions.shape[1]
    xdot = np.zeros((k, d))
    for s in range(k - 1):
        xdot[s] = pose_delta(spec.poses[s], spec.poses[s + 1], dt)
    return xdot


def realize_steps(model, spec, Theta_r):
    Theta_r = np.asarray(Theta_r, dtype=float).reshape(spec.k, -1)
    out = []
    for s in range(spec.k):
        r = rd.realize(model, spec.poses[s], Theta_r[s])
        if not r.valid:
            raise InvalidStep(s, r.reason)
        out.append(r)
    return out


def _theta_dot(reals, xdot, Theta_r, dt, s):
    k = len(reals)
    thr_dot = (Theta_r[s + 1] - Theta_r[s]) / dt if s < k - 1 else np.zeros(Theta_r.shape[1])
    r = reals[s]
    return r.J_e @ xdot[s] + r.A_r @ thr_dot


def _tau_d(model, reals, qd, s, dt):
    k = len(reals)
    qdd = (qd[s + 1] - qd[s]) / dt if s < k - 1 else np.zeros_like(qd[s])
    return model.dynamic_terms(reals[s].theta, qd[s], qdd).tau_d


def stack_kinematics(model, spec, Theta_r, realizations=None):
    """Per-step configuration, rates, Jacobians, actuator maps and loads."""
    Theta_r = np.asarray(Theta_r, dtype=float).reshape(spec.k, -1)
    reals = realize_steps(model, spec, Theta_r) if realizations is None else realizations
    k, dt = spec.k, spec.dt
    xdot = pose_rates(spec)
    qd = np.array([_theta_dot(reals, xdot, Theta_r, dt, s) for s in range(k)])
    D = finite_difference_operator(k, model.n, dt)
    qdd = (D @ qd.ravel()).reshape(k, model.n)
    tau = np.array([model.dynamic_terms(reals[s].theta, qd[s], qdd[s]).tau_d for s in range(k)])
    J = np.array([model.jacobian(r.theta) for r in reals])
    B = np.array([model.actuator_map(r.theta) for r in reals])
    thetas = np.array([r.theta for r in reals])
    return Stacked(thetas, qd, qdd, J, B, tau, xdot, spec.directions, dt, reals)


# -- lower level -------------------------------------------------------------------

def build_lp(stacked, limits, relax_orthogonal=False, t_h=None):
    """LP over ``z = (t, u_1..u_k, w_1..w_k)``; ``t_h`` (1-based) selects the impulse objective.

    With orthogonality enforced each wrench is ``h_i = c_i s_i`` and ``w_i`` is
    the scalar ``s_i``; relaxed, ``w_i`` is the full ``h_i``.  Substituting the
    span directly keeps the equality block free of the rank-deficient rows
    ``(c c' - I) h = 0``.
    """
    k, n, m = stacked.B.shape
    d = stacked.J.shape[1]
    nw = d if relax_orthogonal else 1
    nz = 1 + k * m + k * nw
    iu = lambda s: slice(1 + s * m, 1 + (s + 1) * m)
    iw = lambda s: slice(1 + k * m + s * nw, 1 + k * m + (s + 1) * nw)
    A_eq = np.zeros((k * n, nz))
    b_eq = stacked.tau_d.ravel().copy()
    for s in range(k):
        A_eq[s * n:(s + 1) * n, iu(s)] = stacked.B[s]
        JT = stacked.J[s].T
        A_eq[s * n:(s + 1) * n, iw(s)] = -JT if relax_orthogonal else -(JT @ stacked.directions[s])[:, None]
    ineq, b_in = [], []
    cost = np.zeros(nz)

    def along(s):
        return stacked.directions[s] if relax_orthogonal else np.ones(1)

    if t_h is None:
        cost[0] = 1.0
        for s in range(k):
            r = np.zeros(nz)
            r[0] = 1.0
            r[iw(s)] = -along(s)
            ineq.append(r)
            b_in.append(0.0)
    else:
        cost[iw(t_h - 1)] = along(t_h - 1)
    lim = np.asarray(limits.u_rate, dtype=float) * stacked.dt
    for s in range(k - 1):
        for a in range(m):
            if not math.isfinite(lim[a]):
                continue
            r = np.zeros(nz)
            r[iu(s + 1).start + a] = 1.0
            r[iu(s).start + a] = -1.0
            ineq.append(r)
            b_in.append(lim[a])
            ineq.append(-r)
            b_in.append(lim[a])
    lb = np.full(nz, -np.inf)
    ub = np.full(nz, np.inf)
    for s in range(k):
        lb[iu(s)] = limits.u_min
        ub[iu(s)] = limits.u_max
    if t_h is not None:
        # t is unused in the impulse objective; pin it
        lb[0] = ub[0] = 0.0
    A_in = np.array(ineq) if ineq else np.zeros((0, nz))
    return LinearProgram(cost, A_eq, b_eq, A_in, np.array(b_in), lb, ub)


def maxmin_lp(stacked, limits, relax_orthogonal=False, t_h=None):
    k, n, m = stacked.B.shape
    d = stacked.J.shape[1]
    lp = build_lp(stacked, limits, relax_orthogonal, t_h)
    sol = solve_lp(lp)
    kind = "maxmin" if t_h is None else "impulse"
    if sol.status != "optimal":
        fb = 0.5 * float(np.sum(stacked.tau_d ** 2))
        return TrajectoryLPResult(INFEASIBLE, fallback_value=fb, iterations=sol.iterations,
                                  objective=kind, t_h=t_h)
    z = sol.x
    u = z[1:1 + k * m].reshape(k, m)
    if relax_orthogonal:
        h = z[1 + k * m:].reshape(k, d)
    else:
        h = stacked.directions * z[1 + k * m:][:, None]
    lam = sol.dual_eq[:k * n].reshape(k, n)
    wrench = np.einsum("ij,ij->i", stacked.directions, h)
    t = float(np.min(wrench)) if t_h is None else float(wrench[t_h - 1])
    return TrajectoryLPResult(OPTIMAL, float(sol.value), t, u, h, lam, math.nan, sol.iterations, kind, t_h)


# -- value gradient ------------------------------------------------------------------

def _local_loads(model, spec, Theta_r, reals, xdot, steps):
    """tau_d at the requested steps, recomputing only what those steps need."""
    dt = spec.dt
    k = spec.k
    need = sorted({j for s in steps for j in (s, s + 1) if j < k})
    qd = {j: _theta_dot(reals, xdot, Theta_r, dt, j) for j in need}
    out = {}
    for s in steps:
        qdd = (qd[s + 1] - qd[s]) / dt if s < k - 1 else np.zeros(model.n)
        out[s] = model.dynamic_terms(reals[s].theta, qd[s], qdd).tau_d
    return out


def lp_value_gradient(model, spec, Theta_r, result, stacked, step=1e-6):
    """d value / d Theta_r from equality duals, or the fallback gradient when infeasible.

    Perturbing ``Theta_r[i]`` changes the configuration at step ``i`` and the
    finite-difference rates feeding steps ``i - 2 .. i``; only those balance
    rows are recomputed, by central differences.
    """
    Theta_r = np.asarray(Theta_r, dtype=float).reshape(spec.k, -1)
    k, nr = Theta_r.shape
    reals = list(stacked.realizations)
    xdot = stacked.xdot
    grad = np.zeros((k, nr))
    feasible = result.optimal
    if not feasible and result.status != INFEASIBLE:
        raise ValueError("gradient needs an optimal or infeasible-with-fallback result")
    for i in range(k):
        window = [s for s in (i - 2, i - 1, i) if s >= 0]
        for j in range(nr):
            hj = step * (1.0 + abs(Theta_r[i, j]))
            parts = []
            for sgn in (1.0, -1.0):
                Tp = Theta_r.copy()
                Tp[i, j] += sgn * hj
                rp = rd.realize(model, spec.poses[i], Tp[i])
                if rp.A_r is None:
                    raise rd.ModelError("perturbed configuration has no Jacobian split")
                rl = reals.copy()
                rl[i] = rp
                loads = _local_loads(model, spec, Tp, rl, xdot, window)
                if feasible:
                    vals = {}
                    for s in window:
                        Js = model.jacobian(rl[s].theta) if s == i else stacked.J[s]
                        Bs = model.actuator_map(rl[s].theta) if s == i else stacked.B[s]
                        vals[s] = loads[s] + Js.T @ result.h[s] - Bs @ result.u[s]
                else:
                    vals = loads
                parts.append(vals)
            acc = 0.0
            for s in window:
                dc = (parts[0][s] - parts[1][s]) / (2.0 * hj)
                w = result.lambda_eq[s] if feasible else stacked.tau_d[s]
                acc += float(w @ dc)
            grad[i, j] = acc
    return grad


# -- upper level ----------------------------------------------------------------------

@dataclass
class TrajectoryOutcome:
    decision: np.ndarray
    result: TrajectoryLPResult
    stacked: Stacked
    starts: list = field(default_factory=list)
    evaluations: int = 0
    baseline_value: float = math.nan

    @property
    def value(self):
        return self.result.t if self.result.optimal else -math.inf


class _Objective:
    """Upper-level objective with a one-entry cache shared by value and gradient."""

    def __init__(self, model, spec, limits, relax, t_h):
        self.model, self.spec, self.limits = model, spec, limits
        self.relax, self.t_h = relax, t_h
        self._key = None
        self._cache = None
        self.evaluations = 0

    def solve(self, Theta_r):
        key = np.asarray(Theta_r, dtype=float).tobytes()
        if key == self._key:
            return self._cache
        self.evaluations += 1
        try:
            st = stack_kinematics(self.model, self.spec, Theta_r)
        except InvalidStep:
            self._key, self._cache = key, (None, None)
            return self._cache
        res = maxmin_lp(st, self.limits, self.relax, self.t_h)
        self._key, self._cache = key, (st, res)
        return self._cache

    def value(self, z):
        st, res = self.solve(z)
        if st is None:
            return math.inf
        if res.optimal:
            return -res.value
        return BIG + res.fallback_value

    def grad(self, z):
        st, res = self.solve(z)
        if st is None:
            return np.zeros_like(z)
        try:
            g = lp_value_gradient(self.model, self.spec, z, res, st)
        except rd.ModelError:
            return np.zeros_like(z)
        g = g.ravel()
        return -g if res.optimal else g


def _projector(spec, limits):
    k = spec.k
    nr = limits.theta_r_bounds.shape[0]
    lo, hi = limits.theta_r_bounds[:, 0], limits.theta_r_bounds[:, 1]
    rlo, rhi = limits.theta_r_rate[:, 0], limits.theta_r_rate[:, 1]
    if np.all(np.isinf(rlo)) and np.all(np.isinf(rhi)):
        return lambda z: np.clip(z.reshape(k, nr), lo, hi).ravel()
    return lambda z: dykstra_box_rate(z, lo, hi, k, nr, rlo, rhi, spec.dt)


def optimize_trajectory(model, spec, init=None, limits=None, n_starts=2, seed=0,
                        relax_orthogonal=False, t_h=None, max_iter=30, tol=1e-5):
    """Multistart projected descent on ``-value`` (or the infeasibility fallback).

    ``init`` (``k x n_r``) is always the first start, so the result is never
    worse than the initial decision.
    """
    limits = TrajectoryLimits.from_model(model) if limits is None else limits
    k = spec.k
    nr = model.n_redundant
    obj = _Objective(model, spec, limits, relax_orthogonal, t_h)
    project = _projector(spec, limits)
    starts = []
    baseline = math.nan
    if init is not None:
        z0 = np.asarray(init, dtype=float).reshape(k, nr).ravel()
        starts.append(project(z0))
        st, res = obj.solve(starts[0])
        baseline = res.value if res is not None and res.optimal else -math.inf
    if n_starts > 0:
        lo = np.tile(limits.theta_r_bounds[:, 0], k)
        hi = np.tile(limits.theta_r_bounds[:, 1], k)
        starts.extend(project(p) for p in latin_hypercube(lo, hi, n_starts, seed))
    records = []
    best_z, best_f = None, math.inf
    for z in starts:
        x, fx, it, pg, conv, _ = projected_descent(obj.value, obj.grad, z, project, max_iter, tol, 0.2)
        records.append({"f": float(fx), "iterations": int(it), "pg_norm": float(pg), "converged": bool(conv)})
        if fx < best_f:
            best_z, best_f = x, fx
    if best_z is None or not math.isfinite(best_f):
        raise NoFeasibleTrajectory("no valid decision found from any start")
    st, res = obj.solve(best_z)
    out = TrajectoryOutcome(best_z.reshape(k, nr), res, st, records, obj.evaluations, baseline)
    if not res.optimal:
        raise NoFeasibleTrajectory("no dynamically feasible decision found across all starts", out)
    return out


def optimize_impulse(model, x, c, T, k, t_h, init=None, limits=None, n_starts=2, seed=0,
                     max_iter=30, tol=1e-5):
    """Fixed end-effector pose; maximize the wrench along ``c`` at step ``t_h`` (1-based)."""
    if not 1 <= t_h <= k:
        raise ValueError("t_h must lie in 1..k")
    spec = TrajectorySpec([x] * k, np.repeat(np.atleast_2d(c), k, axis=0), T)
    return optimize_trajectory(model, spec, init, limits, n_starts, seed, False, t_h, max_iter, tol)


# -- output ---------------------------------------------------------------------------

def plan_to_dict(spec, outcome):
    res = outcome.result
    st = outcome.stacked
    steps = []
    for s in range(spec.k):
        steps.append({
            "time": float(s * spec.dt),
            "theta": [float(v) for v in st.thetas[s]],
            "theta_r": [float(v) for v in outcome.decision[s]],
            "u": None if res.u is None else [float(v) for v in res.u[s]],
            "h_e": None if res.h is None else [float(v) for v in res.h[s]],
            "wrench_along_c": None if res.h is None else float(spec.directions[s] @ res.h[s]),
        })
    return {
        "status": res.status,
        "objective": res.objective,
        "t": None if not res.optimal else float(res.t),
        "value": None if not res.optimal else float(res.value),
        "t_h": res.t_h,
        "fallback_value": None if res.optimal else float(res.fallback_value),
        "baseline_value": None if not math.isfinite(outcome.baseline_value) else float(outcome.baseline_value),
        "dt": float(spec.dt),
        "steps": steps,
        "starts": outcome.starts,
        "evaluations": int(outcome.evaluations),
        "lp_iterations": int(res.iterations),
    }


def plan_csv(spec, outcome):
    res = outcome.result
    m = res.u.shape[1] if res.u is not None else 0
    nr = outcome.decision.shape[1]
    head = ["t"] + [f"thr_{a + 1}" for a in range(m)] + [f"q_r{j + 1}" for j in range(nr)]
    lines = [",".join(head)]
    for s in range(spec.k):
        row = [f"{s * spec.dt:.6f}"]
        if res.u is not None:
            row += [f"{v:.9g}" for v in res.u[s]]
        row += [f"{v:.9g}" for v in outcome.decision[s]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
