"""Primal active-set method for convex quadratic programs.

Problems are stated as::

    minimize    0.5 x'Qx + q.x
    subject to  A_eq x == b_eq
                A_in x <= b_in
                lb <= x <= ub

Bounds are folded into the inequality block internally.  A feasible start is
taken from the caller (warm start) when it is feasible, otherwise from an LP
feasibility solve.
"""
from dataclasses import dataclass

import numpy as np

from .lp import LinearProgram, solve_lp

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class QuadraticProgram:
    Q: np.ndarray
    q: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    A_in: np.ndarray = None
    b_in: np.ndarray = None
    lb: np.ndarray = None
    ub: np.ndarray = None

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = self.Q.shape[0]
        if self.Q.shape != (n, n):
            raise ValueError("Q must be square")
        self.q = np.zeros(n) if self.q is None else np.asarray(self.q, dtype=float).ravel()
        # reuse the LP validation for the constraint block
        lp = LinearProgram(self.q, self.A_eq, self.b_eq, self.A_in, self.b_in, self.lb, self.ub)
        self.A_eq, self.b_eq, self.A_in, self.b_in = lp.A_eq, lp.b_eq, lp.A_in, lp.b_in
        self.lb, self.ub = lp.lb, lp.ub
        if not np.all(np.isfinite(self.Q)):
            raise ValueError("non-finite entries in Q")
        if np.max(np.abs(self.Q - self.Q.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(self.Q))):
            raise ValueError("Q is not symmetric")
        self.Q = 0.5 * (self.Q + self.Q.T)
        if n and np.min(np.linalg.eigvalsh(self.Q)) < -1e-10:
            raise ValueError("Q is not positive semidefinite")

    @property
    def n(self):
        return self.q.size

    def objective(self, x):
        return float(0.5 * x @ self.Q @ x + self.q @ x)


@dataclass
class QPSolution:
    status: str
    x: np.ndarray = None
    value: float = np.nan
    dual_eq: np.ndarray = None
    dual_in: np.ndarray = None
    dual_lb: np.ndarray = None
    dual_ub: np.ndarray = None
    iterations: int = 0
    active: tuple = ()

    @property
    def optimal(self):
        return self.status == OPTIMAL


def _inequality_block(qp):
    n = qp.n
    rows = [qp.A_in]
    rhs = [qp.b_in]
    fu = np.flatnonzero(np.isfinite(qp.ub))
    fl = np.flatnonzero(np.isfinite(qp.lb))
    rows.append(np.eye(n)[fu])
    rhs.append(qp.ub[fu])
    rows.append(-np.eye(n)[fl])
    rhs.append(-qp.lb[fl])
    return np.vstack(rows), np.concatenate(rhs), fu, fl


def _feasible_point(qp, x0, tol):
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        ok = np.all(x0 >= qp.lb - tol) and np.all(x0 <= qp.ub + tol)
        if qp.b_eq.size:
            ok = ok and np.max(np.abs(qp.A_eq @ x0 - qp.b_eq)) <= tol
        if qp.b_in.size:
            ok = ok and np.max(qp.A_in @ x0 - qp.b_in) <= tol
        if ok:
            return np.clip(x0, qp.lb, qp.ub)
    sol = solve_lp(LinearProgram(np.zeros(qp.n), qp.A_eq, qp.b_eq, qp.A_in, qp.b_in, qp.lb, qp.ub))
    if not sol.optimal:
        return None
    return sol.x


def solve_qp(qp, x0=None, working_set=None, max_iter=500, tol=1e-10):
    """Solve a convex :class:`QuadraticProgram`.

    ``x0`` and ``working_set`` (indices into the internal inequality block, as
    returned in ``QPSolution.active``) warm start the method.
    """
    n = qp.n
    G, h, fu, fl = _inequality_block(qp)
    Aeq, beq = qp.A_eq, qp.b_eq
    me = beq.size
    x = _feasible_point(qp, x0, 1e-9)
    if x is None:
        return QPSolution(INFEASIBLE)
    slack = h - G @ x
    if working_set is None:
        W = [int(i) for i in np.flatnonzero(np.abs(slack) <= 1e-9)]
    else:
        W = [int(i) for i in working_set if abs(slack[i]) <= 1e-9]
    W = _independent(Aeq, G, W)
    lam_in = np.zeros(0)
    it = 0
    while it < max_iter:
        it += 1
        A_w = np.vstack([Aeq, G[W]]) if W else Aeq
        k = A_w.shape[0]
        K = np.zeros((n + k, n + k))
        K[:n, :n] = qp.Q
        K[:n, n:] = A_w.T
        K[n:, :n] = A_w
        g = qp.Q @ x + qp.q
        rhs = np.concatenate([-g, np.zeros(k)])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        p, lam = sol[:n], sol[n:]
        scale = 1.0 + np.max(np.abs(x), initial=0.0)
        if np.linalg.norm(K @ sol - rhs) > 1e-9 * (1.0 + np.linalg.norm(g)):
            # subproblem unbounded: descend along a zero-curvature feasible direction
            Nsp = _null_space(np.vstack([qp.Q, A_w]))
            p = -Nsp @ (Nsp.T @ g)
        elif np.linalg.norm(p) <= 1e-11 * scale:
            lam_in = lam[me:]
            if lam_in.size == 0 or np.min(lam_in) >= -1e-10:
                return _pack(qp, x, lam[:me], W, lam_in, G.shape[0], fu, fl, it)
            W.pop(int(np.argmin(lam_in)))
            continue
        if np.linalg.norm(p) <= 1e-14 * scale:
            return QPSolution(ITERATION_LIMIT, x=x, value=qp.objective(x), iterations=it)
        # a step in a zero-curvature direction with descent has no natural length
        unbounded_dir = p @ qp.Q @ p <= 1e-14 * (p @ p) and g @ p < -tol
        Gp = G @ p
        slack = h - G @ x
        alpha = np.inf if unbounded_dir else 1.0
        block = -1
        inW = np.zeros(G.shape[0], dtype=bool)
        inW[W] = True
        for i in np.flatnonzero((Gp > 1e-12) & ~inW):
            a = max(slack[i], 0.0) / Gp[i]
            if a < alpha:
                alpha, block = a, int(i)
        if not np.isfinite(alpha):
            return QPSolution(UNBOUNDED, iterations=it)
        x = x + alpha * p
        if block >= 0:
            W.append(block)
    return QPSolution(ITERATION_LIMIT, x=x, value=qp.objective(x), iterations=it)


def _null_space(A, rtol=1e-10):
    u, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > rtol * max(1.0, s[0] if s.size else 0.0)))
    return vt[rank:].T


def _independent(Aeq, G, W):
    """Greedy subset of ``W`` keeping the working-set rows linearly independent."""
    keep = []
    rows = [r for r in Aeq]
    rank = np.linalg.matrix_rank(np.array(rows)) if rows else 0
    for i in W:
        trial = rows + [G[i]]
        r = np.linalg.matrix_rank(np.array(trial), tol=1e-9)
        if r > rank:
            rows, rank = trial, r
            keep.append(i)
    return keep


def _pack(qp, x, lam_eq, W, lam_w, n_in_rows, fu, fl, it):
    n = qp.n
    lam_all = np.zeros(n_in_rows)
    lam_all[W] = np.maximum(lam_w, 0.0)
    mi = qp.b_in.size
    dual_in = lam_all[:mi]
    dual_ub = np.zeros(n)
    dual_lb = np.zeros(n)
    dual_ub[fu] = lam_all[mi:mi + fu.size]
    dual_lb[fl] = lam_all[mi + fu.size:]
    x = np.clip(x, qp.lb, qp.ub)
    # multipliers for min problems: Qx + q + A_eq' y + A_in' z + dual_ub - dual_lb = 0
    return QPSolution(OPTIMAL, x, qp.objective(x), lam_eq, dual_in, dual_lb, dual_ub, it, tuple(sorted(W)))


def kkt_residuals(qp, sol):
    x = sol.x
    prim = 0.0
    if qp.b_eq.size:
        prim = max(prim, float(np.max(np.abs(qp.A_eq @ x - qp.b_eq))))
    if qp.b_in.size:
        prim = max(prim, float(np.max(np.maximum(qp.A_in @ x - qp.b_in, 0.0))))
    prim = max(prim, float(np.max(np.maximum(qp.lb - x, 0.0), initial=0.0)),
               float(np.max(np.maximum(x - qp.ub, 0.0), initial=0.0)))
    stat = qp.Q @ x + qp.q + qp.A_eq.T @ sol.dual_eq + qp.A_in.T @ sol.dual_in + sol.dual_ub - sol.dual_lb
    comp = 0.0
    if qp.b_in.size:
        comp = max(comp, float(np.max(np.abs(sol.dual_in * (qp.b_in - qp.A_in @ x)))))
    fu, fl = np.isfinite(qp.ub), np.isfinite(qp.lb)
    if fu.any():
        comp = max(comp, float(np.max(np.abs(sol.dual_ub[fu] * (qp.ub - x)[fu]))))
    if fl.any():
        comp = max(comp, float(np.max(np.abs(sol.dual_lb[fl] * (x - qp.lb)[fl]))))
    return prim, float(np.max(np.abs(stat), initial=0.0)), comp
