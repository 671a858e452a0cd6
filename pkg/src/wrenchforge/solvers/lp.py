"""Dense two-phase revised simplex with exact duals.

Problems are stated as::

    maximize    c.x
    subject to  A_eq x == b_eq
                A_in x <= b_in
                lb <= x <= ub        (infinite bounds allowed)

Duals follow the shadow-price convention: ``dual_eq[i] = d value / d b_eq[i]``,
``dual_in >= 0`` likewise, and bound multipliers are non-negative with
``c = A_eq' y_eq + A_in' y_in + dual_ub - dual_lb`` at an optimum.
"""
from dataclasses import dataclass, field

import numpy as np

from .. import _kernels

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
NUMERICAL = "numerical_difficulty"

_TOL = 1e-9
_NOISE = 1e-13
_REFACTOR = 64


@dataclass
class LinearProgram:
    c: np.ndarray
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    A_in: np.ndarray = None
    b_in: np.ndarray = None
    lb: np.ndarray = None
    ub: np.ndarray = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq = np.zeros((0, n)) if self.A_eq is None else np.atleast_2d(np.asarray(self.A_eq, dtype=float))
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        self.A_in = np.zeros((0, n)) if self.A_in is None else np.atleast_2d(np.asarray(self.A_in, dtype=float))
        self.b_in = np.zeros(0) if self.b_in is None else np.asarray(self.b_in, dtype=float).ravel()
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if self.A_eq.size == 0:
            self.A_eq = self.A_eq.reshape(0, n)
        if self.A_in.size == 0:
            self.A_in = self.A_in.reshape(0, n)
        if self.A_eq.shape != (self.b_eq.size, n) or self.A_in.shape != (self.b_in.size, n):
            raise ValueError("constraint matrix shapes do not match")
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bounds must have one entry per variable")
        for name in ("c", "A_eq", "b_eq", "A_in", "b_in"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise ValueError("NaN in bounds")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound above upper bound")

    @property
    def n(self):
        return self.c.size


@dataclass
class LPSolution:
    status: str
    x: np.ndarray = None
    value: float = np.nan
    dual_eq: np.ndarray = None
    dual_in: np.ndarray = None
    dual_lb: np.ndarray = None
    dual_ub: np.ndarray = None
    iterations: int = 0
    basis: tuple = field(default=())

    @property
    def optimal(self):
        return self.status == OPTIMAL


def _standard_form(lp):
    """Map to ``min cs.z, As z = bs, z >= 0`` with x = x0 + T z."""
    n = lp.n
    cols = []  # (orig index, sign)
    x0 = np.zeros(n)
    ub_rows = []  # (std col, width)
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if lo == hi:
            x0[j] = lo
            continue
        if np.isfinite(lo):
            x0[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                ub_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            x0[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ns = len(cols)
    T = np.zeros((n, ns))
    for k, (j, s) in enumerate(cols):
        T[j, k] = s
    me, mi, mu = lp.b_eq.size, lp.b_in.size, len(ub_rows)
    m = me + mi + mu
    n_slack = mi + mu
    A = np.zeros((m, ns + n_slack))
    b = np.zeros(m)
    A[:me, :ns] = lp.A_eq @ T
    b[:me] = lp.b_eq - lp.A_eq @ x0
    A[me:me + mi, :ns] = lp.A_in @ T
    b[me:me + mi] = lp.b_in - lp.A_in @ x0
    for r in range(mi):
        A[me + r, ns + r] = 1.0
    for r, (k, width) in enumerate(ub_rows):
        A[me + mi + r, k] = 1.0
        A[me + mi + r, ns + mi + r] = 1.0
        b[me + mi + r] = width
    # round-off noise in the data must not become a pivot
    A[np.abs(A) < _NOISE * max(1.0, float(np.max(np.abs(A), initial=0.0)))] = 0.0
    b[np.abs(b) < _NOISE * max(1.0, float(np.max(np.abs(b), initial=0.0)))] = 0.0
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign
    cs = np.zeros(ns + n_slack)
    cs[:ns] = -(lp.c @ T)
    # slack basis where the slack kept its +1 coefficient
    slack_row = np.full(m, -1)
    for r in range(mi + mu):
        if sign[me + r] > 0:
            slack_row[me + r] = ns + r
    return A, b, cs, T, x0, sign, slack_row, (me, mi)


def solve_lp(lp, max_iter=50000):
    """Solve a :class:`LinearProgram`; infeasibility and unboundedness are statuses.

    The basis inverse is updated in product form and refreshed every
    ``_REFACTOR`` pivots.  If that run ends on a numerically singular basis or
    an inaccurate point, the solve is repeated refactoring at every pivot; a
    second failure is reported as ``numerical_difficulty``.
    """
    try:
        sol = _solve(lp, max_iter, _REFACTOR)
        if sol.status in (INFEASIBLE, UNBOUNDED) or (sol.optimal and _accurate(lp, sol)):
            return sol
    except np.linalg.LinAlgError:
        pass
    try:
        sol = _solve(lp, max_iter, 1)
    except np.linalg.LinAlgError:
        return LPSolution(NUMERICAL)
    if sol.optimal and not _accurate(lp, sol):
        return LPSolution(NUMERICAL, iterations=sol.iterations)
    return sol


def _accurate(lp, sol, tol=1e-7):
    scale = 1.0 + max(float(np.max(np.abs(lp.b_eq), initial=0.0)),
                      float(np.max(np.abs(lp.b_in), initial=0.0)))
    return kkt_residuals(lp, sol)[0] <= tol * scale


def _solve(lp, max_iter, refactor_every):
    A, b, cs, T, x0, sign, slack_row, (me, mi) = _standard_form(lp)
    m, N = A.shape
    if m == 0:
        # only sign constraints: optimum at z = 0 unless some cost is negative
        if np.any(cs < -_TOL):
            return LPSolution(UNBOUNDED)
        x = x0.copy()
        return _finish(lp, x, np.zeros(0), np.zeros(0), 0, ())
    art_rows = np.flatnonzero(slack_row < 0)
    n_art = art_rows.size
    A1 = np.zeros((m, N + n_art))
    A1[:, :N] = A
    basis = slack_row.copy()
    for k, r in enumerate(art_rows):
        A1[r, N + k] = 1.0
        basis[r] = N + k
    basis = basis.astype(np.int64)
    is_art = np.zeros(N + n_art, dtype=np.bool_)
    is_art[N:] = True
    Binv = np.eye(m)
    xB = b.copy()
    scale = max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
    iters = 0
    if n_art:
        c1 = np.zeros(N + n_art)
        c1[N:] = 1.0
        status, it = _kernels.simplex_iterate(A1, b, c1, ~is_art, basis, Binv, xB,
                                              max_iter, _TOL, refactor_every)
        iters += it
        if status == _kernels.ITERATION_LIMIT:
            return LPSolution(ITERATION_LIMIT, iterations=iters)
        if status == _kernels.NUMERICAL:
            return LPSolution(NUMERICAL, iterations=iters)
        _kernels.refactor(A1, b, basis, Binv, xB)
        infeas = float(sum(xB[i] for i in range(m) if is_art[basis[i]]))
        if infeas > 1e-8 * scale:
            return LPSolution(INFEASIBLE, iterations=iters)
        _kernels.drive_out(A1, b, basis, Binv, xB, is_art, 1e-7)
    c2 = np.zeros(N + n_art)
    c2[:N] = cs
    status, it = _kernels.simplex_iterate(A1, b, c2, ~is_art, basis, Binv, xB,
                                          max_iter, _TOL, refactor_every)
    iters += it
    if status == _kernels.UNBOUNDED:
        return LPSolution(UNBOUNDED, iterations=iters)
    if status == _kernels.ITERATION_LIMIT:
        return LPSolution(ITERATION_LIMIT, iterations=iters)
    if status == _kernels.NUMERICAL:
        return LPSolution(NUMERICAL, iterations=iters)
    Bm = A1[:, basis]
    zB = np.linalg.solve(Bm, b)
    z = np.zeros(N + n_art)
    z[basis] = np.maximum(zB, 0.0)
    y_std = np.linalg.solve(Bm.T, c2[basis])
    x = x0 + T @ z[:T.shape[1]]
    y = -sign * y_std
    return _finish(lp, x, y[:me], y[me:me + mi], iters, tuple(sorted(int(i) for i in basis)))


def _finish(lp, x, y_eq, y_in, iters, basis):
    # snap onto bounds the simplex put there up to round-off
    x = np.where(np.abs(x - lp.lb) < 1e-12 * (1 + np.abs(lp.lb)), lp.lb, x)
    x = np.where(np.abs(x - lp.ub) < 1e-12 * (1 + np.abs(lp.ub)), lp.ub, x)
    y_in = np.maximum(y_in, 0.0)
    r = lp.c - lp.A_eq.T @ y_eq - lp.A_in.T @ y_in
    dual_ub = np.where(np.isfinite(lp.ub), np.maximum(r, 0.0), 0.0)
    dual_lb = np.where(np.isfinite(lp.lb), np.maximum(-r, 0.0), 0.0)
    return LPSolution(OPTIMAL, x, float(lp.c @ x), y_eq, y_in, dual_lb, dual_ub, iters, basis)


def kkt_residuals(lp, sol):
    """Primal, dual and complementarity residuals of an optimal solution."""
    x = sol.x
    prim = 0.0
    if lp.b_eq.size:
        prim = max(prim, float(np.max(np.abs(lp.A_eq @ x - lp.b_eq))))
    if lp.b_in.size:
        prim = max(prim, float(np.max(np.maximum(lp.A_in @ x - lp.b_in, 0.0))))
    prim = max(prim, float(np.max(np.maximum(lp.lb - x, 0.0), initial=0.0)),
               float(np.max(np.maximum(x - lp.ub, 0.0), initial=0.0)))
    stat = lp.c - lp.A_eq.T @ sol.dual_eq - lp.A_in.T @ sol.dual_in - sol.dual_ub + sol.dual_lb
    comp = 0.0
    if lp.b_in.size:
        comp = max(comp, float(np.max(np.abs(sol.dual_in * (lp.b_in - lp.A_in @ x)))))
    fin_u = np.isfinite(lp.ub)
    fin_l = np.isfinite(lp.lb)
    if fin_u.any():
        comp = max(comp, float(np.max(np.abs(sol.dual_ub[fin_u] * (lp.ub - x)[fin_u]))))
    if fin_l.any():
        comp = max(comp, float(np.max(np.abs(sol.dual_lb[fin_l] * (x - lp.lb)[fin_l]))))
    return prim, float(np.max(np.abs(stat), initial=0.0)), comp


def dual_value(lp, sol):
    v = lp.b_eq @ sol.dual_eq + lp.b_in @ sol.dual_in
    fu, fl = np.isfinite(lp.ub), np.isfinite(lp.lb)
    v += lp.ub[fu] @ sol.dual_ub[fu] - lp.lb[fl] @ sol.dual_lb[fl]
    return float(v)
