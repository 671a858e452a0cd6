"""Hot numeric kernels.

Each kernel is plain loop/numpy code decorated with :func:`wrenchforge._accel.njit`,
so it is compiled by numba when available and runs unchanged otherwise.
"""
import numpy as np

from ._accel import njit

OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2
NUMERICAL = 3


@njit
def christoffel_matrix(dM, qd):
    """Coriolis matrix C_ij = sum_k G_ijk qd_k from dM[i, j, k] = dM_ij/dq_k."""
    n = qd.shape[0]
    C = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += 0.5 * (dM[i, j, k] + dM[i, k, j] - dM[j, k, i]) * qd[k]
            C[i, j] = acc
    return C


@njit
def refactor(A, b, basis, Binv, xB):
    m = basis.shape[0]
    Bm = np.empty((m, m))
    for i in range(m):
        Bm[:, i] = A[:, basis[i]]
    inv = np.linalg.inv(Bm)
    for i in range(m):
        for j in range(m):
            Binv[i, j] = inv[i, j]
    x = inv @ b
    for i in range(m):
        xB[i] = x[i] if x[i] > 0.0 else 0.0


@njit
def pivot(Binv, xB, d, r):
    m = xB.shape[0]
    piv = d[r]
    step = xB[r] / piv
    for i in range(m):
        if i != r:
            xB[i] -= step * d[i]
            if xB[i] < 0.0 and xB[i] > -1e-11:
                xB[i] = 0.0
    xB[r] = step
    for j in range(m):
        Binv[r, j] /= piv
    for i in range(m):
        if i != r and d[i] != 0.0:
            f = d[i]
            for j in range(m):
                Binv[i, j] -= f * Binv[r, j]


@njit
def simplex_iterate(A, b, cost, allowed, basis, Binv, xB, max_iter, tol, refactor_every):
    """Revised simplex with Bland's rule on ``min cost.x, A x = b, x >= 0``.

    ``basis``, ``Binv`` and ``xB`` describe a primal feasible basis and are
    updated in place.  Returns ``(status, iterations)``.
    """
    m, N = A.shape
    in_basis = np.zeros(N, dtype=np.bool_)
    for i in range(m):
        in_basis[basis[i]] = True
    y = np.empty(m)
    d = np.empty(m)
    banned = np.zeros(N, dtype=np.bool_)
    n_banned = 0
    force = False
    it = 0
    since = 0
    while it < max_iter:
        for j in range(m):
            acc = 0.0
            for i in range(m):
                acc += cost[basis[i]] * Binv[i, j]
            y[j] = acc
        q = -1
        for j in range(N):
            if not allowed[j] or in_basis[j] or banned[j]:
                continue
            r = cost[j]
            for i in range(m):
                r -= y[i] * A[i, j]
            if r < -tol:
                q = j
                break
        if q < 0:
            if n_banned > 0:
                # only columns with tiny pivots remain: accept one after all
                banned[:] = False
                n_banned = 0
                force = True
                continue
            return OPTIMAL, it
        for i in range(m):
            acc = 0.0
            for k in range(m):
                acc += Binv[i, k] * A[k, q]
            d[i] = acc
        row = -1
        best = np.inf
        dmax = 0.0
        for i in range(m):
            if d[i] > dmax:
                dmax = d[i]
        ptol = max(tol, 1e-7 * dmax)
        # Harris ratio test: relax the bound slightly, then take the largest pivot
        for i in range(m):
            if d[i] > ptol:
                ratio = (xB[i] + 1e-9) / d[i]
                if ratio < best:
                    best = ratio
        for i in range(m):
            if d[i] > ptol and xB[i] / d[i] <= best:
                if row < 0 or d[i] > d[row] or (d[i] == d[row] and basis[i] < basis[row]):
                    row = i
        if (row < 0 or d[row] < 1e-5 * dmax) and since > 0:
            # small or missing pivot under an aged inverse: refresh and retry
            refactor(A, b, basis, Binv, xB)
            since = 0
            continue
        if row < 0:
            return UNBOUNDED, it
        # growth of the inverse if we pivot here; tiny pivots make the basis near singular
        rown = 0.0
        for j in range(m):
            if abs(Binv[row, j]) > rown:
                rown = abs(Binv[row, j])
        growth = rown * max(1.0, dmax) / d[row]
        if d[row] < 1e-5 * dmax or growth > 1e8:
            if force:
                if growth > 1e12:
                    return NUMERICAL, it
            else:
                banned[q] = True
                n_banned += 1
                continue
        if n_banned > 0:
            banned[:] = False
            n_banned = 0
        force = False
        in_basis[basis[row]] = False
        pivot(Binv, xB, d, row)
        basis[row] = q
        in_basis[q] = True
        it += 1
        since += 1
        if since >= refactor_every:
            refactor(A, b, basis, Binv, xB)
            since = 0
    return ITERATION_LIMIT, it


@njit
def drive_out(A, b, basis, Binv, xB, is_artificial, tol):
    """Pivot zero-level artificial variables out of the basis where possible."""
    m, N = A.shape
    in_basis = np.zeros(N, dtype=np.bool_)
    for i in range(m):
        in_basis[basis[i]] = True
    d = np.empty(m)
    for r in range(m):
        if not is_artificial[basis[r]]:
            continue
        best = -1
        bestv = tol
        for j in range(N):
            if is_artificial[j] or in_basis[j]:
                continue
            v = 0.0
            for k in range(m):
                v += Binv[r, k] * A[k, j]
            if abs(v) > bestv:
                bestv = abs(v)
                best = j
        if best < 0:
            continue
        for i in range(m):
            acc = 0.0
            for k in range(m):
                acc += Binv[i, k] * A[k, best]
            d[i] = acc
        in_basis[basis[r]] = False
        pivot(Binv, xB, d, r)
        basis[r] = best
        in_basis[best] = True
    for i in range(m):
        if xB[i] < 0.0:
            xB[i] = 0.0


@njit
def segment_distance(p1, q1, p2, q2):
    """Minimum distance between segments [p1, q1] and [p2, q2] in 3-D."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    eps = 1e-14
    if a <= eps and e <= eps:
        return np.sqrt(r @ r)
    if a <= eps:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = d1 @ r
        if e <= eps:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            bb = d1 @ d2
            denom = a * e - bb * bb
            if denom > eps:
                s = min(max((bb * f - c * e) / denom, 0.0), 1.0)
            else:
                s = 0.0
            t = (bb * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((bb - c) / a, 0.0), 1.0)
    diff = (p1 + d1 * s) - (p2 + d2 * t)
    return np.sqrt(diff @ diff)
