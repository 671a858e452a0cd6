"""Global search drivers for the nonconvex upper levels.

``simulated_annealing`` maximizes a black-box score over a box (candidates
scoring ``-inf`` are treated as invalid).  ``multistart_descent`` minimizes a
differentiable function by projected gradient from Latin-hypercube starts.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc


@dataclass(frozen=True)
class AnnealSchedule:
    initial_temperature: float = 1.0
    cooling: float = 0.93
    iters_per_temp: int = 30
    n_temps: int = 120
    step_scale: tuple = None  # fraction of each bound range; default 0.25
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling factor must lie in (0, 1)")
        if self.initial_temperature <= 0 or self.iters_per_temp < 1 or self.n_temps < 1:
            raise ValueError("temperature and iteration counts must be positive")


@dataclass
class SearchResult:
    x_best: np.ndarray
    f_best: float
    evaluations: int
    history: list = field(default_factory=list)  # best-so-far after each temperature / start
    starts: list = field(default_factory=list)


def _bounds(bounds):
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2:
        raise ValueError("bounds must be an (n, 2) array")
    if not np.all(np.isfinite(b)):
        raise ValueError("bounds must be finite")
    if np.any(b[:, 0] > b[:, 1]):
        raise ValueError("lower bound above upper bound")
    return b[:, 0].copy(), b[:, 1].copy()


def simulated_annealing(objective, bounds, schedule=AnnealSchedule(), x0=None):
    """Maximize ``objective`` over the box ``bounds`` (rows ``(lo, hi)``).

    Proposals are Gaussian steps whose size shrinks with the square root of
    the temperature ratio and are clipped into the box.  Deterministic for a
    fixed ``schedule.seed``.
    """
    lo, hi = _bounds(bounds)
    dim = lo.size
    rng = np.random.default_rng(schedule.seed)
    span = hi - lo
    scale = np.full(dim, 0.25) if schedule.step_scale is None else np.asarray(schedule.step_scale, float)
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        v = float(objective(x))
        return v if not math.isnan(v) else -math.inf

    x = 0.5 * (lo + hi) if x0 is None else np.clip(np.asarray(x0, float), lo, hi)
    fx = f(x)
    tries = 0
    while fx == -math.inf and tries < 200:
        x = lo + span * rng.random(dim)
        fx = f(x)
        tries += 1
    x_best, f_best = x.copy(), fx
    history = []
    T = schedule.initial_temperature
    for level in range(schedule.n_temps):
        shrink = math.sqrt(T / schedule.initial_temperature)
        step = np.maximum(scale * span * shrink, 1e-12 * (1.0 + span))
        for _ in range(schedule.iters_per_temp):
            y = np.clip(x + step * rng.standard_normal(dim), lo, hi)
            fy = f(y)
            u = rng.random()
            if fy == -math.inf:
                continue
            if fx == -math.inf or fy >= fx or u < math.exp((fy - fx) / T):
                x, fx = y, fy
                if fx > f_best:
                    x_best, f_best = x.copy(), fx
        history.append(f_best)
        T *= schedule.cooling
    return SearchResult(x_best, f_best, evals, history)


def clip_projector(lo, hi):
    return lambda x: np.clip(x, lo, hi)


def latin_hypercube(lo, hi, n, seed):
    sampler = qmc.LatinHypercube(d=lo.size, seed=np.random.default_rng(seed))
    return qmc.scale(sampler.random(n), lo, hi) if np.all(hi > lo) else np.tile(lo, (n, 1)) + (hi - lo) * sampler.random(n)


def projected_descent(f, grad, x0, project, max_iter=200, tol=1e-5, step0=1.0):
    """Projected gradient with step halving; any decrease is accepted.

    Returns ``(x, fx, iterations, pg_norm, converged, evaluations)``.
    """
    x = project(np.asarray(x0, float))
    fx = float(f(x))
    evals = 1
    alpha = step0
    pg = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = np.asarray(grad(x), float)
        pg = float(np.linalg.norm(x - project(x - g)))
        if pg < tol or not np.isfinite(fx):
            return x, fx, it, pg, pg < tol, evals
        improved = False
        a = alpha
        for _ in range(40):
            y = project(x - a * g)
            if np.array_equal(y, x):
                break
            fy = float(f(y))
            evals += 1
            if fy < fx:
                improved = True
                break
            a *= 0.5
        if not improved:
            return x, fx, it, pg, False, evals
        x, fx = y, fy
        alpha = min(2.0 * a, 1e6)
    g = np.asarray(grad(x), float)
    pg = float(np.linalg.norm(x - project(x - g)))
    return x, fx, it, pg, pg < tol, evals


def multistart_descent(f, grad, bounds, n_starts=4, seed=0, starts=None, project=None,
                       max_iter=200, tol=1e-5, step0=None):
    """Minimize ``f`` from ``n_starts`` Latin-hypercube points (plus ``starts``).

    Every start is descended independently; the best terminal point wins, ties
    resolved by start order.  Per-start records report iterations, the final
    projected-gradient norm and whether ``tol`` was reached.
    """
    lo, hi = _bounds(bounds)
    proj = project if project is not None else clip_projector(lo, hi)
    pts = [] if starts is None else [np.asarray(s, float) for s in starts]
    if n_starts > 0:
        pts.extend(latin_hypercube(lo, hi, n_starts, seed))
    if not pts:
        raise ValueError("no starting points")
    if step0 is None:
        step0 = 0.1 * float(np.max(hi - lo)) if np.any(hi > lo) else 1.0
    best_x, best_f = None, math.inf
    records = []
    evals = 0
    history = []
    for s in pts:
        x, fx, it, pg, conv, ev = projected_descent(f, grad, s, proj, max_iter, tol, step0)
        evals += ev
        records.append({"x": x, "f": fx, "iterations": it, "pg_norm": pg, "converged": bool(conv)})
        if best_x is None or fx < best_f:
            best_x, best_f = x, fx
        history.append(best_f)
    return SearchResult(best_x, best_f, evals, history, records)


def dykstra_box_rate(z, lo, hi, k, dim, rate_lo, rate_hi, dt, tol=1e-12, min_iter=50, max_iter=5000):
    """Euclidean projection onto {lo <= z <= hi, rate_lo*dt <= z[j+1]-z[j] <= rate_hi*dt}.

    ``z`` stacks ``k`` blocks of length ``dim``.  The rate set is split into
    even- and odd-indexed pair slabs, each projected in closed form, and the
    three sets are combined with Dykstra's algorithm.
    """
    Z = np.asarray(z, float).reshape(k, dim).copy()
    lo = np.broadcast_to(np.asarray(lo, float), (k, dim)) if np.ndim(lo) <= 1 else np.asarray(lo, float).reshape(k, dim)
    hi = np.broadcast_to(np.asarray(hi, float), (k, dim)) if np.ndim(hi) <= 1 else np.asarray(hi, float).reshape(k, dim)
    dlo = np.asarray(rate_lo, float) * dt
    dhi = np.asarray(rate_hi, float) * dt
    if k < 2:
        return np.clip(Z, lo, hi).ravel()

    def slabs(X, start):
        Y = X.copy()
        a = Y[start:-1:2]
        b = Y[start + 1::2]
        m = min(len(a), len(b))
        a, b = a[:m], b[:m]
        delta = b - a
        e = 0.5 * (np.clip(delta, dlo, dhi) - delta)
        Y[start:start + 2 * m:2] = a - e
        Y[start + 1:start + 2 * m:2] = b + e
        return Y

    projections = (lambda X: np.clip(X, lo, hi), lambda X: slabs(X, 0), lambda X: slabs(X, 1))
    incr = [np.zeros_like(Z) for _ in projections]
    X = Z
    for it in range(max_iter):
        prev = X
        for s, P in enumerate(projections):
            Y = P(X + incr[s])
            incr[s] = X + incr[s] - Y
            X = Y
        if it + 1 >= min_iter and np.max(np.abs(X - prev)) < tol:
            break
    return X.ravel()
