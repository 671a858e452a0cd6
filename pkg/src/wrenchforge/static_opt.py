"""Upper level of the static bi-level problem.

A candidate is a vector of redundant coordinates (plus grasp parameters for
multi-contact problems).  Each candidate is realized, scored by a lower-level
capability measure, and the best candidate over a grid or an annealing run is
returned.  Invalid candidates score ``-inf``.
"""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import capability as cap
from . import redundancy as rd
from ._accel import thread_count
from .solvers.search import AnnealSchedule, simulated_annealing

OBJECTIVES = ("beta1", "beta2", "beta3")
GRID_MAX_DIMS = 3
DEFAULT_RESOLUTION = 73
_TIE = 1e-12


class NoValidConfiguration(RuntimeError):
    pass


@dataclass
class GraspSet:
    """Grasp points on a segment ``p0 + s (p1 - p0)``, ``s`` in ``bounds``.

    Every point carries the same contact directions.  ``fn`` may replace the
    segment with any continuous map from parameters to positions.
    """
    p0: np.ndarray
    p1: np.ndarray = None
    contact: cap.ContactSpec = None
    bounds: np.ndarray = field(default_factory=lambda: np.array([[0.0, 1.0]]))
    fn: object = None

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=float)
        self.p1 = self.p0.copy() if self.p1 is None else np.asarray(self.p1, dtype=float)
        self.bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        if not np.all(np.isfinite(self.bounds)):
            raise ValueError("grasp parameter bounds must be finite")

    @property
    def dim(self):
        return self.bounds.shape[0]

    @property
    def degenerate(self):
        return self.fn is None and np.array_equal(self.p0, self.p1)

    def __call__(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        pos = self.fn(s) if self.fn is not None else self.p0 + s[0] * (self.p1 - self.p0)
        return rd.GraspPoint(np.asarray(pos, dtype=float), self.contact)

    def check_continuity(self, samples=64, tol=None):
        """Largest jump between neighbouring samples relative to the sampled extent."""
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        ts = np.linspace(0.0, 1.0, samples)
        pts = np.array([self(lo + t * (hi - lo)).position for t in ts])
        jumps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        extent = np.sum(jumps)
        if tol is None:
            tol = 4.0 * extent / (samples - 1) + 1e-12
        return bool(np.all(jumps <= tol)), float(np.max(jumps, initial=0.0))


@dataclass
class StaticProblem:
    model: object
    pose: object
    direction: np.ndarray
    objective: str = "beta2"
    contact: cap.ContactSpec = None
    grasp_set: GraspSet = None
    search: str = "grid"
    resolution: int = DEFAULT_RESOLUTION
    schedule: AnnealSchedule = field(default_factory=AnnealSchedule)
    bounds: np.ndarray = None
    include_detached: bool = True

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.search not in ("grid", "anneal"):
            raise ValueError("search must be 'grid' or 'anneal'")
        self.direction = np.asarray(self.direction, dtype=float)
        if self.bounds is None:
            self.bounds = rd.redundant_bounds(self.model)
        self.bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))

    @property
    def dims(self):
        extra = 0 if self.grasp_set is None else self.grasp_set.dim
        return self.bounds.shape[0] + extra

    def search_bounds(self):
        if self.grasp_set is None:
            return self.bounds
        return np.vstack([self.bounds, self.grasp_set.bounds])


@dataclass
class StaticResult:
    theta_star: np.ndarray
    theta_r_star: np.ndarray
    beta_star: float
    u_star: np.ndarray
    h_e_star: np.ndarray
    objective_kind: str
    grasp_param_star: np.ndarray = None
    h_e2_star: np.ndarray = None
    contact_used: bool = False
    evaluations: int = 0
    valid_evaluations: int = 0
    lp_iterations: int = 0
    history: list = field(default_factory=list)
    method: str = "grid"

    def to_dict(self):
        def arr(v):
            return None if v is None else [float(a) for a in np.asarray(v).ravel()]
        return {
            "objective_kind": self.objective_kind,
            "beta_star": float(self.beta_star),
            "theta_star": arr(self.theta_star),
            "theta_r_star": arr(self.theta_r_star),
            "grasp_param_star": arr(self.grasp_param_star),
            "u_star": arr(self.u_star),
            "h_e_star": arr(self.h_e_star),
            "h_e2_star": arr(self.h_e2_star),
            "contact_used": bool(self.contact_used),
            "search": {"method": self.method, "evaluations": int(self.evaluations),
                       "valid_evaluations": int(self.valid_evaluations),
                       "lp_iterations": int(self.lp_iterations),
                       "best_so_far": [float(v) for v in self.history]},
        }


# -- lower level -----------------------------------------------------------------

def static_load(model, theta):
    """tau_d of a configuration held still (gravity and buoyancy only)."""
    return model.gravity_buoyancy(theta)


def lower_level(model, theta, direction, objective, contact=None):
    tau = static_load(model, theta)
    if objective == "beta1":
        return cap.transmission_ratio_uvms(model, theta, tau, direction)
    return cap.directional_wrench_lp(model, theta, tau, direction, objective == "beta3", contact)


def _score(capab):
    if capab is None or capab.status != cap.OK:
        return -math.inf
    return float(capab.beta)


@dataclass
class Candidate:
    score: float
    theta: np.ndarray = None
    capability: object = None
    contact_used: bool = False


def evaluate(problem, z):
    """Score one search point; returns a :class:`Candidate`."""
    z = np.asarray(z, dtype=float)
    nr = problem.bounds.shape[0]
    theta_r = z[:nr]
    model = problem.model
    if problem.grasp_set is None:
        r = rd.realize(model, problem.pose, theta_r)
        if not r.valid:
            return Candidate(-math.inf)
        c = lower_level(model, r.theta, problem.direction, problem.objective)
        return Candidate(_score(c), r.theta, c)
    best = Candidate(-math.inf)
    if problem.include_detached:
        # secondary arm stowed and out of contact: the single-contact problem
        solo = model.without_second_arm()
        r = rd.realize(solo, problem.pose, theta_r)
        if r.valid:
            c = lower_level(solo, r.theta, problem.direction, problem.objective)
            best = Candidate(_score(c), r.theta, c, False)
    grasp = problem.grasp_set(z[nr:])
    contact = grasp.contact if grasp.contact is not None else problem.contact
    dual = rd.realize_dual(model, problem.pose, theta_r, grasp)
    for br in dual.valid_branches():
        try:
            c = lower_level(model, br.theta, problem.direction, problem.objective, contact)
        except cap.SingularContact:
            continue
        s = _score(c)
        if s > best.score + _TIE * max(1.0, abs(best.score)):
            best = Candidate(s, br.theta, c, True)
    return best


def grid_points(bounds, resolution):
    bounds = np.atleast_2d(bounds)
    res = np.broadcast_to(np.asarray(resolution), (bounds.shape[0],))
    axes = [np.linspace(lo, hi, int(r)) if hi > lo else np.array([lo])
            for (lo, hi), r in zip(bounds, res)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def _scores_chunk(args):
    problem, pts = args
    return [evaluate(problem, p).score for p in pts]


def _grid_scores(problem, pts, workers):
    if workers <= 1 or len(pts) < 256:
        return [evaluate(problem, p).score for p in pts]
    chunks = np.array_split(pts, workers * 4)
    try:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_scores_chunk, [(problem, c) for c in chunks]))
    except Exception:  # unpicklable user callbacks fall back to serial
        return [evaluate(problem, p).score for p in pts]
    return [s for part in parts for s in part]


def _result(problem, z, cand, evals, valid, history, method):
    nr = problem.bounds.shape[0]
    c = cand.capability
    return StaticResult(
        theta_star=cand.theta, theta_r_star=np.asarray(z[:nr], dtype=float),
        beta_star=cand.score, u_star=c.u_star, h_e_star=c.h_e_star,
        objective_kind=problem.objective,
        grasp_param_star=None if problem.grasp_set is None else np.asarray(z[nr:], dtype=float),
        h_e2_star=c.h_e2_star, contact_used=cand.contact_used, evaluations=evals,
        valid_evaluations=valid, lp_iterations=c.iterations, history=history, method=method)


def optimize_static(problem, workers=None):
    """Best candidate over the redundancy (and grasp) space.

    Grid search scans points in C order and keeps the first of any tied
    maxima, so the outcome does not depend on how evaluation is scheduled.
    """
    if problem.grasp_set is not None and problem.objective == "beta1":
        raise ValueError("multi-contact problems need an LP objective")
    bounds = problem.search_bounds()
    if problem.search == "grid":
        if problem.dims > GRID_MAX_DIMS:
            raise ValueError(f"grid search is limited to {GRID_MAX_DIMS} dimensions")
        pts = grid_points(bounds, problem.resolution)
        scores = _grid_scores(problem, pts, thread_count() if workers is None else workers)
        best_i, best, history = -1, -math.inf, []
        for i, s in enumerate(scores):
            if s > best + _TIE * max(1.0, abs(best)) or (best_i < 0 and s > -math.inf):
                best_i, best = i, s
            history.append(best)
        valid = sum(1 for s in scores if s > -math.inf)
        if best_i < 0:
            raise NoValidConfiguration("no valid configuration in the search space")
        z = pts[best_i]
        return _result(problem, z, evaluate(problem, z), len(pts), valid,
                       _thin(history), "grid")
    counter = {"valid": 0}

    def f(z):
        s = evaluate(problem, z).score
        counter["valid"] += s > -math.inf
        return s

    res = simulated_annealing(f, bounds, problem.schedule)
    if res.f_best == -math.inf:
        raise NoValidConfiguration("annealing found no valid configuration")
    return _result(problem, res.x_best, evaluate(problem, res.x_best), res.evaluations,
                   counter["valid"], res.history, "anneal")


def optimize_multi_contact(problem, workers=None):
    if problem.grasp_set is None:
        raise ValueError("multi-contact optimization needs a grasp set")
    if problem.model.second_arm is None:
        raise ValueError("model has no second arm")
    return optimize_static(problem, workers)


def _thin(history, keep=200):
    if len(history) <= keep:
        return list(history)
    idx = np.linspace(0, len(history) - 1, keep).round().astype(int)
    return [history[i] for i in idx]
