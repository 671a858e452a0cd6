"""Acceptance suite: one test (or a small group) per criterion, each printing a verdict line."""
import copy
import json
import math
import time

import numpy as np
import pytest

from wrenchforge import capability as cap
from wrenchforge import cli
from wrenchforge import redundancy as rd
from wrenchforge import static_opt as so
from wrenchforge import tracking as tr
from wrenchforge import trajectory_opt as to
from wrenchforge.geometry import PlanarPose
from wrenchforge.model import load_model
from wrenchforge.solvers.lp import LinearProgram, solve_lp

from conftest import origin, random_theta
from oracles import fk_jacobian, grid_support, random_bounded_lp, vertex_enumeration_lp

pytestmark = pytest.mark.slow

P2D = load_model("paper2d")
UV = load_model("uvms4dof")
DUAL = load_model("paper2d-dual")
CX = np.array([1.0, 0.0, 0.0])

_REPORTS = {}


def _run_bundled(name, out_dir):
    """First run of a bundled scenario, cached for reuse across criteria."""
    if name not in _REPORTS:
        t0 = time.perf_counter()
        doc, base = cli.load_scenario(name)
        code, rep = cli.execute(doc, out_dir, base)
        _REPORTS[name] = (code, rep, time.perf_counter() - t0)
    return _REPORTS[name]


def _valid_realization(model, rng, tries=50):
    b = rd.redundant_bounds(model)
    for _ in range(tries):
        r = rd.realize(model, origin(model), rng.uniform(b[:, 0], b[:, 1]))
        if r.valid:
            return r
    return None


# -- 1 ------------------------------------------------------------------------------

def test_c1_nesting(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst, counted = math.inf, 0
    for model in (P2D, UV):
        n = 0
        while n < 250:
            r = _valid_realization(model, rng)
            if r is None:
                continue
            tau = model.gravity_buoyancy(r.theta)
            c = rng.normal(size=model.d)
            c /= np.linalg.norm(c)
            b2 = cap.directional_wrench_lp(model, r, tau, c)
            b3 = cap.directional_wrench_lp(model, r, tau, c, relax_orthogonal=True)
            if b2.status != cap.OK or b3.status != cap.OK:
                continue
            b1 = cap.transmission_ratio_uvms(model, r, tau, c).beta
            bl2 = cap.l2_directional(model, r, tau, c).beta
            worst = min(worst, bl2 - b1, b2.beta - bl2, b3.beta - b2.beta)
            n += 1
        counted += n
    dt = time.perf_counter() - t0
    ok = worst >= -1e-8 and dt < 120
    acceptance(1, ok, f"{counted} samples, min slack {worst:.3e}, {dt:.1f} s")
    assert ok


# -- 2 ------------------------------------------------------------------------------

def _toy(rng):
    J = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    B = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    lo = -rng.uniform(0.5, 2.0, 2)
    hi = rng.uniform(0.5, 2.0, 2)
    tau = B @ rng.uniform(0.3 * lo, 0.3 * hi)
    ang = rng.uniform(0, 2 * math.pi)
    return J, B, lo, hi, tau, np.array([math.cos(ang), math.sin(ang)])


def test_c2_lp_oracles(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    grid_err, grid_ok = 0.0, True
    for _ in range(40):
        J, B, lo, hi, tau, c = _toy(rng)
        # one grid step in each actuator moves c.h by at most this much
        step = (hi - lo) / 200
        res = np.sum(np.abs(np.linalg.solve(J.T, B).T @ c) * step)
        for relax in (False, True):
            lp = cap.directional_lp(J, B, lo, hi, tau, c, relax_orthogonal=relax)
            ref = grid_support(J, B, lo, hi, tau, c, n=201, relax=relax)
            err = abs(lp.beta - ref)
            grid_err = max(grid_err, err)
            grid_ok &= err <= res + 1e-9
    vert_err, vert_ok = 0.0, True
    for _ in range(200):
        n = int(rng.integers(2, 9))
        data = random_bounded_lp(rng, n)
        ref, _ = vertex_enumeration_lp(*data)
        sol = solve_lp(LinearProgram(*data))
        err = abs(sol.value - ref) if sol.optimal else math.inf
        vert_err = max(vert_err, err / max(1.0, abs(ref)))
        vert_ok &= err <= 1e-9 * max(1.0, abs(ref))
    dt = time.perf_counter() - t0
    ok = grid_ok and vert_ok and dt < 60
    acceptance(2, ok, f"grid max err {grid_err:.2e} (80 LPs), vertex max rel err {vert_err:.2e} "
                      f"(200 LPs), {dt:.1f} s")
    assert ok


# -- 3 ------------------------------------------------------------------------------

FIG_TARGETS = {"beta1": 1.91, "beta2": 3.47, "beta3": 3.88}


def test_c3_ranges(acceptance, tmp_path):
    code, rep, dt = _run_bundled("paper2d-figure4", tmp_path)
    head = rep["headline"]
    assert code == 0
    dev = {k: head[k] / v - 1.0 for k, v in FIG_TARGETS.items()}
    ok = all(abs(d) <= 0.30 for d in dev.values()) and dt < 60
    ok &= head["beta1"] <= head["beta2"] <= head["beta3"]
    detail = ", ".join(f"{k} {head[k]:.3f} ({100 * dev[k]:+.1f}%)" for k in FIG_TARGETS)
    acceptance("3a", ok, f"{detail}, non-strict order holds, 73x73 grid, {dt:.1f} s")
    assert ok


@pytest.mark.xfail(strict=True, reason="beta2 and beta3 both hit the net thrust ceiling 2*sqrt(2) along x")
def test_c3_strict_ordering(acceptance, tmp_path):
    _, rep, _ = _run_bundled("paper2d-figure4", tmp_path)
    head = rep["headline"]
    ok = head["beta1"] < head["beta2"] < head["beta3"]
    acceptance("3b", ok, f"strict beta1 < beta2 < beta3: beta2 = {head['beta2']:.6f}, "
                         f"beta3 = {head['beta3']:.6f}; the vehicle thrust bounds any x force "
                         f"by 2*sqrt(2), so the orthogonal-wrench relaxation cannot add capacity")
    assert ok


# -- 4 ------------------------------------------------------------------------------

def _kkt_point(rng):
    k = 5
    c = rng.normal(size=3)
    c /= np.linalg.norm(c)
    step = rng.uniform(-0.05, 0.05, 3)
    poses = [PlanarPose(*(i * step)) for i in range(k)]
    spec = to.TrajectorySpec(poses, [c] * k, rng.uniform(3.0, 8.0))
    Th = np.array([0.5, -0.8]) + rng.uniform(-0.4, 0.4, 2) + rng.uniform(-0.05, 0.05, (k, 2))
    return spec, Th


def test_c4_kkt_gradient(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    lim = to.TrajectoryLimits.from_model(P2D)
    h = 1e-6

    def value(spec, Th):
        r = to.maxmin_lp(to.stack_kinematics(P2D, spec, Th), lim)
        return r.value if r.optimal else math.nan

    errors, invalid, kinked = [], 0, 0
    while len(errors) < 100:
        spec, Th = _kkt_point(rng)
        try:
            st = to.stack_kinematics(P2D, spec, Th)
        except to.InvalidStep:
            invalid += 1
            continue
        res = to.maxmin_lp(st, lim)
        if not res.optimal:
            invalid += 1
            continue
        f0 = res.value
        fwd, bwd = np.zeros_like(Th), np.zeros_like(Th)
        try:
            for i in range(Th.shape[0]):
                for j in range(Th.shape[1]):
                    P, M = Th.copy(), Th.copy()
                    P[i, j] += h
                    M[i, j] -= h
                    fwd[i, j] = (value(spec, P) - f0) / h
                    bwd[i, j] = (f0 - value(spec, M)) / h
        except to.InvalidStep:
            invalid += 1
            continue
        central = 0.5 * (fwd + bwd)
        scale = max(np.linalg.norm(central), 1e-9)
        # basis-stable: the value is differentiable here, so one-sided slopes agree
        if not np.all(np.isfinite(central)) or np.linalg.norm(fwd - bwd) > 1e-4 * scale:
            kinked += 1
            continue
        g = to.lp_value_gradient(P2D, spec, Th, res, st)
        errors.append(np.linalg.norm(g - central) / scale)
    errors = np.array(errors)
    frac = float(np.mean(errors < 1e-3))
    dt = time.perf_counter() - t0
    ok = frac >= 0.95 and dt < 180
    acceptance(4, ok, f"{100 * frac:.0f}% of 100 stable points below 1e-3 (median {np.median(errors):.1e}, "
                      f"skipped {kinked} kinked and {invalid} invalid/infeasible), {dt:.1f} s")
    assert ok


# -- 5 ------------------------------------------------------------------------------

def test_c5a_single_step(acceptance):
    rng = np.random.default_rng(505)
    worst = 0.0
    for _ in range(30):
        r = _valid_realization(P2D, rng)
        c = rng.normal(size=3)
        c /= np.linalg.norm(c)
        spec = to.TrajectorySpec([PlanarPose()], [c], 1.0)
        res = to.maxmin_lp(to.stack_kinematics(P2D, spec, r.theta_r[None]), to.TrajectoryLimits.from_model(P2D))
        b2 = cap.directional_wrench_lp(P2D, r, P2D.gravity_buoyancy(r.theta), c)
        assert res.optimal == (b2.status == cap.OK)
        if res.optimal:
            worst = max(worst, abs(res.t - b2.beta))
    ok = worst < 1e-9
    acceptance("5a", ok, f"k=1 max-min vs static beta2, max err {worst:.2e} (30 configs)")
    assert ok


def test_c5b_impulse(acceptance):
    worst = 0.0
    for c in (CX, np.array([0.0, 1.0, 0.0]), np.array([0.6, 0.0, 0.8])):
        sopt = so.optimize_static(so.StaticProblem(P2D, PlanarPose(), c, resolution=25), workers=1)
        lim = to.TrajectoryLimits.from_model(P2D, u_rate=np.inf, theta_r_rate=0.0)
        out = to.optimize_impulse(P2D, PlanarPose(), c, 2.0, 4, 2, init=np.tile(sopt.theta_r_star, (4, 1)),
                                  limits=lim, n_starts=2, max_iter=10)
        worst = max(worst, abs(out.result.value - sopt.beta_star))
    ok = worst < 1e-6
    acceptance("5b", ok, f"impulse with frozen redundancy vs static optimum, max err {worst:.2e}")
    assert ok


def test_c5c_allocation(acceptance):
    rng = np.random.default_rng(515)
    worst = 0.0
    for model in (P2D, UV):
        Q = tr.default_weighting(model.u_min, model.u_max)
        lim = tr.AllocationLimits.from_model(model)
        for _ in range(100):
            th = random_theta(model, rng)
            B = model.actuator_map(th)
            u_ref = rng.uniform(0.1 * model.u_min, 0.1 * model.u_max)
            tau = B @ rng.uniform(0.2 * model.u_min, 0.2 * model.u_max)
            tick = tr.TrackingTick(0, tau, u_ref, None, Q, 1.0)
            Qi_Bt = np.linalg.solve(Q, B.T)
            closed = u_ref + Qi_Bt @ np.linalg.solve(B @ Qi_Bt, tau - B @ u_ref)
            if np.any(closed <= model.u_min) or np.any(closed >= model.u_max):
                continue
            a = tr.allocate_constrained(B, tick, lim)
            assert a.status == tr.EXACT
            worst = max(worst, float(np.max(np.abs(a.u - closed))))
    ok = worst < 1e-8
    acceptance("5c", ok, f"constrained allocation with slack limits vs weighted pseudoinverse, "
                         f"max err {worst:.2e}")
    assert ok


# -- 6 ------------------------------------------------------------------------------

def test_c6a_multi_contact(acceptance, tmp_path):
    rng = np.random.default_rng(606)
    worst, n = math.inf, 0
    while n < 20:
        wall = -rng.uniform(1.6, 2.4)
        y0 = rng.uniform(-0.8, 0.0)
        y1 = y0 + rng.uniform(0.3, 1.0)
        ang = rng.uniform(-0.6, 0.6)
        c = np.array([math.cos(ang), math.sin(ang), 0.0])
        contact = cap.ContactSpec([[-1.0], [0.0], [0.0]], one_sided=True)
        gs = so.GraspSet(np.array([wall, y0]), np.array([wall, y1]), contact=contact)
        problem = so.StaticProblem(DUAL, PlanarPose(), c, grasp_set=gs, resolution=[9, 9, 3])
        single = so.optimize_static(so.StaticProblem(DUAL.without_second_arm(), PlanarPose(), c, resolution=9),
                                    workers=1)
        multi = so.optimize_multi_contact(problem, workers=1)
        worst = min(worst, multi.beta_star - single.beta_star)
        n += 1
    _, rep, _ = _run_bundled("wall-contact-dual", tmp_path)
    head = rep["headline"]
    ok = worst >= -1e-8 and head["beta2"] > head["beta2_single"] + 1e-3
    acceptance("6a", ok, f"multi - single contact over 20 wall scenarios, min {worst:.3e}; bundled wall "
                         f"scenario {head['beta2']:.3f} vs {head['beta2_single']:.3f}")
    assert ok


def test_c6b_trajectory_vs_static_baseline(acceptance):
    rng = np.random.default_rng(616)
    gains = []
    for _ in range(5):
        step = rng.uniform(-0.04, 0.04, 3)
        k = 4
        poses = [PlanarPose(*(i * step)) for i in range(k)]
        spec = to.TrajectorySpec(poses, [CX] * k, 4.0)
        sopt = so.optimize_static(so.StaticProblem(P2D, poses[0], CX, resolution=17), workers=1)
        init = np.tile(sopt.theta_r_star, (k, 1))
        base = to.maxmin_lp(to.stack_kinematics(P2D, spec, init), to.TrajectoryLimits.from_model(P2D))
        out = to.optimize_trajectory(P2D, spec, init, n_starts=1, max_iter=10)
        assert abs(out.baseline_value - base.value) < 1e-12
        gains.append(out.result.value - base.value)
    ok = min(gains) >= -1e-9
    acceptance("6b", ok, f"trajectory - constant static baseline over 5 paths, min {min(gains):.3e}")
    assert ok


def test_c6c_impulse_vs_static(acceptance):
    sopt = so.optimize_static(so.StaticProblem(P2D, PlanarPose(), CX, resolution=25), workers=1)
    out = to.optimize_impulse(P2D, PlanarPose(), CX, 2.0, 4, 3, init=np.tile(sopt.theta_r_star, (4, 1)),
                              n_starts=2, max_iter=15)
    gain = out.result.value - sopt.beta_star
    ok = gain >= -1e-9
    acceptance("6c", ok, f"impulse {out.result.value:.4f} vs static {sopt.beta_star:.4f}")
    assert ok


# -- 7 ------------------------------------------------------------------------------

def test_c7_dynamics(acceptance):
    rng = np.random.default_rng(707)
    models = (P2D, UV, DUAL)
    min_eig, skew, jac = math.inf, 0.0, 0.0
    for i in range(1000):
        model = models[i % 3]
        th = random_theta(model, rng)
        M = model.mass_matrix(th)
        min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(0.5 * (M + M.T)))))
        assert np.allclose(M, M.T, atol=1e-12)
        if i % 10 == 0:
            qd = rng.normal(size=model.n)
            N = model.mass_matrix_derivatives(th) @ qd - 2 * model.coriolis_matrix(th, qd)
            skew = max(skew, abs(qd @ N @ qd))
            for arm in range(len(model.arms)):
                J = model.jacobian(th, arm)
                jac = max(jac, np.linalg.norm(J - fk_jacobian(model, th, arm)) / max(1.0, np.linalg.norm(J)))
    ok = min_eig > 0 and skew < 1e-8 and jac < 1e-4
    acceptance(7, ok, f"min eig(M) {min_eig:.3e} over 1000 configs, max |qd'(dM-2C)qd| {skew:.1e}, "
                      f"max Jacobian rel err {jac:.1e}")
    assert ok


# -- 8 ------------------------------------------------------------------------------

def test_c8_uvms_ordering(acceptance, tmp_path):
    lines = []
    ok = True
    for name in ("uvms4dof-valve", "uvms4dof-lift"):
        code, rep, _ = _run_bundled(name, tmp_path / name)
        h = rep["headline"]
        ok &= code == 0 and h["default"] < h["beta1"] < h["beta2"] < h["beta3"]
        lines.append(f"{name.split('-')[1]} {h['default']:.2f} < {h['beta1']:.2f} < {h['beta2']:.2f} "
                     f"< {h['beta3']:.2f}")
        if name == "uvms4dof-valve":
            ok &= h["beta3"] >= 2 * h["beta2"]
            lines.append(f"valve beta3/beta2 = {h['beta3'] / h['beta2']:.2f}")
    acceptance(8, ok, "; ".join(lines))
    assert ok


# -- 9 ------------------------------------------------------------------------------

def _numeric_content(rep):
    rep = copy.deepcopy(rep)
    rep.pop("run_info", None)
    return json.dumps(rep, sort_keys=True)


def test_c9_determinism(acceptance, tmp_path):
    t0 = time.perf_counter()
    same = []
    for name in cli.BUNDLED_SCENARIOS:
        _, first, _ = _run_bundled(name, tmp_path / "a" / name)
        doc, base = cli.load_scenario(name)
        _, second = cli.execute(doc, tmp_path / "b" / name, base)
        same.append(_numeric_content(first) == _numeric_content(second))
    dt = time.perf_counter() - t0
    ok = all(same)
    acceptance(9, ok, f"{sum(same)}/{len(same)} bundled scenarios byte-identical across runs, {dt:.1f} s")
    assert ok
