"""Command line front end: ``wrenchforge run | validate | compare``.

Exit codes: 0 success, 2 invalid scenario (or any other error), 3 no feasible
solution.  ``run`` always writes ``report.json``; the ``run_info`` block holds
wall time and timestamps and is the only part that changes between identical
runs.
"""
import argparse
import copy
import hashlib
import json
import math
import platform
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import capability as cap
from . import redundancy as rd
from . import static_opt as so
from . import trajectory_opt as to
from ._accel import USE_NUMBA
from .geometry import PlanarPose, SpatialPose, quat_from_rotvec, quat_mul
from .model import BUILTIN_MODELS, ModelError, euler_zyx, load_model
from .solvers.search import AnnealSchedule

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 2, 3
BUNDLED_SCENARIOS = ("paper2d-figure2", "paper2d-figure4", "uvms4dof-valve", "uvms4dof-lift",
                     "wall-contact-dual", "rotate180-trajectory", "impulse-t3")


class ScenarioError(ValueError):
    def __init__(self, diagnostics):
        super().__init__("; ".join(f"{d['pointer']}: {d['message']}" for d in diagnostics))
        self.diagnostics = diagnostics


# -- loading ----------------------------------------------------------------------

def _schema(name):
    return json.loads(resources.files("wrenchforge.schemas").joinpath(f"{name}.schema.json").read_text())


def scenario_path(ref):
    """A path, or the name of a bundled scenario."""
    p = Path(ref)
    if p.exists():
        return p
    if ref in BUNDLED_SCENARIOS:
        return Path(str(resources.files("wrenchforge.data.scenarios").joinpath(f"{ref}.json")))
    return p


def load_scenario(ref):
    p = scenario_path(ref)
    return json.loads(p.read_text()), p.resolve().parent


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc, overrides):
    """``key.sub=value`` assignments; values are parsed as JSON when possible."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ScenarioError([_diag("error", "", f"override {item!r} is not key=value")])
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = _parse_value(value)
    return doc


def scenario_hash(doc):
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()


def _diag(level, pointer, message):
    return {"level": level, "pointer": pointer, "message": message}


def _pointer(path):
    return "/" + "/".join(str(p) for p in path) if path else ""


# -- interpretation ---------------------------------------------------------------

def resolve_model(ref, base_dir):
    if isinstance(ref, dict):
        return load_model(ref)
    if ref in BUILTIN_MODELS:
        return load_model(ref)
    p = Path(ref)
    if not p.is_absolute() and base_dir is not None:
        p = Path(base_dir) / p
    return load_model(str(p))


def parse_pose(spec, model):
    planar = model.variant == "planar"
    if planar:
        if isinstance(spec, dict):
            if "position" in spec:
                raise ValueError("planar pose needs [x, y, phi] or {x, y, phi}")
            return PlanarPose(spec.get("x", 0.0), spec.get("y", 0.0), spec.get("phi", 0.0))
        return PlanarPose(*spec)
    if not isinstance(spec, dict) or "position" not in spec:
        raise ValueError("spatial pose needs {position, orientation | rpy}")
    if "orientation" in spec:
        return SpatialPose(spec["position"], spec["orientation"])
    R = euler_zyx(*spec.get("rpy", [0.0, 0.0, 0.0]))
    return SpatialPose.from_matrix(R, spec["position"])


def displaced(pose, disp, s):
    disp = np.asarray(disp, dtype=float) * s
    if isinstance(pose, PlanarPose):
        return PlanarPose(pose.x + disp[0], pose.y + disp[1], pose.phi + disp[2])
    return SpatialPose(pose.position + disp[:3], quat_mul(quat_from_rotvec(disp[3:]), pose.orientation))


def task_poses(task, model):
    if "poses" in task:
        return [parse_pose(p, model) for p in task["poses"]]
    if "path" in task:
        start = parse_pose(task["path"]["start"], model)
        k = int(task.get("k", 1))
        if k == 1:
            return [start]
        return [displaced(start, task["path"]["displacement"], i / (k - 1)) for i in range(k)]
    return [parse_pose(task["pose"], model)] * int(task.get("k", 1))


def task_directions(task, k):
    if "directions" in task:
        return np.asarray(task["directions"], dtype=float)
    return np.repeat(np.atleast_2d(np.asarray(task["direction"], dtype=float)), k, axis=0)


def objectives(task):
    obj = task.get("objective", "beta2")
    return [obj] if isinstance(obj, str) else list(obj)


def _schedule(search, seed):
    return AnnealSchedule(initial_temperature=search.get("initial_temperature", 1.0),
                          cooling=search.get("cooling", 0.93),
                          iters_per_temp=search.get("iters_per_temp", 30),
                          n_temps=search.get("n_temps", 120), seed=seed)


def _search_method(search, dims):
    return search.get("method", "grid" if dims <= so.GRID_MAX_DIMS else "anneal")


def contact_spec(task):
    c = task.get("contact")
    if c is None:
        return None
    return cap.ContactSpec(np.asarray(c["C2"], dtype=float), c.get("one_sided", True))


def _inf(v):
    return math.inf if v == "inf" else v


# -- validation ---------------------------------------------------------------------

def validate_document(doc, base_dir=None):
    """Schema diagnostics (with JSON pointers) followed by semantic checks."""
    diags = []
    validator = jsonschema.Draft202012Validator(_schema("scenario"))
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path)):
        diags.append(_diag("error", _pointer(err.absolute_path), err.message))
    if diags:
        return diags
    try:
        model = resolve_model(doc["model"], base_dir)
    except (ModelError, ValueError, OSError, KeyError, TypeError) as e:
        return [_diag("error", "/model", str(e))]
    task = doc["task"]
    kind = task["kind"]
    d = model.d

    def need(key):
        if key not in task:
            diags.append(_diag("error", f"/task/{key}", f"'{key}' is required for {kind} tasks"))
            return False
        return True

    for key in ("pose",):
        if key in task:
            try:
                parse_pose(task[key], model)
            except (ValueError, TypeError) as e:
                diags.append(_diag("error", f"/task/{key}", str(e)))
    if "k" in task and task["k"] < 1:
        diags.append(_diag("error", "/task/k", "k must be at least 1"))
    if "t_h" in task:
        k = task.get("k", 1)
        if not 1 <= task["t_h"] <= k:
            diags.append(_diag("error", "/task/t_h", f"t_h must lie in 1..{k}"))
    dirs = []
    if "direction" in task:
        dirs.append(("/task/direction", task["direction"]))
    for i, c in enumerate(task.get("directions", [])):
        dirs.append((f"/task/directions/{i}", c))
    for ptr, c in dirs:
        c = np.asarray(c, dtype=float)
        if c.shape != (d,):
            diags.append(_diag("error", ptr, f"direction must have {d} components"))
        elif np.linalg.norm(c) == 0:
            diags.append(_diag("error", ptr, "direction must be nonzero"))
        elif abs(np.linalg.norm(c) - 1.0) > 1e-6:
            diags.append(_diag("warning", ptr, f"direction has norm {np.linalg.norm(c):.6g}; it will be normalized"))
    if "theta_r" in task and len(task["theta_r"]) != model.n_redundant:
        diags.append(_diag("error", "/task/theta_r", f"theta_r must have {model.n_redundant} entries"))
    if "plane" in task:
        P = [np.asarray(v, float) for v in task["plane"]]
        if any(v.shape != (d,) for v in P):
            diags.append(_diag("error", "/task/plane", f"plane vectors must have {d} components"))
        elif abs(P[0] @ P[1]) > 1e-9 or any(abs(np.linalg.norm(v) - 1) > 1e-9 for v in P):
            diags.append(_diag("error", "/task/plane", "plane vectors must be orthonormal"))
    if kind in ("static", "multi_contact", "impulse", "capability_slice"):
        need("pose")
    if kind in ("static", "multi_contact", "impulse"):
        need("direction")
    if kind == "multi_contact":
        if model.second_arm is None:
            diags.append(_diag("error", "/model", "multi_contact tasks need a model with a second arm"))
        need("grasp_set")
        if "beta1" in objectives(task):
            diags.append(_diag("error", "/task/objective", "multi_contact tasks need beta2 or beta3"))
    elif model.second_arm is not None and kind != "capability_slice":
        diags.append(_diag("error", "/model", f"{kind} tasks need a single-arm model"))
    if kind in ("trajectory", "impulse"):
        need("T")
        need("k")
    if kind == "impulse":
        need("t_h")
    if kind == "trajectory":
        if not any(key in task for key in ("poses", "path")):
            diags.append(_diag("error", "/task/poses", "trajectory tasks need 'poses' or 'path'"))
        if "poses" in task and "k" in task and len(task["poses"]) != task["k"]:
            diags.append(_diag("error", "/task/k", "k must equal the number of poses"))
        if "directions" in task and len(task["directions"]) != task.get("k", 1):
            diags.append(_diag("error", "/task/directions", "one direction per step is required"))
        if "direction" not in task and "directions" not in task:
            diags.append(_diag("error", "/task/direction", "a direction is required"))
    if "grasp_set" in task:
        g = task["grasp_set"]
        for key in ("p0", "p1"):
            if key in g and len(g[key]) not in (2, 3):
                diags.append(_diag("error", f"/task/grasp_set/{key}", "grasp points need 2 or 3 coordinates"))
    if "contact" in task:
        C2 = np.asarray(task["contact"]["C2"], dtype=float)
        if C2.ndim != 2 or C2.shape[0] != d:
            diags.append(_diag("error", "/task/contact/C2", f"C2 must have {d} rows"))
    return diags


def validate(path):
    doc, base = load_scenario(path)
    return validate_document(doc, base)


# -- task runners ---------------------------------------------------------------------

def _arr(v):
    return None if v is None else [float(a) for a in np.asarray(v).ravel()]


def _active(u, lo, hi, tol=1e-9):
    if u is None:
        return []
    u = np.asarray(u)
    return [int(i) for i in np.flatnonzero((np.abs(u - lo) <= tol) | (np.abs(u - hi) <= tol))]


def _beta2_at(model, pose, direction, theta_r):
    r = rd.realize(model, pose, theta_r)
    if not r.valid:
        return None
    c = cap.directional_wrench_lp(model, r.theta, so.static_load(model, r.theta), direction)
    return float(c.beta) if c.status == cap.OK else None


def _static_problem(model, task, pose, c, objective, seed, **kw):
    search = task.get("search", {})
    nr = model.n_redundant + (kw["grasp_set"].dim if kw.get("grasp_set") is not None else 0)
    res = search.get("resolution", so.DEFAULT_RESOLUTION)
    if isinstance(res, list):
        # per-dimension resolutions; the single-contact reference drops the grasp axes
        res = res[:nr]
    return so.StaticProblem(model, pose, c, objective=objective,
                            search=_search_method(search, nr), resolution=res,
                            schedule=_schedule(search, seed), **kw)


def run_static(model, task, seed, out_dir):
    pose = parse_pose(task["pose"], model)
    c = np.asarray(task["direction"], dtype=float)
    c = c / np.linalg.norm(c)
    res, head = {"objectives": {}}, {}
    stats = {"lp_iterations": 0, "evaluations": 0}
    for obj in objectives(task):
        r = so.optimize_static(_static_problem(model, task, pose, c, obj, seed))
        entry = r.to_dict()
        entry["beta2_at_optimum"] = _beta2_at(model, pose, c, r.theta_r_star)
        entry["active_actuators"] = _active(r.u_star, model.u_min, model.u_max)
        res["objectives"][obj] = entry
        head[obj] = float(r.beta_star)
        stats["lp_iterations"] += int(r.lp_iterations)
        stats["evaluations"] += int(r.evaluations)
    if task.get("include_default", False):
        th0 = np.asarray(task.get("theta_r", np.zeros(model.n_redundant)), dtype=float)
        val = _beta2_at(model, pose, c, th0)
        res["default"] = {"theta_r": _arr(th0), "beta2": val}
        head["default"] = val
    return res, head, stats, []


def run_multi_contact(model, task, seed, out_dir):
    pose = parse_pose(task["pose"], model)
    c = np.asarray(task["direction"], dtype=float)
    c = c / np.linalg.norm(c)
    g = task["grasp_set"]
    contact = contact_spec(task)
    gs = so.GraspSet(np.asarray(g["p0"], float), None if "p1" not in g else np.asarray(g["p1"], float),
                     contact, np.asarray(g.get("bounds", [[0.0, 1.0]]), float))
    res, head = {}, {}
    stats = {"lp_iterations": 0, "evaluations": 0}
    for obj in objectives(task):
        multi = so.optimize_multi_contact(_static_problem(model, task, pose, c, obj, seed, grasp_set=gs))
        single = so.optimize_static(_static_problem(model.without_second_arm(), task, pose, c, obj, seed))
        res[obj] = {"multi_contact": multi.to_dict(), "single_contact": single.to_dict()}
        head[obj] = float(multi.beta_star)
        head[f"{obj}_single"] = float(single.beta_star)
        stats["lp_iterations"] += int(multi.lp_iterations + single.lp_iterations)
        stats["evaluations"] += int(multi.evaluations + single.evaluations)
    return res, head, stats, []


def slice_csv(sl):
    lines = ["angle_rad,ellipsoid,l2,linf"]
    for a, e, l2, li in zip(sl.angles, sl.ellipsoid, sl.l2, sl.linf):
        lines.append(f"{a:.9g},{e:.9g},{l2:.9g},{li:.9g}")
    return "\n".join(lines) + "\n"


def slice_svg(sl, title=""):
    size, c0 = 800, 400.0
    rmax = max(float(np.max(sl.ellipsoid)), float(np.max(sl.l2)), float(np.max(sl.linf)), 1e-12)
    scale = 320.0 / rmax

    def poly(r):
        pts = " ".join(f"{c0 + scale * ri * math.cos(a):.2f},{c0 - scale * ri * math.sin(a):.2f}"
                       for a, ri in zip(sl.angles, r))
        return pts

    e1 = ", ".join(f"{v:g}" for v in sl.e1)
    e2 = ", ".join(f"{v:g}" for v in sl.e2)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
           '<rect width="800" height="800" fill="white"/>',
           '<line x1="40" y1="400" x2="760" y2="400" stroke="#888" stroke-width="1"/>',
           '<line x1="400" y1="40" x2="400" y2="760" stroke="#888" stroke-width="1"/>',
           f'<text x="770" y="395" font-size="14" text-anchor="end">e1 [{e1}]</text>',
           f'<text x="405" y="35" font-size="14">e2 [{e2}]</text>',
           f'<text x="20" y="780" font-size="12">full scale {rmax:.4g} (N or N m) at 320 px</text>',
           f'<text x="20" y="24" font-size="16">{title}</text>']
    styles = (("linf", "#1f77b4", "box (linf)"), ("l2", "#d62728", "unit ball (l2)"),
              ("ellipsoid", "#2ca02c", "ellipsoid"))
    for i, (kind, color, label) in enumerate(styles):
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{poly(getattr(sl, kind))}"/>')
        out.append(f'<text x="600" y="{60 + 18 * i}" font-size="13" fill="{color}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def run_slice(model, task, seed, out_dir):
    pose = parse_pose(task["pose"], model)
    th_r = np.asarray(task.get("theta_r", np.zeros(model.n_redundant)), dtype=float)
    real = rd.realize(model.without_second_arm() if model.second_arm is not None else model, pose, th_r)
    if not real.valid:
        raise so.NoValidConfiguration(f"configuration is invalid: {real.reason}")
    d = model.d
    plane = task.get("plane", [np.eye(d)[0].tolist(), np.eye(d)[1].tolist()])
    e1, e2 = (np.asarray(v, dtype=float) for v in plane)
    n_rays = int(task.get("n_rays", 72))
    tau = so.static_load(model, real.theta)
    sl = cap.polytope_slice(model, real.theta, tau, (e1, e2), n_rays)
    (out_dir / "slice.csv").write_text(slice_csv(sl))
    (out_dir / "slice.svg").write_text(slice_svg(sl, f"{model.name} capability slice"))
    res = {"theta_r": _arr(th_r), "theta": _arr(real.theta), "plane": [_arr(e1), _arr(e2)],
           "n_rays": n_rays, "rows": n_rays + 1,
           "max_radius": {k: float(np.max(getattr(sl, k))) for k in ("ellipsoid", "l2", "linf")},
           "min_radius": {k: float(np.min(getattr(sl, k))) for k in ("ellipsoid", "l2", "linf")}}
    head = {f"{k}_max": res["max_radius"][k] for k in ("ellipsoid", "l2", "linf")}
    return res, head, {"lp_iterations": 0, "evaluations": n_rays}, ["slice.csv", "slice.svg"]


def _limits(model, task):
    lim = task.get("limits", {})
    u_rate = _inf(lim.get("u_rate")) if "u_rate" in lim else None
    thr = _inf(lim.get("theta_r_rate")) if "theta_r_rate" in lim else None
    return to.TrajectoryLimits.from_model(model, u_rate=u_rate, theta_r_rate=thr)


def _initial_decision(model, task, spec, seed):
    init = task.get("init", "static")
    k = spec.k
    if isinstance(init, list):
        return np.asarray(init, dtype=float).reshape(k, model.n_redundant), None
    if init == "neutral":
        return np.zeros((k, model.n_redundant)), None
    r = so.optimize_static(_static_problem(model, task, spec.poses[0], spec.directions[0], "beta2", seed))
    return np.tile(r.theta_r_star, (k, 1)), r


def _run_plan(model, task, seed, out_dir, impulse):
    k = int(task["k"])
    T = float(task["T"])
    if impulse:
        pose = parse_pose(task["pose"], model)
        spec = to.TrajectorySpec([pose] * k, task_directions(task, k), T)
    else:
        spec = to.TrajectorySpec(task_poses(task, model), task_directions(task, k), T)
    limits = _limits(model, task)
    init, static = _initial_decision(model, task, spec, seed)
    search = task.get("search", {})
    t_h = int(task["t_h"]) if impulse else None
    relax = bool(task.get("limits", {}).get("relax_orthogonal", False))
    res = {}
    head = {}
    if static is not None:
        res["static_initialization"] = static.to_dict()
        head["static_beta2"] = float(static.beta_star)
    try:
        out = to.optimize_trajectory(model, spec, init, limits, search.get("n_starts", 1), seed,
                                     relax, t_h, search.get("max_iter", 20))
    except to.NoFeasibleTrajectory as e:
        if e.best is not None:
            res["plan"] = to.plan_to_dict(spec, e.best)
            (out_dir / "plan.csv").write_text(to.plan_csv(spec, e.best))
        res["message"] = str(e)
        raise _Infeasible(res, head) from None
    res["plan"] = to.plan_to_dict(spec, out)
    (out_dir / "plan.csv").write_text(to.plan_csv(spec, out))
    head["impulse" if impulse else "t"] = float(out.result.value if impulse else out.result.t)
    head["baseline"] = None if not math.isfinite(out.baseline_value) else float(out.baseline_value)
    stats = {"lp_iterations": int(out.result.iterations), "evaluations": int(out.evaluations)}
    return res, head, stats, ["plan.csv"]


class _Infeasible(Exception):
    def __init__(self, results, headline):
        super().__init__("dynamically infeasible")
        self.results = results
        self.headline = headline


def run_trajectory(model, task, seed, out_dir):
    return _run_plan(model, task, seed, out_dir, impulse=False)


def run_impulse(model, task, seed, out_dir):
    return _run_plan(model, task, seed, out_dir, impulse=True)


RUNNERS = {"static": run_static, "multi_contact": run_multi_contact, "capability_slice": run_slice,
           "trajectory": run_trajectory, "impulse": run_impulse}


# -- run ---------------------------------------------------------------------------------

def _report(doc, status, exit_code, results=None, headline=None, stats=None, artifacts=(),
            diagnostics=(), started=None):
    task = doc.get("task", {}) if isinstance(doc, dict) else {}
    return {
        "report_version": "1",
        "tool": {"name": "wrenchforge", "version": __version__},
        "scenario_name": doc.get("name") if isinstance(doc, dict) else None,
        "scenario_hash": scenario_hash(doc) if isinstance(doc, dict) else "",
        "task_kind": task.get("kind") if isinstance(task, dict) else None,
        "status": status,
        "exit_code": exit_code,
        "diagnostics": list(diagnostics),
        "results": results or {},
        "headline": headline or {},
        "artifacts": list(artifacts),
        "stats": stats or {"lp_iterations": 0, "evaluations": 0},
        "run_info": {
            "wall_time_s": None if started is None else round(time.perf_counter() - started, 3),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "python": platform.python_version(),
            "numba": bool(USE_NUMBA),
        },
    }


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats with None so the report is strict JSON."""
    if isinstance(o, float):
        return o if math.isfinite(o) else None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def write_report(report, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_clean(json.loads(json.dumps(report, default=_json_default))), indent=2,
                      sort_keys=True, allow_nan=False)
    (out_dir / "report.json").write_text(text + "\n")


def execute(doc, out_dir, base_dir=None):
    """Run a scenario document; returns ``(exit_code, report)`` and writes the report."""
    started = time.perf_counter()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    diags = validate_document(doc, base_dir)
    errors = [d for d in diags if d["level"] == "error"]
    if errors:
        rep = _report(doc, "validation_error", EXIT_INVALID, diagnostics=diags, started=started)
        write_report(rep, out_dir)
        return EXIT_INVALID, rep
    seed = int(doc.get("seed", 0))
    try:
        model = resolve_model(doc["model"], base_dir)
        kind = doc["task"]["kind"]
        results, head, stats, artifacts = RUNNERS[kind](model, doc["task"], seed, out_dir)
        code, status = EXIT_OK, "ok"
    except _Infeasible as e:
        results, head, stats, artifacts = e.results, e.headline, None, []
        code, status = EXIT_INFEASIBLE, "dynamically_infeasible"
    except so.NoValidConfiguration as e:
        results, head, stats, artifacts = {"message": str(e)}, {}, None, []
        code, status = EXIT_INFEASIBLE, "no_valid_configuration"
    except Exception as e:  # reported, never raised to the shell
        diags = diags + [_diag("error", "", f"{type(e).__name__}: {e}")]
        results, head, stats, artifacts = {}, {}, None, []
        code, status = EXIT_INVALID, "error"
    rep = _report(doc, status, code, results, head, stats, artifacts, diags, started)
    write_report(rep, out_dir)
    return code, rep


def run(scenario, out_dir, overrides=(), seed=None):
    try:
        doc, base = load_scenario(scenario)
    except (OSError, json.JSONDecodeError) as e:
        rep = _report({}, "validation_error", EXIT_INVALID,
                      diagnostics=[_diag("error", "", f"cannot read scenario: {e}")])
        write_report(rep, Path(out_dir))
        return EXIT_INVALID
    try:
        doc = apply_overrides(doc, overrides)
    except ScenarioError as e:
        write_report(_report(doc, "validation_error", EXIT_INVALID, diagnostics=e.diagnostics), Path(out_dir))
        return EXIT_INVALID
    if seed is not None:
        doc["seed"] = int(seed)
    code, _ = execute(doc, out_dir, base)
    return code


# -- compare -----------------------------------------------------------------------------

_SCALAR_KINDS = {"static", "multi_contact", "trajectory", "impulse"}


def _primary(rep):
    h = rep.get("headline", {})
    kind = rep.get("task_kind")
    for key in {"impulse": ("impulse",), "trajectory": ("t",)}.get(kind, ("beta2", "beta3", "beta1")):
        if h.get(key) is not None:
            return key, h[key]
    return None, None


def _activity(rep):
    out = {}
    for name, entry in rep.get("results", {}).get("objectives", {}).items():
        out[name] = entry.get("active_actuators", [])
    return out


def compare(report_a, report_b):
    """Side-by-side headline values with ratios ``b / a``."""
    ka, kb = report_a.get("task_kind"), report_b.get("task_kind")
    if ka != kb and not (ka in _SCALAR_KINDS and kb in _SCALAR_KINDS):
        raise ValueError(f"cannot compare {ka} with {kb}")
    ha, hb = report_a.get("headline", {}), report_b.get("headline", {})
    rows = []
    for key in sorted(set(ha) & set(hb)):
        rows.append(_row(key, ha[key], hb[key]))
    pa, pb = _primary(report_a), _primary(report_b)
    if pa[0] is not None and pb[0] is not None and not (pa[0] == pb[0] and pa[0] in hb):
        rows.append(_row(f"{pa[0]} vs {pb[0]}", pa[1], pb[1]))
    if not rows:
        raise ValueError("reports share no comparable values")
    return {"kinds": [ka, kb], "rows": rows,
            "activity": {"a": _activity(report_a), "b": _activity(report_b)}}


def _row(key, a, b):
    ratio = None
    if a is not None and b is not None and a != 0:
        ratio = b / a
    elif a == 0 and b == 0:
        ratio = 1.0
    return {"quantity": key, "a": a, "b": b, "ratio": ratio}


def format_table(cmp):
    fmt = lambda v: "-" if v is None else f"{v:.6g}"
    lines = [f"{'quantity':<22}{'a':>14}{'b':>14}{'b/a':>10}"]
    for r in cmp["rows"]:
        lines.append(f"{r['quantity']:<22}{fmt(r['a']):>14}{fmt(r['b']):>14}{fmt(r['ratio']):>10}")
    for side in ("a", "b"):
        for name, act in cmp["activity"][side].items():
            lines.append(f"active actuators ({side}, {name}): {act}")
    return "\n".join(lines)


# -- entry point ----------------------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="wrenchforge", description="Wrench capability optimization")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and write report.json")
    r.add_argument("scenario", help="scenario file or bundled scenario name")
    r.add_argument("--out", default="out", help="output directory")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dot-path assignment into the scenario (repeatable)")
    v = sub.add_parser("validate", help="check a scenario without running it")
    v.add_argument("scenario")
    c = sub.add_parser("compare", help="compare two reports")
    c.add_argument("report_a")
    c.add_argument("report_b")
    c.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    sub.add_parser("list", help="list bundled scenarios")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "run":
        code = run(args.scenario, args.out, args.override, args.seed)
        rep = json.loads((Path(args.out) / "report.json").read_text())
        print(f"{rep['status']}: {json.dumps(rep['headline'], sort_keys=True)} -> {args.out}/report.json")
        for d in rep.get("diagnostics", []):
            print(f"  {d['level']} {d['pointer'] or '/'}: {d['message']}", file=sys.stderr)
        return code
    if args.command == "validate":
        try:
            diags = validate(args.scenario)
        except (OSError, json.JSONDecodeError) as e:
            print(f"error: cannot read scenario: {e}", file=sys.stderr)
            return EXIT_INVALID
        for d in diags:
            print(f"{d['level']} {d['pointer'] or '/'}: {d['message']}")
        if not diags:
            print("ok")
        return EXIT_INVALID if any(d["level"] == "error" for d in diags) else EXIT_OK
    if args.command == "compare":
        try:
            a = json.loads(Path(args.report_a).read_text())
            b = json.loads(Path(args.report_b).read_text())
            cmp = compare(a, b)
        except (OSError, json.JSONDecodeError, ValueError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_INVALID
        print(json.dumps(cmp, indent=2) if args.json else format_table(cmp))
        return EXIT_OK
    for name in BUNDLED_SCENARIOS:
        print(name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
