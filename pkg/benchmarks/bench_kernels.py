"""Compare the numba-compiled kernels with the pure-numpy fallback.

Each mode runs in its own interpreter because the backend is chosen at import
time from ``WRENCHFORGE_NUMBA``.  Compilation is excluded by a warm-up call.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys
import time


def _best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads():
    import numpy as np

    from wrenchforge import capability as cap
    from wrenchforge import static_opt as so
    from wrenchforge import trajectory_opt as to
    from wrenchforge.geometry import PlanarPose
    from wrenchforge.model import load_model

    p2d = load_model("paper2d")
    uv = load_model("uvms4dof")
    rng = np.random.default_rng(0)
    th = uv.neutral_configuration() + rng.uniform(-0.2, 0.2, uv.n)
    qd = rng.normal(size=uv.n)
    c = np.array([1.0, 0.0, 0.0])
    th2 = p2d.neutral_configuration()
    tau = p2d.gravity_buoyancy(th2)
    spec = to.TrajectorySpec([PlanarPose(0.03 * i, 0.0, 0.0) for i in range(10)], [c] * 10, 10.0)
    Th = np.tile([0.5, -0.8], (10, 1))
    lim = to.TrajectoryLimits.from_model(p2d)

    def coriolis():
        for _ in range(200):
            uv.coriolis_matrix(th, qd)

    def beta_lp():
        for _ in range(200):
            cap.directional_wrench_lp(p2d, th2, tau, c, relax_orthogonal=False)

    def trajectory_lp():
        to.maxmin_lp(to.stack_kinematics(p2d, spec, Th), lim)

    def static_grid():
        so.optimize_static(so.StaticProblem(p2d, PlanarPose(), c, resolution=21), workers=1)

    return {"coriolis x200 (uvms4dof)": coriolis, "beta2 LP x200 (paper2d)": beta_lp,
            "max-min LP k=10": trajectory_lp, "static grid 21x21": static_grid}


def run_mode(repeat):
    return {name: _best_of(fn, repeat) for name, fn in workloads().items()}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.child:
        from wrenchforge import _accel
        print(json.dumps({"numba": _accel.USE_NUMBA, "times": run_mode(args.repeat)}))
        return 0
    results = {}
    for label, flag in (("numba", "1"), ("numpy", "0")):
        env = dict(os.environ, WRENCHFORGE_NUMBA=flag)
        out = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(args.repeat)],
                             env=env, check=True, capture_output=True, text=True)
        results[label] = json.loads(out.stdout.strip().splitlines()[-1])
    print(f"{'workload':28s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s}")
    for name in results["numba"]["times"]:
        a = results["numba"]["times"][name] * 1e3
        b = results["numpy"]["times"][name] * 1e3
        print(f"{name:28s} {a:11.2f} {b:11.2f} {b / a:8.1f}x")
    if not results["numba"]["numba"]:
        print("note: numba unavailable, both columns used the fallback")
    return 0


if __name__ == "__main__":
    sys.exit(main())
