"""Compare the compiled and numpy kernel backends on planner-sized inputs.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20] [--plans 50]

Reports the median time per call for each kernel, plus end-to-end time
for a batch of plans, under every available backend.
"""
import argparse
import statistics
import time

import numpy as np

from cgdplan import bspline, kernels, planner, scenario_io
from cgdplan.guidance import Obstacle


def _median_ms(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(1e3 * (time.perf_counter() - t0))
    return statistics.median(times)


def kernel_cases(rng):
    spline = bspline.TrajectorySpline(rng.normal(size=(10, 3)), rng.normal(size=9), 3.0)
    times = np.linspace(0.0, spline.t_f, 3001)       # 1 kHz over 3 s
    knots = spline.pos_knots.knots
    pts = bspline.sample(spline, times)
    centers = rng.normal(size=(8, 3))
    radii = rng.uniform(0.2, 0.8, size=8)
    return {
        "eval_bspline (3001 x 3)": lambda: kernels.eval_bspline(knots, spline.pos_ctrl, 3, times),
        "min_clearance (3001 pts, 8 obs)": lambda: kernels.min_clearance(pts, centers, radii),
        "max_box_excess (3001 x 3)": lambda: kernels.max_box_excess(pts, np.ones(3)),
    }


def plan_batch(n_plans):
    scenarios = scenario_io.generate_scenarios(
        {"prefix": "b", "count": n_plans, "seed": 3, "goal_radius": 4.0,
         "obstacle": {"radius": [0.5, 0.8], "fraction": [0.4, 0.6]}},
        {"limits": {"v_max": 1.25, "a_max": 2.75, "j_max": 15.0, "yaw_rate_max_deg": 2.5},
         "design_limits": {"v_max": 2.5, "a_max": 5.5, "j_max": 30.0, "yaw_rate_max_deg": 5.0}})
    cfg = planner.PlannerConfig(n_rollouts=1)
    pred = planner.make_predictor("surrogate:interpolate", cfg)
    for sc in scenarios:
        pred.nominals(sc)       # demonstrator cost is backend-independent; keep it out

    def run():
        for i, sc in enumerate(scenarios):
            planner.plan(sc, pred, planner.replace(cfg, root_seed=i))
    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--plans", type=int, default=50)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    results = {}
    for name in backends:
        kernels.use_backend(name)
        cases = kernel_cases(np.random.default_rng(0))
        res = {label: _median_ms(fn, args.repeat) for label, fn in cases.items()}
        res[f"{args.plans} plans end to end"] = _median_ms(plan_batch(args.plans), 3)
        results[name] = res
    kernels.use_backend(backends[0] if "compiled" not in backends else "compiled")

    labels = list(next(iter(results.values())))
    print(f"{'kernel':<36}" + "".join(f"{b + ' [ms]':>16}" for b in backends)
          + ("   speedup" if len(backends) == 2 else ""))
    for label in labels:
        line = f"{label:<36}" + "".join(f"{results[b][label]:>16.3f}" for b in backends)
        if len(backends) == 2:
            line += f"   {results['python'][label] / results['compiled'][label]:7.1f}x"
        print(line)
    if "compiled" not in backends:
        print("compiled backend not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
