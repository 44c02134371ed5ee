"""Trajectory cost and dense-sampling safety checks."""
import math
from typing import NamedTuple

import numpy as np

from . import bspline, kernels

SAMPLE_RATE_HZ = 1000.0
VIOLATION_TOL = 1e-7


class SafetyMetrics(NamedTuple):
    collided: bool
    dyn_violation: float
    min_clearance: float


def sample_times(t_f, rate=SAMPLE_RATE_HZ):
    """Uniform grid over ``[0, t_f]`` at ``rate`` Hz, both ends included."""
    n = max(2, int(math.ceil(t_f * rate)) + 1)
    return np.linspace(0.0, t_f, n)


def jerk_integral(spline):
    """Integral of ``||jerk||^2`` over ``[0, t_f]`` with Gauss-Legendre per knot span."""
    p = spline.pos_degree
    if p < 3:
        return 0.0
    n_gl = max(1, p - 2)      # integrand has degree 2 (p - 3) on each span
    nodes, wts = np.polynomial.legendre.leggauss(n_gl)
    edges = np.unique(spline.pos_knots.knots)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    times = (0.5 * (a + b))[:, None] + half[:, None] * nodes[None, :]
    # keep the quadrature nodes strictly inside their span
    jerk = bspline.sample(spline, np.clip(times.reshape(-1), 0.0, spline.t_f), 3)
    sq = np.sum(jerk ** 2, axis=1).reshape(times.shape)
    return float(np.sum(half[:, None] * wts[None, :] * sq))


def cost(spline, scenario):
    """``w_j * int ||jerk||^2 + w_T * t_f + w_g * ||C(t_f) - goal||^2``."""
    w = scenario.weights
    end = bspline.evaluate(spline, spline.t_f)
    goal_err = float(np.sum((end - scenario.goal) ** 2))
    return w.jerk * jerk_integral(spline) + w.time * spline.t_f + w.goal * goal_err


def _clearance(pos, obstacles):
    if not obstacles:
        return math.inf
    centers = np.array([o.center for o in obstacles])
    radii = np.array([o.radius for o in obstacles])
    return float(kernels.min_clearance(pos, centers, radii))


def clearance(spline, scenario, rate=SAMPLE_RATE_HZ):
    """Smallest distance from the sampled path to any obstacle surface (negative inside)."""
    pos = bspline.sample(spline, sample_times(spline.t_f, rate), 0)
    return _clearance(pos, scenario.obstacles)


def safety_metrics(spline, scenario, limits=None, rate=SAMPLE_RATE_HZ):
    """Collision flag and largest dynamic-limit excess over a dense time grid."""
    limits = scenario.limits if limits is None else limits
    times = sample_times(spline.t_f, rate)
    clearance = _clearance(bspline.sample(spline, times, 0), scenario.obstacles)
    excess = 0.0
    for order in (1, 2, 3):
        lo, hi = limits.bounds(order)
        vals = bspline.sample(spline, times, order)
        if np.array_equal(lo, -hi):
            excess = max(excess, kernels.max_box_excess(vals, hi))
        else:
            excess = max(excess, float(np.max(vals - hi)), float(np.max(lo - vals)))
    yaw_rate = bspline.sample_yaw(spline, times, 1)
    excess = max(excess, float(np.max(yaw_rate)) - limits.yaw_rate_max,
                 limits.yaw_rate_min - float(np.min(yaw_rate)))
    return SafetyMetrics(bool(clearance < 0.0), max(0.0, excess), float(clearance))


def _frame(scenario):
    """Unit vectors along start->goal and the horizontal left normal."""
    axis = np.asarray(scenario.goal, dtype=np.float64) - scenario.start_pos
    axis = axis / np.linalg.norm(axis)
    lateral = np.cross([0.0, 0.0, 1.0], axis)
    if np.linalg.norm(lateral) < 1e-9:
        lateral = np.cross([1.0, 0.0, 0.0], axis)
    return axis, lateral / np.linalg.norm(lateral)


def homotopy_side(spline, scenario, obstacle_index=0, rate=200.0):
    """+1 if the path passes the obstacle on the left of start->goal, -1 on the right.

    Looks at the sample whose abscissa along start->goal is closest to the
    obstacle's, and compares lateral coordinates. Returns 0 without obstacles.
    """
    if not scenario.obstacles:
        return 0
    obs = scenario.obstacles[obstacle_index]
    axis, lateral = _frame(scenario)
    pos = bspline.sample(spline, sample_times(spline.t_f, rate), 0) - scenario.start_pos
    rel_obs = obs.center - scenario.start_pos
    k = int(np.argmin(np.abs(pos @ axis - rel_obs @ axis)))
    side = float((pos[k] - rel_obs) @ lateral)
    return 1 if side > 0 else -1
