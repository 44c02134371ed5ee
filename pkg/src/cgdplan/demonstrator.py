"""Nominal trajectories standing in for expert demonstrations.

Each nominal starts and ends at rest, bends around the main obstacle on
one side, and is time-scaled so its tightest derivative control point sits
at ``DESIGN_MARGIN`` of the scenario's design limits. Tightening the
deployment limits below the design limits therefore makes the raw nominal
infeasible, which is the out-of-distribution setting.
"""
import numpy as np

from . import bspline, metrics
from .bspline import TrajectorySpline

DESIGN_MARGIN = 0.98
CLEARANCE = 0.3
AMP_STEP = 0.05
AMP_MAX = 20.0


def min_time_scale(pos_ctrl, yaw_ctrl, limits, margin=DESIGN_MARGIN,
                   pos_degree=bspline.POS_DEGREE, yaw_degree=bspline.YAW_DEGREE):
    """Smallest ``t_f`` keeping every derivative control point within ``margin * limits``.

    Uses the ``t_f ** -k`` scaling of order-``k`` control points, so the
    answer is exact: the binding row ends up at ``margin`` of its bound.
    """
    unit = TrajectorySpline(pos_ctrl, yaw_ctrl, 1.0, pos_degree, yaw_degree)
    t_f = 0.0
    for order in (1, 2, 3):
        d = bspline.derivative_ctrl(unit.pos_ctrl, unit.pos_knots, pos_degree, order)
        lo, hi = limits.bounds(order)
        bound = np.minimum(hi, -lo)
        ratio = float(np.max(np.abs(d) / bound)) / margin
        if ratio > 0:
            t_f = max(t_f, ratio ** (1.0 / order))
    yaw_d = bspline.derivative_ctrl(unit.yaw_ctrl, unit.yaw_knots, yaw_degree, 1)
    yaw_bound = min(limits.yaw_rate_max, -limits.yaw_rate_min)
    ratio = float(np.max(np.abs(yaw_d), initial=0.0)) / yaw_bound / margin
    if ratio > 0:
        t_f = max(t_f, ratio)
    if t_f == 0.0:
        raise ValueError("stationary control points have no time scale")
    return t_f


def _polygon(start, goal, n_pos, lateral, amp):
    if n_pos < 7:
        raise ValueError("the demonstrator needs at least 7 position control points")
    m = n_pos - 6
    s = np.arange(1, m + 1) / (m + 1)
    inner = start + s[:, None] * (goal - start) + (amp * np.sin(np.pi * s))[:, None] * lateral
    return np.vstack([np.repeat(start[None], 3, 0), inner, np.repeat(goal[None], 3, 0)])


def _main_obstacle(scenario):
    start, goal = scenario.start_pos, scenario.goal
    seg = goal - start
    best, best_d = None, np.inf
    for obs in scenario.obstacles:
        s = np.clip((obs.center - start) @ seg / (seg @ seg), 0.0, 1.0)
        d = np.linalg.norm(start + s * seg - obs.center) - obs.radius
        if d < best_d:
            best, best_d = obs, d
    return best


def nominal_trajectories(scenario, n_pos, n_yaw, limits=None):
    """Nominal splines for ``scenario``, cheapest first.

    One straight nominal when the direct route is clear, otherwise one per
    side of the main obstacle.
    """
    limits = scenario.design_limits if limits is None else limits
    start = np.asarray(scenario.start_pos, dtype=np.float64)
    goal = np.asarray(scenario.goal, dtype=np.float64)
    yaw = np.full(n_yaw, float(scenario.start_yaw))
    _, lateral = metrics._frame(scenario)

    def build(amp, side):
        pos = _polygon(start, goal, n_pos, side * lateral, amp)
        return TrajectorySpline(pos, yaw, min_time_scale(pos, yaw, limits))

    def clear(spl):
        return metrics.clearance(spl, scenario, rate=200.0) >= CLEARANCE

    straight = build(0.0, 1.0)
    if _main_obstacle(scenario) is None or clear(straight):
        return [straight]
    out = []
    for side in (1.0, -1.0):
        amp = AMP_STEP
        spl = build(amp, side)
        while not clear(spl) and amp < AMP_MAX:
            amp += AMP_STEP
            spl = build(amp, side)
        out.append(spl)
    costs = [metrics.cost(s, scenario) for s in out]
    return [out[i] for i in np.argsort(costs, kind="stable")]
