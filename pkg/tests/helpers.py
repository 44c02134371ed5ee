"""Shared constructions for the tests."""
import numpy as np

from cgdplan import scenario_io
from cgdplan.bspline import TrajectorySpline, clamped_uniform_knots
from cgdplan.dynconstraints import DynamicLimits
from cgdplan.guidance import Obstacle

HALVED = scenario_io.HALVED_LIMITS
TRAINING = scenario_io.TRAINING_LIMITS


def random_spline(rng, n_pos=None, n_yaw=None, t_f=None, scale=2.0):
    n_pos = n_pos or int(rng.integers(4, 14))
    n_yaw = n_yaw or int(rng.integers(3, 12))
    t_f = t_f or float(rng.uniform(0.5, 8.0))
    return TrajectorySpline(scale * rng.normal(size=(n_pos, 3)), rng.normal(size=n_yaw), t_f)


def greville(degree, n_ctrl, t_f):
    """Greville abscissae: control points at these times reproduce the line ``C(t) = t``."""
    knots = clamped_uniform_knots(degree, n_ctrl, t_f)
    return np.array([knots[i + 1:i + degree + 1].mean() for i in range(n_ctrl)])


def straight_line(direction, speed, n_pos=10, n_yaw=9, t_f=3.0, origin=(0.0, 0.0, 1.0)):
    """Spline tracing ``origin + speed * t * direction`` exactly, so every V_i equals that velocity."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    g = greville(3, n_pos, t_f)
    pos = np.asarray(origin) + speed * g[:, None] * d
    return TrajectorySpline(pos, np.zeros(n_yaw), t_f)


PARABOLA_COEFFS = np.array([[0.3, -1.2, 0.7],     # per axis: a, b, c
                            [1.0, 0.5, -0.25],
                            [-2.0, 0.0, 1.5]])


def parabola_ctrl(n_ctrl, t_f, coeffs=PARABOLA_COEFFS):
    """Cubic control points (blossoms) reproducing ``a + b t + c t^2`` on each axis."""
    knots = clamped_uniform_knots(3, n_ctrl, t_f)
    out = np.empty((n_ctrl, 3))
    for i in range(n_ctrl):
        u1, u2, u3 = knots[i + 1:i + 4]
        s1 = (u1 + u2 + u3) / 3.0
        s2 = (u1 * u2 + u1 * u3 + u2 * u3) / 3.0
        out[i] = coeffs[:, 0] + coeffs[:, 1] * s1 + coeffs[:, 2] * s2
    return out


def limits(**kw):
    base = dict(TRAINING)
    base.update(kw)
    return DynamicLimits(**base)


def scenario(goal=(4.0, 0.0, 1.0), obstacles=(), start=(0.0, 0.0, 1.0), limits_kw=None,
             design_kw=None, sid="t"):
    lim = DynamicLimits(**(limits_kw or TRAINING))
    design = DynamicLimits(**(design_kw or TRAINING))
    obs = tuple(Obstacle(c, r) for c, r in obstacles)
    return scenario_io.Scenario(sid, np.array(start, float), np.array(goal, float), obs, lim, design)


def random_qp(rng, max_dim=12, max_rows=30, weighted=False):
    """Small dense projection instance with a nonempty polytope (it contains ``x0``)."""
    from cgdplan.qp import QpProblem
    n = int(rng.integers(2, max_dim + 1))
    m = int(rng.integers(1, max_rows + 1))
    a = rng.normal(size=(m, n))
    x0 = rng.normal(size=n)
    b = a @ x0 + rng.uniform(0.0, 1.0, size=m)
    q_nn = x0 + 3.0 * rng.normal(size=n)
    w = None
    if weighted:
        r = rng.normal(size=(n, n))
        w = r @ r.T + n * np.eye(n)
    return QpProblem(q_nn, a, b, w)
