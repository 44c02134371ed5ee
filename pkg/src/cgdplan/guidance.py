"""In-loop steering of the denoising chain.

All three guides take a :class:`~cgdplan.denoiser.DenoiseState` plus the
:class:`~cgdplan.denoiser.ActionLayout` that says how to read it, and
return a new state.
"""
from dataclasses import dataclass

import numpy as np

from . import dynconstraints

COINCIDENT_DIST = 1e-9


@dataclass(frozen=True)
class Obstacle:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.array(self.center, dtype=np.float64).reshape(3)
        c.flags.writeable = False
        object.__setattr__(self, "center", c)
        if not self.radius >= 0:
            raise ValueError(f"obstacle radius must be >= 0, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True)
class GuideParams:
    alpha_tf: float = 0.1
    tf_repeats: int = 5
    alpha_obst: float = 1.0
    max_push: float = 1.0
    tf_min: float = 0.2
    tf_max: float = 30.0

    def __post_init__(self):
        if not self.alpha_obst > 0:
            raise ValueError("alpha_obst must be positive")
        if not 0 < self.tf_min < self.tf_max:
            raise ValueError("need 0 < tf_min < tf_max")
        if self.tf_repeats < 1:
            raise ValueError("tf_repeats must be >= 1")


def goal_condition(state, goal, layout):
    """Overwrite the last position control point with ``goal``."""
    flat = np.array(state.flat)
    layout.pos(flat)[-1] = np.asarray(goal, dtype=np.float64)
    return state.with_flat(flat)


def tf_guide(state, limits, params, layout):
    """One t_f update along the slack gradient of the worst constraint row.

    No-op when every row is satisfied.
    """
    t_f = float(np.clip(layout.t_f(state.flat), params.tf_min, params.tf_max))
    cset = dynconstraints.build(limits, layout.n_pos, layout.n_yaw,
                                layout.pos_degree, layout.yaw_degree, t_f)
    q = state.flat[:layout.n_ctrl_entries]
    max_viol, worst = dynconstraints.violation(cset, q)
    if max_viol <= 0.0:
        return state
    grad = dynconstraints.slack_gradient_tf(cset, q, t_f)
    new_tf = float(np.clip(t_f + params.alpha_tf * grad[worst], params.tf_min, params.tf_max))
    flat = np.array(state.flat)
    flat[-1] = layout.normalize_tf(new_tf)
    return state.with_flat(flat)


def repeat_tf_guide(state, limits, params, layout, repeats=None):
    """Apply :func:`tf_guide` up to ``repeats`` times; stop early once it is a no-op.

    Returns ``(state, n_updates)``.
    """
    repeats = params.tf_repeats if repeats is None else repeats
    n = 0
    for _ in range(repeats):
        nxt = tf_guide(state, limits, params, layout)
        if nxt is state:
            break
        state, n = nxt, n + 1
    return state, n


def collision_push(points, obstacles, alpha=1.0, max_push=1.0):
    """Displacement of each point away from each obstacle center, ``alpha / dist`` long.

    Pushes from all obstacles are computed from the original points and summed.
    """
    points = np.asarray(points, dtype=np.float64)
    total = np.zeros_like(points)
    for obs in obstacles:
        diff = points - obs.center
        dist = np.linalg.norm(diff, axis=1)
        near = dist < COINCIDENT_DIST
        safe = np.where(near, 1.0, dist)
        push = (alpha / safe ** 2)[:, None] * diff
        if near.any():
            push[near] = [min(alpha / COINCIDENT_DIST, max_push), 0.0, 0.0]
        total += push
    return total


def collision_guide(state, obstacles, params, layout):
    """Push every position control point away from the obstacle centers."""
    if not obstacles:
        return state
    flat = np.array(state.flat)
    pos = layout.pos(flat)
    pos += collision_push(pos, obstacles, params.alpha_obst, params.max_push)
    return state.with_flat(flat)
