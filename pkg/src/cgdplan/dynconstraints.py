"""Linear box constraints on derivative control points, ``A q <= b``.

The decision vector ``q`` stacks the position control points row-major
(``P0x, P0y, P0z, P1x, ...``) followed by the yaw control points. Rows are
ordered by derivative order, then control-point index, then axis, with
the upper-bound row before the lower-bound row. Yaw-rate rows come last.

Every row of order ``k`` scales with ``t_f ** -k``; ``b`` does not depend
on ``t_f``.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .bspline import KnotVector, derivative_operator

AXES = "xyz"


@dataclass(frozen=True)
class DynamicLimits:
    """Per-axis magnitude bounds. Yaw rate is in rad/s.

    Lower bounds default to the negated upper bounds.
    """

    v_max: np.ndarray
    a_max: np.ndarray
    j_max: np.ndarray
    yaw_rate_max: float
    v_min: np.ndarray = None
    a_min: np.ndarray = None
    j_min: np.ndarray = None
    yaw_rate_min: float = None

    def __post_init__(self):
        for name in ("v_max", "a_max", "j_max"):
            val = np.broadcast_to(np.asarray(getattr(self, name), dtype=np.float64), (3,)).copy()
            if np.any(val <= 0) or not np.all(np.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val}")
            val.flags.writeable = False
            object.__setattr__(self, name, val)
            lo_name = name.replace("max", "min")
            lo = getattr(self, lo_name)
            lo = -val if lo is None else np.broadcast_to(np.asarray(lo, dtype=np.float64), (3,)).copy()
            if np.any(lo >= val):
                raise ValueError(f"{lo_name} must be below {name}")
            lo.flags.writeable = False
            object.__setattr__(self, lo_name, lo)
        if not self.yaw_rate_max > 0:
            raise ValueError(f"yaw_rate_max must be positive, got {self.yaw_rate_max}")
        object.__setattr__(self, "yaw_rate_max", float(self.yaw_rate_max))
        lo = -self.yaw_rate_max if self.yaw_rate_min is None else float(self.yaw_rate_min)
        if lo >= self.yaw_rate_max:
            raise ValueError("yaw_rate_min must be below yaw_rate_max")
        object.__setattr__(self, "yaw_rate_min", lo)

    def scaled(self, factor):
        """Limits with every bound multiplied by ``factor`` (0.5 halves them)."""
        return DynamicLimits(
            self.v_max * factor, self.a_max * factor, self.j_max * factor,
            self.yaw_rate_max * factor,
            self.v_min * factor, self.a_min * factor, self.j_min * factor,
            self.yaw_rate_min * factor,
        )

    def bounds(self, order):
        """(lower, upper) per-axis arrays for position derivative ``order``."""
        return {1: (self.v_min, self.v_max), 2: (self.a_min, self.a_max),
                3: (self.j_min, self.j_max)}[order]

    def to_dict(self):
        return {
            "v_max": self.v_max.tolist(), "a_max": self.a_max.tolist(),
            "j_max": self.j_max.tolist(), "yaw_rate_max": self.yaw_rate_max,
        }


class RowMeta(NamedTuple):
    kind: str    # "pos" or "yaw"
    axis: int    # 0..2 for position, 0 for yaw
    order: int   # derivative order
    index: int   # derivative control-point index
    sign: int    # +1 upper bound row, -1 lower bound row


@dataclass(frozen=True)
class LinearConstraintSet:
    a_matrix: np.ndarray
    b_vector: np.ndarray
    row_meta: tuple
    t_f: float
    orders: np.ndarray = field(repr=False)

    @property
    def n_rows(self):
        return self.a_matrix.shape[0]

    @property
    def dim(self):
        return self.a_matrix.shape[1]

    def describe_row(self, row):
        m = self.row_meta[row]
        side = "upper" if m.sign > 0 else "lower"
        if m.kind == "yaw":
            return f"yaw-rate[{m.index}] {side}"
        name = {1: "vel", 2: "acc", 3: "jerk"}[m.order]
        return f"{name}[{m.index}].{AXES[m.axis]} {side}"


def decision_dim(n_pos, n_yaw):
    return 3 * n_pos + n_yaw


def build(limits, n_pos, n_yaw, degree_pos, degree_yaw, t_f):
    """Constraint set for velocity/acceleration/jerk and yaw-rate boxes at ``t_f``."""
    if not t_f > 0:
        raise ValueError(f"t_f must be positive, got {t_f}")
    if degree_pos < 3 or n_pos < 4:
        raise ValueError("jerk rows need a position degree >= 3 and at least 4 control points")
    if degree_yaw < 1 or n_yaw < 2:
        raise ValueError("yaw-rate rows need a yaw degree >= 1 and at least 2 control points")
    if n_pos < degree_pos + 1 or n_yaw < degree_yaw + 1:
        raise ValueError("too few control points for the requested degrees")

    unit_a, _ = _unit_matrix(n_pos, n_yaw, degree_pos, degree_yaw)
    _, orders = _row_layout(n_pos, n_yaw, degree_pos, degree_yaw)
    # uniform knots: an order-k operator scales exactly as t_f ** -k
    a_matrix = unit_a * (float(t_f) ** -orders.astype(np.float64))[:, None]

    rhs = []
    for order in (1, 2, 3):
        lo, hi = limits.bounds(order)
        rhs.append(np.tile(np.stack([hi, -lo], axis=1).reshape(-1), n_pos - order))
    rhs.append(np.tile([limits.yaw_rate_max, -limits.yaw_rate_min], n_yaw - 1))

    meta, _ = _row_layout(n_pos, n_yaw, degree_pos, degree_yaw)
    return LinearConstraintSet(a_matrix, np.concatenate(rhs), meta, float(t_f), orders)


@lru_cache(maxsize=64)
def _unit_matrix(n_pos, n_yaw, degree_pos, degree_yaw):
    """Constraint matrix at ``t_f = 1``; read-only, shared between calls."""
    pos_knots = KnotVector(degree_pos, n_pos, 1.0)
    yaw_knots = KnotVector(degree_yaw, n_yaw, 1.0)
    dim = decision_dim(n_pos, n_yaw)
    blocks = []
    for order in (1, 2, 3):
        op = derivative_operator(pos_knots, degree_pos, n_pos, order)
        block = np.zeros((op.shape[0], 3, 2, dim))
        for axis in range(3):
            block[:, axis, 0, axis:3 * n_pos:3] = op
            block[:, axis, 1, axis:3 * n_pos:3] = -op
        blocks.append(block.reshape(-1, dim))
    op = derivative_operator(yaw_knots, degree_yaw, n_yaw, 1)
    block = np.zeros((op.shape[0], 2, dim))
    block[:, 0, 3 * n_pos:] = op
    block[:, 1, 3 * n_pos:] = -op
    blocks.append(block.reshape(-1, dim))
    a = np.vstack(blocks)
    a.flags.writeable = False
    return a, dim


@lru_cache(maxsize=64)
def _row_layout(n_pos, n_yaw, degree_pos, degree_yaw):
    meta = []
    for order in (1, 2, 3):
        for i in range(n_pos - order):
            for axis in range(3):
                meta.append(RowMeta("pos", axis, order, i, 1))
                meta.append(RowMeta("pos", axis, order, i, -1))
    for i in range(n_yaw - 1):
        meta.append(RowMeta("yaw", 0, 1, i, 1))
        meta.append(RowMeta("yaw", 0, 1, i, -1))
    orders = np.array([m.order for m in meta], dtype=np.int64)
    orders.flags.writeable = False
    return tuple(meta), orders


def _check_dims(cset, q):
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.shape[0] != cset.dim:
        raise ValueError(f"vector has length {q.shape[0]}, constraint set expects {cset.dim}")
    return q


def slack(cset, q):
    """``b - A q``; negative entries are violated rows."""
    q = _check_dims(cset, q)
    return cset.b_vector - cset.a_matrix @ q


def violation(cset, q):
    """(max_violation, worst_row); the worst row is the smallest slack, lowest index on ties."""
    s = slack(cset, q)
    worst = int(np.argmin(s))
    return max(0.0, float(-s[worst])), worst


def slack_gradient_tf(cset, q, t_f=None):
    """d(b - A q)/d t_f per row, from the ``t_f ** -k`` row homogeneity."""
    t_f = cset.t_f if t_f is None else float(t_f)
    if not t_f > 0:
        raise ValueError(f"t_f must be positive, got {t_f}")
    q = _check_dims(cset, q)
    return cset.orders / t_f * (cset.a_matrix @ q)
