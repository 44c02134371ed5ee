"""Clamped uniform B-splines for position and yaw trajectories.

Derivative control points follow the usual differencing rule: the k-th
derivative of a degree ``p`` curve is a degree ``p - k`` curve on the knot
vector with ``k`` knots trimmed from each end, whose control points are

    D^k_i = (p - k + 1) / (t[i + p + 1] - t[i + k]) * (D^{k-1}_{i+1} - D^{k-1}_i)

with ``D^0 = P``. For k = 1, 2, 3 these are the velocity, acceleration
and jerk control points.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels

POS_DEGREE = 3
YAW_DEGREE = 2


def clamped_uniform_knots(degree, n_ctrl, t_f):
    """Knot vector with ``degree + 1`` repeated end knots and uniform interior."""
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    if n_ctrl < degree + 1:
        raise ValueError(f"need at least {degree + 1} control points for degree {degree}, got {n_ctrl}")
    if not t_f > 0:
        raise ValueError(f"t_f must be positive, got {t_f}")
    n_seg = n_ctrl - degree
    interior = [t_f * j / n_seg for j in range(1, n_seg)]
    return np.array([0.0] * (degree + 1) + interior + [float(t_f)] * (degree + 1))


@dataclass(frozen=True)
class KnotVector:
    """Clamped uniform knot vector, always regenerated from (degree, n_ctrl, t_f)."""

    degree: int
    n_ctrl: int
    t_f: float
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        knots = clamped_uniform_knots(self.degree, self.n_ctrl, self.t_f)
        knots.flags.writeable = False
        object.__setattr__(self, "knots", knots)

    def __len__(self):
        return len(self.knots)


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TrajectorySpline:
    """Position (3D, cubic by default) and yaw (quadratic) splines sharing ``t_f``."""

    pos_ctrl: np.ndarray
    yaw_ctrl: np.ndarray
    t_f: float
    pos_degree: int = POS_DEGREE
    yaw_degree: int = YAW_DEGREE

    def __post_init__(self):
        pos = _frozen(self.pos_ctrl)
        yaw = _frozen(self.yaw_ctrl).reshape(-1)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"pos_ctrl must have shape (n, 3), got {pos.shape}")
        if not np.isfinite(self.t_f) or self.t_f <= 0:
            raise ValueError(f"t_f must be positive and finite, got {self.t_f}")
        if pos.shape[0] < self.pos_degree + 1:
            raise ValueError(f"need >= {self.pos_degree + 1} position control points, got {pos.shape[0]}")
        if yaw.shape[0] < self.yaw_degree + 1:
            raise ValueError(f"need >= {self.yaw_degree + 1} yaw control points, got {yaw.shape[0]}")
        object.__setattr__(self, "pos_ctrl", pos)
        object.__setattr__(self, "yaw_ctrl", yaw)
        object.__setattr__(self, "t_f", float(self.t_f))

    @property
    def n_pos(self):
        return self.pos_ctrl.shape[0]

    @property
    def n_yaw(self):
        return self.yaw_ctrl.shape[0]

    @property
    def pos_knots(self):
        return KnotVector(self.pos_degree, self.n_pos, self.t_f)

    @property
    def yaw_knots(self):
        return KnotVector(self.yaw_degree, self.n_yaw, self.t_f)

    def replace(self, **changes):
        fields = dict(pos_ctrl=self.pos_ctrl, yaw_ctrl=self.yaw_ctrl, t_f=self.t_f,
                      pos_degree=self.pos_degree, yaw_degree=self.yaw_degree)
        fields.update(changes)
        return TrajectorySpline(**fields)


@dataclass(frozen=True)
class DerivCtrlPoints:
    order: int
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points))


def basis(knots, i, p, t):
    """Cox-de Boor value of the i-th degree-``p`` basis function at ``t``.

    The half-open degree-0 spans are closed at ``t_f`` on the last non-empty
    span, so the basis sums to one on all of ``[0, t_f]``.
    """
    kv = knots.knots if isinstance(knots, KnotVector) else np.asarray(knots, dtype=np.float64)
    if p < 0:
        raise ValueError(f"degree must be >= 0, got {p}")
    if i < 0 or i + p + 1 >= len(kv):
        raise IndexError(f"basis index {i} out of range for degree {p} and {len(kv)} knots")
    t0, t_end = kv[0], kv[-1]
    if not t0 <= t <= t_end:
        raise ValueError(f"t={t} outside [{t0}, {t_end}]")
    return _basis(kv, i, p, float(t), t_end)


def _basis(kv, i, p, t, t_end):
    if p == 0:
        if kv[i] <= t < kv[i + 1]:
            return 1.0
        if t == t_end and kv[i] < kv[i + 1] == t_end:
            return 1.0
        return 0.0
    value = 0.0
    den = kv[i + p] - kv[i]
    if den > 0:
        value += (t - kv[i]) / den * _basis(kv, i, p - 1, t, t_end)
    den = kv[i + p + 1] - kv[i + 1]
    if den > 0:
        value += (kv[i + p + 1] - t) / den * _basis(kv, i + 1, p - 1, t, t_end)
    return value


def _diff_scales(kv, degree, n_ctrl, k):
    """Scale factors (p - k + 1) / (t[i+p+1] - t[i+k]) for the k-th difference."""
    i = np.arange(n_ctrl - k)
    span = kv[i + degree + 1] - kv[i + k]
    if np.any(span <= 0):
        raise ValueError("degenerate knot span in derivative control points")
    return (degree - k + 1) / span


def derivative_ctrl(ctrl, knots, degree, order):
    """Control points of the ``order``-th derivative curve.

    ``ctrl`` has shape (n,) or (n, dim). Computed by repeated scaled
    differencing.
    """
    kv = knots.knots if isinstance(knots, KnotVector) else np.asarray(knots, dtype=np.float64)
    d = np.asarray(ctrl, dtype=np.float64)
    n = d.shape[0]
    if order > degree:
        raise ValueError(f"derivative order {order} exceeds degree {degree}")
    if n - order < 1:
        raise ValueError(f"{n} control points too few for derivative order {order}")
    for k in range(1, order + 1):
        scale = _diff_scales(kv, degree, n, k)
        diff = d[1:] - d[:-1]
        d = scale.reshape((-1,) + (1,) * (diff.ndim - 1)) * diff
    return d


def derivative_operator(knots, degree, n_ctrl, order):
    """Matrix M with ``M @ ctrl == derivative_ctrl(ctrl, ...)`` for any ctrl."""
    return derivative_ctrl(np.eye(n_ctrl), knots, degree, order)


def derivative_knots(knots, order):
    kv = knots.knots if isinstance(knots, KnotVector) else np.asarray(knots, dtype=np.float64)
    return kv[order:len(kv) - order] if order else kv


def velocity_ctrl(spline):
    pts = derivative_ctrl(spline.pos_ctrl, spline.pos_knots, spline.pos_degree, 1)
    return DerivCtrlPoints(1, pts)


def acceleration_ctrl(spline):
    pts = derivative_ctrl(spline.pos_ctrl, spline.pos_knots, spline.pos_degree, 2)
    return DerivCtrlPoints(2, pts)


def jerk_ctrl(spline):
    if spline.pos_degree < 3:
        raise ValueError(f"jerk control points need degree >= 3, got {spline.pos_degree}")
    pts = derivative_ctrl(spline.pos_ctrl, spline.pos_knots, spline.pos_degree, 3)
    return DerivCtrlPoints(3, pts)


def _sample_curve(ctrl, knots, degree, t_f, times, deriv_order):
    if deriv_order < 0 or deriv_order > degree:
        raise ValueError(f"deriv_order must be in [0, {degree}], got {deriv_order}")
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if times.size and (times.min() < 0.0 or times.max() > t_f):
        raise ValueError(f"times must lie in [0, {t_f}]")
    ctrl = np.asarray(ctrl, dtype=np.float64)
    if ctrl.ndim == 1:
        ctrl = ctrl[:, None]
    d = derivative_ctrl(ctrl, knots, degree, deriv_order) if deriv_order else ctrl
    kv = derivative_knots(knots, deriv_order)
    return kernels.eval_bspline(kv, np.ascontiguousarray(d), degree - deriv_order, times)


def sample(spline, times, deriv_order=0):
    """Position curve (or a derivative of it) at each of ``times``; shape (m, 3)."""
    return _sample_curve(spline.pos_ctrl, spline.pos_knots, spline.pos_degree,
                         spline.t_f, times, deriv_order)


def sample_yaw(spline, times, deriv_order=0):
    """Yaw curve (or its derivative) at each of ``times``; shape (m,)."""
    return _sample_curve(spline.yaw_ctrl, spline.yaw_knots, spline.yaw_degree,
                         spline.t_f, times, deriv_order)[:, 0]


def evaluate(spline, t, deriv_order=0):
    """Position (``deriv_order=0``) or its derivative at a single time ``t``."""
    if not 0.0 <= t <= spline.t_f:
        raise ValueError(f"t={t} outside [0, {spline.t_f}]")
    return sample(spline, [t], deriv_order)[0]
