"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
reference the compiled versions are tested against.
"""
import numpy as np


def find_spans(knots, degree, n_ctrl, times):
    """Index k of the knot span [knots[k], knots[k+1]) holding each time.

    Times at (or beyond) the last knot fall into the last non-empty span.
    """
    spans = np.searchsorted(knots, times, side="right") - 1
    return np.clip(spans, degree, n_ctrl - 1)


def eval_bspline(knots, ctrl, degree, times):
    """Evaluate a B-spline at many times with a vectorized de Boor recursion.

    Parameters
    ----------
    knots : ndarray, shape (n_ctrl + degree + 1,)
    ctrl : ndarray, shape (n_ctrl, dim)
    degree : int
    times : ndarray, shape (m,)

    Returns
    -------
    ndarray, shape (m, dim)
    """
    knots = np.asarray(knots, dtype=np.float64)
    ctrl = np.asarray(ctrl, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    n_ctrl = ctrl.shape[0]
    k = find_spans(knots, degree, n_ctrl, times)
    offsets = np.arange(degree + 1)
    d = ctrl[(k - degree)[:, None] + offsets[None, :]]  # (m, p+1, dim)
    d = d.copy()
    t = times[:, None]
    for r in range(1, degree + 1):
        j = np.arange(r, degree + 1)
        left = knots[(k - degree)[:, None] + j[None, :]]
        right = knots[(k + 1 - r)[:, None] + j[None, :]]
        denom = right - left
        alpha = np.where(denom > 0.0, (t - left) / np.where(denom > 0.0, denom, 1.0), 0.0)
        # update from high j to low j uses old values of d[j-1]; slicing does that at once
        d[:, r:, :] = (1.0 - alpha)[:, :, None] * d[:, r - 1:-1, :] + alpha[:, :, None] * d[:, r:, :]
    return d[:, degree, :]


def min_clearance(points, centers, radii):
    """Smallest ``||point - center|| - radius`` over all point/sphere pairs.

    Returns ``inf`` when there are no spheres or no points.
    """
    points = np.asarray(points, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    radii = np.asarray(radii, dtype=np.float64).reshape(-1)
    if centers.shape[0] == 0 or points.shape[0] == 0:
        return np.inf
    best = np.inf
    for c, r in zip(centers, radii):
        dist = np.sqrt(np.sum((points - c) ** 2, axis=1))
        best = min(best, float(dist.min()) - float(r))
    return best


def max_box_excess(values, limits):
    """Largest per-component amount by which ``|values|`` exceed ``limits``.

    ``values`` has shape (m, dim) and ``limits`` shape (dim,). Returns 0.0
    when every component is within its bound.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return 0.0
    excess = np.abs(values) - np.asarray(limits, dtype=np.float64)[None, :]
    return max(0.0, float(excess.max()))
