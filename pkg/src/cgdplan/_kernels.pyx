# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the functions in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()


cdef inline Py_ssize_t _span(const double[::1] knots, int degree, Py_ssize_t n_ctrl,
                             double t) noexcept nogil:
    cdef Py_ssize_t lo = degree, hi = n_ctrl, mid
    if t >= knots[n_ctrl]:
        return n_ctrl - 1
    if t <= knots[degree]:
        return degree
    # invariant: knots[lo] <= t < knots[hi]
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if t < knots[mid]:
            hi = mid
        else:
            lo = mid
    return lo


def eval_bspline(knots, ctrl, int degree, times):
    cdef const double[::1] kv = np.ascontiguousarray(knots, dtype=np.float64)
    cdef const double[:, ::1] cp = np.ascontiguousarray(ctrl, dtype=np.float64)
    cdef const double[::1] ts = np.ascontiguousarray(times, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t n_ctrl = cp.shape[0], dim = cp.shape[1], m = ts.shape[0]
    out_arr = np.empty((m, dim), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    work_arr = np.empty((degree + 1, dim), dtype=np.float64)
    cdef double[:, ::1] d = work_arr
    cdef Py_ssize_t i, j, r, a, k
    cdef double t, left, right, alpha
    with nogil:
        for i in range(m):
            t = ts[i]
            k = _span(kv, degree, n_ctrl, t)
            for j in range(degree + 1):
                for a in range(dim):
                    d[j, a] = cp[j + k - degree, a]
            for r in range(1, degree + 1):
                j = degree
                while j >= r:
                    left = kv[j + k - degree]
                    right = kv[j + 1 + k - r]
                    if right > left:
                        alpha = (t - left) / (right - left)
                    else:
                        alpha = 0.0
                    for a in range(dim):
                        d[j, a] = (1.0 - alpha) * d[j - 1, a] + alpha * d[j, a]
                    j -= 1
            for a in range(dim):
                out[i, a] = d[degree, a]
    return out_arr


def min_clearance(points, centers, radii):
    cdef const double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    cdef const double[:, ::1] c = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 3)
    cdef const double[::1] r = np.ascontiguousarray(radii, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, dist2, best2, best = INFINITY, val
    if c.shape[0] == 0 or p.shape[0] == 0:
        return float("inf")
    with nogil:
        for j in range(c.shape[0]):
            best2 = INFINITY
            for i in range(p.shape[0]):
                dx = p[i, 0] - c[j, 0]
                dy = p[i, 1] - c[j, 1]
                dz = p[i, 2] - c[j, 2]
                dist2 = dx * dx + dy * dy + dz * dz
                if dist2 < best2:
                    best2 = dist2
            val = sqrt(best2) - r[j]
            if val < best:
                best = val
    return best


def max_box_excess(values, limits):
    cdef const double[:, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[::1] lim = np.ascontiguousarray(limits, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t i, a
    cdef double best = 0.0, e
    with nogil:
        for i in range(v.shape[0]):
            for a in range(v.shape[1]):
                e = fabs(v[i, a]) - lim[a]
                if e > best:
                    best = e
    return best
