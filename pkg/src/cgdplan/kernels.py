"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
versions are. Setting ``CGDPLAN_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _kernels_py

try:
    if os.environ.get("CGDPLAN_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = _BACKENDS.get("compiled", _kernels_py)


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def use_backend(name):
    """Switch the process-wide kernel backend (``"python"`` or ``"compiled"``)."""
    global _active
    try:
        _active = _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}") from None


def eval_bspline(knots, ctrl, degree, times):
    return _active.eval_bspline(knots, ctrl, degree, times)


def min_clearance(points, centers, radii):
    return _active.min_clearance(points, centers, radii)


def max_box_excess(values, limits):
    return _active.max_box_excess(values, limits)
