"""Diffusion-based trajectory planning over B-spline control points.

A denoising chain proposes position/yaw control points and a total time;
goal conditioning, a total-time guide and a collision push steer it, and
a dense QP projects the result onto the dynamic-limit polytope.
"""
from .bspline import KnotVector, TrajectorySpline
from .denoiser import ActionLayout, FeedForwardPredictor, NoiseSchedule, SurrogatePredictor
from .dynconstraints import DynamicLimits, LinearConstraintSet
from .guidance import GuideParams, Obstacle
from .kernels import backend_name
from .metrics import cost, safety_metrics
from .planner import PlannerConfig, PlanResult, make_predictor, plan
from .qp import QpProblem, QpSolution
from .scenario_io import Scenario, SuiteReport, load_suite, write_report

__version__ = "0.1.0"

__all__ = [
    "ActionLayout", "DynamicLimits", "FeedForwardPredictor", "GuideParams", "KnotVector",
    "LinearConstraintSet", "NoiseSchedule", "Obstacle", "PlanResult", "PlannerConfig",
    "QpProblem", "QpSolution", "Scenario", "SuiteReport", "SurrogatePredictor",
    "TrajectorySpline", "backend_name", "cost", "load_suite", "make_predictor", "plan",
    "safety_metrics", "write_report",
]
