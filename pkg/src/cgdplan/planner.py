"""Guided denoising planner: reverse diffusion interleaved with the guides, then a QP.

Per rollout, for ``t = N .. 1``::

    x <- reverse_step(x)
    goal conditioning          (if enabled and t <= its activation step)
    t_f guide, repeated        (if enabled and t <= its activation step)
    collision guide            (if enabled and t <= its activation step)
    goal conditioning again    (same condition, skipped when t == 1)

then decode, optionally project onto the dynamic-limit polytope with the
first control points pinned to the start state, and score.
"""
import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import bspline, demonstrator, dynconstraints, guidance, metrics, qp
from .denoiser import (ActionLayout, NoiseSchedule, SurrogatePredictor, load_weights,
                       reverse_step, sample_initial)

GOAL = "goal_conditioning"
TF_GUIDE = "tf_guide"
COLLISION = "collision_guide"
QP = "qp"
MODULES = (GOAL, TF_GUIDE, COLLISION, QP)
ALIASES = {"goal": GOAL, "goal_conditioning": GOAL, "term": GOAL,
           "tf": TF_GUIDE, "tf_guide": TF_GUIDE,
           "collision": COLLISION, "collision_guide": COLLISION, "obst": COLLISION,
           "qp": QP}


def module_name(name):
    try:
        return ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown module {name!r}; choose from {sorted(ALIASES)}") from None


@dataclass(frozen=True)
class PlannerConfig:
    n_rollouts: int = 8
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule.linear)
    guide: guidance.GuideParams = field(default_factory=guidance.GuideParams)
    enable: frozenset = frozenset(MODULES)
    activation: tuple = ()          # ((module, step), ...); missing modules use N
    root_seed: object = 0           # int or tuple of ints
    limits: dynconstraints.DynamicLimits = None   # overrides the scenario's limits
    n_pos: int = 10
    n_yaw: int = 9
    pin_start: bool = True
    noise_scale: float = 1.0
    qp_tol: float = qp.FEAS_TOL
    workers: int = 1

    def __post_init__(self):
        if self.n_rollouts < 1:
            raise ValueError("n_rollouts must be >= 1")
        enable = frozenset(module_name(m) for m in self.enable)
        object.__setattr__(self, "enable", enable)
        act = dict((module_name(m), int(s)) for m, s in dict(self.activation).items())
        for m, s in act.items():
            if not 1 <= s <= self.schedule.n_steps:
                raise ValueError(f"activation step for {m} must be in 1..{self.schedule.n_steps}")
        object.__setattr__(self, "activation", tuple(sorted(act.items())))

    def activation_step(self, module):
        return dict(self.activation).get(module, self.schedule.n_steps)

    def active(self, module, t):
        return module in self.enable and t <= self.activation_step(module)

    def with_modules(self, enable, activation=None):
        return replace(self, enable=frozenset(enable),
                       activation=self.activation if activation is None else tuple(activation))


@dataclass
class RolloutResult:
    index: int
    spline: bspline.TrajectorySpline
    cost: float
    collided: bool
    dyn_violation: float
    wall_ms: float
    qp_status: str = None
    module_calls: int = 0
    tf_updates: int = 0

    @property
    def failed(self):
        return self.qp_status not in (None, qp.OPTIMAL)

    @property
    def safe(self):
        return not self.failed and not self.collided and self.dyn_violation <= metrics.VIOLATION_TOL


@dataclass
class PlanResult:
    best: bspline.TrajectorySpline
    best_index: int
    best_safe: bool
    rollouts: list

    @property
    def all(self):
        return self.rollouts

    @property
    def best_rollout(self):
        return self.rollouts[self.best_index]

    @property
    def wall_ms(self):
        return sum(r.wall_ms for r in self.rollouts)

    @property
    def module_calls(self):
        return sum(r.module_calls for r in self.rollouts)


def start_pins(layout, t_f, start_pos, start_vel, start_acc):
    """Equality rows fixing position, velocity and acceleration at ``t = 0``.

    With a clamped cubic these touch exactly the first three position
    control points.
    """
    knots = bspline.KnotVector(layout.pos_degree, layout.n_pos, t_f)
    rows, rhs = [], []
    values = (start_pos, start_vel, start_acc)
    for order in range(min(3, layout.pos_degree)):
        op = np.eye(layout.n_pos)[:1] if order == 0 else \
            bspline.derivative_operator(knots, layout.pos_degree, layout.n_pos, order)[:1]
        for axis in range(3):
            row = np.zeros(layout.n_ctrl_entries)
            row[axis:3 * layout.n_pos:3] = op[0]
            rows.append(row)
            rhs.append(values[order][axis])
    return np.array(rows), np.array(rhs)


def project(spline, limits, layout, scenario=None, pin_start=True, tol=qp.FEAS_TOL):
    """Minimum-deviation projection of a decoded spline onto its dynamic limits."""
    cset = dynconstraints.build(limits, layout.n_pos, layout.n_yaw,
                                layout.pos_degree, layout.yaw_degree, spline.t_f)
    q_nn = np.concatenate([spline.pos_ctrl.reshape(-1), spline.yaw_ctrl])
    eq_m = eq_v = None
    if pin_start and scenario is not None:
        eq_m, eq_v = start_pins(layout, spline.t_f, scenario.start_pos,
                                scenario.start_vel, scenario.start_acc)
    sol = qp.solve(qp.QpProblem.from_constraints(q_nn, cset, None, eq_m, eq_v), tol=tol)
    out = spline.replace(pos_ctrl=sol.q_opt[:3 * layout.n_pos].reshape(-1, 3),
                         yaw_ctrl=sol.q_opt[3 * layout.n_pos:])
    return out, sol


def rollout_rngs(root_seed, n):
    entropy = list(root_seed) if isinstance(root_seed, (tuple, list)) else root_seed
    return [np.random.Generator(np.random.PCG64(ss))
            for ss in np.random.SeedSequence(entropy).spawn(n)]


def run_rollout(index, scenario, predictor, config, rng):
    t0 = time.perf_counter()
    limits = config.limits or scenario.limits
    layout = ActionLayout.for_scenario(scenario, config.n_pos, config.n_yaw)
    params, sched = config.guide, config.schedule
    calls = tf_updates = 0

    state = sample_initial(layout.dim, rng, sched.n_steps)
    for t in range(sched.n_steps, 0, -1):
        state = reverse_step(state, predictor, sched, rng, scenario, config.noise_scale)
        if config.active(GOAL, t):
            state = guidance.goal_condition(state, scenario.goal, layout)
            calls += 1
        if config.active(TF_GUIDE, t):
            state, n = guidance.repeat_tf_guide(state, limits, params, layout)
            tf_updates += n
            calls += 1
        if config.active(COLLISION, t):
            state = guidance.collision_guide(state, scenario.obstacles, params, layout)
            calls += 1
        if config.active(GOAL, t) and t != 1:
            state = guidance.goal_condition(state, scenario.goal, layout)
            calls += 1

    spline = layout.decode(state.flat, params.tf_min, params.tf_max)
    status = None
    if QP in config.enable:
        spline, sol = project(spline, limits, layout, scenario, config.pin_start, config.qp_tol)
        status = sol.status
        calls += 1
    c = metrics.cost(spline, scenario)
    safety = metrics.safety_metrics(spline, scenario, limits)
    wall = 1e3 * (time.perf_counter() - t0)
    return RolloutResult(index, spline, c, safety.collided, safety.dyn_violation, wall,
                         status, calls, tf_updates)


def select_best(rollouts):
    """Cheapest safe rollout; else cheapest non-failed; else cheapest. Lowest index on ties."""
    for pool, safe in (([r for r in rollouts if r.safe], True),
                       ([r for r in rollouts if not r.failed], False),
                       (list(rollouts), False)):
        if pool:
            best = min(pool, key=lambda r: (r.cost, r.index))
            return best, safe
    raise ValueError("no rollouts")


def plan(scenario, predictor, config=None):
    config = config or PlannerConfig()
    rngs = rollout_rngs(config.root_seed, config.n_rollouts)
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            futures = [pool.submit(run_rollout, i, scenario, predictor, config, rngs[i])
                       for i in range(config.n_rollouts)]
            rollouts = [f.result() for f in futures]
    else:
        rollouts = [run_rollout(i, scenario, predictor, config, rngs[i])
                    for i in range(config.n_rollouts)]
    best, safe = select_best(rollouts)
    return PlanResult(best.spline, best.index, safe, rollouts)


# ---------------------------------------------------------------------------
# ablation grids

def expand_ablation(grid, n_steps):
    """Turn an ablation grid from a suite file into ``[(label, enable, activation), ...]``.

    Three shapes are accepted:

    * ``{rows: [[modules...], ...]}`` - explicit enable sets, in order;
    * ``{factors: {module: [false, true], ...}, base: [modules...]}`` -
      the cartesian product of on/off factors on top of ``base``;
    * ``{enable: [modules...], sweep_activation: {modules: [...], steps: [...]}}`` -
      one entry per activation step applied to all listed modules.
    """
    if not isinstance(grid, dict):
        raise ValueError("ablation grid must be a mapping")
    if "rows" in grid:
        out = []
        for row in grid["rows"]:
            mods = sorted({module_name(m) for m in (row or [])}, key=MODULES.index)
            out.append(("+".join(_short(m) for m in mods) or "none", frozenset(mods), ()))
        return out
    if "factors" in grid:
        factors = grid["factors"]
        base = {module_name(m) for m in grid.get("base", [])}
        names = [module_name(m) for m in factors]
        out = []
        for values in itertools.product(*(factors[k] for k in factors)):
            mods = set(base) | {n for n, v in zip(names, values) if v}
            mods = sorted(mods, key=MODULES.index)
            label = "_".join(f"{_short(n)}-{'on' if v else 'off'}" for n, v in zip(names, values))
            out.append((label, frozenset(mods), ()))
        return out
    if "sweep_activation" in grid:
        sweep = grid["sweep_activation"]
        mods = sorted({module_name(m) for m in grid.get("enable", [])}, key=MODULES.index)
        targets = [module_name(m) for m in sweep.get("modules", [])]
        steps = sweep.get("steps") or list(range(1, n_steps + 1))
        out = []
        for s in steps:
            s = int(s)
            if not 1 <= s <= n_steps:
                raise ValueError(f"activation step {s} outside 1..{n_steps}")
            out.append((f"act-{s}", frozenset(mods), tuple((m, s) for m in targets)))
        return out
    raise ValueError("ablation grid needs one of: rows, factors, sweep_activation")


def _short(module):
    return {GOAL: "goal", TF_GUIDE: "tf", COLLISION: "coll", QP: "qp"}[module]


# ---------------------------------------------------------------------------
# predictors

def demonstrator_predictor(kind, config=None):
    """Surrogate whose nominals come from the demonstrator, per scenario."""
    config = config or PlannerConfig()

    def source(scenario):
        layout = ActionLayout.for_scenario(scenario, config.n_pos, config.n_yaw)
        noms = demonstrator.nominal_trajectories(scenario, config.n_pos, config.n_yaw)
        return [layout.encode(s) for s in noms]

    return SurrogatePredictor(kind, config.schedule, source=source)


def make_predictor(spec, config=None):
    """Build a predictor from ``surrogate:interpolate``, ``surrogate:multimodal`` or ``weights:<path>``."""
    config = config or PlannerConfig()
    kind, _, arg = spec.partition(":")
    if kind == "surrogate":
        return demonstrator_predictor(arg or "interpolate", config)
    if kind == "weights":
        if not arg:
            raise ValueError("weights predictor needs a path: weights:<file>")
        return load_weights(arg, 3 * config.n_pos + config.n_yaw + 1)
    raise ValueError(f"unknown predictor {spec!r}; use surrogate:<kind> or weights:<path>")
