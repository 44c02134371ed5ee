import math
from pathlib import Path
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, interpolate

from cgdplan import bspline, demonstrator, dynconstraints as dc, metrics, planner, qp
from cgdplan.bspline import TrajectorySpline
from cgdplan.denoiser import ActionLayout
from cgdplan.planner import PlannerConfig, RolloutResult

from cgdplan import cli, scenario_io

from helpers import HALVED, TRAINING, parabola_ctrl, random_spline, scenario, straight_line

OBSTACLE = [((2.0, 0.0, 1.0), 0.6)]


def ood_scenario(goal=(4.0, 0.0, 1.0), obstacles=OBSTACLE, sid="ood"):
    return scenario(goal, obstacles, limits_kw=HALVED, design_kw=TRAINING, sid=sid)


# --- metrics --------------------------------------------------------------------

def test_cost_of_stationary_spline_at_goal():
    sc = scenario()
    spl = TrajectorySpline(np.tile(sc.goal, (10, 1)), np.zeros(9), 3.5)
    assert metrics.cost(spl, sc) == pytest.approx(sc.weights.time * 3.5, rel=1e-14)


def test_goal_term_is_quadratic():
    sc = scenario(goal=(0.0, 0.0, 2.0))
    w = sc.weights

    def goal_term(err):
        spl = TrajectorySpline(np.tile(sc.goal + [err, 0, 0], (10, 1)), np.zeros(9), 2.0)
        return metrics.cost(spl, sc) - w.time * 2.0

    assert goal_term(0.2) == pytest.approx(w.goal * 0.04)
    assert goal_term(0.4) == pytest.approx(4 * goal_term(0.2))


def test_jerk_integral_zero_for_parabola():
    spl = TrajectorySpline(parabola_ctrl(10, 3.0), np.zeros(9), 3.0)
    assert metrics.jerk_integral(spl) < 1e-18


def test_jerk_integral_matches_adaptive_quadrature():
    rng = np.random.default_rng(60)
    for _ in range(20):
        spl = random_spline(rng)
        tck = interpolate.BSpline(spl.pos_knots.knots, spl.pos_ctrl, 3).derivative(3)
        edges = np.unique(spl.pos_knots.knots)
        ref = sum(integrate.quad(lambda t: float(np.sum(tck(t) ** 2)), a, b, epsabs=0, epsrel=1e-12)[0]
                  for a, b in zip(edges[:-1], edges[1:]))
        assert metrics.jerk_integral(spl) == pytest.approx(ref, rel=1e-9)


def test_jerk_integral_against_trapezoid():
    spl = random_spline(np.random.default_rng(61), n_pos=10, n_yaw=9, t_f=3.0)
    # the integrand is piecewise constant for a cubic: sample each span's interior densely
    edges = np.unique(spl.pos_knots.knots)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        t = np.linspace(a, b, 2001)[1:-1]
        y = np.sum(bspline.sample(spl, t, 3) ** 2, axis=1)
        total += np.trapezoid(y, t) * (b - a) / (t[-1] - t[0])
    assert abs(metrics.jerk_integral(spl) - total) / total < 1e-6


def test_sample_times_grid():
    t = metrics.sample_times(2.0)
    assert t[0] == 0.0 and t[-1] == 2.0 and len(t) == 2001


def test_safety_metrics_collision_and_limits():
    line = straight_line([1, 0, 0], 1.0, origin=(0.0, 0.0, 1.0))     # x from 0 to 3
    hit = scenario(obstacles=[((1.5, 0.0, 1.0), 0.2)])
    miss = scenario(obstacles=[((1.5, 1.0, 1.0), 0.2)])
    a = metrics.safety_metrics(line, hit)
    b = metrics.safety_metrics(line, miss)
    assert a.collided and a.min_clearance == pytest.approx(-0.2, abs=1e-9)
    assert not b.collided and b.min_clearance == pytest.approx(0.8, abs=1e-9)
    assert a.dyn_violation == 0.0
    fast = straight_line([1, 0, 0], 3.0)
    assert metrics.safety_metrics(fast, miss).dyn_violation == pytest.approx(0.5, abs=1e-9)


def test_box_feasible_spline_has_no_dense_violation():
    rng = np.random.default_rng(62)
    lim = dc.DynamicLimits(**TRAINING)
    checked = 0
    for _ in range(200):
        spl = random_spline(rng, n_pos=10, n_yaw=9, scale=0.15, t_f=float(rng.uniform(3, 6)))
        spl = spl.replace(yaw_ctrl=spl.yaw_ctrl * 0.01)
        q = np.concatenate([spl.pos_ctrl.reshape(-1), spl.yaw_ctrl])
        if dc.violation(dc.build(lim, 10, 9, 3, 2, spl.t_f), q)[0] == 0.0:
            assert metrics.safety_metrics(spl, scenario()).dyn_violation == 0.0
            checked += 1
    assert checked > 20


def test_homotopy_side():
    sc = scenario(obstacles=OBSTACLE)
    left = straight_line([1, 0, 0], 4 / 3, origin=(0.0, 1.0, 1.0))
    right = straight_line([1, 0, 0], 4 / 3, origin=(0.0, -1.0, 1.0))
    assert metrics.homotopy_side(left, sc) == 1
    assert metrics.homotopy_side(right, sc) == -1
    assert metrics.homotopy_side(left, scenario()) == 0


# --- demonstrator ---------------------------------------------------------------

def _max_ratio(spl, lim):
    r = 0.0
    for k in (1, 2, 3):
        d = bspline.derivative_ctrl(spl.pos_ctrl, spl.pos_knots, 3, k)
        r = max(r, float(np.max(np.abs(d) / lim.bounds(k)[1])))
    return r


def test_demonstrator_straight_when_clear():
    sc = scenario()
    (nom,) = demonstrator.nominal_trajectories(sc, 10, 9)
    assert np.allclose(nom.pos_ctrl[:3], sc.start_pos) and np.allclose(nom.pos_ctrl[-3:], sc.goal)
    assert _max_ratio(nom, sc.design_limits) == pytest.approx(demonstrator.DESIGN_MARGIN, rel=1e-12)


def test_demonstrator_two_sides_around_obstacle():
    sc = ood_scenario()
    noms = demonstrator.nominal_trajectories(sc, 10, 9)
    assert len(noms) == 2
    assert {metrics.homotopy_side(n, sc) for n in noms} == {1, -1}
    for n in noms:
        assert metrics.clearance(n, sc, 200.0) >= demonstrator.CLEARANCE
        assert _max_ratio(n, sc.design_limits) == pytest.approx(demonstrator.DESIGN_MARGIN, rel=1e-12)
        assert metrics.safety_metrics(n, sc, sc.design_limits).dyn_violation == 0.0
        # halved limits make the nominal out of distribution
        assert metrics.safety_metrics(n, sc).dyn_violation > 0.0
    assert metrics.cost(noms[0], sc) <= metrics.cost(noms[1], sc)


def test_min_time_scale_errors():
    with pytest.raises(ValueError):
        demonstrator.min_time_scale(np.zeros((10, 3)), np.zeros(9), dc.DynamicLimits(**TRAINING))
    with pytest.raises(ValueError):
        demonstrator.nominal_trajectories(scenario(), 6, 5)


# --- config ---------------------------------------------------------------------

def test_config_validation_and_aliases():
    cfg = PlannerConfig(enable={"tf", "qp"}, activation=(("obst", 2),))
    assert cfg.enable == frozenset({planner.TF_GUIDE, planner.QP})
    assert cfg.activation_step(planner.COLLISION) == 2 and cfg.activation_step(planner.QP) == 5
    assert cfg.active(planner.TF_GUIDE, 5) and not cfg.active(planner.COLLISION, 1)
    with pytest.raises(ValueError):
        PlannerConfig(n_rollouts=0)
    with pytest.raises(ValueError):
        PlannerConfig(activation=(("tf", 6),))
    with pytest.raises(ValueError):
        PlannerConfig(enable={"warp"})


def test_make_predictor_errors():
    with pytest.raises(ValueError):
        planner.make_predictor("oracle")
    with pytest.raises(ValueError):
        planner.make_predictor("weights:")
    with pytest.raises(ValueError):
        planner.make_predictor("surrogate:magic")


# --- ablation grids --------------------------------------------------------------

def test_expand_rows_grid():
    out = planner.expand_ablation({"rows": [[], ["qp"], ["tf", "qp"], ["goal", "tf", "obst", "qp"]]}, 5)
    assert [o[0] for o in out] == ["none", "qp", "tf+qp", "goal+tf+coll+qp"]
    assert out[0][1] == frozenset() and out[3][1] == frozenset(planner.MODULES)


def test_expand_factor_grid():
    out = planner.expand_ablation({"factors": {"qp": [False, True], "tf": [False, True]},
                                   "base": ["goal"]}, 5)
    assert [o[0] for o in out] == ["qp-off_tf-off", "qp-off_tf-on", "qp-on_tf-off", "qp-on_tf-on"]
    assert out[0][1] == frozenset({planner.GOAL})
    assert out[3][1] == frozenset({planner.GOAL, planner.QP, planner.TF_GUIDE})


def test_expand_activation_grid():
    out = planner.expand_ablation({"enable": list(planner.MODULES),
                                   "sweep_activation": {"modules": ["tf"], "steps": [1, 3]}}, 5)
    assert out == [("act-1", frozenset(planner.MODULES), ((planner.TF_GUIDE, 1),)),
                   ("act-3", frozenset(planner.MODULES), ((planner.TF_GUIDE, 3),))]
    assert len(planner.expand_ablation({"sweep_activation": {"modules": ["tf"]}}, 5)) == 5
    with pytest.raises(ValueError):
        planner.expand_ablation({"sweep_activation": {"steps": [9]}}, 5)
    with pytest.raises(ValueError):
        planner.expand_ablation({"other": 1}, 5)


# --- rollouts -------------------------------------------------------------------

def _r(i, cost, collided=False, viol=0.0, status=qp.OPTIMAL):
    return RolloutResult(i, None, cost, collided, viol, 0.0, status)


def test_select_best_prefers_safe_then_cheap():
    rs = [_r(0, 1.0, collided=True), _r(1, 5.0), _r(2, 3.0, viol=1e-3), _r(3, 5.0)]
    best, safe = planner.select_best(rs)
    assert best.index == 1 and safe
    best, safe = planner.select_best([_r(0, 2.0, collided=True), _r(1, 1.0, status=qp.INFEASIBLE)])
    assert best.index == 0 and not safe
    best, _ = planner.select_best([_r(0, 2.0, status=qp.INFEASIBLE), _r(1, 1.0, status=qp.INFEASIBLE)])
    assert best.index == 1
    with pytest.raises(ValueError):
        planner.select_best([])


def test_plan_is_deterministic_and_threads_agree():
    sc = ood_scenario()
    cfg = PlannerConfig(n_rollouts=4, root_seed=(3, 1))
    pred = planner.make_predictor("surrogate:multimodal", cfg)
    a = planner.plan(sc, pred, cfg)
    b = planner.plan(sc, pred, cfg)
    c = planner.plan(sc, pred, replace(cfg, workers=4))
    for x, y in ((a, b), (a, c)):
        assert x.best_index == y.best_index
        for r, s in zip(x.rollouts, y.rollouts):
            assert np.array_equal(r.spline.pos_ctrl, s.spline.pos_ctrl) and r.cost == s.cost
    d = planner.plan(sc, pred, replace(cfg, root_seed=(3, 2)))
    assert not np.array_equal(d.rollouts[0].spline.pos_ctrl, a.rollouts[0].spline.pos_ctrl)


def test_rollout_rngs_independent():
    g = planner.rollout_rngs(5, 3)
    draws = [r.normal(size=4) for r in g]
    assert not np.allclose(draws[0], draws[1])
    assert np.array_equal(planner.rollout_rngs(5, 3)[2].normal(size=4), draws[2])
    assert np.array_equal(planner.rollout_rngs((5,), 1)[0].normal(size=4),
                          planner.rollout_rngs(5, 1)[0].normal(size=4))


def test_guides_off_without_noise_returns_nominal():
    sc = ood_scenario()
    cfg = PlannerConfig(n_rollouts=2, enable=frozenset(), noise_scale=0.0)
    res = planner.plan(sc, planner.make_predictor("surrogate:interpolate", cfg), cfg)
    nom = demonstrator.nominal_trajectories(sc, 10, 9)[0]
    for r in res.rollouts:
        assert np.allclose(r.spline.pos_ctrl, nom.pos_ctrl, atol=1e-9)
        assert r.spline.t_f == pytest.approx(nom.t_f, rel=1e-9)
        assert r.module_calls == 0 and r.qp_status is None


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), angle=st.floats(-math.pi, math.pi))
def test_qp_output_is_always_feasible(seed, angle):
    goal = (4 * math.cos(angle), 4 * math.sin(angle), 1.0)
    centre = (2 * math.cos(angle), 2 * math.sin(angle), 1.0)
    sc = ood_scenario(goal, [(centre, 0.6)])
    cfg = PlannerConfig(n_rollouts=2, root_seed=seed)
    for enable in ({"qp"}, planner.MODULES):
        res = planner.plan(sc, planner.make_predictor("surrogate:multimodal", cfg), cfg.with_modules(enable))
        for r in res.rollouts:
            assert r.qp_status == qp.OPTIMAL and r.dyn_violation <= metrics.VIOLATION_TOL


def test_start_state_is_pinned():
    sc = replace(ood_scenario(), start_vel=np.array([0.3, -0.2, 0.0]), start_acc=np.array([0.0, 0.5, 0.1]))
    cfg = PlannerConfig(n_rollouts=3, root_seed=11)
    res = planner.plan(sc, planner.make_predictor("surrogate:interpolate", cfg), cfg)
    for r in res.rollouts:
        s = r.spline
        assert np.allclose(bspline.evaluate(s, 0.0), sc.start_pos, atol=1e-8)
        assert np.allclose(bspline.evaluate(s, 0.0, 1), sc.start_vel, atol=1e-8)
        assert np.allclose(bspline.evaluate(s, 0.0, 2), sc.start_acc, atol=1e-7)


def test_start_pins_rows():
    layout = ActionLayout(10, 9)
    m, v = planner.start_pins(layout, 2.0, [1, 2, 3], [0.1, 0.2, 0.3], [0, 0, -1])
    spl = random_spline(np.random.default_rng(63), n_pos=10, n_yaw=9, t_f=2.0)
    q = np.concatenate([spl.pos_ctrl.reshape(-1), spl.yaw_ctrl])
    got = m @ q
    want = np.concatenate([bspline.evaluate(spl, 0.0, k) for k in range(3)])
    assert m.shape == (9, 39) and np.allclose(got, want)
    assert np.array_equal(np.flatnonzero(np.any(m != 0, axis=0)), np.arange(9))
    assert v.tolist() == [1, 2, 3, 0.1, 0.2, 0.3, 0, 0, -1]


def test_module_calls_count():
    sc = ood_scenario()
    cfg = PlannerConfig(n_rollouts=1)
    pred = planner.make_predictor("surrogate:interpolate", cfg)
    full = planner.plan(sc, pred, cfg).rollouts[0]
    # goal twice per step except the last, tf and collision once per step, QP once
    assert full.module_calls == 9 + 5 + 5 + 1
    late = planner.plan(sc, pred, replace(cfg, activation=(("tf", 2), ("obst", 1)))).rollouts[0]
    assert late.module_calls == 9 + 2 + 1 + 1


def test_ablation_ordering_on_ood_subset():
    suite = scenario_io.read_suite(Path(__file__).resolve().parents[1] / "suites" / "ood.yaml")
    scs = suite.scenarios[:25]
    cfg = PlannerConfig(n_rollouts=4)
    pred = planner.make_predictor("surrogate:interpolate", cfg)

    def agg(*mods):
        return cli.run_suite(scs, pred, cfg.with_modules({planner.module_name(m) for m in mods}))[0].aggregate()

    only_qp, with_tf, with_coll = agg("qp"), agg("qp", "tf"), agg("qp", "tf", "collision")
    assert only_qp["violation_pct"] == with_tf["violation_pct"] == with_coll["violation_pct"] == 0.0
    assert with_tf["mean_cost"] < only_qp["mean_cost"]
    assert with_coll["collision_pct"] == 0.0


def test_plan_result_all_is_rollouts():
    cfg = PlannerConfig(n_rollouts=2)
    res = planner.plan(ood_scenario(), planner.make_predictor("surrogate:interpolate", cfg), cfg)
    assert res.all is res.rollouts and res.best is res.best_rollout.spline
