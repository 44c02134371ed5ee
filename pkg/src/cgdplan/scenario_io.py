"""Scenario suites (YAML) and benchmark reports (CSV or JSON).

Suite file schema, version 1::

    version: 1
    defaults:                  # every key optional; merged into each scenario
      start: {position: [0, 0, 1], velocity: [0, 0, 0], acceleration: [0, 0, 0], yaw: 0.0}
      limits: {v_max: 1.25, a_max: 2.75, j_max: 15.0, yaw_rate_max_deg: 2.5}
      design_limits: {v_max: 2.5, a_max: 5.5, j_max: 30.0, yaw_rate_max_deg: 5.0}
      weights: {jerk: 1.0e-6, time: 8.0, goal: 1000.0}
      tf_stats: {mean: 3.0, std: 1.0}
    scenarios:                 # explicit scenarios
      - id: corridor
        goal: [4.0, 0.0, 1.0]
        obstacles: [{center: [2.0, 0.0, 1.0], radius: 0.6}]
    generate:                  # seeded random scenarios
      - prefix: ood
        count: 100
        seed: 7
        goal_radius: 4.0
        obstacle: {radius: [0.5, 0.8], fraction: [0.35, 0.65], lateral: [0.0, 0.0]}
    ablations:                 # named grids, see cgdplan.planner.expand_ablation
      ladder:
        rows: [[], [qp], [qp, tf_guide], [qp, tf_guide, collision_guide],
               [qp, tf_guide, collision_guide, goal_conditioning]]

Limits accept a scalar (all axes) or three numbers per bound; yaw rate is
``yaw_rate_max`` in rad/s or ``yaw_rate_max_deg`` in deg/s.
"""
import csv
import io
import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
import yaml

from .dynconstraints import DynamicLimits
from .guidance import Obstacle
from .metrics import VIOLATION_TOL

SCHEMA_VERSION = 1

# limits the demonstrations are designed for, and the halved deployment set
TRAINING_LIMITS = dict(v_max=2.5, a_max=5.5, j_max=30.0, yaw_rate_max=math.radians(5.0))
HALVED_LIMITS = dict(v_max=1.25, a_max=2.75, j_max=15.0, yaw_rate_max=math.radians(2.5))


class SuiteError(ValueError):
    """Schema violation; the message starts with the offending field path."""


@dataclass(frozen=True)
class CostWeights:
    jerk: float = 1e-6
    time: float = 8.0
    goal: float = 1e3


@dataclass(frozen=True)
class TfStats:
    mean: float = 3.0
    std: float = 1.0


def _vec3(value, where):
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise SuiteError(f"{where}: expected 3 finite numbers, got {value!r}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Scenario:
    id: str
    start_pos: np.ndarray
    goal: np.ndarray
    obstacles: tuple = ()
    limits: DynamicLimits = field(default_factory=lambda: DynamicLimits(**TRAINING_LIMITS))
    design_limits: DynamicLimits = None
    start_vel: np.ndarray = (0.0, 0.0, 0.0)
    start_acc: np.ndarray = (0.0, 0.0, 0.0)
    start_yaw: float = 0.0
    weights: CostWeights = CostWeights()
    tf_stats: TfStats = TfStats()

    def __post_init__(self):
        for name in ("start_pos", "goal", "start_vel", "start_acc"):
            object.__setattr__(self, name, _vec3(getattr(self, name), f"{self.id}.{name}"))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "start_yaw", float(self.start_yaw))
        if self.design_limits is None:
            object.__setattr__(self, "design_limits", self.limits)
        if np.linalg.norm(self.goal - self.start_pos) < 1e-9:
            raise SuiteError(f"{self.id}: goal coincides with start")

    def key(self):
        """Hashable identity used for caching per-scenario data."""
        return (self.id, tuple(self.start_pos), tuple(self.goal),
                tuple((tuple(o.center), o.radius) for o in self.obstacles),
                _limits_key(self.design_limits), self.start_yaw,
                self.tf_stats.mean, self.tf_stats.std)

    def with_limits(self, limits):
        return _replace(self, limits=limits)


def _replace(sc, **changes):
    fields = {k: getattr(sc, k) for k in sc.__dataclass_fields__}
    fields.update(changes)
    return Scenario(**fields)


def _limits_key(lim):
    return (tuple(lim.v_max), tuple(lim.a_max), tuple(lim.j_max), lim.yaw_rate_max,
            tuple(lim.v_min), tuple(lim.a_min), tuple(lim.j_min), lim.yaw_rate_min)


def scenarios_equal(a, b):
    return a.key() == b.key() and _limits_key(a.limits) == _limits_key(b.limits) \
        and np.array_equal(a.start_vel, b.start_vel) and np.array_equal(a.start_acc, b.start_acc) \
        and a.weights == b.weights


# ---------------------------------------------------------------------------
# parsing

def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SuiteError(f"{where}: expected a finite number, got {value!r}")
    return float(value)


def _axes(value, where):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.full(3, _number(value, where))
    return _vec3(value, where)


def _parse_limits(d, where):
    if not isinstance(d, dict):
        raise SuiteError(f"{where}: expected a mapping")
    known = {"v_max", "a_max", "j_max", "yaw_rate_max", "yaw_rate_max_deg"}
    extra = set(d) - known
    if extra:
        raise SuiteError(f"{where}: unknown keys {sorted(extra)}")
    for key in ("v_max", "a_max", "j_max"):
        if key not in d:
            raise SuiteError(f"{where}.{key}: missing")
    if "yaw_rate_max" in d:
        yaw = _number(d["yaw_rate_max"], f"{where}.yaw_rate_max")
    elif "yaw_rate_max_deg" in d:
        yaw = math.radians(_number(d["yaw_rate_max_deg"], f"{where}.yaw_rate_max_deg"))
    else:
        raise SuiteError(f"{where}.yaw_rate_max: missing")
    try:
        return DynamicLimits(_axes(d["v_max"], f"{where}.v_max"), _axes(d["a_max"], f"{where}.a_max"),
                             _axes(d["j_max"], f"{where}.j_max"), yaw)
    except ValueError as exc:
        raise SuiteError(f"{where}: {exc}") from None


def _merge(base, override):
    out = dict(base)
    for k, v in override.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


_SCENARIO_KEYS = {"id", "goal", "obstacles", "start", "limits", "design_limits", "weights", "tf_stats"}


def _parse_scenario(d, defaults, where):
    if not isinstance(d, dict):
        raise SuiteError(f"{where}: expected a mapping")
    extra = set(d) - _SCENARIO_KEYS
    if extra:
        raise SuiteError(f"{where}: unknown keys {sorted(extra)}")
    d = _merge(defaults, d)
    if "id" not in d:
        raise SuiteError(f"{where}.id: missing")
    if "goal" not in d:
        raise SuiteError(f"{where}.goal: missing")
    start = d.get("start", {})
    obstacles = []
    for j, o in enumerate(d.get("obstacles") or []):
        ow = f"{where}.obstacles[{j}]"
        if not isinstance(o, dict) or "center" not in o or "radius" not in o:
            raise SuiteError(f"{ow}: expected {{center, radius}}")
        radius = _number(o["radius"], f"{ow}.radius")
        if radius < 0:
            raise SuiteError(f"{ow}.radius: must be >= 0")
        obstacles.append(Obstacle(_vec3(o["center"], f"{ow}.center"), radius))
    limits = _parse_limits(d["limits"], f"{where}.limits") if "limits" in d \
        else DynamicLimits(**TRAINING_LIMITS)
    design = _parse_limits(d["design_limits"], f"{where}.design_limits") if "design_limits" in d \
        else None
    weights = CostWeights(**{k: _number(v, f"{where}.weights.{k}")
                             for k, v in d.get("weights", {}).items()})
    tf = TfStats(**{k: _number(v, f"{where}.tf_stats.{k}") for k, v in d.get("tf_stats", {}).items()})
    if tf.std <= 0:
        raise SuiteError(f"{where}.tf_stats.std: must be positive")
    return Scenario(
        id=str(d["id"]),
        start_pos=_vec3(start.get("position", [0.0, 0.0, 1.0]), f"{where}.start.position"),
        goal=_vec3(d["goal"], f"{where}.goal"),
        obstacles=tuple(obstacles),
        limits=limits,
        design_limits=design,
        start_vel=_vec3(start.get("velocity", [0.0, 0.0, 0.0]), f"{where}.start.velocity"),
        start_acc=_vec3(start.get("acceleration", [0.0, 0.0, 0.0]), f"{where}.start.acceleration"),
        start_yaw=_number(start.get("yaw", 0.0), f"{where}.start.yaw"),
        weights=weights,
        tf_stats=tf,
    )


def _range(value, where, default):
    value = default if value is None else value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value, value]
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise SuiteError(f"{where}: expected [low, high]")
    lo, hi = _number(value[0], where), _number(value[1], where)
    if lo > hi:
        raise SuiteError(f"{where}: low exceeds high")
    return lo, hi


_GENERATE_KEYS = {"prefix", "count", "seed", "goal_radius", "obstacle",
                  "start", "limits", "design_limits", "weights", "tf_stats"}


def generate_scenarios(spec, defaults=None, where="generate[0]"):
    """Seeded random scenarios: goals on a horizontal circle, one obstacle on the way.

    Uses PCG64 explicitly so the output is the same on every platform.
    """
    defaults = defaults or {}
    extra = set(spec) - _GENERATE_KEYS
    if extra:
        raise SuiteError(f"{where}: unknown keys {sorted(extra)}")
    for key in ("count", "seed", "goal_radius"):
        if key not in spec:
            raise SuiteError(f"{where}.{key}: missing")
    count = spec["count"]
    if not isinstance(count, int) or count < 0:
        raise SuiteError(f"{where}.count: expected a nonnegative integer")
    seed = spec["seed"]
    if not isinstance(seed, int) or seed < 0:
        raise SuiteError(f"{where}.seed: expected a nonnegative integer")
    radius = _number(spec["goal_radius"], f"{where}.goal_radius")
    if radius <= 0:
        raise SuiteError(f"{where}.goal_radius: must be positive")
    obs_spec = spec.get("obstacle", {})
    with_obstacle = obs_spec is not None and obs_spec is not False
    obs_spec = obs_spec or {}
    r_range = _range(obs_spec.get("radius"), f"{where}.obstacle.radius", [0.5, 0.8])
    f_range = _range(obs_spec.get("fraction"), f"{where}.obstacle.fraction", [0.35, 0.65])
    l_range = _range(obs_spec.get("lateral"), f"{where}.obstacle.lateral", [0.0, 0.0])
    prefix = str(spec.get("prefix", "gen"))
    overrides = {k: spec[k] for k in ("start", "limits", "design_limits", "weights", "tf_stats")
                 if k in spec}
    base = _merge(defaults, overrides)
    start = _vec3(base.get("start", {}).get("position", [0.0, 0.0, 1.0]), f"{where}.start.position")

    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for i in range(count):
        angle = rng.uniform(-math.pi, math.pi)
        direction = np.array([math.cos(angle), math.sin(angle), 0.0])
        goal = start + radius * direction
        entry = {"id": f"{prefix}-{i:04d}", "goal": goal.tolist()}
        frac, rad, lat = rng.uniform(*f_range), rng.uniform(*r_range), rng.uniform(*l_range)
        if with_obstacle:
            left = np.array([-direction[1], direction[0], 0.0])
            center = start + frac * radius * direction + lat * left
            entry["obstacles"] = [{"center": center.tolist(), "radius": float(rad)}]
        out.append(_parse_scenario(entry, base, f"{where}[{i}]"))
    return out


@dataclass
class Suite:
    scenarios: list
    ablations: dict = field(default_factory=dict)

    def find(self, scenario_id):
        for sc in self.scenarios:
            if sc.id == scenario_id:
                return sc
        raise KeyError(f"no scenario with id {scenario_id!r}")


def parse_suite(doc):
    if doc is None:
        return Suite([])
    if not isinstance(doc, dict):
        raise SuiteError("suite: expected a mapping at the top level")
    extra = set(doc) - {"version", "defaults", "scenarios", "generate", "ablations"}
    if extra:
        raise SuiteError(f"suite: unknown keys {sorted(extra)}")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SuiteError(f"version: unsupported schema version {version!r}")
    defaults = doc.get("defaults") or {}
    if not isinstance(defaults, dict):
        raise SuiteError("defaults: expected a mapping")
    scenarios = [_parse_scenario(d, defaults, f"scenarios[{i}]")
                 for i, d in enumerate(doc.get("scenarios") or [])]
    for i, g in enumerate(doc.get("generate") or []):
        if not isinstance(g, dict):
            raise SuiteError(f"generate[{i}]: expected a mapping")
        scenarios += generate_scenarios(g, defaults, f"generate[{i}]")
    seen = set()
    for sc in scenarios:
        if sc.id in seen:
            raise SuiteError(f"scenarios: duplicate id {sc.id!r}")
        seen.add(sc.id)
    ablations = doc.get("ablations") or {}
    if not isinstance(ablations, dict):
        raise SuiteError("ablations: expected a mapping of name -> grid")
    return Suite(scenarios, ablations)


def read_suite(path):
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise SuiteError(f"{path}: not valid YAML: {exc}") from None
    return parse_suite(doc)


def load_suite(path):
    """Scenarios of a suite file, explicit ones first, then generated ones."""
    return read_suite(path).scenarios


def _limits_doc(lim):
    def axes(v):
        return float(v[0]) if np.all(v == v[0]) else [float(x) for x in v]
    return {"v_max": axes(lim.v_max), "a_max": axes(lim.a_max), "j_max": axes(lim.j_max),
            "yaw_rate_max": float(lim.yaw_rate_max)}


def scenario_doc(sc):
    return {
        "id": sc.id,
        "start": {"position": sc.start_pos.tolist(), "velocity": sc.start_vel.tolist(),
                  "acceleration": sc.start_acc.tolist(), "yaw": sc.start_yaw},
        "goal": sc.goal.tolist(),
        "obstacles": [{"center": o.center.tolist(), "radius": o.radius} for o in sc.obstacles],
        "limits": _limits_doc(sc.limits),
        "design_limits": _limits_doc(sc.design_limits),
        "weights": {"jerk": sc.weights.jerk, "time": sc.weights.time, "goal": sc.weights.goal},
        "tf_stats": {"mean": sc.tf_stats.mean, "std": sc.tf_stats.std},
    }


def dump_suite(scenarios, ablations=None):
    doc = {"version": SCHEMA_VERSION, "scenarios": [scenario_doc(s) for s in scenarios]}
    if ablations:
        doc["ablations"] = ablations
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def write_suite(scenarios, path, ablations=None):
    with open(path, "w") as fh:
        fh.write(dump_suite(scenarios, ablations))


# ---------------------------------------------------------------------------
# reports

REPORT_COLUMNS = ("id", "cost", "collided", "dyn_violation", "wall_ms")


@dataclass(frozen=True)
class ReportRow:
    id: str
    cost: float
    collided: bool
    dyn_violation: float
    wall_ms: float

    @property
    def violated(self):
        return self.dyn_violation > VIOLATION_TOL


def round_half_up(value, digits=1):
    q = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


@dataclass
class SuiteReport:
    rows: list = field(default_factory=list)

    def aggregate(self):
        n = len(self.rows)
        if n == 0:
            return {"n": 0, "mean_cost": math.nan, "collision_pct": math.nan,
                    "violation_pct": math.nan, "mean_wall_ms": math.nan}
        return {
            "n": n,
            "mean_cost": math.fsum(r.cost for r in self.rows) / n,
            "collision_pct": round_half_up(100.0 * sum(r.collided for r in self.rows) / n),
            "violation_pct": round_half_up(100.0 * sum(r.violated for r in self.rows) / n),
            "mean_wall_ms": math.fsum(r.wall_ms for r in self.rows) / n,
        }


def _fmt(x):
    return repr(float(x))


def format_aggregate(agg):
    return ("# aggregate n={n} mean_cost={c} collision_pct={cp} violation_pct={vp} "
            "mean_wall_ms={w}").format(n=agg["n"], c=_fmt(agg["mean_cost"]),
                                       cp=_fmt(agg["collision_pct"]), vp=_fmt(agg["violation_pct"]),
                                       w=_fmt(agg["mean_wall_ms"]))


def report_text(report, fmt="csv"):
    if fmt == "json":
        agg = report.aggregate() if report.rows else None
        doc = {
            "columns": list(REPORT_COLUMNS),
            "rows": [{"id": r.id, "cost": r.cost, "collided": bool(r.collided),
                      "dyn_violation": r.dyn_violation, "wall_ms": r.wall_ms} for r in report.rows],
            "aggregate": agg,
        }
        return json.dumps(doc, indent=2) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in report.rows:
        writer.writerow([r.id, _fmt(r.cost), int(bool(r.collided)), _fmt(r.dyn_violation),
                         _fmt(r.wall_ms)])
    if report.rows:
        buf.write(format_aggregate(report.aggregate()) + "\n")
    return buf.getvalue()


def write_report(report, path, fmt="csv"):
    text = report_text(report, fmt)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def read_report(path, fmt=None):
    """Read a report back; raises ``ValueError`` if its aggregate line disagrees with its rows."""
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    with open(path, newline="") as fh:
        text = fh.read()
    if fmt == "json":
        doc = json.loads(text)
        report = SuiteReport([ReportRow(r["id"], float(r["cost"]), bool(r["collided"]),
                                        float(r["dyn_violation"]), float(r["wall_ms"]))
                              for r in doc["rows"]])
        if doc.get("aggregate") is not None and report.rows:
            if _agg_differs(doc["aggregate"], report.aggregate()):
                raise ValueError(f"{path}: aggregate does not match rows")
        return report
    lines = text.splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    agg_lines = [ln for ln in lines if ln.startswith("# aggregate")]
    reader = csv.reader(body)
    header = next(reader, None)
    if header is None or tuple(header) != REPORT_COLUMNS:
        raise ValueError(f"{path}: expected header {','.join(REPORT_COLUMNS)}")
    rows = [ReportRow(r[0], float(r[1]), r[2] in ("1", "true", "True"), float(r[3]), float(r[4]))
            for r in reader if r]
    report = SuiteReport(rows)
    if agg_lines and agg_lines[-1] != format_aggregate(report.aggregate()):
        raise ValueError(f"{path}: aggregate line does not match rows")
    return report


def _agg_differs(a, b):
    return any(not (a[k] == b[k] or (isinstance(a[k], float) and math.isnan(a[k]) and math.isnan(b[k])))
               for k in b)
