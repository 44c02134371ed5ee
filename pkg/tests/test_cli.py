import csv
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from cgdplan import cli, planner, scenario_io
from cgdplan.denoiser import CONTEXT_FEATURES, STEP_FEATURES, Layer, save_weights

SUITE = {
    "version": 1,
    "defaults": {"limits": {"v_max": 1.25, "a_max": 2.75, "j_max": 15.0, "yaw_rate_max_deg": 2.5},
                 "design_limits": {"v_max": 2.5, "a_max": 5.5, "j_max": 30.0, "yaw_rate_max_deg": 5.0}},
    "scenarios": [
        {"id": "open", "goal": [3.0, 1.0, 1.0]},
        {"id": "block", "goal": [4.0, 0.0, 1.0],
         "obstacles": [{"center": [2.0, 0.1, 1.0], "radius": 0.6}]},
    ],
    "generate": [{"prefix": "g", "count": 2, "seed": 4, "goal_radius": 4.0}],
    "ablations": {
        "qp_x_tf": {"factors": {"qp": [False, True], "tf": [False, True]}, "base": ["goal"]},
        "late": {"enable": ["goal", "tf", "obst", "qp"],
                 "sweep_activation": {"modules": ["tf"], "steps": [1, 5]}},
    },
}


@pytest.fixture
def suite_path(tmp_path):
    path = tmp_path / "suite.yaml"
    path.write_text(yaml.safe_dump(SUITE))
    return str(path)


def run(*argv):
    return cli.main([str(a) for a in argv])


def common(suite_path, *extra):
    return ["--suite", suite_path, "--predictor", "surrogate:multimodal", "--rollouts", "2", *extra]


# --- plan -----------------------------------------------------------------------

def test_plan_prints_row_and_writes_trajectory(suite_path, tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert run("plan", *common(suite_path, "--scenario", "block", "--out", out)) == cli.EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "id,cost,collided,dyn_violation,wall_ms"
    assert lines[1].startswith("block,")
    assert lines[2].startswith("# best_rollout=") and "rollouts=2" in lines[2]
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == cli.TRAJ_COLUMNS
    data = np.array(rows[1:], dtype=float)
    assert data[0, 0] == 0.0 and np.allclose(data[0, 1:4], [0.0, 0.0, 1.0], atol=1e-8)
    step = np.diff(data[:, 0])
    assert np.allclose(step, step[0], rtol=1e-9) and 0.0099 < step[0] <= 0.01
    assert np.max(np.abs(data[:, 5:8])) <= 1.25 + 1e-7      # halved velocity limit holds


def test_plan_with_weight_file(suite_path, tmp_path, capsys):
    act = 3 * 10 + 9 + 1
    wpath = tmp_path / "zero.cgdw"
    save_weights(wpath, [Layer(np.zeros((act, act + STEP_FEATURES + CONTEXT_FEATURES)), np.zeros(act))])
    code = run("plan", "--suite", suite_path, "--predictor", f"weights:{wpath}", "--rollouts", "1",
               "--scenario", "open")
    assert code == cli.EXIT_OK
    assert capsys.readouterr().out.splitlines()[1].startswith("open,")


# --- exit codes -----------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    [],
    ["fly"],
    ["plan", "--suite", "missing.yaml", "--predictor", "surrogate:interpolate", "--scenario", "x"],
    ["bench", "--predictor", "surrogate:interpolate", "--out", "x.csv"],
])
def test_invalid_arguments_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as info:
        code = cli.main(argv)
        raise SystemExit(code)
    assert info.value.code == cli.EXIT_INVALID


@pytest.mark.parametrize("extra", [
    ["--scenario", "nope"],
    ["--scenario", "open", "--enable", "warp"],
    ["--scenario", "open", "--activate-at", "tf"],
    ["--scenario", "open", "--activate-at", "tf=9"],
    ["--scenario", "open", "--rollouts", "0"],
    ["--scenario", "open", "--rate", "0"],
])
def test_invalid_values_exit_1(suite_path, extra, capsys):
    assert run("plan", *common(suite_path), *extra) == cli.EXIT_INVALID
    assert "error" in capsys.readouterr().err


def test_bad_suite_and_predictor_exit_1(tmp_path, suite_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenarios: [{id: a}]\n")
    assert run("bench", "--suite", bad, "--predictor", "surrogate:interpolate",
               "--out", tmp_path / "r.csv") == cli.EXIT_INVALID
    assert "scenarios[0].goal" in capsys.readouterr().err
    junk = tmp_path / "junk.cgdw"
    junk.write_bytes(b"not a weight file")
    for pred in (f"weights:{junk}", f"weights:{tmp_path / 'none.cgdw'}", "oracle"):
        assert run("bench", "--suite", suite_path, "--predictor", pred,
                   "--out", tmp_path / "r.csv") == cli.EXIT_INVALID


def test_runtime_failure_exit_2(suite_path, tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise FloatingPointError("diverged")
    monkeypatch.setattr(planner, "plan", boom)
    assert run("bench", *common(suite_path, "--out", tmp_path / "r.csv")) == cli.EXIT_RUNTIME
    assert "diverged" in capsys.readouterr().err


def test_module_entry_point(suite_path, tmp_path):
    out = tmp_path / "r.csv"
    proc = subprocess.run([sys.executable, "-m", "cgdplan", "bench", *common(suite_path, "--out", out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("# aggregate n=4")
    bad = subprocess.run([sys.executable, "-m", "cgdplan", "bench"], capture_output=True, text=True)
    assert bad.returncode == 1


# --- bench ----------------------------------------------------------------------

def test_bench_is_byte_identical(suite_path, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("bench", *common(suite_path, "--out", a)) == 0
    assert run("bench", *common(suite_path, "--out", b, "--workers", "2")) == 0
    assert a.read_bytes() == b.read_bytes()
    report = scenario_io.read_report(a)
    assert [r.id for r in report.rows] == ["open", "block", "g-0000", "g-0001"]
    assert all(r.wall_ms == 0.0 for r in report.rows)
    assert all(r.dyn_violation <= 1e-7 for r in report.rows)


def test_bench_seed_and_timing(suite_path, tmp_path):
    a, b, t = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "t.csv"
    run("bench", *common(suite_path, "--out", a))
    run("bench", *common(suite_path, "--out", b, "--seed", "1"))
    assert json.loads(a.read_text())["rows"] != json.loads(b.read_text())["rows"]
    run("bench", *common(suite_path, "--out", t, "--timing"))
    assert all(r.wall_ms > 0 for r in scenario_io.read_report(t).rows)


def test_bench_empty_suite(tmp_path, capsys):
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    out = tmp_path / "r.csv"
    assert run("bench", "--suite", empty, "--predictor", "surrogate:interpolate", "--out", out) == 0
    assert out.read_text() == "id,cost,collided,dyn_violation,wall_ms\n"


# --- ablate ---------------------------------------------------------------------

def test_ablate_two_by_two_grid(suite_path, tmp_path):
    out = tmp_path / "abl"
    assert run("ablate", *common(suite_path, "--grid", "qp_x_tf", "--out", out)) == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["qp_x_tf__qp-off_tf-off.csv", "qp_x_tf__qp-off_tf-on.csv",
                     "qp_x_tf__qp-on_tf-off.csv", "qp_x_tf__qp-on_tf-on.csv", "summary.csv"]
    with open(out / "summary.csv") as fh:
        summary = list(csv.DictReader(fh))
    assert tuple(summary[0]) == cli.SUMMARY_COLUMNS and len(summary) == 4
    for row in summary:
        rep = scenario_io.read_report(out / row["report"])
        assert int(row["n"]) == len(rep.rows) == 4
        if "qp-on" in row["label"]:
            assert float(row["violation_pct"]) == 0.0
    assert float(summary[0]["violation_pct"]) > 0.0     # goal only: OOD nominals break the limits


def test_ablate_activation_sweep_counts_calls(suite_path, tmp_path):
    out = tmp_path / "abl"
    assert run("ablate", *common(suite_path, "--grid", "late", "--out", out, "--format", "json")) == 0
    with open(out / "summary.csv") as fh:
        summary = {r["label"]: r for r in csv.DictReader(fh)}
    assert summary["act-1"]["activation"] == "tf_guide=1"
    assert int(summary["act-1"]["module_calls"]) < int(summary["act-5"]["module_calls"])
    assert (out / "late__act-5.json").exists()


def test_ablate_unknown_grid(suite_path, tmp_path):
    assert run("ablate", *common(suite_path, "--grid", "nope", "--out", tmp_path)) == cli.EXIT_INVALID


# --- export-traj ----------------------------------------------------------------

def test_export_traj_all_rollouts(suite_path, tmp_path):
    out = tmp_path / "all.csv"
    assert run("export-traj", *common(suite_path, "--scenario", "block", "--out", out,
                                      "--rate", "50")) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == ("rollout", "best") + cli.TRAJ_COLUMNS
    data = np.array(rows[1:], dtype=float)
    assert set(data[:, 0]) == {0.0, 1.0}
    assert len({r for r, b in data[:, :2] if b == 1}) == 1


def test_parse_helpers():
    assert cli.parse_enable("none") == frozenset()
    assert cli.parse_enable("tf, qp") == frozenset({planner.TF_GUIDE, planner.QP})
    assert cli.parse_activation("goal=3, obst=2") == ((planner.GOAL, 3), (planner.COLLISION, 2))
    assert cli._scenario_seed(5, 2) == (5, 2) and cli._scenario_seed((1, 2), 0) == (1, 2, 0)
