import io
import json
import re
import subprocess
import sys

import numpy as np
import pytest

from samarl.core import ScenarioConfig
from samarl.env import EpisodeLogger, NavEnv, Status, UsageError
from samarl.evalcli import (
    EpisodeSummary,
    LogParseError,
    RobotSummary,
    SocialScoreWeights,
    mrsan_social_score,
    play_logged,
    plot_episode,
    robot_social_score,
    run_policy_eval,
    success_rate,
)
from samarl.evalcli.cli import main
from samarl.evalcli.harness import RandomPolicy, summarize
from samarl.kinematics import LocalAction
from samarl.marl import CheckpointError, TrainConfig, build_model, save_model


def robot(reached=True, nav_time=10.0, straight=8.0, v_pref=1.0, discomfort=0.0):
    return RobotSummary(reached, nav_time, straight, 1.0, discomfort, straight, v_pref)


def episode(*robots, status=Status.ALL_SUCCESS):
    return EpisodeSummary(0, status, 40, 30.0, tuple(robots))


# -- metrics ----------------------------------------------------------------

def test_social_score_examples():
    assert robot_social_score(episode(robot(reached=False)), 0) == 0.0
    assert robot_social_score(episode(robot(nav_time=8.0)), 0) == 100.0
    s = robot_social_score(episode(robot(nav_time=10.0, straight=8.0, discomfort=0.5)), 0)
    assert s == pytest.approx(82.5, abs=1e-12)


def test_mrsan_weighted_mean():
    a = robot(nav_time=8.0)  # 100
    b = robot(nav_time=8.0, discomfort=0.8)  # 80
    c = robot(nav_time=8.0 / 0.6, discomfort=1.0)  # 100 * (0.5 + 0.15) = 65
    ep = episode(a, b, c)
    assert mrsan_social_score([ep], (1.0, 0.0, 0.0)) == pytest.approx(100.0)
    assert mrsan_social_score([ep], (0.0, 0.5, 0.5)) == pytest.approx(72.5)
    assert mrsan_social_score([episode(b, b, b)], SocialScoreWeights.equal(3)) == pytest.approx(80.0)
    two = episode(b, robot(nav_time=8.0 / 0.4, discomfort=1.0))  # 80 and 60
    assert mrsan_social_score([two], (0.5, 0.5)) == pytest.approx(70.0)


def test_mrsan_linear_and_bounded():
    rng = np.random.default_rng(0)
    eps = [episode(*[robot(nav_time=rng.uniform(8, 20), discomfort=rng.uniform()) for _ in range(3)])
           for _ in range(5)]
    means = [np.mean([robot_social_score(e, i) for e in eps]) for i in range(3)]
    for _ in range(20):
        w = rng.dirichlet(np.ones(3))
        s = mrsan_social_score(eps, tuple(w))
        assert min(means) - 1e-9 <= s <= max(means) + 1e-9
        assert s == pytest.approx(float(np.dot(w, means)), abs=1e-9)


def test_weight_simplex_errors():
    with pytest.raises(UsageError):
        SocialScoreWeights((0.5, 0.6))
    with pytest.raises(UsageError):
        SocialScoreWeights((1.5, -0.5))
    with pytest.raises(UsageError):
        mrsan_social_score([episode(robot())], (0.5, 0.5))


def test_success_rate_joint_criterion():
    ok = episode(robot(), robot())
    partial = episode(robot(), robot(reached=False), status=Status.TIMEOUT)
    assert success_rate([ok, ok]) == 1.0
    assert success_rate([partial] * 3) == 0.0
    assert success_rate([ok, partial, ok, partial]) == 0.5
    with pytest.raises(UsageError):
        success_rate([])


# -- harness ----------------------------------------------------------------

def test_orca_baseline_solves_empty_world():
    report = run_policy_eval("ORCA-baseline", ScenarioConfig(n_robots=3, n_humans=0), 10)
    assert report.metrics["success_rate"] == 1.0


def test_random_policy_below_orca():
    scenario = ScenarioConfig(n_robots=3, n_humans=10)
    orca = run_policy_eval("ORCA-baseline", scenario, 20)
    rand = run_policy_eval("Random", scenario, 20)
    assert rand.metrics["success_rate"] < orca.metrics["success_rate"]


def test_reports_are_byte_identical(tmp_path):
    scenario = ScenarioConfig(n_robots=2, n_humans=3)
    run_policy_eval("ORCA-baseline", scenario, 4, out_dir=tmp_path / "a")
    run_policy_eval("ORCA-baseline", scenario, 4, out_dir=tmp_path / "b")
    for name in ("metrics.csv", "report.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    logs = sorted(p.name for p in (tmp_path / "a" / "logs").iterdir())
    assert len(logs) == 4
    for name in logs:
        assert (tmp_path / "a" / "logs" / name).read_bytes() == (tmp_path / "b" / "logs" / name).read_bytes()


def test_offline_metrics_equal_online(tmp_path):
    scenario = ScenarioConfig(n_robots=2, n_humans=4)
    report = run_policy_eval("ORCA-baseline", scenario, 5, out_dir=tmp_path)
    offline = [EpisodeSummary.from_log(tmp_path / "logs" / f"episode_{s.seed}.jsonl") for s in report.summaries]
    assert offline == report.summaries
    assert summarize("ORCA-baseline", offline).metrics == report.metrics


def test_learned_policy_checks_checkpoint(tmp_path):
    scenario = ScenarioConfig(n_robots=2, n_humans=1, t_k_max=2)
    cfg = TrainConfig(d_model=8, heads=2, layers=1, history=2, hidden=8)
    model = build_model(scenario, cfg)
    path = save_model(tmp_path / "m.npz", model, scenario, cfg)
    report = run_policy_eval("SAMARL", scenario, 2, checkpoint=path)
    assert len(report.summaries) == 2
    with pytest.raises(CheckpointError):
        run_policy_eval("SAMARL-PPO", scenario, 1, checkpoint=path)
    with pytest.raises(CheckpointError):
        run_policy_eval("SAMARL", ScenarioConfig(n_robots=3, n_humans=1), 1, checkpoint=path)
    with pytest.raises(CheckpointError):
        run_policy_eval("SAMARL", scenario, 1)


# -- plots ------------------------------------------------------------------

def test_plot_has_one_polyline_per_agent(tmp_path):
    scenario = ScenarioConfig(n_robots=3, n_humans=10, t_k_max=2)
    log = tmp_path / "ep.jsonl"
    play_logged(RandomPolicy(scenario), scenario, 1, log)
    svg = plot_episode(log).read_text()
    assert len(re.findall(r"<polyline ", svg)) == 13
    assert len(set(re.findall(r'data-agent="(\d+)"', svg))) == 13
    assert len(re.findall(r'class="robot"', svg)) == 3


def test_plot_empty_world_and_collision_marker(tmp_path):
    scenario = ScenarioConfig(n_robots=1, n_humans=0, t_k_max=1)
    log = tmp_path / "solo.jsonl"
    play_logged(RandomPolicy(scenario), scenario, 0, log)
    svg = plot_episode(log, tmp_path / "solo.svg").read_text()
    assert svg.count("<polyline ") == 1 and 'class="collision"' not in svg

    log = tmp_path / "crash.jsonl"
    env = NavEnv(ScenarioConfig(n_robots=2, n_humans=0), logger=EpisodeLogger(log))
    env.reset(0)
    env.world.pos[1] = env.world.pos[0] + np.array([0.5, 0.0])
    env.step([LocalAction(0.0, 0.0, float(env.world.theta[i])) for i in range(2)])
    env.logger.close()
    assert 'class="collision"' in plot_episode(log).read_text()


def test_malformed_log_reports_line(tmp_path):
    scenario = ScenarioConfig(n_robots=1, n_humans=1, t_k_max=1)
    log = tmp_path / "ep.jsonl"
    play_logged(RandomPolicy(scenario), scenario, 0, log)
    lines = log.read_text().splitlines()
    lines[2] = lines[2][:-5]
    log.write_text("\n".join(lines) + "\n")
    with pytest.raises(LogParseError) as exc:
        plot_episode(log)
    assert exc.value.line == 3 and ":3:" in str(exc.value)


# -- CLI --------------------------------------------------------------------

def test_cli_eval_and_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": {"n_robots": 1, "n_humans": 0}}))
    assert main(["eval", "--policy", "ORCA-baseline", "--config", str(cfg), "--cases", "2", "--out", str(tmp_path / "o")]) == 0
    assert "success_rate" in capsys.readouterr().out
    assert (tmp_path / "o" / "metrics.csv").exists()

    bad = tmp_path / "bad.json"
    bad.write_text('{"scenario": {"n_robots": 0}}')
    assert main(["eval", "--config", str(bad), "--cases", "1"]) == 2
    bad.write_text("{nope")
    assert main(["eval", "--config", str(bad), "--cases", "1"]) == 2
    assert main(["eval", "--policy", "SAMARL", "--config", str(cfg), "--cases", "1"]) == 3
    assert main(["eval", "--policy", "SAMARL", "--config", str(cfg), "--cases", "1",
                 "--checkpoint", str(tmp_path / "nope.npz")]) == 3


def test_cli_rollout_and_plot(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["rollout", "--policy", "Random", "--seed", "3", "--out", str(out)]) == 0
    assert (out / "episode_3.jsonl").exists() and (out / "episode_3.svg").exists()
    assert main(["plot", str(out / "episode_3.jsonl"), "--out", str(tmp_path / "x.svg")]) == 0
    assert (tmp_path / "x.svg").read_text().startswith("<svg") or "<svg" in (tmp_path / "x.svg").read_text()
    (tmp_path / "broken.jsonl").write_text("not json\n")
    assert main(["plot", str(tmp_path / "broken.jsonl")]) == 2


def test_cli_train_writes_run_directory(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "scenario": {"n_robots": 1, "n_humans": 1, "t_k_max": 2},
        "train": {"episodes": 2, "episodes_per_update": 2, "ppo_epochs": 1, "d_model": 8, "heads": 2,
                  "layers": 1, "history": 2, "hidden": 8},
    }))
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--seed", "1", "--out", str(out)]) == 0
    assert (out / "config.json").exists() and (out / "checkpoint_final.npz").exists()
    header = (out / "diagnostics.csv").read_text().splitlines()[0]
    assert header.startswith("update,episodes,mean_episode_reward,success_rate")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"train": {"nope": 1}}))
    assert main(["train", "--config", str(bad), "--out", str(out)]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "samarl.evalcli.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "rollout" in res.stdout
