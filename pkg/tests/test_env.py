import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_world
from reward_cases import build_cases
from samarl.core import ScenarioConfig
from samarl.env import (
    LOG_SCHEMA,
    EpisodeLogger,
    HistoryBuffer,
    NavEnv,
    Status,
    UsageError,
    collisions,
    in_fov,
    macro_reward,
    observe,
    reward,
)
from samarl.kinematics import LocalAction


@pytest.mark.parametrize("case", build_cases(), ids=lambda c: c["name"])
def test_reward_table(case):
    assert reward(case["before"], case["after"], case["robot"]) == case["expected"]


def test_progress_can_be_negative():
    b = make_world([((0.0, 0.0), (4.0, 0.0))])
    a = make_world([((-0.5, 0.0), (4.0, 0.0))])
    assert reward(b, a, 0) == -1.0


def test_collision_pairs_and_substeps():
    b = make_world([((-1.0, 0.0), (9.0, 0.0)), ((5.0, 5.0), (9.0, 9.0))], humans=[(0.0, 0.0)])
    a = make_world([((1.0, 0.0), (9.0, 0.0)), ((5.0, 5.0), (9.0, 9.0))], humans=[(0.0, 0.0)])
    assert collisions(b, a) == [(0, 2)]
    assert collisions(b, b) == []


def test_humans_overlapping_each_other_do_not_count():
    w = make_world([((5.0, 5.0), (9.0, 9.0))], humans=[(0.0, 0.0), (0.1, 0.0)])
    assert collisions(w, w) == []


def test_macro_reward_truncated_epoch():
    r = [1.0, -0.5, 2.0]
    assert macro_reward(r, 0.9) == pytest.approx(1.0 - 0.45 + 2.0 * 0.81, abs=1e-15)
    with pytest.raises(UsageError):
        macro_reward([], 0.9)


def test_fov_sector():
    cfg = ScenarioConfig(n_robots=1, n_humans=3, fov_deg=90)
    w = make_world([((0.0, 0.0), (5.0, 0.0))], humans=[(2.0, 0.0), (2.0, 2.0), (-2.0, 0.0)], config=cfg)
    assert in_fov(w, 0).tolist() == [False, True, True, False]
    obs = observe(w, 0)
    assert [v[1] for v in obs.visible] == [1, 2]
    with pytest.raises(UsageError):
        observe(w, 1)


def test_history_buffer_window():
    h = HistoryBuffer(3)
    h.push("a")
    items, valid = h.window()
    assert items == [None, None, "a"] and valid.tolist() == [False, False, True]
    for x in "bcd":
        h.push(x)
    items, valid = h.window()
    assert items == ["b", "c", "d"] and valid.all()


def _straight_actions(env):
    w = env.world
    acts = []
    for i in range(w.n_robots):
        if w.reached[i]:
            acts.append(None)
            continue
        d = w.goal[i] - w.pos[i]
        acts.append(LocalAction(*(5.0 * d / np.linalg.norm(d)), math.atan2(d[1], d[0])))
    return acts


def test_env_requires_reset_and_action_count():
    env = NavEnv(ScenarioConfig(n_robots=2, n_humans=0))
    with pytest.raises(UsageError):
        env.step([None, None])
    env.reset(0)
    with pytest.raises(UsageError):
        env.step([None])
    with pytest.raises(UsageError):
        env.step([None, None])


def test_single_robot_reaches_goal_and_episode_ends():
    env = NavEnv(ScenarioConfig(n_robots=1, n_humans=0))
    env.reset(7)
    total = 0.0
    while not env.world.status.terminal:
        res = env.step(_straight_actions(env))
        total += res.rewards[0]
    assert env.world.status is Status.ALL_SUCCESS
    assert res.rewards[0] == 5.0
    with pytest.raises(UsageError):
        env.step([LocalAction(0, 0, 0)])


def test_reached_robot_holds_position():
    env = NavEnv(ScenarioConfig(n_robots=2, n_humans=0))
    env.reset(0)
    w = env.world
    w.pos[0] = w.goal[0] + np.array([0.5, 0.0])
    w.pos[1] = w.goal[0] + np.array([0.0, 4.0])
    w.goal[1] = w.pos[1] + np.array([0.0, 6.0])
    while not w.reached.any():
        env.step(_straight_actions(env))
        w = env.world
    assert not w.status.terminal and w.reached.sum() == 1
    done = int(np.flatnonzero(w.reached)[0])
    pos = w.pos[done].copy()
    assert np.all(w.vel[done] == 0.0)
    res = env.step(_straight_actions(env))
    assert np.array_equal(env.world.pos[done], pos)
    assert res.rewards[done] == 0.0


def test_timeout_status():
    cfg = ScenarioConfig(n_robots=1, n_humans=0, t_k_max=2, macro_period=3)
    env = NavEnv(cfg)
    env.reset(0)
    for _ in range(6):
        res = env.step([LocalAction(0.0, 0.0, float(env.world.theta[0]))])
    assert res.status is Status.TIMEOUT and env.world.t == 6 and env.world.t_k == 2


def test_collision_takes_priority_over_timeout():
    cfg = ScenarioConfig(n_robots=2, n_humans=0, t_k_max=1, macro_period=1)
    env = NavEnv(cfg)
    env.reset(0)
    env.world.pos[1] = env.world.pos[0] + np.array([0.55, 0.0])
    res = env.step([LocalAction(0.0, 0.0, float(env.world.theta[i])) for i in range(2)])
    assert res.status is Status.COLLISION


def _log_bytes(seed):
    buf = io.StringIO()
    env = NavEnv(ScenarioConfig(n_robots=2, n_humans=4), logger=EpisodeLogger(buf))
    env.reset(seed)
    while not env.world.status.terminal:
        env.step(_straight_actions(env))
    return buf.getvalue()


def test_logs_are_deterministic_and_well_formed():
    a, b = _log_bytes(5), _log_bytes(5)
    assert a == b
    assert a != _log_bytes(6)
    lines = [json.loads(x) for x in a.splitlines()]
    assert lines[0]["event"] == "reset" and all(r["schema"] == LOG_SCHEMA for r in lines)
    assert [r["t"] for r in lines] == list(range(len(lines)))
    assert len(lines[0]["agents"]) == 6


def test_collision_record_has_midpoint():
    buf = io.StringIO()
    env = NavEnv(ScenarioConfig(n_robots=2, n_humans=0), logger=EpisodeLogger(buf))
    env.reset(0)
    env.world.pos[1] = env.world.pos[0] + np.array([0.5, 0.0])
    env.step([LocalAction(0.0, 0.0, float(env.world.theta[i])) for i in range(2)])
    rec = json.loads(buf.getvalue().splitlines()[-1])
    assert rec["status"] == "collision" and len(rec["collision"]) == 2


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_reset_obeys_generation_invariants(seed):
    env = NavEnv(ScenarioConfig(n_robots=2, n_humans=3))
    obs = env.reset(seed)
    assert len(obs) == 2
    assert env.world.t == 0 and env.world.status is Status.RUNNING
    assert not env.world.reached.any()
