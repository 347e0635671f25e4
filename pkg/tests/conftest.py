import math
import os
import sys

import numpy as np
import pytest

from samarl.core import AgentKind, AgentState, PrivateState, PublicState, ScenarioConfig
from samarl.env import World


def pytest_collection_modifyitems(config, items):
    run_slow = os.environ.get("SAMARL_SLOW") == "1"
    run_long = os.environ.get("SAMARL_LONG") == "1"
    for item in items:
        if "long" in item.keywords and not run_long:
            item.add_marker(pytest.mark.skip(reason="set SAMARL_LONG=1 to run"))
        elif "slow" in item.keywords and not run_slow:
            item.add_marker(pytest.mark.skip(reason="set SAMARL_SLOW=1 to run"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def make_world(robots, humans=(), config=None, robot_radius=0.3, human_radius=0.3, reached=None):
    """World from ``robots = [((px, py), (gx, gy)), ...]`` and ``humans = [(px, py), ...]``.

    Human goals sit far away so they never count as arrived.
    """
    config = config or ScenarioConfig(n_robots=len(robots), n_humans=len(humans), circle_radius=5.0)
    agents = []
    for k, (p, g) in enumerate(robots):
        pub = PublicState(float(p[0]), float(p[1]), 0.0, 0.0, robot_radius)
        agents.append(AgentState(AgentKind.ROBOT, pub, PrivateState(float(g[0]), float(g[1]), 1.0, 0.0), k))
    for k, p in enumerate(humans):
        pub = PublicState(float(p[0]), float(p[1]), 0.0, 0.0, human_radius)
        agents.append(AgentState(AgentKind.HUMAN, pub, PrivateState(50.0, 50.0, 1.0, 0.0), len(robots) + k))
    w = World.from_agents(config, agents)
    if reached is not None:
        w.reached = np.asarray(reached, dtype=bool)
    return w


@pytest.fixture
def world_factory():
    return make_world


@pytest.fixture
def small_scenario():
    return ScenarioConfig(n_robots=2, n_humans=3, seed=3)


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))


TWO_PI = 2 * math.pi
