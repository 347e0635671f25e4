"""Policy evaluation harness: learned policies and the two reference baselines."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..core import ScenarioConfig
from ..env import EpisodeLogger, NavEnv
from ..kinematics import LocalAction, RobotPose, velocity_tracking_action
from ..marl.buffer import Actor, run_episode
from ..marl.checkpoint import CheckpointError, load_checkpoint, read_meta
from ..marl.policy import ModelConfig, SamarlModel
from ..pedestrian import OrcaParams, robot_velocity
from .metrics import EpisodeSummary, SocialScoreWeights, mrsan_social_score, robot_social_score, success_rate

POLICIES = ("SAMARL", "SAMARL-PPO", "ORCA-baseline", "Random")
LEARNED = {"SAMARL": False, "SAMARL-PPO": True}  # value: expected single_agent flag
DEFAULT_EVAL_SEED = 1_000_000_000


def load_model(path: str | Path, scenario: ScenarioConfig, single_agent: bool | None = None) -> tuple[SamarlModel, int]:
    """Rebuild a model from a checkpoint; returns it with its history length."""
    meta = read_meta(path)
    try:
        mcfg = ModelConfig.from_dict(meta["model"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint {path} has no usable model config: {exc}") from exc
    if mcfg.n_robots != scenario.n_robots:
        raise CheckpointError(f"checkpoint trained for {mcfg.n_robots} robots, config has {scenario.n_robots}")
    if single_agent is not None and mcfg.single_agent != single_agent:
        kind = "single-agent PPO" if mcfg.single_agent else "centralised-critic"
        raise CheckpointError(f"checkpoint {path} holds a {kind} model")
    model = SamarlModel(mcfg)
    load_checkpoint(path, model)
    model.eval()
    return model, mcfg.encoder.history


class RandomPolicy:
    """Uniform raw actions, seeded per episode."""

    def __init__(self, scenario: ScenarioConfig):
        self.limits = scenario.limits

    def play(self, env: NavEnv, seed: int) -> None:
        rng = np.random.default_rng([seed, 7])
        env.reset(seed)
        lim = self.limits
        while not env.world.status.terminal:
            w = env.world
            acts: list[LocalAction | None] = [None] * w.n_robots
            for i in env.active_robots():
                ax, ay = rng.uniform(-lim.a_max, lim.a_max, size=2)
                dth = rng.uniform(-lim.dtheta_max, lim.dtheta_max)
                acts[i] = LocalAction(float(ax), float(ay), float(w.theta[i] + dth))
            env.step(acts)


class OrcaBaseline:
    """Robots follow ORCA velocities through the actuation model.

    Humans never yield to robots, so each robot takes full responsibility
    for avoiding humans and half for other robots, and keeps an extra
    clearance to absorb acceleration-limited tracking lag.
    """

    def __init__(self, scenario: ScenarioConfig, params: OrcaParams | None = None, clearance: float = 0.2):
        self.scenario = scenario
        self.params = params or OrcaParams()
        self.clearance = clearance

    def play(self, env: NavEnv, seed: int) -> None:
        env.reset(seed)
        cfg = self.scenario
        while not env.world.status.terminal:
            w = env.world
            acts: list[LocalAction | None] = [None] * w.n_robots
            for i in env.active_robots():
                others = [j for j in range(w.n_agents) if j != i]
                v = robot_velocity(
                    w.agent(i), [w.public(j) for j in others], [j < w.n_robots for j in others],
                    self.params, cfg.dt, cfg.limits.v_max, self.clearance,
                )
                pose = RobotPose(w.pos[i, 0], w.pos[i, 1], w.vel[i, 0], w.vel[i, 1], float(w.theta[i]))
                acts[i] = velocity_tracking_action(pose, v, cfg.dt, cfg.limits)
            env.step(acts)


class LearnedPolicy:
    """Deterministic (mean-action) rollout of a trained model."""

    def __init__(self, model: SamarlModel, history: int):
        self.actor = Actor(model, history, dtype=next(model.parameters()).dtype)

    def play(self, env: NavEnv, seed: int) -> None:
        run_episode(env, self.actor, seed, None)


def make_policy(name: str, scenario: ScenarioConfig, checkpoint: str | Path | None = None):
    if name not in POLICIES:
        raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}")
    if name == "Random":
        return RandomPolicy(scenario)
    if name == "ORCA-baseline":
        return OrcaBaseline(scenario)
    if checkpoint is None:
        raise CheckpointError(f"policy {name} needs --checkpoint")
    model, history = load_model(checkpoint, scenario, LEARNED[name])
    return LearnedPolicy(model, history)


def play_logged(policy, scenario: ScenarioConfig, seed: int, log_path: str | Path | None = None) -> EpisodeSummary:
    sink: str | Path | io.StringIO = log_path if log_path is not None else io.StringIO()
    logger = EpisodeLogger(sink)
    try:
        with torch.no_grad():
            policy.play(NavEnv(scenario, logger=logger), seed)
    finally:
        logger.close()
    return EpisodeSummary.from_records(logger.records)


@dataclass
class EvalReport:
    policy: str
    summaries: list[EpisodeSummary]
    metrics: dict[str, float]

    def table(self) -> str:
        lines = [f"policy: {self.policy}  cases: {len(self.summaries)}"]
        for k, v in self.metrics.items():
            lines.append(f"  {k:<28s} {_fmt(v)}")
        lines.append("  (social scores use a documented proxy for the per-robot component, range 0-100)")
        return "\n".join(lines) + "\n"

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in self.metrics.items():
            w.writerow([k, _fmt(v)])
        return buf.getvalue()


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.6f}"


def summarize(policy: str, summaries: list[EpisodeSummary], weights: SocialScoreWeights | None = None) -> EvalReport:
    n = len(summaries[0].robots)
    weights = weights or SocialScoreWeights.equal(n)
    ok = [s for s in summaries if s.success]
    metrics = {
        "success_rate": success_rate(summaries),
        "collision_rate": float(np.mean([s.collision for s in summaries])),
        "timeout_rate": float(np.mean([s.timeout for s in summaries])),
        "mean_nav_time_success_s": float(np.mean([max(r.nav_time for r in s.robots) for s in ok])) if ok else math.nan,
        "mrsan_social_score_proxy": mrsan_social_score(summaries, weights),
    }
    for i in range(n):
        metrics[f"robot{i}_social_score_proxy"] = float(np.mean([robot_social_score(s, i) for s in summaries]))
    return EvalReport(policy, summaries, metrics)


def run_policy_eval(
    policy: str,
    scenario: ScenarioConfig,
    n_cases: int,
    seed_list: Sequence[int] | None = None,
    checkpoint: str | Path | None = None,
    out_dir: str | Path | None = None,
) -> EvalReport:
    """Evaluate ``policy`` on ``n_cases`` seeded episodes.

    With ``out_dir``, one JSONL log per case goes to ``out_dir/logs`` and
    the report is saved as ``metrics.csv`` and ``report.txt``.
    """
    if seed_list is None:
        seed_list = [DEFAULT_EVAL_SEED + k for k in range(n_cases)]
    seeds = [int(s) for s in seed_list][:n_cases]
    if len(seeds) < n_cases or n_cases < 1:
        raise ValueError(f"need {n_cases} seeds, got {len(seeds)}")
    pol = make_policy(policy, scenario, checkpoint)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "logs").mkdir(parents=True, exist_ok=True)
    summaries = []
    for s in seeds:
        log = out / "logs" / f"episode_{s}.jsonl" if out is not None else None
        summaries.append(play_logged(pol, scenario, s, log))
    report = summarize(policy, summaries)
    if out is not None:
        (out / "metrics.csv").write_text(report.csv())
        (out / "report.txt").write_text(report.table())
    return report


__all__ = [
    "POLICIES",
    "EvalReport",
    "LearnedPolicy",
    "OrcaBaseline",
    "RandomPolicy",
    "load_model",
    "make_policy",
    "play_logged",
    "run_policy_eval",
    "summarize",
]
