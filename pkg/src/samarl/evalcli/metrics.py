"""Episode summaries and the joint success / social-compliance metrics.

Summaries are always built from episode log records, so metrics
computed during an evaluation and metrics recomputed later from the
JSONL files are the same numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from ..env import DISCOMFORT_DIST, LOG_SCHEMA, Status, UsageError


class LogParseError(ValueError):
    """Malformed episode log; the message carries the offending line number."""

    def __init__(self, path: str | Path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.line = line


def read_log(path: str | Path) -> list[dict[str, Any]]:
    """Parse and validate one JSONL episode log."""
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogParseError(path, lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or rec.get("schema") != LOG_SCHEMA:
                raise LogParseError(path, lineno, f"expected a {LOG_SCHEMA} record")
            expected = "reset" if not records else "step"
            if rec.get("event") != expected:
                raise LogParseError(path, lineno, f"expected a {expected!r} event")
            if not isinstance(rec.get("agents"), list) or not all(
                isinstance(a, list) and len(a) == 6 for a in rec["agents"]
            ):
                raise LogParseError(path, lineno, "agents must be rows of 6 numbers")
            if records and len(rec["agents"]) != len(records[0]["agents"]):
                raise LogParseError(path, lineno, "agent count changed mid-episode")
            records.append(rec)
    if not records:
        raise LogParseError(path, 1, "empty log")
    return records


@dataclass(frozen=True)
class RobotSummary:
    reached: bool
    nav_time: float
    path_length: float
    min_human_dist: float
    discomfort_frac: float
    straight_dist: float
    v_pref: float


@dataclass(frozen=True)
class EpisodeSummary:
    seed: int
    status: Status
    steps: int
    horizon_time: float
    robots: tuple[RobotSummary, ...]

    @property
    def collision(self) -> bool:
        return self.status is Status.COLLISION

    @property
    def timeout(self) -> bool:
        return self.status is Status.TIMEOUT

    @property
    def success(self) -> bool:
        return self.status is Status.ALL_SUCCESS

    @classmethod
    def from_records(cls, records: Sequence[dict[str, Any]]) -> "EpisodeSummary":
        head = records[0]
        cfg = head["config"]
        n = int(cfg["n_robots"])
        dt = float(cfg["dt"])
        horizon = int(cfg["t_k_max"]) * int(cfg["macro_period"])
        goals = np.asarray(head["goals"], dtype=np.float64)
        v_pref = np.asarray(head["v_pref"], dtype=np.float64)
        agents = np.asarray([r["agents"] for r in records], dtype=np.float64)  # [T+1, n_agents, 6]
        pos, rad = agents[..., 0:2], agents[0, :, 4]
        steps = len(records) - 1
        reached = np.array(records[-1]["reached"], dtype=bool) if steps else np.zeros(n, dtype=bool)

        # step index (1-based) at which each robot first reached its goal
        reach_step = np.full(n, steps)
        for t in range(1, steps + 1):
            for i in np.flatnonzero(np.asarray(records[t]["reached"], dtype=bool)):
                reach_step[i] = min(reach_step[i], t)

        robots = []
        for i in range(n):
            end = int(reach_step[i])
            seg = np.diff(pos[: end + 1, i], axis=0)
            length = float(np.sum(np.hypot(seg[:, 0], seg[:, 1]))) if end else 0.0
            if agents.shape[1] > n and end:
                d = pos[1: end + 1, i, None, :] - pos[1: end + 1, n:, :]
                surf = np.hypot(d[..., 0], d[..., 1]) - rad[i] - rad[n:]
                nearest = surf.min(axis=1)
                min_h = float(nearest.min())
                disc = float(np.mean(nearest <= DISCOMFORT_DIST))
            else:
                min_h, disc = math.inf, 0.0
            robots.append(RobotSummary(
                reached=bool(reached[i]), nav_time=end * dt, path_length=length,
                min_human_dist=min_h, discomfort_frac=disc,
                straight_dist=float(np.hypot(*(goals[i] - pos[0, i]))), v_pref=float(v_pref[i]),
            ))
        return cls(int(head["seed"]), Status(records[-1]["status"]), steps, horizon * dt, tuple(robots))

    @classmethod
    def from_log(cls, path: str | Path) -> "EpisodeSummary":
        return cls.from_records(read_log(path))


@dataclass(frozen=True)
class SocialScoreWeights:
    weights: tuple[float, ...]

    def __post_init__(self):
        w = self.weights
        if not w or any(not math.isfinite(x) or x < 0 for x in w) or abs(math.fsum(w) - 1.0) > 1e-12:
            raise UsageError(f"social-score weights must be a nonnegative simplex, got {w}")

    @classmethod
    def equal(cls, n: int) -> "SocialScoreWeights":
        return cls(tuple([1.0 / n] * n))


def success_rate(summaries: Iterable[EpisodeSummary]) -> float:
    flags = [s.success for s in summaries]
    if not flags:
        raise UsageError("success_rate needs at least one episode")
    return sum(flags) / len(flags)


def robot_social_score(summary: EpisodeSummary, robot_id: int) -> float:
    """Per-robot compliance score in [0, 100] (a documented stand-in, not the original metric).

    ``100 * reached * (0.5 + 0.25 * time_efficiency + 0.25 * comfort)``.
    """
    r = summary.robots[robot_id]
    if not r.reached:
        return 0.0
    if r.nav_time > 0:
        te = min(max((r.straight_dist / r.v_pref) / r.nav_time, 0.0), 1.0)
    else:
        te = 1.0
    comfort = 1.0 - r.discomfort_frac
    return 100.0 * (0.5 + 0.25 * te + 0.25 * comfort)


def mrsan_social_score(summaries: Sequence[EpisodeSummary], weights: SocialScoreWeights | Sequence[float]) -> float:
    """Weighted sum over robots of each robot's mean score across episodes."""
    if not isinstance(weights, SocialScoreWeights):
        weights = SocialScoreWeights(tuple(float(w) for w in weights))
    if not summaries:
        raise UsageError("mrsan_social_score needs at least one episode")
    n = len(summaries[0].robots)
    if len(weights.weights) != n:
        raise UsageError(f"expected {n} weights, got {len(weights.weights)}")
    means = [float(np.mean([robot_social_score(s, i) for s in summaries])) for i in range(n)]
    return float(sum(w * m for w, m in zip(weights.weights, means)))
