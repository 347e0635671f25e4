"""Evaluation metrics, baseline harness, plotting and the command-line interface."""

from .harness import POLICIES, EvalReport, make_policy, play_logged, run_policy_eval
from .metrics import (
    EpisodeSummary,
    LogParseError,
    RobotSummary,
    SocialScoreWeights,
    mrsan_social_score,
    read_log,
    robot_social_score,
    success_rate,
)
from .plot import plot_episode

__all__ = [
    "POLICIES",
    "EvalReport",
    "make_policy",
    "play_logged",
    "run_policy_eval",
    "EpisodeSummary",
    "LogParseError",
    "RobotSummary",
    "SocialScoreWeights",
    "mrsan_social_score",
    "read_log",
    "robot_social_score",
    "success_rate",
    "plot_episode",
]
