"""Command-line entry point: ``samarl {train,eval,rollout,plot}``.

Exit codes: 0 success, 2 configuration or input error, 3 checkpoint error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..core import ConfigError, ScenarioConfig
from ..marl.checkpoint import CheckpointError
from .harness import POLICIES, make_policy, play_logged, run_policy_eval
from .metrics import LogParseError
from .plot import plot_episode

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3


def load_config(path: str | None) -> tuple[ScenarioConfig, dict]:
    """Read a JSON config with optional ``scenario`` and ``train`` sections.

    A file without sections is taken as a bare scenario.
    """
    if path is None:
        return ScenarioConfig(), {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "scenario" in data or "train" in data:
        extra = sorted(set(data) - {"scenario", "train"})
        if extra:
            raise ConfigError(f"unknown config sections: {extra}")
        return ScenarioConfig.from_dict(data.get("scenario", {})), dict(data.get("train", {}))
    return ScenarioConfig.from_dict(data), {}


def _cmd_train(args) -> int:
    from ..marl.trainer import TrainConfig, build_model, train
    from ..marl.checkpoint import load_checkpoint

    scenario, train_dict = load_config(args.config)
    if args.seed is not None:
        train_dict["seed"] = args.seed
    try:
        cfg = TrainConfig.from_dict(train_dict)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    model = build_model(scenario, cfg)
    if args.checkpoint:
        load_checkpoint(args.checkpoint, model)
    out = args.out or "runs/train"
    train(scenario, cfg, run_dir=out, log=print, model=model)
    print(f"run directory: {out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    scenario, _ = load_config(args.config)
    base = 1_000_000_000 if args.seed is None else args.seed
    seeds = [base + k for k in range(args.cases)]
    report = run_policy_eval(args.policy, scenario, args.cases, seeds, args.checkpoint, args.out)
    sys.stdout.write(report.table())
    return EXIT_OK


def _cmd_rollout(args) -> int:
    scenario, _ = load_config(args.config)
    seed = scenario.seed if args.seed is None else args.seed
    out = Path(args.out or "rollout")
    out.mkdir(parents=True, exist_ok=True)
    log = out / f"episode_{seed}.jsonl"
    summary = play_logged(make_policy(args.policy, scenario, args.checkpoint), scenario, seed, log)
    svg = plot_episode(log, out / f"episode_{seed}.svg")
    print(f"status {summary.status.value} steps {summary.steps}")
    print(f"log {log}\nplot {svg}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    svg = plot_episode(args.log, Path(args.out) if args.out else None)
    print(svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="samarl", description="Multi-robot social navigation: train, evaluate, plot.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy and write a run directory")
    t.add_argument("--config", help="JSON config with scenario/train sections")
    t.add_argument("--seed", type=int, help="training seed (overrides the config)")
    t.add_argument("--checkpoint", help="initialise parameters from this checkpoint")
    t.add_argument("--out", help="run directory (default runs/train)")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a policy over seeded cases")
    e.add_argument("--policy", choices=POLICIES, default="ORCA-baseline")
    e.add_argument("--config")
    e.add_argument("--checkpoint")
    e.add_argument("--cases", type=int, default=500)
    e.add_argument("--seed", type=int, help="first seed of the case list")
    e.add_argument("--out", help="directory for logs, metrics.csv and report.txt")
    e.set_defaults(func=_cmd_eval)

    r = sub.add_parser("rollout", help="run and plot one episode")
    r.add_argument("--policy", choices=POLICIES, default="ORCA-baseline")
    r.add_argument("--config")
    r.add_argument("--checkpoint")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="output directory (default ./rollout)")
    r.set_defaults(func=_cmd_rollout)

    pl = sub.add_parser("plot", help="render an episode log as SVG")
    pl.add_argument("log", help="JSONL episode log")
    pl.add_argument("--out", help="SVG path (default: next to the log)")
    pl.set_defaults(func=_cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (ConfigError, LogParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
