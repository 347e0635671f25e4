"""Macro/local actor heads, centralised critics and the model bundling them.

Actions are sampled as unbounded Gaussian variables ``x`` and squashed
with ``tanh`` into their boxes; log-probabilities are taken on ``x``, so
the squashing Jacobian cancels in PPO ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from ..encoder import EncoderConfig, FeatureMatrix, STEncoder
from .losses import gaussian_entropy, gaussian_log_prob

MA_DIM = 2
LA_DIM = 3


@dataclass(frozen=True)
class ModelConfig:
    n_robots: int
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    hidden: int = 64
    share_params: bool = True
    single_agent: bool = False
    log_std_init: float = -0.5
    waypoint_box: float = 3.0

    def to_dict(self) -> dict:
        return {
            "n_robots": self.n_robots,
            "encoder": dict(vars(self.encoder)),
            "hidden": self.hidden,
            "share_params": self.share_params,
            "single_agent": self.single_agent,
            "log_std_init": self.log_std_init,
            "waypoint_box": self.waypoint_box,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d["encoder"])
        return cls(**d)


def _mlp(inp: int, hidden: int, out: int, out_gain: float) -> nn.Sequential:
    net = nn.Sequential(nn.Linear(inp, hidden), nn.Tanh(), nn.Linear(hidden, hidden), nn.Tanh(),
                        nn.Linear(hidden, out))
    for m in net:
        if isinstance(m, nn.Linear):
            nn.init.orthogonal_(m.weight, gain=math.sqrt(2.0))
            nn.init.zeros_(m.bias)
    nn.init.orthogonal_(net[-1].weight, gain=out_gain)
    return net


class PolicyHeads(nn.Module):
    """MA actor: ``Y -> waypoint offset``. LA actor: ``(Y, waypoint) -> (ax, ay, dtheta)``."""

    def __init__(self, d_model: int, hidden: int, log_std_init: float):
        super().__init__()
        self.ma_mean = _mlp(d_model, hidden, MA_DIM, 0.01)
        self.la_mean = _mlp(d_model + MA_DIM, hidden, LA_DIM, 0.01)
        self.ma_log_std = nn.Parameter(torch.full((MA_DIM,), log_std_init))
        self.la_log_std = nn.Parameter(torch.full((LA_DIM,), log_std_init))

    def ma(self, y: torch.Tensor):
        return self.ma_mean(y), self.ma_log_std.expand(*y.shape[:-1], MA_DIM)

    def la(self, y: torch.Tensor, waypoint: torch.Tensor):
        return self.la_mean(torch.cat([y, waypoint], dim=-1)), self.la_log_std.expand(*y.shape[:-1], LA_DIM)


class CriticHeads(nn.Module):
    """MA critic ``V`` and LA critic ``V'`` over joint features."""

    def __init__(self, d_model: int, hidden: int, n_robots: int, single_agent: bool):
        super().__init__()
        joint = (2 if single_agent else 3) * d_model
        ma_in = MA_DIM if single_agent else MA_DIM * n_robots
        self.ma_value = _mlp(joint, hidden, 1, 1.0)
        self.la_value = _mlp(joint + ma_in, hidden, 1, 1.0)

    def forward(self, joint: torch.Tensor, joint_ma: torch.Tensor):
        return self.ma_value(joint).squeeze(-1), self.la_value(torch.cat([joint, joint_ma], -1)).squeeze(-1)


class SamarlModel(nn.Module):
    """Actor encoder(s) and heads plus the centralised critic with its own encoder.

    With ``share_params`` every robot uses module 0; otherwise robot ``i``
    uses module ``i``. In ``single_agent`` mode (the PPO ablation) critics
    see only the individual robot's own features and macro action.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        k = 1 if cfg.share_params else cfg.n_robots
        d = cfg.encoder.d_model
        self.actor_encoders = nn.ModuleList(STEncoder(cfg.encoder) for _ in range(k))
        self.heads = nn.ModuleList(PolicyHeads(d, cfg.hidden, cfg.log_std_init) for _ in range(k))
        self.critic_encoder = STEncoder(cfg.encoder)
        self.critic = CriticHeads(d, cfg.hidden, cfg.n_robots, cfg.single_agent)

    # -- routing helpers -------------------------------------------------
    def _module_index(self, robot: torch.Tensor) -> torch.Tensor:
        return torch.zeros_like(robot) if self.cfg.share_params else robot

    def _route(self, fn, robot: torch.Tensor, *tensors, out_shape_fn=None):
        idx = self._module_index(robot)
        if self.cfg.share_params:
            return fn(0, *tensors)
        outs = None
        for k in range(len(self.heads)):
            sel = idx == k
            if not bool(sel.any()):
                continue
            part = fn(k, *[t[sel] for t in tensors])
            part = part if isinstance(part, tuple) else (part,)
            if outs is None:
                outs = [torch.zeros(len(robot), *p.shape[1:], dtype=p.dtype) for p in part]
            for o, p in zip(outs, part):
                o[sel] = p
        return outs[0] if len(outs) == 1 else tuple(outs)

    # -- actor path (local observations only) ----------------------------
    def encode(self, human: FeatureMatrix, robot: FeatureMatrix, robot_id: torch.Tensor) -> torch.Tensor:
        def f(k, hx, hm, rx, rm):
            return self.actor_encoders[k](FeatureMatrix(hx, hm), FeatureMatrix(rx, rm))

        return self._route(f, robot_id, human.x, human.mask, robot.x, robot.mask)

    def ma_params(self, y: torch.Tensor, robot_id: torch.Tensor):
        return self._route(lambda k, yy: self.heads[k].ma(yy), robot_id, y)

    def la_params(self, y: torch.Tensor, waypoint: torch.Tensor, robot_id: torch.Tensor):
        return self._route(lambda k, yy, ww: self.heads[k].la(yy, ww), robot_id, y, waypoint)

    # -- critic path (training only) -------------------------------------
    def critic_encode(self, human: FeatureMatrix, robot: FeatureMatrix) -> torch.Tensor:
        return self.critic_encoder(human, robot)

    def values(self, y: torch.Tensor, y_critic: torch.Tensor, joint_ma: torch.Tensor):
        """``y``, ``y_critic``: [S, N, d]; ``joint_ma``: [S, N, N, 2] (own waypoint first)."""
        if self.cfg.single_agent:
            joint = torch.cat([y, y_critic], dim=-1)
            ma = joint_ma[:, :, 0]
        else:
            n = y.shape[1]
            if n > 1:
                others = (y.sum(dim=1, keepdim=True) - y) / (n - 1)
            else:
                others = torch.zeros_like(y)
            joint = torch.cat([y, others, y_critic], dim=-1)
            ma = joint_ma.flatten(-2)
        return self.critic(joint, ma)


def squash(x: np.ndarray, bound: float | np.ndarray) -> np.ndarray:
    return bound * np.tanh(x)


__all__ = [
    "MA_DIM",
    "LA_DIM",
    "ModelConfig",
    "PolicyHeads",
    "CriticHeads",
    "SamarlModel",
    "gaussian_log_prob",
    "gaussian_entropy",
    "squash",
]
