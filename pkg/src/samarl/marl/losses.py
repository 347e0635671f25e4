"""Advantage estimation and the clipped PPO objectives."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import torch

LOG_2PI = math.log(2.0 * math.pi)


class DivergenceError(FloatingPointError):
    """Raised when an update produces non-finite ratios or losses."""


def gae(
    rewards: Sequence[float],
    values: Sequence[float],
    bootstrap: float,
    gamma: float | Sequence[float],
    lam: float,
    dones: Sequence[bool] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalised advantage estimation over one sequence.

    ``gamma`` may be a per-step array, which the macro-action critic uses
    to discount by the number of local steps each epoch lasted.
    ``bootstrap`` is the value after the last step; ``dones[t]`` cuts the
    sequence after step ``t``. Returns ``(advantages, returns)``.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    n = len(r)
    if n == 0:
        raise ValueError("gae needs at least one step")
    if len(v) != n:
        raise ValueError("rewards and values differ in length")
    d = np.zeros(n) if dones is None else np.asarray(dones, dtype=np.float64)
    g = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (n,))
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        nxt = bootstrap if t == n - 1 else v[t + 1]
        live = 1.0 - d[t]
        delta = r[t] + g[t] * nxt * live - v[t]
        last = delta + g[t] * lam * live * last
        adv[t] = last
    return adv, adv + v


def normalize(adv: torch.Tensor, mask: torch.Tensor | None = None, eps: float = 1e-8) -> torch.Tensor:
    if mask is None:
        return (adv - adv.mean()) / (adv.std(unbiased=False) + eps)
    m = mask.to(adv.dtype)
    count = m.sum().clamp(min=1.0)
    mean = (adv * m).sum() / count
    var = (((adv - mean) * m) ** 2).sum() / count
    return (adv - mean) / (var.sqrt() + eps) * m


def gaussian_log_prob(x: torch.Tensor, mean: torch.Tensor, log_std: torch.Tensor) -> torch.Tensor:
    z = (x - mean) * torch.exp(-log_std)
    return (-0.5 * z * z - log_std - 0.5 * LOG_2PI).sum(dim=-1)


def gaussian_entropy(log_std: torch.Tensor) -> torch.Tensor:
    return (log_std + 0.5 * (1.0 + LOG_2PI)).sum(dim=-1)


def _masked_mean(x: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
    if mask is None:
        return x.mean()
    m = mask.to(x.dtype)
    return (x * m).sum() / m.sum().clamp(min=1.0)


def actor_loss(
    new_logp: torch.Tensor,
    old_logp: torch.Tensor,
    advantages: torch.Tensor,
    entropy: torch.Tensor,
    clip: float,
    kappa: float,
    mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """Negated clipped surrogate plus entropy bonus, to be minimised."""
    ratio = torch.exp(new_logp - old_logp)
    if not torch.isfinite(ratio if mask is None else ratio[mask]).all():
        raise DivergenceError("non-finite importance ratio")
    surr = torch.min(ratio * advantages, torch.clamp(ratio, 1.0 - clip, 1.0 + clip) * advantages)
    return -_masked_mean(surr, mask) - kappa * _masked_mean(entropy.expand_as(surr), mask)


def critic_loss(
    values: torch.Tensor,
    old_values: torch.Tensor,
    returns: torch.Tensor,
    value_clip: float,
    mask: torch.Tensor | None = None,
) -> torch.Tensor:
    clipped = torch.max(torch.min(values, old_values + value_clip), old_values - value_clip)
    err = torch.max((values - returns) ** 2, (clipped - returns) ** 2)
    return _masked_mean(err, mask)
