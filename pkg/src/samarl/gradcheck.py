"""Central finite-difference checks of autograd gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import torch


def directional_error(
    loss_fn: Callable[[], torch.Tensor],
    params: Sequence[torch.nn.Parameter],
    direction: Sequence[torch.Tensor] | None = None,
    h: float = 1e-6,
    generator: torch.Generator | None = None,
) -> tuple[float, float, float]:
    """Compare ``grad . u`` with ``(f(p + h u) - f(p - h u)) / 2h`` along a unit direction ``u``.

    Returns ``(relative error, analytic, numeric)``; parameters are
    restored afterwards.
    """
    params = list(params)
    if direction is None:
        direction = [torch.randn(p.shape, dtype=p.dtype, generator=generator) for p in params]
    norm = torch.sqrt(sum((d * d).sum() for d in direction))
    direction = [d / norm for d in direction]

    for p in params:
        p.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    analytic = float(sum((g * d).sum() for g, d in zip(grads, direction) if g is not None))

    with torch.no_grad():
        for p, d in zip(params, direction):
            p.add_(h * d)
        f_plus = float(loss_fn())
        for p, d in zip(params, direction):
            p.sub_(2 * h * d)
        f_minus = float(loss_fn())
        for p, d in zip(params, direction):
            p.add_(h * d)
    numeric = (f_plus - f_minus) / (2 * h)
    scale = max(abs(analytic), abs(numeric), 1e-10)
    return abs(analytic - numeric) / scale, analytic, numeric


def coordinate_errors(
    loss_fn: Callable[[], torch.Tensor],
    param: torch.nn.Parameter,
    indices: Sequence[int],
    h: float = 1e-6,
) -> list[float]:
    """Relative error of single partial derivatives at flat ``indices`` of one tensor."""
    loss = loss_fn()
    (g,) = torch.autograd.grad(loss, [param])
    g = g.reshape(-1)
    flat = param.data.view(-1)
    out = []
    with torch.no_grad():
        for i in indices:
            old = float(flat[i])
            flat[i] = old + h
            fp = float(loss_fn())
            flat[i] = old - h
            fm = float(loss_fn())
            flat[i] = old
            num = (fp - fm) / (2 * h)
            a = float(g[i])
            out.append(abs(a - num) / max(abs(a), abs(num), 1e-10))
    return out
