"""Hybrid spatial-temporal transformer producing the per-robot feature ``Y``.

Humans and robots are encoded by separate spatial blocks (attention over
the agents visible at one timestep, a graph convolution over the
attention graph, and a gated fusion) and separate temporal blocks
(attention over one agent's history). The four resulting token sets are
aligned with cross-modal attention, mixed by one transformer layer and
pooled to a fixed-size vector.

Tensor layout: ``[batch, time, slot, feature]`` with boolean masks
``[batch, time, slot]``. Robot slot 0 is always the observing robot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

MASK_FILL = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    feat_dim: int = 11
    d_model: int = 64
    heads: int = 4
    layers: int = 2
    history: int = 5

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")


@dataclass
class FeatureMatrix:
    """Token features with a validity mask over the token axes."""

    x: torch.Tensor
    mask: torch.Tensor


def sinusoidal_encoding(length: int, d_model: int, dtype=torch.float32) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64)[:, None]
    i = torch.arange(0, d_model, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, i / d_model)
    pe = torch.zeros(length, d_model, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(angle)
    pe[:, 1::2] = torch.cos(angle[:, : d_model // 2])
    return pe.to(dtype)


def masked_softmax(scores: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
    """Softmax over the last axis; masked keys get exactly zero weight.

    Rows with no valid key come out all-zero instead of NaN.
    """
    scores = scores.masked_fill(~key_mask, MASK_FILL)
    w = torch.softmax(scores, dim=-1)
    return w * key_mask.to(w.dtype)


def masked_mean(x: torch.Tensor, mask: torch.Tensor, dim: int) -> torch.Tensor:
    m = mask.to(x.dtype).unsqueeze(-1)
    total = (x * m).sum(dim=dim)
    count = m.sum(dim=dim).clamp(min=1.0)
    return total / count


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, heads: int):
        super().__init__()
        self.heads = heads
        self.d_h = d_model // heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        *lead, n, _ = x.shape
        return x.view(*lead, n, self.heads, self.d_h).transpose(-2, -3)

    def forward(self, x, context, key_mask):
        """Return ``(output, weights)``; weights are ``[..., heads, Tq, Tk]``."""
        q, k, v = self._split(self.q(x)), self._split(self.k(context)), self._split(self.v(context))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.d_h)
        w = masked_softmax(scores, key_mask[..., None, None, :])
        heads = (w @ v).transpose(-2, -3)
        heads = heads.reshape(*heads.shape[:-2], self.heads * self.d_h)
        return self.out(heads), w


class SpatialLayer(nn.Module):
    def __init__(self, d_model: int, heads: int):
        super().__init__()
        self.attn = MultiHeadAttention(d_model, heads)
        self.gcn = nn.Linear(d_model, d_model)
        self.gate = nn.Linear(2 * d_model, d_model)
        self.norm = nn.LayerNorm(d_model)

    def forward(self, x, mask):
        a, w = self.attn(x, x, mask)
        adj = attention_adjacency(w, mask)
        b = F.gelu(adj @ self.gcn(x))
        g = torch.sigmoid(self.gate(torch.cat([a, b], dim=-1)))
        return self.norm(x + g * a + (1.0 - g) * b), adj


def attention_adjacency(weights: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Symmetrised, row-normalised, head-averaged attention graph."""
    a = weights.mean(dim=-3)
    a = 0.5 * (a + a.transpose(-1, -2))
    m = mask.to(a.dtype)
    a = a * m[..., :, None] * m[..., None, :]
    return a / a.sum(dim=-1, keepdim=True).clamp(min=1e-12)


class TemporalLayer(nn.Module):
    def __init__(self, d_model: int, heads: int):
        super().__init__()
        self.attn = MultiHeadAttention(d_model, heads)
        self.norm = nn.LayerNorm(d_model)

    def forward(self, x, mask):
        a, w = self.attn(x, x, mask)
        return self.norm(x + a), w


class _StreamEmbedding(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.embed = nn.Linear(cfg.feat_dim, cfg.d_model)
        self.register_buffer("pe", sinusoidal_encoding(cfg.history, cfg.d_model), persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: [B, L, S, F]; positional code indexes the timestep
        L = x.shape[1]
        return self.embed(x) + self.pe[-L:].to(x.dtype)[None, :, None, :]


class SpatialBlock(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.embedding = _StreamEmbedding(cfg)
        self.layers = nn.ModuleList(SpatialLayer(cfg.d_model, cfg.heads) for _ in range(cfg.layers))

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        h = self.embedding(x)
        for layer in self.layers:
            h, _ = layer(h, mask)
        return h * mask.to(h.dtype).unsqueeze(-1)


class TemporalBlock(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.embedding = _StreamEmbedding(cfg)
        self.layers = nn.ModuleList(TemporalLayer(cfg.d_model, cfg.heads) for _ in range(cfg.layers))

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        h = self.embedding(x).transpose(1, 2)  # [B, S, L, d]
        m = mask.transpose(1, 2)
        for layer in self.layers:
            h, _ = layer(h, m)
        return (h * m.to(h.dtype).unsqueeze(-1)).transpose(1, 2)


class FusionBlock(nn.Module):
    """Cross-modal attention from each stream into the fused token set, then one transformer layer."""

    MODALITIES = ("RS", "HS", "RT", "HT")

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        d = cfg.d_model
        self.modality = nn.Parameter(torch.zeros(len(self.MODALITIES), d))
        self.cross = nn.ModuleDict({m: MultiHeadAttention(d, cfg.heads) for m in self.MODALITIES})
        self.cross_norm = nn.LayerNorm(d)
        self.self_attn = MultiHeadAttention(d, cfg.heads)
        self.norm1 = nn.LayerNorm(d)
        self.ff = nn.Sequential(nn.Linear(d, 2 * d), nn.GELU(), nn.Linear(2 * d, d))
        self.norm2 = nn.LayerNorm(d)
        self.readout = nn.Linear(3 * d, d)

    def forward(self, streams: dict[str, FeatureMatrix]) -> torch.Tensor:
        toks, masks = [], []
        for k, m in enumerate(self.MODALITIES):
            toks.append(streams[m].x + self.modality[k])
            masks.append(streams[m].mask)
        fused = torch.cat(toks, dim=1)
        fmask = torch.cat(masks, dim=1)
        outs = []
        for tok, m in zip(toks, self.MODALITIES):
            o, _ = self.cross[m](tok, fused, fmask)
            outs.append(o)
        h = self.cross_norm(fused + torch.cat(outs, dim=1))
        a, _ = self.self_attn(h, h, fmask)
        h = self.norm1(h + a)
        h = self.norm2(h + self.ff(h))
        h = h * fmask.to(h.dtype).unsqueeze(-1)
        pooled = masked_mean(h, fmask, dim=1)
        # robot slot 0 is the observer; its RT token follows all RS and HS tokens
        n_rob = streams["RS"].x.shape[1]
        n_hum = streams["HS"].x.shape[1]
        self_spatial = h[:, 0]
        self_temporal = h[:, n_rob + n_hum]
        return self.readout(torch.cat([pooled, self_spatial, self_temporal], dim=-1))


class STEncoder(nn.Module):
    """Per-robot encoder mapping history windows to a ``d_model`` vector."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.spatial_h = SpatialBlock(cfg)
        self.spatial_r = SpatialBlock(cfg)
        self.temporal_h = TemporalBlock(cfg)
        self.temporal_r = TemporalBlock(cfg)
        self.fusion = FusionBlock(cfg)

    def streams(self, human: FeatureMatrix, robot: FeatureMatrix) -> dict[str, FeatureMatrix]:
        y_hs, y_rs = spatial_encode(human, robot, self)
        y_ht, y_rt = temporal_encode(human, robot, self)
        return {"RS": y_rs, "HS": y_hs, "RT": y_rt, "HT": y_ht}

    def forward(self, human: FeatureMatrix, robot: FeatureMatrix) -> torch.Tensor:
        return fuse(self.streams(human, robot), self)


def _pool_time(y: torch.Tensor, mask: torch.Tensor) -> FeatureMatrix:
    return FeatureMatrix(masked_mean(y.transpose(1, 2), mask.transpose(1, 2), dim=2), mask.any(dim=1))


def multi_head_attention(x: FeatureMatrix, context: FeatureMatrix, attn: MultiHeadAttention) -> FeatureMatrix:
    out, _ = attn(x.x, context.x, context.mask)
    return FeatureMatrix(out, x.mask)


def spatial_encode(human: FeatureMatrix, robot: FeatureMatrix, enc: STEncoder):
    """Per-timestep spatial features, pooled over time per slot: ``(Y_HS, Y_RS)``."""
    yh = enc.spatial_h(human.x, human.mask)
    yr = enc.spatial_r(robot.x, robot.mask)
    return _pool_time(yh, human.mask), _pool_time(yr, robot.mask)


def temporal_encode(human: FeatureMatrix, robot: FeatureMatrix, enc: STEncoder):
    """Per-slot temporal features, pooled over time: ``(Y_HT, Y_RT)``."""
    yh = enc.temporal_h(human.x, human.mask)
    yr = enc.temporal_r(robot.x, robot.mask)
    return _pool_time(yh, human.mask), _pool_time(yr, robot.mask)


def fuse(streams: dict[str, FeatureMatrix], enc: STEncoder) -> torch.Tensor:
    return enc.fusion(streams)
