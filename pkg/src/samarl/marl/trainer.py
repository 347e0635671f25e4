"""MAPPO update and the collect/update training loop.

Every update rebuilds the encoder inputs for all recorded states, scores
them with the frozen pre-update networks (old log-probs and values),
runs GAE on both timescales and then takes ``ppo_epochs`` passes of
gradient steps on the clipped actor and critic losses.
"""

from __future__ import annotations

import copy
import csv
import json
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np
import torch

from ..core import ConfigError, ScenarioConfig
from ..encoder import EncoderConfig, FeatureMatrix
from ..env import NavEnv, Status
from ..features import build_inputs, waypoint_features
from .buffer import RolloutBuffer, collect_rollout
from .checkpoint import save_checkpoint
from .losses import DivergenceError, actor_loss, critic_loss, gae, gaussian_entropy, gaussian_log_prob, normalize
from .policy import ModelConfig, SamarlModel

EVAL_SEED_BASE = 1_000_000_000
DIAGNOSTIC_FIELDS = (
    "update", "episodes", "mean_episode_reward", "success_rate", "collision_rate",
    "loss", "actor_ma", "actor_la", "critic_ma", "critic_la", "entropy_ma", "entropy_la",
    "approx_kl", "clip_frac", "grad_norm", "aborted", "seconds",
)


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    value_clip: float = 0.2
    entropy_coef: float = 0.01
    lr: float = 5e-4
    ppo_epochs: int = 15
    minibatch_count: int = 1
    episodes: int = 2000
    episodes_per_update: int = 10
    seed: int = 0
    share_params: bool = True
    single_agent: bool = False
    max_grad_norm: float = 10.0
    value_coef: float = 1.0
    optimizer: str = "adam"
    d_model: int = 64
    heads: int = 4
    layers: int = 2
    history: int = 5
    hidden: int = 64
    log_std_init: float = -0.5
    checkpoint_every: int = 50

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError("gamma and gae_lambda must lie in [0, 1]")
        if self.clip <= 0 or self.value_clip <= 0:
            raise ConfigError("clip values must be positive")
        if self.ppo_epochs < 1 or self.minibatch_count < 1 or self.episodes_per_update < 1:
            raise ConfigError("ppo_epochs, minibatch_count and episodes_per_update must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.d_model % self.heads:
            raise ConfigError("d_model must be divisible by heads")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown training keys: {unknown}")
        return cls(**data)

    def model_config(self, n_robots: int) -> ModelConfig:
        enc = EncoderConfig(d_model=self.d_model, heads=self.heads, layers=self.layers, history=self.history)
        return ModelConfig(
            n_robots=n_robots, encoder=enc, hidden=self.hidden, share_params=self.share_params,
            single_agent=self.single_agent, log_std_init=self.log_std_init,
        )


@dataclass
class Batch:
    """Flattened ``(episode, t)`` rows, each holding all ``N`` robots.

    Tensors with a leading ``S*N`` axis are indexed row-major
    (``row * N + robot``); the rest are ``[S, N, ...]``.
    """

    n_robots: int
    actor_h: FeatureMatrix
    actor_r: FeatureMatrix
    critic_h: FeatureMatrix
    critic_r: FeatureMatrix
    robot_id: torch.Tensor
    wp_feat: torch.Tensor
    joint_ma: torch.Tensor
    x_ma: torch.Tensor
    x_la: torch.Tensor
    ma_mask: torch.Tensor
    la_mask: torch.Tensor
    row_slices: list[slice]
    old_logp_ma: torch.Tensor | None = None
    old_logp_la: torch.Tensor | None = None
    old_v: torch.Tensor | None = None
    old_vp: torch.Tensor | None = None
    adv_ma: torch.Tensor | None = None
    adv_la: torch.Tensor | None = None
    ret_ma: torch.Tensor | None = None
    ret_la: torch.Tensor | None = None

    @property
    def n_rows(self) -> int:
        return self.ma_mask.shape[0]

    def _flat(self, rows: torch.Tensor) -> torch.Tensor:
        return (rows[:, None] * self.n_robots + torch.arange(self.n_robots)).reshape(-1)


def _cat_fm(parts: list[FeatureMatrix]) -> FeatureMatrix:
    return FeatureMatrix(torch.cat([p.x for p in parts]), torch.cat([p.mask for p in parts]))


def _sub_fm(fm: FeatureMatrix, idx: torch.Tensor) -> FeatureMatrix:
    return FeatureMatrix(fm.x[idx], fm.mask[idx])


def build_batch(buffer: RolloutBuffer, history: int, single_agent: bool, dtype=torch.float32) -> Batch:
    ah, ar, ch, cr, rid, wpf, jma = [], [], [], [], [], [], []
    xma, xla, mam, lam, slices = [], [], [], [], []
    start = 0
    for ep in buffer.episodes:
        T, n = ep.length, ep.n_robots
        ts = np.repeat(np.arange(T + 1), n)
        rs = np.tile(np.arange(n), T + 1)
        h, r = build_inputs(ep.trace, ts, rs, history, full=False, dtype=dtype)
        ah.append(h)
        ar.append(r)
        h, r = build_inputs(ep.trace, ts, rs, history, full=not single_agent, dtype=dtype)
        ch.append(h)
        cr.append(r)
        rid.append(torch.as_tensor(rs))
        wp = ep.waypoint[ts, rs]
        wpf.append(torch.as_tensor(waypoint_features(ep.trace, ts, rs, wp[:, None])[:, 0], dtype=dtype))
        # joint macro actions in each robot's frame, own waypoint first
        order = np.array([[i] + [j for j in range(n) if j != i] for i in rs])
        joint = ep.waypoint[ts[:, None], order]
        jma.append(torch.as_tensor(waypoint_features(ep.trace, ts, rs, joint), dtype=dtype).view(T + 1, n, n, 2))
        pad = lambda a: np.concatenate([a, np.zeros((1,) + a.shape[1:], dtype=a.dtype)])  # noqa: E731
        xma.append(torch.as_tensor(pad(ep.x_ma), dtype=dtype))
        xla.append(torch.as_tensor(pad(ep.x_la), dtype=dtype))
        mam.append(torch.as_tensor(pad(ep.ma_start)))
        lam.append(torch.as_tensor(pad(ep.active)))
        slices.append(slice(start, start + T + 1))
        start += T + 1
    n_robots = buffer.episodes[0].n_robots
    return Batch(
        n_robots=n_robots, actor_h=_cat_fm(ah), actor_r=_cat_fm(ar), critic_h=_cat_fm(ch),
        critic_r=_cat_fm(cr), robot_id=torch.cat(rid), wp_feat=torch.cat(wpf), joint_ma=torch.cat(jma),
        x_ma=torch.cat(xma), x_la=torch.cat(xla), ma_mask=torch.cat(mam), la_mask=torch.cat(lam),
        row_slices=slices,
    )


def forward(model: SamarlModel, batch: Batch, rows: torch.Tensor | None = None) -> dict[str, torch.Tensor]:
    """Log-probs, entropies and both critic values for the selected rows, all ``[s, N]``."""
    if rows is None:
        rows = torch.arange(batch.n_rows)
    flat = batch._flat(rows)
    s, n = len(rows), batch.n_robots
    rid = batch.robot_id[flat]
    y = model.encode(_sub_fm(batch.actor_h, flat), _sub_fm(batch.actor_r, flat), rid)
    yc = model.critic_encode(_sub_fm(batch.critic_h, flat), _sub_fm(batch.critic_r, flat))
    ma_mean, ma_ls = model.ma_params(y, rid)
    la_mean, la_ls = model.la_params(y, batch.wp_feat[flat], rid)
    v, vp = model.values(y.view(s, n, -1), yc.view(s, n, -1), batch.joint_ma[rows])
    return {
        "logp_ma": gaussian_log_prob(batch.x_ma[rows].reshape(s * n, -1), ma_mean, ma_ls).view(s, n),
        "logp_la": gaussian_log_prob(batch.x_la[rows].reshape(s * n, -1), la_mean, la_ls).view(s, n),
        "ent_ma": gaussian_entropy(ma_ls).view(s, n),
        "ent_la": gaussian_entropy(la_ls).view(s, n),
        "v": v,
        "vp": vp,
    }


def compute_advantages(buffer: RolloutBuffer, batch: Batch, v: np.ndarray, vp: np.ndarray,
                       gamma: float, lam: float) -> tuple[np.ndarray, ...]:
    """GAE on the step timeline (LA critic) and on the epoch timeline (MA critic).

    Returns are cut at collisions and arrivals and bootstrapped from the
    final state only when the episode timed out.
    """
    S, N = v.shape
    adv_ma, ret_ma = np.zeros((S, N)), np.zeros((S, N))
    adv_la, ret_la = np.zeros((S, N)), np.zeros((S, N))
    for ep, sl in zip(buffer.episodes, batch.row_slices):
        base, T = sl.start, ep.length
        boot = ep.bootstrap_mask()
        for i in range(N):
            steps = ep.robot_steps(i)
            if len(steps) == 0:
                continue
            b = vp[base + T, i] if boot[i] else 0.0
            a, r = gae(ep.rewards[steps, i], vp[base + steps, i], b, gamma, lam)
            adv_la[base + steps, i], ret_la[base + steps, i] = a, r
            starts = np.flatnonzero(ep.ma_start[:, i])
            rew, length = ep.macro_rewards(i, gamma)
            b = v[base + T, i] if boot[i] else 0.0
            a, r = gae(rew, v[base + starts, i], b, gamma ** length, lam)
            adv_ma[base + starts, i], ret_ma[base + starts, i] = a, r
    return adv_ma, ret_ma, adv_la, ret_la


@torch.no_grad()
def prepare(model: SamarlModel, buffer: RolloutBuffer, batch: Batch, cfg: TrainConfig) -> Batch:
    out = forward(model, batch)
    batch.old_logp_ma, batch.old_logp_la = out["logp_ma"], out["logp_la"]
    batch.old_v, batch.old_vp = out["v"], out["vp"]
    adv_ma, ret_ma, adv_la, ret_la = compute_advantages(
        buffer, batch, out["v"].double().numpy(), out["vp"].double().numpy(), cfg.gamma, cfg.gae_lambda
    )
    dt = batch.old_v.dtype
    batch.adv_ma = normalize(torch.as_tensor(adv_ma, dtype=dt), batch.ma_mask)
    batch.adv_la = normalize(torch.as_tensor(adv_la, dtype=dt), batch.la_mask)
    batch.ret_ma = torch.as_tensor(ret_ma, dtype=dt)
    batch.ret_la = torch.as_tensor(ret_la, dtype=dt)
    return batch


def compute_losses(model: SamarlModel, batch: Batch, cfg: TrainConfig,
                   rows: torch.Tensor | None = None) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Total MAPPO loss ``L_MA + L_LA + value_coef * (L_V + L_V')`` on the selected rows."""
    if rows is None:
        rows = torch.arange(batch.n_rows)
    out = forward(model, batch, rows)
    mm, lm = batch.ma_mask[rows], batch.la_mask[rows]
    parts = {
        "actor_ma": actor_loss(out["logp_ma"], batch.old_logp_ma[rows], batch.adv_ma[rows], out["ent_ma"],
                               cfg.clip, cfg.entropy_coef, mm),
        "actor_la": actor_loss(out["logp_la"], batch.old_logp_la[rows], batch.adv_la[rows], out["ent_la"],
                               cfg.clip, cfg.entropy_coef, lm),
        "critic_ma": critic_loss(out["v"], batch.old_v[rows], batch.ret_ma[rows], cfg.value_clip, mm),
        "critic_la": critic_loss(out["vp"], batch.old_vp[rows], batch.ret_la[rows], cfg.value_clip, lm),
    }
    total = parts["actor_ma"] + parts["actor_la"] + cfg.value_coef * (parts["critic_ma"] + parts["critic_la"])
    with torch.no_grad():
        ratio_log = out["logp_la"] - batch.old_logp_la[rows]
        lmf = lm.to(ratio_log.dtype)
        count = lmf.sum().clamp(min=1.0)
        parts["approx_kl"] = ((torch.exp(ratio_log) - 1.0 - ratio_log) * lmf).sum() / count
        parts["clip_frac"] = (((ratio_log.exp() - 1.0).abs() > cfg.clip).to(lmf.dtype) * lmf).sum() / count
        parts["entropy_ma"] = out["ent_ma"].mean()
        parts["entropy_la"] = out["ent_la"].mean()
    return total, parts


def make_optimizer(model: SamarlModel, cfg: TrainConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "sgd":
        return torch.optim.SGD(model.parameters(), lr=cfg.lr)
    return torch.optim.Adam(model.parameters(), lr=cfg.lr)


def update(
    model: SamarlModel,
    optimizer: torch.optim.Optimizer,
    buffer: RolloutBuffer,
    cfg: TrainConfig,
    generator: torch.Generator | None = None,
) -> dict[str, float]:
    """One MAPPO update on a complete buffer. Returns mean diagnostics.

    A non-finite ratio or loss restores the pre-update parameters and
    optimizer state and reports ``aborted = 1``.
    """
    dtype = next(model.parameters()).dtype
    batch = prepare(model, buffer, build_batch(buffer, cfg.history, cfg.single_agent, dtype), cfg)
    saved_model = copy.deepcopy(model.state_dict())
    saved_opt = copy.deepcopy(optimizer.state_dict())
    params = [p for p in model.parameters() if p.requires_grad]
    sums: dict[str, float] = {}
    n_steps = 0
    try:
        for _ in range(cfg.ppo_epochs):
            perm = torch.randperm(batch.n_rows, generator=generator)
            for rows in torch.tensor_split(perm, cfg.minibatch_count):
                loss, parts = compute_losses(model, batch, cfg, rows)
                if not torch.isfinite(loss):
                    raise DivergenceError("non-finite loss")
                optimizer.zero_grad()
                loss.backward()
                gn = torch.nn.utils.clip_grad_norm_(params, cfg.max_grad_norm)
                if not torch.isfinite(gn):
                    raise DivergenceError("non-finite gradient")
                optimizer.step()
                parts = {"loss": loss, "grad_norm": gn, **parts}
                for k, val in parts.items():
                    sums[k] = sums.get(k, 0.0) + float(val.detach() if torch.is_tensor(val) else val)
                n_steps += 1
    except DivergenceError as exc:
        model.load_state_dict(saved_model)
        optimizer.load_state_dict(saved_opt)
        out = {k: v / max(n_steps, 1) for k, v in sums.items()}
        out.update(aborted=1.0, reason=str(exc))
        return out
    out = {k: v / n_steps for k, v in sums.items()}
    out["aborted"] = 0.0
    return out


def build_model(scenario: ScenarioConfig, cfg: TrainConfig) -> SamarlModel:
    torch.manual_seed(cfg.seed)
    return SamarlModel(cfg.model_config(scenario.n_robots))


def evaluate(model: SamarlModel, scenario: ScenarioConfig, seeds, history: int) -> RolloutBuffer:
    """Deterministic (mean-action) rollouts on the given seeds."""
    return collect_rollout([NavEnv(scenario)], model, history, seeds, rng=None)


def held_out_seeds(n: int) -> list[int]:
    return [EVAL_SEED_BASE + k for k in range(n)]


def train(
    scenario: ScenarioConfig,
    cfg: TrainConfig,
    run_dir: str | Path | None = None,
    log: Callable[[str], None] | None = None,
    model: SamarlModel | None = None,
) -> tuple[SamarlModel, list[dict[str, float]]]:
    """Collect ``episodes_per_update`` episodes, update, repeat until the budget is spent."""
    torch.set_num_threads(1)
    model = model or build_model(scenario, cfg)
    opt = make_optimizer(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    env = NavEnv(scenario)
    run = Path(run_dir) if run_dir is not None else None
    writer = None
    if run is not None:
        run.mkdir(parents=True, exist_ok=True)
        (run / "config.json").write_text(
            json.dumps({"scenario": scenario.to_dict(), "train": cfg.to_dict()}, indent=2, sort_keys=True)
        )
        csv_fh = open(run / "diagnostics.csv", "w", newline="")
        writer = csv.DictWriter(csv_fh, fieldnames=DIAGNOSTIC_FIELDS, extrasaction="ignore")
        writer.writeheader()
    history: list[dict[str, float]] = []
    done = 0
    k = 0
    try:
        while done < cfg.episodes:
            t0 = time.perf_counter()
            n_ep = min(cfg.episodes_per_update, cfg.episodes - done)
            seeds = rng.integers(0, EVAL_SEED_BASE, size=n_ep)
            buf = collect_rollout([env], model, cfg.history, seeds, rng)
            diag = update(model, opt, buf, cfg, gen)
            done += n_ep
            k += 1
            statuses = [e.status for e in buf.episodes]
            diag.update(
                update=k, episodes=done, mean_episode_reward=buf.mean_episode_reward(),
                success_rate=buf.success_rate(),
                collision_rate=float(np.mean([s is Status.COLLISION for s in statuses])),
                seconds=time.perf_counter() - t0,
            )
            history.append(diag)
            if writer is not None:
                writer.writerow(diag)
                csv_fh.flush()
                if k % cfg.checkpoint_every == 0:
                    save_model(run / f"checkpoint_{k:05d}.npz", model, scenario, cfg, done)
            if log is not None:
                log(f"update {k:4d} episodes {done:5d} success {diag['success_rate']:.2f} "
                    f"reward {diag['mean_episode_reward']:8.2f} loss {diag.get('loss', float('nan')):8.3f}")
        if run is not None:
            save_model(run / "checkpoint_final.npz", model, scenario, cfg, done)
    finally:
        if writer is not None:
            csv_fh.close()
    return model, history


def save_model(path: str | Path, model: SamarlModel, scenario: ScenarioConfig, cfg: TrainConfig,
               episodes: int = 0) -> Path:
    """Checkpoint with the metadata needed to rebuild the model for evaluation."""
    return save_checkpoint(path, model, {
        "model": model.cfg.to_dict(), "scenario": scenario.to_dict(), "train": cfg.to_dict(),
        "episodes": episodes,
    })
