"""Parameter checkpoints: one ``.npz`` container of named arrays plus metadata."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .. import __version__

FORMAT = "samarl.checkpoint/1"


class CheckpointError(RuntimeError):
    """Missing, malformed or shape-incompatible checkpoint."""


def save_checkpoint(path: str | Path, module: torch.nn.Module, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"param/{k}": v.detach().cpu().numpy() for k, v in module.state_dict().items()}
    header = {"format": FORMAT, "version": __version__, **meta}
    arrays["__meta__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def read_meta(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
    except (OSError, ValueError, KeyError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if meta.get("format") != FORMAT or "version" not in meta:
        raise CheckpointError(f"{path} lacks a {FORMAT} header with a version field")
    return meta


def load_checkpoint(path: str | Path, module: torch.nn.Module) -> dict:
    """Copy arrays into ``module`` after checking names and shapes; returns the metadata."""
    meta = read_meta(path)
    with np.load(path) as data:
        stored = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
    own = module.state_dict()
    missing = sorted(set(own) - set(stored))
    extra = sorted(set(stored) - set(own))
    if missing or extra:
        raise CheckpointError(f"parameter names differ (missing {missing[:3]}, unexpected {extra[:3]})")
    for k, v in own.items():
        if tuple(stored[k].shape) != tuple(v.shape):
            raise CheckpointError(f"shape mismatch for {k}: stored {stored[k].shape}, model {tuple(v.shape)}")
    module.load_state_dict({k: torch.as_tensor(stored[k], dtype=own[k].dtype) for k in own})
    return meta
