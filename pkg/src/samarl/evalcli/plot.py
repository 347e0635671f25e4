"""Render an episode log as a standalone SVG."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import quoteattr

import numpy as np

from .metrics import read_log

ROBOT_COLORS = ("#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")
HUMAN_COLOR = "#7f7f7f"
SIZE = 600
MARGIN = 30


def plot_episode(log_path: str | Path, out_path: str | Path | None = None) -> Path:
    """Trajectories (one polyline per agent), robot goals and any collision point."""
    records = read_log(log_path)
    head = records[0]
    kinds = head["kinds"]
    goals = np.asarray(head["goals"], dtype=np.float64)
    pos = np.asarray([r["agents"] for r in records], dtype=np.float64)[..., 0:2]
    coll = records[-1].get("collision")

    pts = np.concatenate([pos.reshape(-1, 2), goals] + ([np.asarray([coll])] if coll else []))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-6))
    scale = (SIZE - 2 * MARGIN) / span

    def xy(p) -> tuple[float, float]:
        # flip y so the plot reads like a map
        return MARGIN + (p[0] - lo[0]) * scale, SIZE - MARGIN - (p[1] - lo[1]) * scale

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">',
        f'<rect width="{SIZE}" height="{SIZE}" fill="white"/>',
    ]
    r_idx = 0
    for j, kind in enumerate(kinds):
        if kind == "robot":
            color = ROBOT_COLORS[r_idx % len(ROBOT_COLORS)]
            r_idx += 1
            width = 2.5
        else:
            color, width = HUMAN_COLOR, 1.2
        path = " ".join("{:.2f},{:.2f}".format(*xy(p)) for p in pos[:, j])
        out.append(
            f'<polyline class={quoteattr(kind)} data-agent="{j}" points="{path}" fill="none" '
            f'stroke="{color}" stroke-width="{width}"/>'
        )
        sx, sy = xy(pos[0, j])
        out.append(f'<circle class="start" cx="{sx:.2f}" cy="{sy:.2f}" r="3" fill="{color}"/>')
        if kind == "robot":
            gx, gy = xy(goals[j])
            out.append(
                f'<rect class="goal" x="{gx - 5:.2f}" y="{gy - 5:.2f}" width="10" height="10" '
                f'fill="none" stroke="{color}" stroke-width="2"/>'
            )
    if coll:
        cx, cy = xy(coll)
        out.append(f'<circle class="collision" cx="{cx:.2f}" cy="{cy:.2f}" r="8" fill="none" '
                   f'stroke="red" stroke-width="3"/>')
    out.append(f'<text x="{MARGIN}" y="18" font-family="sans-serif" font-size="13">'
               f'seed {head["seed"]} status {records[-1]["status"]} steps {len(records) - 1}</text>')
    out.append("</svg>")

    target = Path(out_path) if out_path is not None else Path(log_path).with_suffix(".svg")
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text("\n".join(out) + "\n")
    return target
