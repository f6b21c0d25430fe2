"""Static SVG rendering of observed, true and predicted trajectories."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


@dataclass(frozen=True)
class PlotTrack:
    ped_id: int
    observed: np.ndarray   # [T_obs, 2]
    future: np.ndarray     # [T_pred, 2]
    predicted: np.ndarray  # [T_pred, 2]


def align_tracks(observed: Mapping[int, np.ndarray], future: Mapping[int, np.ndarray],
                 predicted: Mapping[int, np.ndarray]) -> list[PlotTrack]:
    """Pair ground truth with predictions by pedestrian id; ids must match exactly."""
    truth_ids = set(observed) | set(future)
    if set(observed) != set(future) or truth_ids != set(predicted):
        missing = sorted(truth_ids - set(predicted))
        extra = sorted(set(predicted) - truth_ids)
        raise KeyError(f"pedestrian ids do not align: no prediction for {missing}, "
                       f"prediction without ground truth for {extra}")
    return [PlotTrack(pid, np.asarray(observed[pid], float), np.asarray(future[pid], float),
                      np.asarray(predicted[pid], float)) for pid in sorted(truth_ids)]


def _points(xy: np.ndarray) -> str:
    # y grows upward in scene coordinates, downward in SVG
    return " ".join(f"{x:.5f},{1.0 - y:.5f}" for x, y in xy)


def render_svg(tracks: Sequence[PlotTrack], obstacles: np.ndarray | None = None,
               lam: float = 0.5, size: int = 600, title: str | None = None) -> str:
    """SVG in normalized units (viewBox 0 0 1 1).

    Each track yields three polylines: observed (solid grey), true future
    (dashed grey, starting at the last observed point) and prediction (colored).
    Each obstacle is a circle of radius ``lam``.
    """
    obstacles = np.zeros((0, 2)) if obstacles is None else np.asarray(obstacles, float).reshape(-1, 2)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 1 1">',
        '<rect x="0" y="0" width="1" height="1" fill="white" stroke="#cccccc" stroke-width="0.002"/>',
    ]
    if title:
        safe = title.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        lines.append(f"<title>{safe}</title>")
    for ox, oy in obstacles:
        lines.append(f'<circle cx="{ox:.5f}" cy="{1.0 - oy:.5f}" r="{lam:.5f}" fill="#ff000014" '
                     'stroke="#cc0000" stroke-width="0.002" stroke-dasharray="0.01 0.006"/>')
    for i, tr in enumerate(tracks):
        color = PALETTE[i % len(PALETTE)]
        future = np.vstack([tr.observed[-1:], tr.future]) if len(tr.observed) else tr.future
        predicted = np.vstack([tr.observed[-1:], tr.predicted]) if len(tr.observed) else tr.predicted
        lines.append(f'<polyline class="observed" data-ped="{tr.ped_id}" points="{_points(tr.observed)}" '
                     'fill="none" stroke="#444444" stroke-width="0.004"/>')
        lines.append(f'<polyline class="future" data-ped="{tr.ped_id}" points="{_points(future)}" '
                     'fill="none" stroke="#444444" stroke-width="0.004" stroke-dasharray="0.012 0.008"/>')
        lines.append(f'<polyline class="predicted" data-ped="{tr.ped_id}" points="{_points(predicted)}" '
                     f'fill="none" stroke="{color}" stroke-width="0.004"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_svg(path: str | Path, tracks: Sequence[PlotTrack], obstacles: np.ndarray | None = None,
              lam: float = 0.5, **kwargs) -> Path:
    path = Path(path)
    path.write_text(render_svg(tracks, obstacles, lam, **kwargs), encoding="utf-8")
    return path
