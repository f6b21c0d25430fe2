"""Tab-separated prediction files shared by ``predict`` and ``plot``.

One row per (scene, start_frame, ped_id, step) with normalized x, y.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Iterable

import numpy as np

from .data import AnnotationParseError

HEADER = "# scene\tstart_frame\tped_id\tstep\tx\ty\n"


def format_predictions(rows: Iterable[tuple[str, int, int, np.ndarray]]) -> str:
    """``rows`` yields (scene, start_frame, ped_id, [T_pred, 2] positions)."""
    out = [HEADER]
    for scene, start, pid, track in rows:
        for k, (x, y) in enumerate(np.asarray(track, dtype=np.float64)):
            out.append(f"{scene}\t{start}\t{pid}\t{k}\t{x:.17g}\t{y:.17g}\n")
    return "".join(out)


def parse_predictions(text: str, source: str | None = None) -> dict[tuple[str, int], dict[int, np.ndarray]]:
    """Map (scene, start_frame) -> ped_id -> [T_pred, 2]."""
    acc: dict[tuple[str, int], dict[int, dict[int, tuple[float, float]]]] = defaultdict(lambda: defaultdict(dict))
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        f = line.split("\t")
        if len(f) != 6:
            raise AnnotationParseError(f"expected 6 tab-separated fields, found {len(f)}", lineno, source)
        try:
            scene, start, pid, step, x, y = f[0], int(f[1]), int(f[2]), int(f[3]), float(f[4]), float(f[5])
        except ValueError:
            raise AnnotationParseError(f"malformed prediction row {line!r}", lineno, source) from None
        acc[(scene, start)][pid][step] = (x, y)
    out: dict[tuple[str, int], dict[int, np.ndarray]] = {}
    for key, peds in acc.items():
        out[key] = {}
        for pid, steps in peds.items():
            if sorted(steps) != list(range(len(steps))):
                raise AnnotationParseError(f"pedestrian {pid} at {key}: steps are not 0..n-1", 0, source)
            out[key][pid] = np.array([steps[k] for k in range(len(steps))])
    return out


def read_predictions(path: str | Path):
    return parse_predictions(Path(path).read_text(encoding="utf-8"), str(path))
