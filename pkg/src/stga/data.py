"""Annotation parsing, normalization, skip-rate resampling and windowing.

Canonical annotation file: one ``frame_id ped_id x y`` record per line
(tab or space separated).  Obstacle file: ``obstacle_id x y``.  Lines starting
with ``#`` and blank lines are ignored.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

T_OBS = 8
T_PRED = 12
SCENE_NAMES = ("ETH", "HOTEL", "ZARA1", "ZARA2", "UNIV")


class AnnotationParseError(ValueError):
    def __init__(self, message: str, line: int, source: str | None = None):
        where = f"{source}:" if source else ""
        super().__init__(f"{where}line {line}: {message}")
        self.line = line
        self.source = source


class DuplicateAnnotationError(AnnotationParseError):
    pass


class DegenerateExtentError(ValueError):
    pass


@dataclass(frozen=True)
class RawAnnotation:
    frame_id: int
    ped_id: int
    x: float
    y: float


@dataclass(frozen=True)
class ObstacleAnnotation:
    obstacle_id: int
    x: float
    y: float


def _as_int(token: str) -> int:
    value = float(token)
    if not math.isfinite(value) or value != int(value):
        raise ValueError(f"expected an integer, got {token!r}")
    return int(value)


def _records(text: str) -> Iterable[tuple[int, list[str]]]:
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield lineno, stripped.split()


def parse_annotations(text: str, source: str | None = None) -> list[RawAnnotation]:
    out: list[RawAnnotation] = []
    seen: dict[tuple[int, int], int] = {}
    for lineno, fields in _records(text):
        if len(fields) != 4:
            raise AnnotationParseError(f"expected 4 fields, found {len(fields)}", lineno, source)
        try:
            frame, ped = _as_int(fields[0]), _as_int(fields[1])
            x, y = float(fields[2]), float(fields[3])
        except ValueError as exc:
            raise AnnotationParseError(str(exc), lineno, source) from None
        if frame < 0:
            raise AnnotationParseError("negative frame id", lineno, source)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise AnnotationParseError("non-finite coordinate", lineno, source)
        key = (frame, ped)
        if key in seen:
            raise DuplicateAnnotationError(
                f"duplicate (frame {frame}, ped {ped}); first seen on line {seen[key]}", lineno, source)
        seen[key] = lineno
        out.append(RawAnnotation(frame, ped, x, y))
    return out


def parse_obstacles(text: str, source: str | None = None) -> list[ObstacleAnnotation]:
    out: list[ObstacleAnnotation] = []
    seen: set[int] = set()
    for lineno, fields in _records(text):
        if len(fields) != 3:
            raise AnnotationParseError(f"expected 3 fields, found {len(fields)}", lineno, source)
        try:
            oid = _as_int(fields[0])
            x, y = float(fields[1]), float(fields[2])
        except ValueError as exc:
            raise AnnotationParseError(str(exc), lineno, source) from None
        if oid in seen:
            raise DuplicateAnnotationError(f"duplicate obstacle id {oid}", lineno, source)
        seen.add(oid)
        out.append(ObstacleAnnotation(oid, x, y))
    return out


def convert_raw(text: str, fmt: str, source: str | None = None) -> list[RawAnnotation]:
    """Read the per-scene distributions into canonical records.

    ``canonical``: 4 columns.  ``obsmat``: ETH ``obsmat.txt`` with 8 columns
    (frame, ped, x, z, y, vx, vz, vy).
    """
    if fmt == "canonical":
        return parse_annotations(text, source)
    if fmt != "obsmat":
        raise ValueError(f"unknown annotation format {fmt!r}")
    lines = [""] * len(text.splitlines())   # keep line numbers for error messages
    for lineno, fields in _records(text):
        if len(fields) != 8:
            raise AnnotationParseError(f"expected 8 fields, found {len(fields)}", lineno, source)
        lines[lineno - 1] = f"{fields[0]} {fields[1]} {fields[2]} {fields[4]}"
    return parse_annotations("\n".join(lines), source)


def format_annotations(records: Iterable[RawAnnotation]) -> str:
    return "".join(f"{r.frame_id}\t{r.ped_id}\t{r.x!r}\t{r.y!r}\n" for r in records)


def format_obstacles(records: Iterable[ObstacleAnnotation]) -> str:
    return "".join(f"{o.obstacle_id}\t{o.x!r}\t{o.y!r}\n" for o in records)


def read_annotations(path: str | Path) -> list[RawAnnotation]:
    return parse_annotations(Path(path).read_text(encoding="utf-8"), str(path))


def read_obstacles(path: str | Path | None) -> list[ObstacleAnnotation]:
    if path is None:
        return []
    return parse_obstacles(Path(path).read_text(encoding="utf-8"), str(path))


@dataclass(frozen=True)
class NormalizationTransform:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if not (self.max_x > self.min_x and self.max_y > self.min_y):
            raise DegenerateExtentError(f"degenerate extent: {self}")

    @classmethod
    def identity(cls) -> "NormalizationTransform":
        return cls(0.0, 0.0, 1.0, 1.0)

    @property
    def span(self) -> np.ndarray:
        return np.array([self.max_x - self.min_x, self.max_y - self.min_y])

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return (p - np.array([self.min_x, self.min_y])) / self.span

    def invert(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p * self.span + np.array([self.min_x, self.min_y])


def fit_normalization(annotations: Sequence[RawAnnotation],
                      obstacles: Sequence[ObstacleAnnotation] = ()) -> NormalizationTransform:
    """Bounding box of pedestrians and obstacles mapped onto the unit square."""
    xs = [a.x for a in annotations] + [o.x for o in obstacles]
    ys = [a.y for a in annotations] + [o.y for o in obstacles]
    if not xs:
        raise DegenerateExtentError("no coordinates to fit")
    min_x, max_x, min_y, max_y = min(xs), max(xs), min(ys), max(ys)
    if max_x == min_x:
        raise DegenerateExtentError(f"degenerate x extent at {min_x}")
    if max_y == min_y:
        raise DegenerateExtentError(f"degenerate y extent at {min_y}")
    return NormalizationTransform(min_x, min_y, max_x, max_y)


def resample_by_skip(annotations: Sequence[RawAnnotation], skip_rate: int) -> tuple[list[RawAnnotation], int]:
    """Keep one position per pedestrian on every multiple of ``skip_rate``.

    Grid frames between a pedestrian's first and last annotation that were not
    annotated are linearly interpolated.  Pedestrians with fewer than two
    annotations, or whose span contains no grid frame, are dropped; the number
    dropped is returned with the records (ordered by ped, then frame).
    """
    if skip_rate < 1:
        raise ValueError("skip_rate must be >= 1")
    by_ped: dict[int, list[RawAnnotation]] = defaultdict(list)
    for a in annotations:
        by_ped[a.ped_id].append(a)
    out: list[RawAnnotation] = []
    dropped = 0
    for ped in sorted(by_ped):
        recs = sorted(by_ped[ped], key=lambda r: r.frame_id)
        if len(recs) < 2:
            dropped += 1
            continue
        frames = np.array([r.frame_id for r in recs], dtype=np.float64)
        xs = np.array([r.x for r in recs])
        ys = np.array([r.y for r in recs])
        first = -(-recs[0].frame_id // skip_rate) * skip_rate
        grid = np.arange(first, recs[-1].frame_id + 1, skip_rate, dtype=np.int64)
        if len(grid) == 0:
            dropped += 1
            continue
        exact = {r.frame_id: r for r in recs}
        gx = np.interp(grid, frames, xs)
        gy = np.interp(grid, frames, ys)
        for f, x, y in zip(grid.tolist(), gx.tolist(), gy.tolist()):
            r = exact.get(f)
            out.append(r if r is not None else RawAnnotation(f, ped, x, y))
    if dropped:
        log.warning("resample_by_skip: dropped %d pedestrian(s) without enough annotations", dropped)
    return out, dropped


@dataclass(frozen=True)
class TrajectorySequence:
    ped_id: int
    start_frame: int
    observed: np.ndarray
    future: np.ndarray

    @property
    def positions(self) -> np.ndarray:
        return np.concatenate([self.observed, self.future], axis=0)


def window_counts(length: int, t_obs: int = T_OBS, t_pred: int = T_PRED) -> int:
    return max(0, length - (t_obs + t_pred) + 1)


def window_sequences(annotations: Sequence[RawAnnotation], skip_rate: int = 1,
                     t_obs: int = T_OBS, t_pred: int = T_PRED,
                     transform: NormalizationTransform | None = None) -> list[TrajectorySequence]:
    """Slide a (t_obs + t_pred)-step window with stride 1 over each pedestrian's runs.

    A run is a maximal stretch of records whose frames advance by exactly
    ``skip_rate``.  Positions are normalized with ``transform`` when given and
    clipped to the unit square.
    """
    length = t_obs + t_pred
    by_ped: dict[int, list[RawAnnotation]] = defaultdict(list)
    for a in annotations:
        by_ped[a.ped_id].append(a)
    out: list[TrajectorySequence] = []
    for ped in sorted(by_ped):
        recs = sorted(by_ped[ped], key=lambda r: r.frame_id)
        runs: list[list[RawAnnotation]] = [[recs[0]]]
        for prev, cur in zip(recs, recs[1:]):
            if cur.frame_id - prev.frame_id == skip_rate:
                runs[-1].append(cur)
            else:
                runs.append([cur])
        for run in runs:
            if len(run) < length:
                continue
            xy = np.array([[r.x, r.y] for r in run], dtype=np.float64)
            if transform is not None:
                xy = np.clip(transform.apply(xy), 0.0, 1.0)
            for s in range(len(run) - length + 1):
                w = xy[s:s + length]
                out.append(TrajectorySequence(ped, run[s].frame_id, w[:t_obs].copy(), w[t_obs:].copy()))
    return out


@dataclass
class SceneInstance:
    """Co-temporal pedestrians sharing one frame window, processed as one graph sequence."""

    start_frame: int
    ped_ids: tuple[int, ...]
    positions: np.ndarray          # [T, N, 2], normalized
    obstacle_ids: tuple[int, ...] = ()
    obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    scene: str = ""

    @property
    def n_peds(self) -> int:
        return len(self.ped_ids)

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0]

    def sequences(self, t_obs: int = T_OBS) -> list[TrajectorySequence]:
        return [TrajectorySequence(pid, self.start_frame, self.positions[:t_obs, i].copy(),
                                   self.positions[t_obs:, i].copy())
                for i, pid in enumerate(self.ped_ids)]


@dataclass
class SceneDataset:
    name: str
    instances: list[SceneInstance]
    obstacle_ids: tuple[int, ...]
    obstacles: np.ndarray
    transform: NormalizationTransform
    meters_per_unit: float = 1.0
    n_dropped: int = 0

    @property
    def sequences(self) -> list[TrajectorySequence]:
        return [s for inst in self.instances for s in inst.sequences()]

    @property
    def n_sequences(self) -> int:
        return sum(inst.n_peds for inst in self.instances)

    def to_meters(self, normalized) -> np.ndarray:
        """Normalized coordinates back to scene units, then scaled to meters."""
        return self.transform.invert(normalized) * self.meters_per_unit


def group_instances(sequences: Sequence[TrajectorySequence], obstacle_ids: Sequence[int],
                    obstacles: np.ndarray, scene: str = "") -> list[SceneInstance]:
    by_start: dict[int, list[TrajectorySequence]] = defaultdict(list)
    for s in sequences:
        by_start[s.start_frame].append(s)
    out = []
    for start in sorted(by_start):
        seqs = sorted(by_start[start], key=lambda s: s.ped_id)
        pos = np.stack([s.positions for s in seqs], axis=1)
        out.append(SceneInstance(start, tuple(s.ped_id for s in seqs), pos,
                                 tuple(obstacle_ids), np.asarray(obstacles, dtype=np.float64).reshape(-1, 2),
                                 scene))
    return out


def build_scene(name: str, annotations: Sequence[RawAnnotation], obstacles: Sequence[ObstacleAnnotation],
                skip_rate: int = 10, meters_per_unit: float = 1.0, t_obs: int = T_OBS,
                t_pred: int = T_PRED, transform: NormalizationTransform | None = None) -> SceneDataset:
    """Resample, normalize by the scene's own extent, window and group one scene."""
    resampled, dropped = resample_by_skip(annotations, skip_rate)
    if transform is None:
        if resampled or obstacles:
            transform = fit_normalization(resampled or annotations, obstacles)
        else:
            transform = NormalizationTransform.identity()
    seqs = window_sequences(resampled, skip_rate, t_obs, t_pred, transform)
    obs_sorted = sorted(obstacles, key=lambda o: o.obstacle_id)
    obs_ids = tuple(o.obstacle_id for o in obs_sorted)
    obs_pos = transform.apply(np.array([[o.x, o.y] for o in obs_sorted]).reshape(-1, 2))
    return SceneDataset(name, group_instances(seqs, obs_ids, obs_pos, name), obs_ids, obs_pos,
                        transform, meters_per_unit, dropped)


def load_scene(name: str, annotation_path: str | Path, obstacle_path: str | Path | None = None,
               skip_rate: int = 10, meters_per_unit: float = 1.0) -> SceneDataset:
    return build_scene(name, read_annotations(annotation_path), read_obstacles(obstacle_path),
                       skip_rate, meters_per_unit)


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    annotation_path: str
    obstacle_path: str | None
    meters_per_unit: float = 1.0


def parse_manifest(text: str, base: Path | None = None) -> list[ManifestEntry]:
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.rstrip("\n").split("\t")
        if len(fields) != 4:
            raise AnnotationParseError(f"manifest needs 4 tab-separated fields, found {len(fields)}", lineno)
        name, ann, obs, mpu = fields
        if base is not None:
            ann = str((base / ann)) if not Path(ann).is_absolute() else ann
            if obs not in ("", "-") and not Path(obs).is_absolute():
                obs = str(base / obs)
        try:
            scale = float(mpu)
        except ValueError:
            raise AnnotationParseError(f"bad meters_per_unit {mpu!r}", lineno) from None
        entries.append(ManifestEntry(name, ann, None if obs in ("", "-") else obs, scale))
    return entries


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), path.parent)


def format_manifest(entries: Iterable[ManifestEntry]) -> str:
    return "".join(f"{e.name}\t{e.annotation_path}\t{e.obstacle_path or '-'}\t{e.meters_per_unit!r}\n"
                   for e in entries)


def load_manifest(path: str | Path, skip_rate: int = 10) -> dict[str, SceneDataset]:
    return {e.name: load_scene(e.name, e.annotation_path, e.obstacle_path, skip_rate, e.meters_per_unit)
            for e in read_manifest(path)}


def leave_one_out_split(datasets: Mapping[str, SceneDataset], held_out: str):
    """Train on every scene except ``held_out``; test on ``held_out``."""
    if held_out not in datasets:
        raise KeyError(f"unknown scene {held_out!r}; expected one of {sorted(datasets)}")
    train = [d for name, d in datasets.items() if name != held_out]
    return train, datasets[held_out]
