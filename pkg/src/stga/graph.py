"""Per-time-step spatio-temporal graph over pedestrians and static obstacles.

Pedestrians are fully connected by directed human-human (HH) edges in both
directions.  An obstacle contributes a single directed obstacle->pedestrian
(HO) edge when the pedestrian is strictly closer than the connectivity
threshold.  Every pedestrian also carries one temporal self-edge.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np


class Mode(str, enum.Enum):
    HH = "hh"
    HHO = "hho"

    @classmethod
    def parse(cls, value: "Mode | str") -> "Mode":
        if isinstance(value, Mode):
            return value
        try:
            return cls(str(value).lower().replace("-", ""))
        except ValueError:
            raise ValueError(f"unknown mode {value!r}; expected 'hh' or 'hho'") from None


class NodeKind(str, enum.Enum):
    PEDESTRIAN = "pedestrian"
    OBSTACLE = "obstacle"


class EdgeClass(str, enum.Enum):
    HH = "HH"
    HO = "HO"


@dataclass(frozen=True, order=True)
class NodeRef:
    kind: NodeKind
    id: Hashable


@dataclass(frozen=True)
class SpatialEdge:
    src: NodeRef
    dst: NodeRef
    cls: EdgeClass
    feature: tuple[float, float]


@dataclass(frozen=True)
class TemporalEdge:
    node: NodeRef
    feature: tuple[float, float]


def edge_feature(src_pos, dst_pos) -> tuple[float, float]:
    """Relative displacement ``src - dst``."""
    return (float(src_pos[0]) - float(dst_pos[0]), float(src_pos[1]) - float(dst_pos[1]))


@dataclass(frozen=True, eq=False)
class GraphSnapshot:
    """Array-backed graph for one time step.

    Pedestrian rows follow ``ped_keys`` (sorted).  HH edges are sorted by
    (destination, source) and HO edges by (destination, obstacle).
    ``ped_groups``/``obs_groups`` label disjoint sub-scenes when several scene
    instances are batched into one graph; edges never cross groups.
    """

    time_step: int
    ped_keys: tuple
    ped_pos: np.ndarray
    obs_keys: tuple
    obs_pos: np.ndarray
    hh_src: np.ndarray
    hh_dst: np.ndarray
    ho_src: np.ndarray
    ho_dst: np.ndarray
    ped_groups: np.ndarray = field(repr=False)
    obs_groups: np.ndarray = field(repr=False)

    @property
    def n_peds(self) -> int:
        return len(self.ped_keys)

    @property
    def hh_features(self) -> np.ndarray:
        return self.ped_pos[self.hh_src] - self.ped_pos[self.hh_dst]

    @property
    def ho_features(self) -> np.ndarray:
        return self.obs_pos[self.ho_src] - self.ped_pos[self.ho_dst]

    @property
    def temporal_features(self) -> np.ndarray:
        return self.ped_pos

    @property
    def hh_keys(self) -> tuple:
        k = self.ped_keys
        return tuple((k[s], k[d]) for s, d in zip(self.hh_src.tolist(), self.hh_dst.tolist()))

    @property
    def ho_keys(self) -> tuple:
        return tuple((self.obs_keys[s], self.ped_keys[d])
                     for s, d in zip(self.ho_src.tolist(), self.ho_dst.tolist()))

    @property
    def positions(self) -> dict:
        return {NodeRef(NodeKind.PEDESTRIAN, k): (float(p[0]), float(p[1]))
                for k, p in zip(self.ped_keys, self.ped_pos)}

    @property
    def spatial_edges(self) -> list[SpatialEdge]:
        edges = []
        for (s, d), f in zip(self.hh_keys, self.hh_features):
            edges.append(SpatialEdge(NodeRef(NodeKind.PEDESTRIAN, s), NodeRef(NodeKind.PEDESTRIAN, d),
                                     EdgeClass.HH, (float(f[0]), float(f[1]))))
        for (s, d), f in zip(self.ho_keys, self.ho_features):
            edges.append(SpatialEdge(NodeRef(NodeKind.OBSTACLE, s), NodeRef(NodeKind.PEDESTRIAN, d),
                                     EdgeClass.HO, (float(f[0]), float(f[1]))))
        return edges

    @property
    def temporal_edges(self) -> list[TemporalEdge]:
        return [TemporalEdge(NodeRef(NodeKind.PEDESTRIAN, k), (float(p[0]), float(p[1])))
                for k, p in zip(self.ped_keys, self.ped_pos)]

    def incidence(self) -> dict:
        """Number of HH edges touching each pedestrian (in + out)."""
        counts = np.bincount(self.hh_src, minlength=self.n_peds) + \
            np.bincount(self.hh_dst, minlength=self.n_peds)
        return dict(zip(self.ped_keys, counts.tolist()))

    def to_json(self) -> dict:
        def key(k):
            return list(k) if isinstance(k, tuple) else k
        nodes = [{"kind": "pedestrian", "id": key(k), "x": float(p[0]), "y": float(p[1])}
                 for k, p in zip(self.ped_keys, self.ped_pos)]
        nodes += [{"kind": "obstacle", "id": key(k), "x": float(p[0]), "y": float(p[1])}
                  for k, p in zip(self.obs_keys, self.obs_pos)]
        hh = [{"src": key(s), "dst": key(d), "dx": float(f[0]), "dy": float(f[1])}
              for (s, d), f in zip(self.hh_keys, self.hh_features)]
        ho = [{"src": key(s), "dst": key(d), "dx": float(f[0]), "dy": float(f[1])}
              for (s, d), f in zip(self.ho_keys, self.ho_features)]
        temporal = [{"node": key(k), "x": float(p[0]), "y": float(p[1])}
                    for k, p in zip(self.ped_keys, self.ped_pos)]
        return {
            "time_step": self.time_step,
            "nodes": nodes,
            "hh_edges": hh,
            "ho_edges": ho,
            "temporal_edges": temporal,
            "hh_edge_count": len(hh),
            "ho_edge_count": len(ho),
            "temporal_edge_count": len(temporal),
        }


def _empty_index() -> np.ndarray:
    return np.zeros(0, dtype=np.int64)


def build_grouped_snapshot(ped_keys: Sequence, ped_pos: np.ndarray, ped_groups: np.ndarray,
                           obs_keys: Sequence, obs_pos: np.ndarray, obs_groups: np.ndarray,
                           lam: float, mode: Mode | str, time_step: int = 0) -> GraphSnapshot:
    """Core builder over pre-sorted arrays.  Callers guarantee key order."""
    if not lam > 0.0:
        raise ValueError("connectivity threshold must be positive")
    mode = Mode.parse(mode)
    ped_pos = np.asarray(ped_pos, dtype=np.float64).reshape(-1, 2)
    obs_pos = np.asarray(obs_pos, dtype=np.float64).reshape(-1, 2)
    ped_groups = np.asarray(ped_groups, dtype=np.int64)
    obs_groups = np.asarray(obs_groups, dtype=np.int64)
    n = len(ped_keys)

    same = ped_groups[:, None] == ped_groups[None, :]
    np.fill_diagonal(same, False)
    hh_dst, hh_src = np.nonzero(same)

    if mode is Mode.HHO and len(obs_keys) and n:
        diff = ped_pos[:, None, :] - obs_pos[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=2))
        close = (dist < lam) & (ped_groups[:, None] == obs_groups[None, :])
        ho_dst, ho_src = np.nonzero(close)
    else:
        ho_dst, ho_src = _empty_index(), _empty_index()

    return GraphSnapshot(
        time_step=time_step,
        ped_keys=tuple(ped_keys),
        ped_pos=ped_pos,
        obs_keys=tuple(obs_keys),
        obs_pos=obs_pos,
        hh_src=hh_src.astype(np.int64),
        hh_dst=hh_dst.astype(np.int64),
        ho_src=ho_src.astype(np.int64),
        ho_dst=ho_dst.astype(np.int64),
        ped_groups=ped_groups,
        obs_groups=obs_groups,
    )


def build_snapshot(positions: Mapping, obstacles: Mapping, lam: float = 0.5,
                   mode: Mode | str = Mode.HHO, time_step: int = 0) -> GraphSnapshot:
    """Build the graph for one scene from ``{ped_id: (x, y)}`` and ``{obstacle_id: (x, y)}``."""
    ped_keys = sorted(positions)
    obs_keys = sorted(obstacles)
    ped_pos = np.array([positions[k] for k in ped_keys], dtype=np.float64).reshape(-1, 2)
    obs_pos = np.array([obstacles[k] for k in obs_keys], dtype=np.float64).reshape(-1, 2)
    return build_grouped_snapshot(
        ped_keys, ped_pos, np.zeros(len(ped_keys), dtype=np.int64),
        obs_keys, obs_pos, np.zeros(len(obs_keys), dtype=np.int64),
        lam, mode, time_step)


def diff_snapshots(prev: GraphSnapshot | None, nxt: GraphSnapshot):
    """Split pedestrian keys into (entered, exited, persisting) sets."""
    before = set(prev.ped_keys) if prev is not None else set()
    after = set(nxt.ped_keys)
    return after - before, before - after, after & before
