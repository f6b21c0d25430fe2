"""Desk-scale synthetic scenes in normalized coordinates."""

from __future__ import annotations

import math

import numpy as np

from .data import T_OBS, T_PRED, NormalizationTransform, SceneDataset, SceneInstance

SCENARIOS = ("linear", "crossing", "obstacle_avoid")

# obstacle_avoid geometry
_CLEARANCE = 0.26      # radius of the arc walked around the obstacle
_APPROACH = (0.42, 0.47)
_SPEED = (0.020, 0.026)
_OFFSET = 0.12         # lateral offset of the undisturbed straight line


def _linear_track(rng: np.random.Generator, n_steps: int) -> np.ndarray:
    while True:
        start = rng.uniform(0.1, 0.9, size=2)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        speed = rng.uniform(0.01, 0.025)
        vel = speed * np.array([math.cos(angle), math.sin(angle)])
        end = start + (n_steps - 1) * vel
        if np.all(end >= 0.02) and np.all(end <= 0.98):
            return start + np.arange(n_steps)[:, None] * vel


def _crossing_track(rng: np.random.Generator, n_steps: int, group: int) -> np.ndarray:
    speed = rng.uniform(0.03, 0.04)
    along = rng.uniform(0.05, 0.15) + speed * np.arange(n_steps)
    across = np.full(n_steps, rng.uniform(0.4, 0.6)) + rng.uniform(-0.002, 0.002) * np.arange(n_steps)
    if group == 0:
        return np.stack([along, across], axis=1)
    return np.stack([across, along], axis=1)


def _avoid_track(rng: np.random.Generator, n_steps: int, centre: np.ndarray, axis: int) -> np.ndarray:
    """Straight approach that bends along a circle of radius ``_CLEARANCE`` around ``centre``.

    The track runs along +x in a local frame, then is rotated about the
    obstacle to travel either way along world ``axis``.  The bend mostly
    starts after the observed steps.
    """
    speed = rng.uniform(*_SPEED)
    start = -rng.uniform(*_APPROACH)
    offset = rng.uniform(-_OFFSET, _OFFSET)
    side = 1.0 if offset >= 0.0 else -1.0
    dx = start + speed * np.arange(n_steps)
    reach = np.sqrt(np.maximum(_CLEARANCE ** 2 - dx ** 2, 0.0))
    dy = np.where(np.abs(offset) < reach, side * reach, offset)
    turn = axis + 2 * int(rng.integers(2))
    c, s = [(1, 0), (0, 1), (-1, 0), (0, -1)][turn]
    rot = np.array([[c, -s], [s, c]], dtype=np.float64)
    return centre + np.stack([dx, dy], axis=1) @ rot.T


def make_synthetic(scenario: str, n_peds: int, seed: int, n_scenes: int = 1,
                   t_obs: int = T_OBS, t_pred: int = T_PRED, name: str | None = None) -> SceneDataset:
    """Generate ``n_scenes`` scene instances of ``n_peds`` pedestrians each.

    ``linear``: constant-velocity tracks.  ``crossing``: two groups walking
    along +x and +y whose paths intersect near the centre.  ``obstacle_avoid``:
    one point obstacle per instance; every track keeps at least
    ``_CLEARANCE`` (> lambda/2 for lambda = 0.5) from it.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    if n_peds < 1 or n_scenes < 1:
        raise ValueError("n_peds and n_scenes must be >= 1")
    rng = np.random.default_rng(seed)
    n_steps = t_obs + t_pred
    instances = []
    obstacle_ids: list[int] = []
    obstacle_pos: list[np.ndarray] = []
    for i in range(n_scenes):
        obs_ids: tuple[int, ...] = ()
        obs = np.zeros((0, 2))
        if scenario == "linear":
            tracks = [_linear_track(rng, n_steps) for _ in range(n_peds)]
        elif scenario == "crossing":
            tracks = [_crossing_track(rng, n_steps, p % 2) for p in range(n_peds)]
        else:
            # Along the walking axis the obstacle sits mid-scene; across it, it varies.
            axis = int(rng.integers(2))
            centre = np.empty(2)
            centre[axis] = rng.uniform(0.47, 0.53)
            centre[1 - axis] = rng.uniform(0.35, 0.65)
            tracks = [_avoid_track(rng, n_steps, centre, axis) for _ in range(n_peds)]
            obs_ids, obs = (i,), centre[None, :]
            obstacle_ids.append(i)
            obstacle_pos.append(centre)
        pos = np.clip(np.stack(tracks, axis=1), 0.0, 1.0)
        instances.append(SceneInstance(i * 1000, tuple(range(n_peds)), pos, obs_ids, obs,
                                       name or scenario))
    obstacles = np.array(obstacle_pos).reshape(-1, 2)
    return SceneDataset(name or scenario, instances, tuple(obstacle_ids), obstacles,
                        NormalizationTransform.identity(), 1.0)
