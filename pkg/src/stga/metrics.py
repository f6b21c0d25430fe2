"""Displacement errors over predicted trajectories.

Both metrics accept arrays of shape [n_steps, 2] (one pedestrian) or
[n_peds, n_steps, 2], or mappings ``ped -> [n_steps, 2]`` with equal keys.
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np


def _stack(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pred, Mapping) or isinstance(truth, Mapping):
        if set(pred) != set(truth):
            raise ValueError("prediction and truth cover different pedestrians")
        keys = sorted(pred)
        pairs = [(np.asarray(pred[k], dtype=float), np.asarray(truth[k], dtype=float)) for k in keys]
        for k, (p, t) in zip(keys, pairs):
            if p.shape != t.shape:
                raise ValueError(f"pedestrian {k}: prediction {p.shape} vs truth {t.shape}")
        if not pairs:
            return np.zeros((0, 0, 2)), np.zeros((0, 0, 2))
        lengths = {p.shape[0] for p, _ in pairs}
        if len(lengths) != 1:
            raise ValueError("all pedestrians need the same number of steps")
        return np.stack([p for p, _ in pairs]), np.stack([t for _, t in pairs])
    p = np.asarray(pred, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} != truth shape {t.shape}")
    if p.ndim == 2:
        p, t = p[None], t[None]
    if p.ndim != 3 or p.shape[-1] != 2:
        raise ValueError(f"expected [..., n_steps, 2], got {p.shape}")
    return p, t


def displacement(pred, truth) -> np.ndarray:
    """Euclidean error per pedestrian and step, shape [n_peds, n_steps]."""
    p, t = _stack(pred, truth)
    return np.sqrt(((p - t) ** 2).sum(axis=-1))


def ade(pred, truth) -> float:
    d = displacement(pred, truth)
    if d.size == 0:
        raise ValueError("no predictions to score")
    return float(d.mean(axis=1).mean())


def fde(pred, truth) -> float:
    d = displacement(pred, truth)
    if d.size == 0:
        raise ValueError("no predictions to score")
    return float(d[:, -1].mean())
