"""Spatio-temporal graph LSTM with multi-node attention and a bivariate Gaussian head.

Per time step and pedestrian v:

* every incoming spatial edge embeds its displacement feature and steps the
  edge LSTM of its class (human-human or obstacle-human);
* the temporal edge embeds v's position and steps the temporal edge LSTM;
* attention averages the per-edge coefficient vectors into ``H_vec``;
* the node LSTM consumes ``concat(e_v, h_prev, H_vec, e_v)`` where ``e_v`` is
  the embedded position, and a linear head emits (mu, sigma, rho) for the
  next position.

Several scene instances can be stacked into one :class:`SceneBatch`; their
graphs stay disjoint, so a batch computes exactly the per-scene quantities.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import attention
from .data import T_OBS, T_PRED, SceneInstance
from .graph import GraphSnapshot, Mode, build_grouped_snapshot
from .nn import ops
from .nn.layers import (
    GaussianBatch,
    GaussianParams2D,
    Linear,
    LSTMCellParams,
    LSTMState,
    constrain_head,
    embed,
    lstm_step,
    sample_bivariate_rows,
)
from .nn.tensor import NumericError, Tensor, parameter


class StateMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    mode: Mode = Mode.HHO
    hidden: int = 256
    embed: int = 64
    lam: float = 0.5
    t_obs: int = T_OBS
    t_pred: int = T_PRED
    alpha_init: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        if self.hidden < 1 or self.embed < 1:
            raise ValueError("hidden and embed sizes must be >= 1")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


@dataclass
class ModelParams:
    phi_spatial: Linear
    phi_temporal: Linear
    phi_node: Linear
    lstm_hh: LSTMCellParams
    lstm_ho: LSTMCellParams
    lstm_temporal: LSTMCellParams
    lstm_node: LSTMCellParams
    head: Linear
    alpha: Tensor

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator | int = 0) -> "ModelParams":
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        H, D = config.hidden, config.embed
        # Draw order is fixed; every block exists in both modes.
        return cls(
            phi_spatial=Linear.init(rng, 2, D, "phi_spatial"),
            phi_temporal=Linear.init(rng, 2, D, "phi_temporal"),
            phi_node=Linear.init(rng, 2, D, "phi_node"),
            lstm_hh=LSTMCellParams.init(rng, D, H, "lstm_hh"),
            lstm_ho=LSTMCellParams.init(rng, D, H, "lstm_ho"),
            lstm_temporal=LSTMCellParams.init(rng, D, H, "lstm_temporal"),
            lstm_node=LSTMCellParams.init(rng, 2 * D + 2 * H, H, "lstm_node"),
            head=Linear.init(rng, H, 5, "head"),
            alpha=parameter(np.array(config.alpha_init), "alpha"),
        )

    @classmethod
    def zeros(cls, config: ModelConfig) -> "ModelParams":
        p = cls.init(config, 0)
        for t in p.tensors().values():
            t.value[...] = 0.0
        return p

    @property
    def hidden(self) -> int:
        return self.lstm_node.hidden

    @property
    def embed_dim(self) -> int:
        return self.phi_node.W.shape[0]

    def lstm_blocks(self) -> list[LSTMCellParams]:
        return [self.lstm_hh, self.lstm_ho, self.lstm_temporal, self.lstm_node]

    def tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name in ("phi_spatial", "phi_temporal", "phi_node"):
            out.update(getattr(self, name).tensors(name))
        for name in ("lstm_hh", "lstm_ho", "lstm_temporal", "lstm_node"):
            out.update(getattr(self, name).tensors(name))
        out.update(self.head.tensors("head"))
        out["alpha"] = self.alpha
        return out

    def zero_grad(self) -> None:
        for t in self.tensors().values():
            t.zero_grad()

    def copy(self) -> "ModelParams":
        clone = ModelParams.init(ModelConfig(hidden=self.hidden, embed=self.embed_dim), 0)
        for name, t in clone.tensors().items():
            t.value[...] = self.tensors()[name].value
        return clone


@dataclass
class RecurrentState:
    """LSTM states aligned with the keys of the latest snapshot."""

    hidden: int
    time_step: int = -1
    node_keys: tuple = ()
    node: LSTMState | None = None
    temporal: LSTMState | None = None
    edge_keys: dict[str, tuple] = field(default_factory=dict)
    edges: dict[str, LSTMState] = field(default_factory=dict)
    steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    last_output: GaussianBatch | None = None

    @classmethod
    def empty(cls, hidden: int) -> "RecurrentState":
        return cls(hidden)

    @property
    def is_empty(self) -> bool:
        return len(self.node_keys) == 0


class HeadOutput(Mapping):
    """Per-pedestrian bivariate parameters for one step, keyed by pedestrian."""

    def __init__(self, keys: Sequence, batch: GaussianBatch):
        self._keys = tuple(keys)
        self._index = {k: i for i, k in enumerate(self._keys)}
        self.batch = batch

    def __getitem__(self, key) -> GaussianParams2D:
        return self.batch.row(self._index[key])

    def __iter__(self):
        return iter(self._keys)

    def __len__(self) -> int:
        return len(self._keys)


def _align(prev_keys: tuple, new_keys: tuple) -> np.ndarray | None:
    """Row map from previous to new keys (-1 = fresh); None when unchanged."""
    if prev_keys == new_keys:
        return None
    where = {k: i for i, k in enumerate(prev_keys)}
    return np.array([where.get(k, -1) for k in new_keys], dtype=np.int64)


def _carry(state: LSTMState | None, prev_keys: tuple, new_keys: tuple, hidden: int) -> LSTMState:
    if state is None or not prev_keys:
        return LSTMState.zeros(len(new_keys), hidden)
    idx = _align(prev_keys, new_keys)
    if idx is None:
        return state
    return LSTMState(ops.gather_rows(state.h, idx), ops.gather_rows(state.c, idx))


def gaussian_head(params: ModelParams, h_node: Tensor) -> GaussianBatch:
    return constrain_head(params.head(h_node))


def forward_step(snapshot: GraphSnapshot, state: RecurrentState, params: ModelParams,
                 config: ModelConfig) -> tuple[HeadOutput, RecurrentState]:
    """Advance every node and edge LSTM by one step and emit next-position parameters."""
    H = params.hidden
    if state.hidden != H:
        raise StateMismatchError(f"state hidden size {state.hidden} != model hidden size {H}")
    if state.time_step >= 0 and snapshot.time_step != state.time_step + 1:
        raise StateMismatchError(
            f"snapshot time step {snapshot.time_step} does not follow state step {state.time_step}")
    keys = snapshot.ped_keys
    n = len(keys)
    if n == 0:
        empty = GaussianBatch(Tensor(np.zeros((0, 2))), Tensor(np.ones((0, 2))), Tensor(np.zeros(0)))
        return HeadOutput((), empty), RecurrentState(H, snapshot.time_step, last_output=empty)

    alpha = params.alpha
    try:
        node_prev = _carry(state.node, state.node_keys, keys, H)
        temporal_prev = _carry(state.temporal, state.node_keys, keys, H)
        idx = _align(state.node_keys, keys)
        steps = state.steps.copy() if idx is None else np.where(
            idx >= 0, state.steps[np.maximum(idx, 0)] if len(state.steps) else 0, 0)

        # Spatial edges per class.
        new_edge_keys: dict[str, tuple] = {}
        new_edges: dict[str, LSTMState] = {}
        spatial_h: list[Tensor] = []
        spatial_dst: list[np.ndarray] = []
        classes = [("HH", params.lstm_hh, snapshot.hh_features, snapshot.hh_dst, snapshot.hh_keys)]
        if config.mode is Mode.HHO:
            classes.append(("HO", params.lstm_ho, snapshot.ho_features, snapshot.ho_dst, snapshot.ho_keys))
        for cls, block, feats, dst, ekeys in classes:
            if len(ekeys) == 0:
                continue
            prev = _carry(state.edges.get(cls), state.edge_keys.get(cls, ()), ekeys, H)
            e = embed(params.phi_spatial, Tensor(feats), alpha)
            st = lstm_step(block, prev, e)
            new_edge_keys[cls], new_edges[cls] = ekeys, st
            spatial_h.append(st.h)
            spatial_dst.append(dst)

        # Temporal edge.
        pos = Tensor(snapshot.ped_pos)
        e_t = embed(params.phi_temporal, pos, alpha)
        temporal = lstm_step(params.lstm_temporal, temporal_prev, e_t)

        # Attention over temporal + spatial hiddens, spatial rows ordered by (dst, class, src).
        if spatial_h:
            dst_all = np.concatenate(spatial_dst)
            order = np.argsort(dst_all, kind="stable")
            stacked = spatial_h[0] if len(spatial_h) == 1 else ops.concat(spatial_h, axis=0)
            if not np.array_equal(order, np.arange(len(order))):
                stacked = ops.gather_rows(stacked, order)
            H_vec = attention.attend(temporal.h, stacked, dst_all[order], alpha)
        else:
            H_vec = attention.attend(temporal.h, None, np.zeros(0, dtype=np.int64), alpha)

        # Node LSTM.
        e_v = embed(params.phi_node, pos, alpha)
        x_node = ops.concat([e_v, node_prev.h, H_vec, e_v], axis=1)
        node = lstm_step(params.lstm_node, node_prev, x_node)
        out = gaussian_head(params, node.h)
    except NumericError as exc:
        bad = [keys[r] for r in exc.rows if r < n]
        raise NumericError(f"{exc} at time step {snapshot.time_step}; nodes {bad}", exc.rows) from exc

    new_state = RecurrentState(
        hidden=H,
        time_step=snapshot.time_step,
        node_keys=keys,
        node=node,
        temporal=temporal,
        edge_keys=new_edge_keys,
        edges=new_edges,
        steps=steps + 1,
        last_output=out,
    )
    return HeadOutput(keys, out), new_state


class SceneBatch:
    """One or more scene instances stacked as disjoint graphs.

    Keys are the pedestrian ids for a single instance and ``(i, ped_id)``
    when several instances are stacked.
    """

    def __init__(self, scenes: Sequence[SceneInstance]):
        if not scenes:
            raise ValueError("empty scene batch")
        steps = {s.n_steps for s in scenes}
        if len(steps) != 1:
            raise ValueError(f"scene instances disagree on length: {sorted(steps)}")
        self.scenes = list(scenes)
        single = len(scenes) == 1
        self.keys = tuple(pid if single else (i, pid)
                          for i, s in enumerate(scenes) for pid in s.ped_ids)
        self.obs_keys = tuple(oid if single else (i, oid)
                              for i, s in enumerate(scenes) for oid in s.obstacle_ids)
        self.groups = np.concatenate([np.full(s.n_peds, i, dtype=np.int64)
                                      for i, s in enumerate(scenes)])
        self.obs_groups = np.concatenate([np.full(len(s.obstacle_ids), i, dtype=np.int64)
                                          for i, s in enumerate(scenes)])
        self.positions = np.concatenate([s.positions for s in scenes], axis=1)
        self.obstacles = np.concatenate([np.asarray(s.obstacles).reshape(-1, 2) for s in scenes], axis=0)
        # Each scene's loss is averaged over its pedestrians, then over scenes.
        self.node_weights = np.concatenate([np.full(s.n_peds, 1.0 / (s.n_peds * len(scenes)))
                                            for s in scenes]) if self.keys else np.zeros(0)
        self._order = self._sort_order()

    def _sort_order(self) -> np.ndarray:
        keyed = sorted(range(len(self.keys)), key=lambda i: (self.groups[i], self.keys[i]))
        return np.array(keyed, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.keys)

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0]

    def snapshot(self, t: int, config: ModelConfig, positions: np.ndarray | None = None) -> GraphSnapshot:
        pos = self.positions[t] if positions is None else positions
        o = self._order
        return build_grouped_snapshot(
            [self.keys[i] for i in o], pos[o], self.groups[o],
            self.obs_keys, self.obstacles, self.obs_groups, config.lam, config.mode, t)

    def to_batch_order(self, per_snapshot: np.ndarray) -> np.ndarray:
        """Reorder rows from snapshot (sorted) order back to batch order."""
        out = np.empty_like(per_snapshot)
        out[self._order] = per_snapshot
        return out


def _as_batch(scene) -> SceneBatch:
    if isinstance(scene, SceneBatch):
        return scene
    if isinstance(scene, SceneInstance):
        return SceneBatch([scene])
    return SceneBatch(list(scene))


def observe(scene, params: ModelParams, config: ModelConfig) -> RecurrentState:
    """Run the observed steps on ground-truth positions."""
    batch = _as_batch(scene)
    state = RecurrentState.empty(params.hidden)
    for t in range(config.t_obs):
        _, state = forward_step(batch.snapshot(t, config), state, params, config)
    return state


@dataclass
class Rollout:
    raw: np.ndarray        # [T_pred, N, 2] predictions as emitted, batch order
    positions: np.ndarray  # same, clamped to the unit square
    keys: tuple

    def step_maps(self, clamped: bool = True) -> list[dict]:
        src = self.positions if clamped else self.raw
        return [{k: (float(p[0]), float(p[1])) for k, p in zip(self.keys, step)} for step in src]


def predict(state: RecurrentState, scene, params: ModelParams, config: ModelConfig,
            mode: str = "mean", rng: np.random.Generator | None = None) -> Rollout:
    """Autoregressive rollout of ``t_pred`` steps after :func:`observe`.

    ``mode='mean'`` feeds back the Gaussian means; ``mode='sample'`` draws from
    each predicted distribution with ``rng``.  Positions fed into the graph are
    clamped to [0, 1]^2; raw values are kept for metrics.
    """
    if mode not in ("mean", "sample"):
        raise ValueError(f"unknown rollout mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs an rng")
    batch = _as_batch(scene)
    n = batch.n_nodes
    raw = np.zeros((config.t_pred, n, 2))
    if n == 0 or state.last_output is None:
        return Rollout(raw, raw.copy(), batch.keys)
    out = state.last_output
    for k in range(config.t_pred):
        if k > 0:
            fed = np.clip(raw[k - 1], 0.0, 1.0)
            snap = batch.snapshot(config.t_obs + k - 1, config, positions=fed)
            _, state = forward_step(snap, state, params, config)
            out = state.last_output
        mu = out.mu.value
        if mode == "mean":
            step = mu.copy()
        else:
            step = sample_bivariate_rows(mu, out.sigma.value, out.rho.value, rng)
        raw[k] = batch.to_batch_order(step)
    return Rollout(raw, np.clip(raw, 0.0, 1.0), batch.keys)


def batch_nll(scenes, params: ModelParams, config: ModelConfig) -> Tensor:
    """Teacher-forced loss: mean over scenes of the per-pedestrian summed NLL.

    Outputs emitted at steps t_obs-1 .. t_obs+t_pred-2 are scored against the
    ground truth of the following step.
    """
    batch = _as_batch(scenes)
    horizon = config.t_obs + config.t_pred
    if batch.n_steps < horizon:
        raise ValueError(f"scene has {batch.n_steps} steps; need {horizon}")
    weights = batch.node_weights[batch._order]
    state = RecurrentState.empty(params.hidden)
    loss: Tensor | None = None
    for t in range(horizon - 1):
        _, state = forward_step(batch.snapshot(t, config), state, params, config)
        if t < config.t_obs - 1:
            continue
        target = batch.positions[t + 1][batch._order]
        out = state.last_output
        step_loss = ops.weighted_sum(ops.bivariate_nll(out.mu, out.sigma, out.rho, target), weights)
        loss = step_loss if loss is None else ops.add(loss, step_loss)
    return loss if loss is not None else Tensor(np.asarray(0.0))


def sequence_nll(scene: SceneInstance, params: ModelParams, config: ModelConfig) -> Tensor:
    return batch_nll([scene], params, config)


def with_mode(config: ModelConfig, mode: Mode | str) -> ModelConfig:
    return replace(config, mode=Mode.parse(mode))
