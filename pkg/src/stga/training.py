"""Mini-batch training with Adam, global-norm clipping and per-epoch checkpoints."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import SceneDataset, SceneInstance
from .model import ModelConfig, ModelParams, batch_nll
from .nn.optim import AdamState, adam_step, clip_global_norm
from .nn.tensor import NumericError, Tape

log = logging.getLogger(__name__)

LOSS_CSV = "loss.csv"
CHECKPOINT_GLOB = "checkpoint_epoch*.stga"


class TrainingDivergedError(NumericError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 24
    epochs: int = 100
    lr: float = 1e-3
    skip_rate: int = 10
    seed: int = 0
    clip: float = 10.0
    threads: int = 1

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0 or self.skip_rate < 1 or self.threads < 1:
            raise ValueError(f"invalid training configuration: {self}")
        if not (self.lr > 0 and self.clip > 0):
            raise ValueError("lr and clip must be positive")


@dataclass
class TrainResult:
    params: ModelParams
    adam: AdamState
    losses: list[tuple[int, float]] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    clipped_steps: int = 0


def checkpoint_path(out_dir: Path, epoch: int) -> Path:
    return out_dir / f"checkpoint_epoch{epoch:04d}.stga"


def latest_checkpoint(out_dir: str | Path) -> Path | None:
    found = sorted(Path(out_dir).glob(CHECKPOINT_GLOB))
    return found[-1] if found else None


def _instances(data) -> list[SceneInstance]:
    if isinstance(data, SceneDataset):
        return list(data.instances)
    out: list[SceneInstance] = []
    for item in data:
        if isinstance(item, SceneDataset):
            out.extend(item.instances)
        else:
            out.append(item)
    return out


def _loss_and_grads(scenes: Sequence[SceneInstance], params: ModelParams,
                    config: ModelConfig) -> tuple[float, dict[str, np.ndarray]]:
    tensors = params.tensors()
    with Tape() as tape:
        loss = batch_nll(scenes, params, config)
    tape.backward(loss, accumulate=False)
    return float(loss.value), {k: tape.gradient(t) for k, t in tensors.items()}


def batch_gradients(scenes: Sequence[SceneInstance], params: ModelParams, config: ModelConfig,
                    threads: int = 1, pool: ThreadPoolExecutor | None = None):
    """Mean loss and gradient over ``scenes``.

    With several threads the batch is cut into contiguous chunks processed on
    separate tapes; chunk results are combined in chunk order.
    """
    if threads <= 1 or len(scenes) < 2:
        return _loss_and_grads(scenes, params, config)
    chunks = [list(c) for c in np.array_split(np.arange(len(scenes)), min(threads, len(scenes)))]
    parts = [[scenes[i] for i in c] for c in chunks if len(c)]
    results = list(pool.map(lambda p: _loss_and_grads(p, params, config), parts))
    n = len(scenes)
    loss = 0.0
    grads: dict[str, np.ndarray] = {}
    for part, (l, g) in zip(parts, results):
        w = len(part) / n
        loss += w * l
        for k, v in g.items():
            grads[k] = grads[k] + w * v if k in grads else w * v
    return loss, grads


def _write_losses(path: Path, losses: list[tuple[int, float]]) -> None:
    lines = ["epoch,mean_nll\n"] + [f"{e},{v:.17g}\n" for e, v in losses]
    path.write_text("".join(lines), encoding="utf-8")


def read_losses(path: str | Path) -> list[tuple[int, float]]:
    rows = Path(path).read_text(encoding="utf-8").splitlines()[1:]
    return [(int(r.split(",")[0]), float(r.split(",")[1])) for r in rows if r.strip()]


def train(data, model_config: ModelConfig, train_config: TrainConfig,
          out_dir: str | Path | None = None, resume: bool = False,
          params: ModelParams | None = None,
          on_epoch: Callable[[int, float], None] | None = None) -> TrainResult:
    """Train on scene instances.

    Each epoch shuffles instances with a generator seeded by (seed, epoch),
    accumulates the gradient of ``batch_size`` instances per Adam step, and
    clips the global norm.  With ``out_dir`` a checkpoint is written for the
    initial parameters (epoch 0) and after every epoch, alongside ``loss.csv``.
    ``resume`` continues from the newest checkpoint in ``out_dir``.
    """
    scenes = _instances(data)
    if not scenes:
        raise ValueError("training set is empty")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    start_epoch = 0
    losses: list[tuple[int, float]] = []
    adam = AdamState()
    if resume:
        if out is None:
            raise ValueError("resume needs an output directory")
        latest = latest_checkpoint(out)
        if latest is None:
            raise FileNotFoundError(f"no checkpoint to resume from in {out}")
        ckpt = load_checkpoint(latest)
        params, start_epoch = ckpt.params, ckpt.epoch
        adam = ckpt.adam or AdamState()
        model_config = ckpt.config
        if (out / LOSS_CSV).exists():
            losses = [row for row in read_losses(out / LOSS_CSV) if row[0] <= start_epoch]
        log.info("resuming from %s at epoch %d", latest, start_epoch)
    elif params is None:
        params = ModelParams.init(model_config, train_config.seed)

    result = TrainResult(params, adam, losses)
    if out is not None and not resume:
        result.checkpoints.append(save_checkpoint(checkpoint_path(out, 0), params, model_config, 0, adam))
        _write_losses(out / LOSS_CSV, losses)

    tensors = params.tensors()
    n = len(scenes)
    bs = train_config.batch_size
    pool = ThreadPoolExecutor(train_config.threads) if train_config.threads > 1 else None
    try:
        for epoch in range(start_epoch + 1, train_config.epochs + 1):
            order = np.random.default_rng([train_config.seed, epoch]).permutation(n)
            total = 0.0
            for step, lo in enumerate(range(0, n, bs)):
                batch = [scenes[i] for i in order[lo:lo + bs]]
                try:
                    loss, grads = batch_gradients(batch, params, model_config, train_config.threads, pool)
                except NumericError as exc:
                    raise TrainingDivergedError(f"epoch {epoch}, step {step}: {exc}") from exc
                if not np.isfinite(loss):
                    raise TrainingDivergedError(f"epoch {epoch}, step {step}: non-finite loss {loss}")
                norm, clipped = clip_global_norm(grads, train_config.clip)
                if clipped:
                    result.clipped_steps += 1
                    log.debug("epoch %d step %d: clipped gradient norm %.4g", epoch, step, norm)
                try:
                    adam_step(tensors, grads, adam, train_config.lr)
                except NumericError as exc:
                    raise TrainingDivergedError(f"epoch {epoch}, step {step}: {exc}") from exc
                total += loss * len(batch)
            mean_nll = total / n
            result.losses.append((epoch, mean_nll))
            log.info("epoch %d mean_nll %.6f", epoch, mean_nll)
            if out is not None:
                result.checkpoints.append(
                    save_checkpoint(checkpoint_path(out, epoch), params, model_config, epoch, adam))
                _write_losses(out / LOSS_CSV, result.losses)
            if on_epoch is not None:
                on_epoch(epoch, mean_nll)
    finally:
        if pool is not None:
            pool.shutdown()
    return result


def smoothed(values: Sequence[float], window: int = 5) -> np.ndarray:
    """Trailing-window moving average (valid part only)."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) < window:
        return v.copy()
    return np.convolve(v, np.ones(window) / window, mode="valid")
