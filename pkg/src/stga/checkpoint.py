"""Binary checkpoint format.

Layout::

    STGA1\\n
    <name>\\t<rank>[\\t<dim>...]\\n  followed by prod(dims) little-endian float64, row-major
    ...
    END\\n

Model tensors use their parameter names.  Scalars under ``meta.`` carry the
model configuration and epoch; ``adam.`` blocks carry optimizer state so
training can resume bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Mode
from .model import ModelConfig, ModelParams
from .nn.optim import AdamState

MAGIC = b"STGA1\n"
END = b"END\n"


class CheckpointError(IOError):
    pass


@dataclass
class Checkpoint:
    params: ModelParams
    config: ModelConfig
    epoch: int = 0
    adam: AdamState | None = None


def encode_blocks(blocks: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC]
    for name, arr in blocks.items():
        if "\t" in name or "\n" in name:
            raise ValueError(f"invalid block name {name!r}")
        a = np.array(arr, dtype="<f8", order="C")   # keeps 0-d scalars 0-d
        header = "\t".join([name, str(a.ndim)] + [str(d) for d in a.shape]) + "\n"
        parts.append(header.encode("ascii"))
        parts.append(a.tobytes(order="C"))
    parts.append(END)
    return b"".join(parts)


def decode_blocks(data: bytes) -> dict[str, np.ndarray]:
    if not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = len(MAGIC)
    blocks: dict[str, np.ndarray] = {}
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise CheckpointError("truncated checkpoint: missing END")
        line = data[pos:nl + 1]
        if line == END:
            if nl + 1 != len(data):
                raise CheckpointError("trailing bytes after END")
            return blocks
        try:
            fields = line.decode("ascii").rstrip("\n").split("\t")
            name, rank = fields[0], int(fields[1])
            dims = tuple(int(d) for d in fields[2:])
        except (UnicodeDecodeError, ValueError, IndexError):
            raise CheckpointError(f"malformed block header {line[:60]!r}") from None
        if len(dims) != rank:
            raise CheckpointError(f"block {name!r}: rank {rank} but {len(dims)} dims")
        count = int(np.prod(dims)) if dims else 1
        start = nl + 1
        end = start + 8 * count
        if end > len(data):
            raise CheckpointError(f"block {name!r} truncated")
        blocks[name] = np.frombuffer(data[start:end], dtype="<f8").reshape(dims).astype(np.float64)
        pos = end


def save_checkpoint(path: str | Path, params: ModelParams, config: ModelConfig,
                    epoch: int = 0, adam: AdamState | None = None) -> Path:
    blocks: dict[str, np.ndarray] = {name: t.value for name, t in params.tensors().items()}
    blocks["meta.epoch"] = np.array(float(epoch))
    blocks["meta.lambda"] = np.array(config.lam)
    blocks["meta.mode_hho"] = np.array(1.0 if config.mode is Mode.HHO else 0.0)
    blocks["meta.t_obs"] = np.array(float(config.t_obs))
    blocks["meta.t_pred"] = np.array(float(config.t_pred))
    blocks["meta.alpha_init"] = np.array(config.alpha_init)
    if adam is not None:
        blocks["adam.step"] = np.array(float(adam.step))
        for name in params.tensors():
            if name in adam.m:
                blocks[f"adam.m.{name}"] = adam.m[name]
                blocks[f"adam.v.{name}"] = adam.v[name]
    path = Path(path)
    path.write_bytes(encode_blocks(blocks))
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    blocks = decode_blocks(data)
    try:
        hidden = blocks["lstm_node.W_h"].shape[1]
        embed = blocks["phi_node.W"].shape[0]
        config = ModelConfig(
            mode=Mode.HHO if blocks["meta.mode_hho"] > 0.5 else Mode.HH,
            hidden=hidden, embed=embed, lam=float(blocks["meta.lambda"]),
            t_obs=int(blocks["meta.t_obs"]), t_pred=int(blocks["meta.t_pred"]),
            alpha_init=float(blocks["meta.alpha_init"]))
    except KeyError as exc:
        raise CheckpointError(f"checkpoint missing block {exc}") from None
    params = ModelParams.init(config, 0)
    for name, t in params.tensors().items():
        if name not in blocks:
            raise CheckpointError(f"checkpoint missing block {name!r}")
        if blocks[name].shape != t.value.shape:
            raise CheckpointError(f"block {name!r} has shape {blocks[name].shape}, expected {t.value.shape}")
        t.value[...] = blocks[name]
    adam = None
    if "adam.step" in blocks:
        adam = AdamState(step=int(blocks["adam.step"]))
        for name in params.tensors():
            if f"adam.m.{name}" in blocks:
                adam.m[name] = blocks[f"adam.m.{name}"].copy()
                adam.v[name] = blocks[f"adam.v.{name}"].copy()
    return Checkpoint(params, config, int(blocks["meta.epoch"]), adam)
