"""Multi-node attention over a pedestrian's incident edge hidden states.

Each edge hidden vector h is re-embedded as softmax(PReLU(h)) across its own
components, multiplied elementwise with h to give a coefficient vector, and
the temporal and spatial coefficient vectors of a node are averaged.  The
result keeps the hidden depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import ops
from .nn.tensor import Tensor


@dataclass
class EdgeHiddenBundle:
    """Hidden states incident to one node.

    ``spatial`` must already be ordered by (edge class, source id).
    """

    temporal: Tensor
    spatial: list[Tensor] = field(default_factory=list)


@dataclass
class AttentionOutput:
    H_vec: Tensor


def embed_hidden(h: Tensor, alpha: Tensor) -> Tensor:
    return ops.softmax(ops.prelu(h, alpha))


def coefficients(e_hat: Tensor, h: Tensor) -> Tensor:
    if e_hat.shape != h.shape:
        raise ValueError(f"coefficient shapes differ: {e_hat.shape} vs {h.shape}")
    return ops.mul(e_hat, h)


def attend(temporal: Tensor, spatial: Tensor | None, spatial_dst: np.ndarray, alpha: Tensor) -> Tensor:
    """Batched attention for N nodes.

    ``temporal`` is [N, H] (row i belongs to node i); ``spatial`` is [E, H] with
    ``spatial_dst[e]`` naming the node that edge e points into.  Per node the
    average is accumulated temporal-first, then spatial rows in given order.
    """
    n = temporal.shape[0]
    if spatial is None or spatial.shape[0] == 0:
        rows, seg = temporal, np.arange(n)
    else:
        rows = ops.concat([temporal, spatial], axis=0)
        seg = np.concatenate([np.arange(n), np.asarray(spatial_dst, dtype=np.int64)])
    a = coefficients(embed_hidden(rows, alpha), rows)
    return ops.segment_mean(a, seg, n)


def multi_node_attention(bundle: EdgeHiddenBundle, alpha: Tensor) -> AttentionOutput:
    temporal = ops.reshape(bundle.temporal, (1, -1))
    spatial = None
    if bundle.spatial:
        spatial = ops.concat([ops.reshape(h, (1, -1)) for h in bundle.spatial], axis=0)
    out = attend(temporal, spatial, np.zeros(len(bundle.spatial), dtype=np.int64), alpha)
    return AttentionOutput(ops.reshape(out, (temporal.shape[1],)))

