"""Dense float64 tensors with reverse-mode gradients recorded on a tape.

Operations only record when a :class:`Tape` is active on the current thread and
at least one input requires a gradient, so inference paths pay no bookkeeping.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np


class NumericError(FloatingPointError):
    """A forward or update step produced NaN or Inf."""

    def __init__(self, message: str, rows: Sequence[int] | None = None):
        super().__init__(message)
        self.rows = list(rows) if rows is not None else []


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad = np.zeros_like(self.value) if requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        else:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; implementations live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, _as_tensor(other))

    def __radd__(self, other):
        from . import ops
        return ops.add(_as_tensor(other), self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, _as_tensor(other))

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, _as_tensor(other))

    def __rmul__(self, other):
        from . import ops
        return ops.mul(_as_tensor(other), self)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __getitem__(self, index):
        from . import ops
        return ops.index(self, index)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return _as_tensor(x)


def parameter(value, name: str | None = None) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64, copy=True), requires_grad=True, name=name)


_local = threading.local()


def _active_tape() -> "Tape | None":
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Records operations in execution order for one backward sweep.

    Use as a context manager; nested tapes shadow outer ones.  The tape is
    thread-local, so separate threads can build independent graphs over the
    same parameter tensors.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._grads: dict[int, np.ndarray] = {}
        self._leaves: dict[int, Tensor] = {}

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.pop()

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, out: Tensor, parents: tuple[Tensor, ...], backward: Callable) -> None:
        self._nodes.append((out, parents, backward))

    def backward(self, loss: Tensor, accumulate: bool = True) -> None:
        """Propagate d(loss)/d(.) to every recorded input.

        With ``accumulate`` the gradients of leaf tensors (parameters) are
        added into their ``.grad``; otherwise they are only available through
        :meth:`gradient`.
        """
        if loss.value.size != 1:
            raise ValueError("backward() needs a scalar loss")
        produced = {id(out) for out, _, _ in self._nodes}
        grads = {id(loss): np.ones_like(loss.value)}
        leaves: dict[int, Tensor] = {}
        for out, parents, fn in reversed(self._nodes):
            g = grads.get(id(out))
            if g is None:
                continue
            parent_grads = fn(g)
            for p, pg in zip(parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                if key not in produced:
                    leaves[key] = p
        if id(loss) not in produced and loss.requires_grad:
            leaves[id(loss)] = loss
        self._grads = grads
        self._leaves = leaves
        if accumulate:
            for key, leaf in leaves.items():
                if leaf.grad is None:
                    leaf.grad = np.zeros_like(leaf.value)
                leaf.grad += grads[key]

    def gradient(self, t: Tensor) -> np.ndarray:
        g = self._grads.get(id(t))
        return np.zeros_like(t.value) if g is None else g


def make_result(value: np.ndarray, parents: Iterable[Tensor], backward: Callable,
                op: str, check: bool = True) -> Tensor:
    """Wrap an op result, verify finiteness, and record it when a tape is live."""
    # a non-finite element always makes the sum non-finite; the per-element scan only runs then
    if check and not math.isfinite(value.sum()) and not np.isfinite(value).all():
        bad = np.nonzero(~np.isfinite(value.reshape(value.shape[0], -1)).all(axis=1))[0] \
            if value.ndim >= 1 and value.shape[0] else []
        raise NumericError(f"non-finite output from {op}", rows=bad)
    out = Tensor(value)
    parents = tuple(parents)
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, parents, backward)
    return out


def no_tape_active() -> bool:
    return _active_tape() is None
