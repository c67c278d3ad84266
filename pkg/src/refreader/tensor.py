"""Shaped float64 arrays on a reverse-mode graph.

A :class:`Tensor` produced by an op on grad-requiring inputs remembers its
parents and a backward closure. The active :class:`Tape` decides whether
that bookkeeping is kept (``RETAIN``) or thrown away right after the forward
value is computed (``DISCARD``). Discarded outputs are tombstones: they still
carry their forward value, but backpropagating through them raises
:class:`ActivationNotRetained`.

Tapes also count retained scalars so training loops can report memory in a
platform-independent unit.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

RETAIN = "retain"
DISCARD = "discard"


class ActivationNotRetained(RuntimeError):
    """Backward reached a node whose activations were discarded."""


class DimensionError(ValueError):
    pass


class DomainError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = _state.tapes = []
    return stack


def current_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph at all; every op result is a constant."""
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tape:
    """Retention policy and scalar accounting for graph construction.

    ``nodes`` holds one ``(op, input_ids, output)`` triple per recorded op,
    where ``output`` is the retained Tensor or ``None`` for a tombstone.
    The mode may be switched between forward passes; :meth:`release` drops
    every retained activation while keeping pins and leaf registrations.
    """

    def __init__(self, mode: str = RETAIN):
        if mode not in (RETAIN, DISCARD):
            raise ValueError(f"unknown retention mode {mode!r}")
        self.mode = mode
        self.nodes: list[tuple[str, tuple[int, ...], Tensor | None]] = []
        self._leaves: dict[int, int] = {}
        self._pins: dict[int, tuple[Tensor, int]] = {}
        self.activation_scalars = 0
        self.peak_scalars = 0
        self.total_activation_scalars = 0

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("tape stack corrupted")
        stack.pop()

    # accounting -----------------------------------------------------------
    @property
    def leaf_scalars(self) -> int:
        return sum(self._leaves.values())

    @property
    def pinned_scalars(self) -> int:
        return sum(size for _, size in self._pins.values())

    @property
    def retained_scalars(self) -> int:
        return self.activation_scalars + self.leaf_scalars + self.pinned_scalars

    def _touch(self) -> None:
        now = self.retained_scalars
        if now > self.peak_scalars:
            self.peak_scalars = now

    def register_leaf(self, t: "Tensor") -> None:
        if id(t) not in self._leaves:
            self._leaves[id(t)] = t.data.size
            self._touch()

    def record(self, op: str, inputs: Sequence["Tensor"], out: "Tensor", retained: bool) -> None:
        for t in inputs:
            if t.requires_grad and t.is_leaf:
                self.register_leaf(t)
        self.nodes.append((op, tuple(id(t) for t in inputs), out if retained else None))
        self.total_activation_scalars += out.data.size
        if retained:
            self.activation_scalars += out.data.size
        self._touch()

    def pin(self, t: "Tensor") -> "Tensor":
        """Keep ``t``'s value alive and counted, whatever the mode."""
        if id(t) not in self._pins:
            self._pins[id(t)] = (t, t.data.size)
            self._touch()
        return t

    def unpin_all(self) -> None:
        self._pins.clear()

    def release(self) -> None:
        """Tombstone every retained activation recorded so far."""
        self.nodes = [(op, ids, None) for op, ids, _ in self.nodes]
        self.activation_scalars = 0

    def reset_peak(self) -> None:
        self.peak_scalars = self.retained_scalars

    @property
    def num_retained_nodes(self) -> int:
        return sum(1 for *_, out in self.nodes if out is not None)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_op", "_tombstone", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and 0 in arr.shape:
            raise DimensionError(f"dimension sizes must be positive, got {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op: str | None = None
        self._tombstone = False

    # basic properties -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._op is None and not self._tombstone

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # operator sugar; implementations live in refreader.ops ------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        return ops.transpose(self, axes or None)

    @property
    def T(self):
        return self.transpose()

    # autodiff -------------------------------------------------------------
    def backward(self, grad: np.ndarray | None = None) -> None:
        backward(self, grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    """Wrap an op's forward value, attaching graph state per the active tape."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._parents = ()
    out._backward = None
    out._op = None
    out._tombstone = False
    out.requires_grad = False
    if not grad_enabled() or not any(p.requires_grad for p in parents):
        return out
    out.requires_grad = True
    out._op = op
    tape = current_tape()
    if tape is not None and tape.mode == DISCARD:
        out._tombstone = True
        tape.record(op, parents, out, retained=False)
        return out
    out._parents = tuple(parents)
    out._backward = backward_fn
    if tape is not None:
        tape.record(op, parents, out, retained=True)
    return out


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, grad: np.ndarray | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into every grad-requiring leaf's ``grad``."""
    if grad is None:
        if loss.data.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    if not loss.requires_grad:
        return
    order = _toposort(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.asarray(grad, dtype=np.float64)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._tombstone:
            raise ActivationNotRetained(
                f"activation not retained: node {node._op!r} was computed in discard mode"
            )
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
