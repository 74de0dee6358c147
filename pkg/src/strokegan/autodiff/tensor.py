"""Tensor values and the recording tape used for reverse-mode differentiation."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np


class AutodiffError(Exception):
    """Base class for errors raised by the autodiff engine."""


class ShapeError(AutodiffError, ValueError):
    def __init__(self, op: str, *shapes: tuple[int, ...]):
        self.op = op
        self.shapes = shapes
        joined = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class DomainError(AutodiffError, ValueError):
    pass


class ContractError(AutodiffError, ValueError):
    pass


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """A dense float64 array with an optional gradient slot.

    Tensors created while a :class:`Tape` is active and that depend on a
    ``requires_grad`` input are recorded on that tape; ``node_id`` is their
    position in the tape's node list.
    """

    __slots__ = ("data", "requires_grad", "grad", "node_id", "_tape", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise DomainError("tensor data must be finite")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node_id: int | None = None
        self._tape: Tape | None = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # op outputs skip the copy done by __init__
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.node_id = None
        t._tape = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None if self.grad is None else np.zeros_like(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; the implementations live in ops.py
    def __add__(self, other):
        from . import ops

        return ops.add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, _as_tensor(other))

    def __rsub__(self, other):
        from . import ops

        return ops.sub(_as_tensor(other), self)

    def __mul__(self, other):
        from . import ops

        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    op: str
    inputs: tuple[Optional[int], ...]
    backward_fn: Optional[BackwardFn]
    leaf: Optional[Tensor] = None


@dataclass
class Tape:
    """Ordered record of differentiable operations.

    Insertion order is a topological order: a node's inputs always precede it.
    Use as a context manager to make the tape active.
    """

    nodes: list[Node] = field(default_factory=list)
    _leaf_ids: dict[int, int] = field(default_factory=dict, repr=False)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self.nodes)

    def reset(self) -> None:
        self.nodes.clear()
        self._leaf_ids.clear()

    def _id_of(self, t: Tensor) -> Optional[int]:
        if not t.requires_grad:
            return None
        if t._tape is self and t.node_id is not None:
            return t.node_id
        # leaves and tensors from foreign tapes enter as leaves of this tape
        key = id(t)
        nid = self._leaf_ids.get(key)
        if nid is None or self.nodes[nid].leaf is not t:
            nid = len(self.nodes)
            self.nodes.append(Node("leaf", (), None, leaf=t))
            self._leaf_ids[key] = nid
        return nid


_TAPE_STACK: list[Tape] = []


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


@contextlib.contextmanager
def no_tape() -> Iterator[None]:
    """Suspend recording (operations inside produce constants)."""
    saved = list(_TAPE_STACK)
    _TAPE_STACK.clear()
    try:
        yield
    finally:
        _TAPE_STACK[:] = saved


def record(op: str, inputs: Sequence[Tensor], out: np.ndarray, backward_fn: BackwardFn) -> Tensor:
    """Wrap ``out`` as a Tensor and record it on the active tape if needed."""
    if not np.all(np.isfinite(out)):
        raise DomainError(f"{op}: produced non-finite values")
    result = Tensor._wrap(out)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        ids = tuple(tape._id_of(t) for t in inputs)
        result.requires_grad = True
        result.node_id = len(tape.nodes)
        result._tape = tape
        tape.nodes.append(Node(op, ids, backward_fn))
    return result


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Propagate d(loss)/d(node) through the tape that recorded ``loss``.

    Leaf tensors accumulate into ``.grad``; call ``zero_grad`` between
    independent passes. Returns ``{node_id: grad}`` for every node the loss
    reaches; leaves it does not reach get a zero ``.grad``.
    """
    if loss.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None or loss.node_id is None:
        raise ContractError("loss was not recorded on a tape")
    nodes = tape.nodes
    grads: list[Optional[np.ndarray]] = [None] * len(nodes)
    grads[loss.node_id] = np.ones_like(loss.data)
    for i in range(loss.node_id, -1, -1):
        g = grads[i]
        node = nodes[i]
        if node.leaf is not None:
            leaf = node.leaf
            if g is None:
                g = np.zeros_like(leaf.data)
                grads[i] = g
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
            continue
        if g is None:
            continue
        in_grads = node.backward_fn(g)
        for nid, ig in zip(node.inputs, in_grads):
            if nid is None or ig is None:
                continue
            grads[nid] = ig if grads[nid] is None else grads[nid] + ig
    for node in nodes[loss.node_id + 1:]:
        if node.leaf is not None and node.leaf.grad is None:
            node.leaf.grad = np.zeros_like(node.leaf.data)
    return {i: g for i, g in enumerate(grads) if g is not None}
