"""Tensors and the gradient tape.

A :class:`Tensor` wraps a float64 ``numpy`` array.  Primitive operations in
:mod:`flowcodec.grad.ops` record themselves on the active :class:`Tape` when at
least one input requires a gradient; :meth:`Tape.backward` replays the record
in reverse.
"""

from __future__ import annotations

import contextvars
from typing import Callable, Iterable, Sequence

import numpy as np

_ACTIVE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("active_tape", default=None)
_tape_total = 0


def tapes_created() -> int:
    """Number of tapes constructed in this process (used to prove decode is gradient-free)."""
    return _tape_total


class Tensor:
    """A dense float64 array that may participate in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar; the implementations live in ops
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

    def __neg__(self):
        from . import ops

        return ops.mul(self, -1.0)


VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tape:
    """Ordered record of executed primitives.

    Use as a context manager; operations executed inside the ``with`` block on
    tensors that require gradients are recorded here.  A tape belongs to one
    execution context (it is bound through a ``ContextVar``), so independent
    threads or tasks may each run their own tape.
    """

    def __init__(self) -> None:
        global _tape_total
        _tape_total += 1
        self._records: list[tuple[Tensor, tuple[Tensor, ...], VJP]] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self._records)

    def leaf(self, data, name: str | None = None) -> Tensor:
        """Create a tensor whose gradient is wanted."""
        return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: VJP) -> None:
        self._records.append((out, inputs, vjp))

    def backward(self, loss: Tensor, leaves: Iterable[Tensor]) -> list[np.ndarray]:
        """Return d(loss)/d(leaf) for every leaf, in the order given.

        Leaves that do not reach ``loss`` get a zero array of their own shape.
        """
        if loss.data.shape != ():
            raise ValueError(f"loss must be a scalar, got shape {loss.data.shape}")
        leaves = list(leaves)
        grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
        for out, inputs, vjp in reversed(self._records):
            g = grads.get(id(out))
            if g is None:
                continue
            contributions = vjp(g)
            for inp, gi in zip(inputs, contributions):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
        out = []
        for leaf in leaves:
            g = grads.get(id(leaf))
            out.append(np.zeros_like(leaf.data) if g is None else np.array(g, dtype=np.float64).reshape(leaf.shape))
        return out


def active_tape() -> Tape | None:
    return _ACTIVE.get()


class no_grad:
    """Suspend recording for the enclosed block."""

    def __enter__(self):
        self._token = _ACTIVE.set(None)
        return self

    def __exit__(self, *exc):
        _ACTIVE.reset(self._token)


def backward(loss: Tensor, leaves: Iterable[Tensor], tape: Tape | None = None) -> list[np.ndarray]:
    tape = tape or active_tape()
    if tape is None:
        raise RuntimeError("no tape is active; run the forward pass inside `with Tape():`")
    return tape.backward(loss, leaves)
