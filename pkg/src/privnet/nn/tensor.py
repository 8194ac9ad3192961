"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations are recorded onto the innermost active :class:`GradTape` whenever
at least one operand is tracked (a trainable parameter or the result of a
recorded operation). Outside a tape everything runs as plain numpy, which is
what evaluation code relies on for speed.

>>> w = Tensor.parameter([0.3], name="w")
>>> with GradTape() as tape:
...     loss = sigmoid(w * 2.0).sum()
>>> (g,) = backward(loss, tape, [w])
>>> round(float(g[0]), 6)
0.379557
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError, DimensionError

_TAPES: list["GradTape"] = []


class _Record:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out, inputs, vjp):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class GradTape:
    """Ordered record of primitive operations, used as a context manager.

    A tape belongs to a single training step: build the loss inside
    ``with GradTape() as tape:``, call :func:`backward`, then drop the tape
    (or :meth:`clear` it before reuse).
    """

    def __init__(self):
        self._records: list[_Record] = []
        self._frozen: set[int] = set()

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def __len__(self):
        return len(self._records)

    def record(self, out, inputs, vjp):
        self._records.append(_Record(out, inputs, vjp))

    def freeze(self, tensors: Iterable["Tensor"]):
        """Declare tensors as constants of this tape's loss.

        Asking :func:`backward` for their gradient is a contract violation.
        """
        self._frozen.update(id(t) for t in tensors)

    def is_frozen(self, tensor: "Tensor") -> bool:
        return id(tensor) in self._frozen

    def clear(self):
        self._records.clear()
        self._frozen.clear()


def _active_tape():
    return _TAPES[-1] if _TAPES else None


class Tensor:
    """A float64 ndarray plus the bookkeeping needed for differentiation."""

    __slots__ = ("data", "requires_grad", "name", "_tracked")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._tracked = requires_grad

    @classmethod
    def parameter(cls, data, name=None) -> "Tensor":
        return cls(np.array(data, dtype=np.float64), requires_grad=True, name=name)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(data: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    out = Tensor(data)
    tape = _active_tape()
    if tape is not None and any(t._tracked for t in inputs):
        out._tracked = True
        tape.record(out, tuple(inputs), vjp)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise binary ------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _emit(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _emit(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    return _emit(a.data / b.data, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * a.data / b.data ** 2, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _emit(-a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Matrix product of two 2-D tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _emit(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


# -- elementwise unary -------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return _emit(s, (x,), lambda g: (g * s * (1.0 - s),))


def log_sigmoid(x) -> Tensor:
    """``log(sigmoid(x))`` without overflow or ``log(0)``."""
    x = as_tensor(x)
    out = -np.logaddexp(0.0, -x.data)
    return _emit(out, (x,), lambda g: (g * _sigmoid(-x.data),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    e = np.exp(x.data)
    return _emit(e, (x,), lambda g: (g * e,))


def log(x) -> Tensor:
    x = as_tensor(x)
    return _emit(np.log(x.data), (x,), lambda g: (g / x.data,))


# -- normalisers -------------------------------------------------------------

def softmax(x, axis: int = -1, mask=None) -> Tensor:
    """Softmax along ``axis``; entries where ``mask`` is false get weight 0.

    Every slice must keep at least one unmasked entry.
    """
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=axis).all():
            raise ContractError("softmax: a slice is fully masked")
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _emit(s, (x,), vjp)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return _emit(out, (x,), lambda g: (g - s * g.sum(axis=axis, keepdims=True),))


# -- reductions and structure ------------------------------------------------

def sum_(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit(out, (x,), vjp)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return sum_(x, axis=axis, keepdims=keepdims) * (1.0 / float(count))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _emit(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit(out, tensors, vjp)


def take(x, idx) -> Tensor:
    """``x[idx]`` for any numpy index, including slices and integer arrays."""
    x = as_tensor(x)
    if isinstance(idx, Tensor):
        idx = idx.data.astype(np.intp)
    out = x.data[idx]

    def vjp(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _emit(np.array(out, dtype=np.float64), (x,), vjp)


def _scatter_rows(ids: np.ndarray, g: np.ndarray, n_rows: int) -> np.ndarray:
    # Sorted segment sums; much faster than np.add.at for row gathers.
    flat = ids.reshape(-1)
    g2 = g.reshape(len(flat), -1)
    order = np.argsort(flat, kind="stable")
    sorted_ids = flat[order]
    uniq, starts = np.unique(sorted_ids, return_index=True)
    full = np.zeros((n_rows, g2.shape[1]))
    if len(flat):
        full[uniq] = np.add.reduceat(g2[order], starts, axis=0)
    return full


def embedding(table, ids) -> Tensor:
    """Gather rows of a ``(vocab, dim)`` table; the result has shape ``ids.shape + (dim,)``."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.intp)
    if table.ndim != 2:
        raise DimensionError(f"embedding: table must be 2-D, got shape {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding: id out of range for vocabulary of size {table.shape[0]}")
    n_rows = table.shape[0]
    return _emit(table.data[ids], (table,),
                 lambda g: (_scatter_rows(ids, g, n_rows),))


# -- differentiation ---------------------------------------------------------

def backward(loss: Tensor, tape: GradTape, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to each of ``params``.

    Parameters that do not influence the loss get an all-zero gradient.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be a scalar, got shape {loss.shape}")
    for p in params:
        if tape.is_frozen(p):
            label = p.name or repr(p)
            raise ContractError(f"backward: {label} is frozen in this loss")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape._records):
        g = grads.pop(id(rec.out), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.vjp(g)):
            if gi is None or not inp._tracked:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    out = []
    for p in params:
        g = grads.get(id(p))
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64).reshape(p.shape)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"backward: non-finite gradient for {p.name or p!r}")
        out.append(g)
    return out
