"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tape`` records every operation applied to ``Tensor`` handles; ``backward``
walks the records in strict reverse order once, accumulating adjoints into a
buffer keyed by node id.  Operations accept a mix of ``Tensor`` and plain
array-likes: plain arrays are treated as constants and receive no adjoint.  A
call whose inputs are all constants skips the tape entirely and returns a raw
``numpy.ndarray``, so the same code paths serve both training and inference.

All values are float64.  By default the tape checks every recorded result for
NaN/Inf and raises ``NonFiniteError``; long rollout trainers disable the check
per tape for speed and validate at step boundaries instead.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    """Handle to a value registered on a tape."""

    __slots__ = ("tape", "id", "data")

    def __init__(self, tape, node_id, data):
        self.tape = tape
        self.id = node_id
        self.data = data

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(id={self.id}, shape={self.data.shape})"

    # arithmetic sugar; the module-level functions do the real work
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Gradients:
    """Adjoint buffer produced by ``Tape.backward``, keyed by node id."""

    def __init__(self, buffers):
        self._buffers = buffers

    def wrt(self, tensor):
        g = self._buffers[tensor.id]
        if g is None:
            return np.zeros_like(tensor.data)
        return g

    __getitem__ = wrt


class Tape:
    """Append-only record of operations; node ids are topologically ordered."""

    __slots__ = ("nodes", "check_finite")

    def __init__(self, check_finite=True):
        self.nodes = []
        self.check_finite = check_finite

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value):
        data = np.asarray(value, dtype=np.float64)
        if self.check_finite and not np.all(np.isfinite(data)):
            raise NonFiniteError("leaf value is not finite")
        self.nodes.append(None)
        return Tensor(self, len(self.nodes) - 1, data)

    def _record(self, data, input_ids, vjp):
        if self.check_finite and not np.all(np.isfinite(data)):
            raise NonFiniteError("operation produced a non-finite result")
        self.nodes.append((input_ids, vjp))
        return Tensor(self, len(self.nodes) - 1, data)

    def backward(self, root):
        """Adjoints of a scalar ``root`` with respect to every tape node.

        The tape itself is unchanged; calling backward twice on the same root
        yields identical gradients.
        """
        if not isinstance(root, Tensor) or root.tape is not self:
            raise ValueError("root is not a tensor on this tape")
        if root.data.size != 1:
            raise ShapeError(f"backward root must be scalar, got shape {root.data.shape}")
        buffers = [None] * len(self.nodes)
        buffers[root.id] = np.ones_like(root.data)
        for node_id in range(root.id, -1, -1):
            g = buffers[node_id]
            if g is None:
                continue
            node = self.nodes[node_id]
            if node is None:  # leaf
                continue
            input_ids, vjp = node
            for in_id, in_grad in zip(input_ids, vjp(g)):
                if in_grad is None:
                    continue
                if buffers[in_id] is None:
                    buffers[in_id] = in_grad
                else:
                    buffers[in_id] = buffers[in_id] + in_grad
        return Gradients(buffers)


def _data(x):
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _tape_of(*args):
    tape = None
    for a in args:
        if isinstance(a, Tensor):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ValueError("operands live on different tapes")
    return tape


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (the adjoint of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _emit(op_args, value, vjps):
    """Register ``value`` on the tape shared by the tensor args (if any).

    ``vjps`` maps positional arg index -> function of the output adjoint.
    """
    tape = _tape_of(*op_args)
    if tape is None:
        return value
    ids = []
    fns = []
    for i, a in enumerate(op_args):
        if isinstance(a, Tensor) and i in vjps:
            ids.append(a.id)
            fns.append(vjps[i])
    def vjp(g):
        return tuple(fn(g) for fn in fns)
    return tape._record(value, tuple(ids), vjp)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    av, bv = _data(a), _data(b)
    out = av + bv
    return _emit((a, b), out, {
        0: lambda g: _unbroadcast(g, av.shape),
        1: lambda g: _unbroadcast(g, bv.shape),
    })


def sub(a, b):
    av, bv = _data(a), _data(b)
    out = av - bv
    return _emit((a, b), out, {
        0: lambda g: _unbroadcast(g, av.shape),
        1: lambda g: _unbroadcast(-g, bv.shape),
    })


def mul(a, b):
    av, bv = _data(a), _data(b)
    out = av * bv
    return _emit((a, b), out, {
        0: lambda g: _unbroadcast(g * bv, av.shape),
        1: lambda g: _unbroadcast(g * av, bv.shape),
    })


def div(a, b):
    av, bv = _data(a), _data(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = av / bv
    return _emit((a, b), out, {
        0: lambda g: _unbroadcast(g / bv, av.shape),
        1: lambda g: _unbroadcast(-g * av / (bv * bv), bv.shape),
    })


def neg(a):
    av = _data(a)
    return _emit((a,), -av, {0: lambda g: -g})


def power(a, exponent):
    """Elementwise power with a constant exponent."""
    av = _data(a)
    out = av ** exponent
    return _emit((a,), out, {0: lambda g: g * exponent * av ** (exponent - 1)})


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def tanh(a):
    out = np.tanh(_data(a))
    return _emit((a,), out, {0: lambda g: g * (1.0 - out * out)})


def exp(a):
    out = np.exp(_data(a))
    return _emit((a,), out, {0: lambda g: g * out})


def log(a):
    av = _data(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(av)
    return _emit((a,), out, {0: lambda g: g / av})


def sqrt(a):
    with np.errstate(invalid="ignore"):
        out = np.sqrt(_data(a))
    return _emit((a,), out, {0: lambda g: g * (0.5 / out)})


def sin(a):
    av = _data(a)
    return _emit((a,), np.sin(av), {0: lambda g: g * np.cos(av)})


def cos(a):
    av = _data(a)
    return _emit((a,), np.cos(av), {0: lambda g: g * -np.sin(av)})


def relu(a):
    av = _data(a)
    out = np.maximum(av, 0.0)
    # subgradient at the kink is 0
    return _emit((a,), out, {0: lambda g: g * (av > 0.0)})


def clamp(a, lo, hi):
    av = _data(a)
    out = np.clip(av, lo, hi)
    mask = (av > lo) & (av < hi)
    return _emit((a,), out, {0: lambda g: g * mask})


def where(cond, a, b):
    """Select by a constant boolean mask; no gradient flows through ``cond``."""
    cond = np.asarray(cond, dtype=bool)
    av, bv = _data(a), _data(b)
    out = np.where(cond, av, bv)
    return _emit((a, b), out, {
        0: lambda g: _unbroadcast(g * cond, av.shape),
        1: lambda g: _unbroadcast(g * ~cond, bv.shape),
    })


def softmax(a, axis=-1):
    av = _data(a)
    shifted = av - av.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    def grad(g):
        return (g - (g * out).sum(axis=axis, keepdims=True)) * out
    return _emit((a,), out, {0: grad})


# ---------------------------------------------------------------------------
# reductions and shape ops


def sum_(a, axis=None, keepdims=False):
    av = _data(a)
    out = av.sum(axis=axis, keepdims=keepdims)
    def grad(g):
        if axis is None:
            return np.broadcast_to(g, av.shape)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape)
    return _emit((a,), np.asarray(out), {0: grad})


def mean(a, axis=None, keepdims=False):
    av = _data(a)
    out = av.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = av.size
    elif isinstance(axis, tuple):
        count = int(np.prod([av.shape[i] for i in axis]))
    else:
        count = av.shape[axis]
    def grad(g):
        if axis is None:
            return np.broadcast_to(g / count, av.shape)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g / count, av.shape)
    return _emit((a,), np.asarray(out), {0: grad})


def broadcast_to(a, shape):
    av = _data(a)
    out = np.broadcast_to(av, shape)
    return _emit((a,), out, {0: lambda g: _unbroadcast(g, av.shape)})


def reshape(a, shape):
    av = _data(a)
    out = av.reshape(shape)
    return _emit((a,), out, {0: lambda g: g.reshape(av.shape)})


def swapaxes(a, ax1, ax2):
    av = _data(a)
    return _emit((a,), np.swapaxes(av, ax1, ax2).copy(),
                 {0: lambda g: np.swapaxes(g, ax1, ax2)})


def getitem(a, key):
    """Basic (slice / integer) indexing; adjoint scatters into zeros."""
    av = _data(a)
    out = av[key]
    def grad(g):
        full = np.zeros_like(av)
        full[key] = g
        return full
    return _emit((a,), np.asarray(out), {0: grad})


def take(a, indices, axis=0):
    """Gather rows (embedding lookup); adjoint accumulates duplicates."""
    av = _data(a)
    indices = np.asarray(indices, dtype=np.intp)
    out = np.take(av, indices, axis=axis)
    def grad(g):
        full = np.zeros_like(av)
        if axis == 0:
            np.add.at(full, indices, g)
        else:
            moved = np.moveaxis(full, axis, 0)
            np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return full
    return _emit((a,), out, {0: grad})


def concat(parts, axis=-1):
    datas = [_data(p) for p in parts]
    out = np.concatenate(datas, axis=axis)
    tape = _tape_of(*parts)
    if tape is None:
        return out
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)
    ids = []
    slots = []
    for i, p in enumerate(parts):
        if isinstance(p, Tensor):
            ids.append(p.id)
            slots.append(i)
    def vjp(g):
        pieces = []
        for i in slots:
            sl = [slice(None)] * g.ndim
            sl[axis if axis >= 0 else g.ndim + axis] = slice(offsets[i], offsets[i + 1])
            pieces.append(np.ascontiguousarray(g[tuple(sl)]))
        return tuple(pieces)
    return tape._record(out, tuple(ids), vjp)


def stack(parts, axis=0):
    datas = [_data(p) for p in parts]
    out = np.stack(datas, axis=axis)
    tape = _tape_of(*parts)
    if tape is None:
        return out
    ids = []
    slots = []
    for i, p in enumerate(parts):
        if isinstance(p, Tensor):
            ids.append(p.id)
            slots.append(i)
    def vjp(g):
        moved = np.moveaxis(g, axis, 0)
        return tuple(np.ascontiguousarray(moved[i]) for i in slots)
    return tape._record(out, tuple(ids), vjp)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """Batched matrix product with numpy broadcasting over leading dims.

    Both operands must have ndim >= 2; reshape vectors before calling.
    """
    av, bv = _data(a), _data(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise ShapeError("matmul operands must have ndim >= 2")
    out = av @ bv
    def grad_a(g):
        return _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)
    def grad_b(g):
        return _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
    return _emit((a, b), out, {0: grad_a, 1: grad_b})


def solve(a, b):
    """Linear solve ``x = a^-1 b`` with ``b`` of shape (..., n, 1).

    Adjoints: db = a^-T g, da = -db x^T.  The factorization is not reused
    across forward/backward; systems here are small (n <= 9).
    """
    av, bv = _data(a), _data(b)
    if bv.shape[-1] != 1 or av.shape[-1] != av.shape[-2]:
        raise ShapeError(f"solve expects a (...,n,n) and b (...,n,1), got {av.shape} and {bv.shape}")
    try:
        x = np.linalg.solve(av, bv)
    except np.linalg.LinAlgError as err:
        raise ShapeError(f"linear solve failed: {err}") from err
    at = np.swapaxes(av, -1, -2)
    def grad_a(g):
        gb = np.linalg.solve(at, g)
        return _unbroadcast(-gb @ np.swapaxes(x, -1, -2), av.shape)
    def grad_b(g):
        return _unbroadcast(np.linalg.solve(at, g), bv.shape)
    return _emit((a, b), x, {0: grad_a, 1: grad_b})
