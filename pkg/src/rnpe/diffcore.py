"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op in this module is polymorphic: called on plain numpy arrays it
simply computes the value, called on a :class:`Tensor` while a
:class:`Tape` is active it also records a node for the backward pass.
Model code is therefore written once and used both for training (on a
tape) and for fast batched inference (plain arrays).
"""

from __future__ import annotations

import json
import threading
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "NonFiniteError",
    "ParameterVector",
    "Tape",
    "Tensor",
    "evaluate_with_gradient",
    "finite_difference_check",
]

_LOCAL = threading.local()


class NonFiniteError(FloatingPointError):
    """Raised when a recorded primitive produces a NaN or infinity."""

    def __init__(self, index: int, op: str):
        super().__init__(f"non-finite value produced by primitive #{index} ({op})")
        self.index = index
        self.op = op


def _active_tape() -> Tape | None:
    stack = getattr(_LOCAL, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Records primitives in creation order, which is a topological order."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Tensor] = []
        self.check_finite = check_finite

    def __enter__(self) -> Tape:
        if not hasattr(_LOCAL, "stack"):
            _LOCAL.stack = []
        _LOCAL.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _LOCAL.stack.pop()

    def watch(self, value) -> Tensor:
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        t._op = "leaf"
        return t

    def backward(self, output: Tensor) -> None:
        if output.value.size != 1:
            raise ValueError("backward() needs a scalar output")
        output.grad = np.ones_like(output.value)
        for node in reversed(self.nodes):
            g = node.grad
            if g is None or node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                parent.grad = pg if parent.grad is None else parent.grad + pg


class Tensor:
    """A float64 array, optionally tracked on the active tape."""

    __array_priority__ = 100.0
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._op = "const"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def data(self) -> np.ndarray:
        """Row-major flattened values."""
        return self.value.ravel()

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op})"

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return swapaxes(self, -1, -2)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _is_t(*xs) -> bool:
    return any(isinstance(x, Tensor) for x in xs)


def _as_t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(value: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    tape = _active_tape()
    out = Tensor(value)
    out._op = op
    if tape is None or not any(p.requires_grad for p in parents):
        return out
    if tape.check_finite and not np.all(np.isfinite(value)):
        raise NonFiniteError(len(tape.nodes), op)
    out.requires_grad = True
    out._parents = tuple(parents)
    out._backward = backward
    tape.nodes.append(out)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def primitive(x, fn: Callable, dfn: Callable, op: str = "custom"):
    """Build an elementwise primitive from a value function and its derivative.

    ``dfn`` receives the input values and must return the pointwise
    derivative. Useful for extending the primitive set (and for planting
    deliberately wrong gradients in tests of the checker).
    """
    if not isinstance(x, Tensor):
        return fn(np.asarray(x, dtype=np.float64))
    xv = x.value
    return _record(fn(xv), (x,), lambda g: (g * dfn(xv),), op)


# ---------------------------------------------------------------- arithmetic


def add(a, b):
    if not _is_t(a, b):
        return np.add(a, b)
    a, b = _as_t(a), _as_t(b)
    sa, sb = a.shape, b.shape
    return _record(
        a.value + b.value, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add",
    )


def sub(a, b):
    if not _is_t(a, b):
        return np.subtract(a, b)
    a, b = _as_t(a), _as_t(b)
    sa, sb = a.shape, b.shape
    return _record(
        a.value - b.value, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub",
    )


def mul(a, b):
    if not _is_t(a, b):
        return np.multiply(a, b)
    a, b = _as_t(a), _as_t(b)
    av, bv = a.value, b.value
    return _record(
        av * bv, (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        "mul",
    )


def div(a, b):
    if not _is_t(a, b):
        return np.divide(a, b)
    a, b = _as_t(a), _as_t(b)
    av, bv = a.value, b.value
    out = av / bv
    return _record(
        out, (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)),
        "div",
    )


def neg(a):
    if not isinstance(a, Tensor):
        return np.negative(a)
    return _record(-a.value, (a,), lambda g: (-g,), "neg")


def power(a, exponent: float):
    if not isinstance(a, Tensor):
        return np.power(a, exponent)
    av = a.value
    return _record(
        av**exponent, (a,), lambda g: (g * exponent * av ** (exponent - 1),), "pow"
    )


def square(a):
    if not isinstance(a, Tensor):
        return np.square(a)
    av = a.value
    return _record(av * av, (a,), lambda g: (2.0 * g * av,), "square")


def matmul(a, b):
    """Affine-map workhorse; supports batched operands with broadcasting."""
    if not _is_t(a, b):
        return np.matmul(a, b)
    a, b = _as_t(a), _as_t(b)
    av, bv = a.value, b.value

    def backward(g):
        if bv.ndim == 1:
            ga = np.multiply.outer(g, bv) if av.ndim > 1 else g * bv
            gb = np.tensordot(g, av, axes=(list(range(g.ndim)), list(range(g.ndim))))
            return _unbroadcast(ga, av.shape), gb
        if av.ndim == 1:
            ga = np.matmul(g, np.swapaxes(bv, -1, -2))
            gb = np.multiply.outer(av, g)
            return ga, _unbroadcast(gb, bv.shape)
        ga = np.matmul(g, np.swapaxes(bv, -1, -2))
        gb = np.matmul(np.swapaxes(av, -1, -2), g)
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return _record(np.matmul(av, bv), (a, b), backward, "matmul")


# --------------------------------------------------------------- elementwise


def exp(a):
    if not isinstance(a, Tensor):
        return np.exp(a)
    out = np.exp(a.value)
    return _record(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    if not isinstance(a, Tensor):
        return np.log(a)
    av = a.value
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(av)
    return _record(out, (a,), lambda g: (g / av,), "log")


def sqrt(a):
    if not isinstance(a, Tensor):
        return np.sqrt(a)
    out = np.sqrt(a.value)
    return _record(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def tanh(a):
    if not isinstance(a, Tensor):
        return np.tanh(a)
    out = np.tanh(a.value)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a):
    if not isinstance(a, Tensor):
        return _sigmoid(np.asarray(a, dtype=np.float64))
    out = _sigmoid(a.value)
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -v))


def softplus(a):
    if not isinstance(a, Tensor):
        return np.logaddexp(0.0, a)
    av = a.value
    return _record(np.logaddexp(0.0, av), (a,), lambda g: (g * _sigmoid(av),), "softplus")


def abs_(a):
    if not isinstance(a, Tensor):
        return np.abs(a)
    av = a.value
    return _record(np.abs(av), (a,), lambda g: (g * np.sign(av),), "abs")


def where(mask, a, b):
    """Select elementwise; ``mask`` is a constant boolean array."""
    mask = np.asarray(mask, dtype=bool)
    if not _is_t(a, b):
        return np.where(mask, a, b)
    a, b = _as_t(a), _as_t(b)
    sa, sb = a.shape, b.shape
    return _record(
        np.where(mask, a.value, b.value), (a, b),
        lambda g: (_unbroadcast(np.where(mask, g, 0.0), sa),
                   _unbroadcast(np.where(mask, 0.0, g), sb)),
        "where",
    )


# ---------------------------------------------------------------- reductions


def sum_(a, axis=None, keepdims=False):
    if not isinstance(a, Tensor):
        return np.sum(a, axis=axis, keepdims=keepdims)
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(np.sum(a.value, axis=axis, keepdims=keepdims), (a,), backward, "sum")


def mean(a, axis=None, keepdims=False):
    n = value_of(a).size if axis is None else value_of(a).shape[axis]
    return sum_(a, axis=axis, keepdims=keepdims) / float(n)


def logsumexp(a, axis=None, keepdims=False):
    av = value_of(a)
    m = np.max(av, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out_k = np.log(np.sum(np.exp(av - m), axis=axis, keepdims=True)) + m
    if keepdims:
        out = out_k
    elif axis is None:
        out = out_k.reshape(())
    else:
        out = np.squeeze(out_k, axis=axis)
    if not isinstance(a, Tensor):
        return out
    return _record(
        out, (a,), lambda g: (np.reshape(g, out_k.shape) * np.exp(av - out_k),), "logsumexp"
    )


def cumsum(a, axis=-1):
    if not isinstance(a, Tensor):
        return np.cumsum(a, axis=axis)

    def backward(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return _record(np.cumsum(a.value, axis=axis), (a,), backward, "cumsum")


def softmax(a, axis=-1):
    return exp(a - logsumexp(a, axis=axis, keepdims=True))


# --------------------------------------------------------- masking/reshaping


def getitem(a, idx):
    if not isinstance(a, Tensor):
        return np.asarray(a)[idx]
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _record(a.value[idx], (a,), backward, "getitem")


def reshape(a, shape):
    if not isinstance(a, Tensor):
        return np.reshape(a, shape)
    old = a.shape
    return _record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def swapaxes(a, i, j):
    if not isinstance(a, Tensor):
        return np.swapaxes(a, i, j)
    return _record(np.swapaxes(a.value, i, j), (a,), lambda g: (np.swapaxes(g, i, j),), "swapaxes")


def concat(parts: Sequence, axis=-1):
    if not _is_t(*parts):
        return np.concatenate(parts, axis=axis)
    parts = [_as_t(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    return _record(
        np.concatenate([p.value for p in parts], axis=axis), parts,
        lambda g: tuple(np.split(g, splits, axis=axis)), "concat",
    )


def take_along_axis(a, indices: np.ndarray):
    """Gather along the last axis with a constant integer index array (bin lookup)."""
    if not isinstance(a, Tensor):
        av = np.asarray(a)
        lead = np.broadcast_shapes(av.shape[:-1], indices.shape[:-1])
        return np.take_along_axis(np.broadcast_to(av, lead + av.shape[-1:]), indices, axis=-1)
    av = a.value
    lead = np.broadcast_shapes(av.shape[:-1], indices.shape[:-1])
    full = np.broadcast_to(av, lead + av.shape[-1:])
    idx = np.broadcast_to(indices, lead + indices.shape[-1:])

    def backward(g):
        out = np.zeros(full.shape)
        grid = list(np.ix_(*[np.arange(n) for n in idx.shape]))
        grid[-1] = idx
        np.add.at(out, tuple(grid), g)
        return (_unbroadcast(out, av.shape),)

    return _record(np.take_along_axis(full, idx, axis=-1), (a,), backward, "take_along_axis")


def pad_last(a, before: float | None, after: float | None):
    """Concatenate constant columns to the last axis."""
    parts = []
    v = value_of(a)
    lead = v.shape[:-1] + (1,)
    if before is not None:
        parts.append(np.full(lead, before))
    parts.append(a)
    if after is not None:
        parts.append(np.full(lead, after))
    return concat(parts, axis=-1)


# ------------------------------------------------------- parameter vectors


@dataclass(frozen=True)
class ParameterVector:
    """Named segments packed into one flat float64 vector."""

    flat: np.ndarray
    segments: dict[str, tuple[int, tuple[int, ...]]] = field(default_factory=dict)

    def __post_init__(self):
        covered = 0
        for name, (offset, shape) in sorted(self.segments.items(), key=lambda kv: kv[1][0]):
            if offset != covered:
                raise ValueError(f"segment {name!r} leaves a gap or overlaps at {offset}")
            covered += int(np.prod(shape, dtype=np.int64))
        if covered != self.flat.size:
            raise ValueError("segments do not cover the vector")

    @classmethod
    def pack(cls, arrays: Mapping[str, np.ndarray]) -> ParameterVector:
        segments = {}
        chunks = []
        offset = 0
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            segments[name] = (offset, tuple(arr.shape))
            chunks.append(arr.ravel())
            offset += arr.size
        flat = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(flat, segments)

    def unpack(self, flat=None) -> dict:
        """Split ``flat`` (defaults to own values; may be a Tensor) into named views."""
        flat = self.flat if flat is None else flat
        out = {}
        for name, (offset, shape) in self.segments.items():
            n = int(np.prod(shape, dtype=np.int64))
            out[name] = reshape(getitem(flat, slice(offset, offset + n)), shape)
        return out

    def with_flat(self, flat: np.ndarray) -> ParameterVector:
        return ParameterVector(np.array(flat, dtype=np.float64), dict(self.segments))

    def manifest(self) -> list[dict]:
        return [
            {"name": k, "offset": o, "length": int(np.prod(s, dtype=np.int64)), "shape": list(s)}
            for k, (o, s) in self.segments.items()
        ]

    def save(self, path) -> None:
        header = json.dumps({"format": "rnpe-params/1", "segments": self.manifest()}, sort_keys=True)
        with open(path, "wb") as fh:
            fh.write(header.encode("utf-8") + b"\n")
            fh.write(self.flat.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> ParameterVector:
        raw = Path(path).read_bytes()
        nl = raw.index(b"\n")
        header = json.loads(raw[:nl].decode("utf-8"))
        if header.get("format") != "rnpe-params/1":
            raise ValueError(f"unrecognised parameter file format in {path}")
        flat = np.frombuffer(raw[nl + 1:], dtype="<f8").astype(np.float64)
        segs = {s["name"]: (s["offset"], tuple(s["shape"])) for s in header["segments"]}
        return cls(flat, segs)


# -------------------------------------------------------------- entry points


def evaluate_with_gradient(f: Callable, at, check_finite: bool = True) -> tuple[float, np.ndarray]:
    """Return ``(f(at), grad f(at))`` by one reverse sweep over a fresh tape.

    ``at`` may be an array or a :class:`ParameterVector`; in the latter case
    ``f`` receives the flat vector as a Tensor and the gradient is flat.
    """
    x0 = at.flat if isinstance(at, ParameterVector) else np.asarray(at, dtype=np.float64)
    with Tape(check_finite=check_finite) as tape:
        leaf = tape.watch(x0)
        out = f(leaf)
        if not isinstance(out, Tensor) or not out.requires_grad:
            return float(np.asarray(value_of(out))), np.zeros_like(x0)
        tape.backward(out)
    grad = leaf.grad if leaf.grad is not None else np.zeros_like(x0)
    return float(out.value), grad


def finite_difference_check(f: Callable, at, step: float = 1e-5, indices=None) -> float:
    """Max relative discrepancy between the tape gradient and central differences."""
    if step <= 0:
        raise ValueError("step must be positive")
    x0 = at.flat if isinstance(at, ParameterVector) else np.asarray(at, dtype=np.float64)
    _, grad = evaluate_with_gradient(f, at)
    flat = x0.ravel()
    coords = range(flat.size) if indices is None else indices
    worst = 0.0
    for i in coords:
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += step
        xm[i] -= step
        fp = float(np.asarray(f(xp.reshape(x0.shape))))
        fm = float(np.asarray(f(xm.reshape(x0.shape))))
        fd = (fp - fm) / (2.0 * step)
        a = grad.ravel()[i]
        worst = max(worst, abs(a - fd) / (abs(a) + 1e-12))
    return worst
