"""Reverse-mode automatic differentiation over float64 numpy arrays.

Graphs are recorded define-by-run: create a :class:`Tape`, register leaves
with :meth:`Tape.leaf`, compute with the functions in this module (or the
operator overloads on :class:`Tensor`), then call :func:`backward`.

Plain ``numpy`` arrays mixed into an expression are treated as constants and
never receive a gradient, which keeps weight-gradient work out of passes that
only need a gradient with respect to the input (and vice versa).
"""
from __future__ import annotations

import hashlib
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "Rng",
    "NonFiniteError",
    "ShapeError",
    "backward",
    "trace",
    "backprop_count",
    "gaussian_unit_vector",
    "gaussian_unit_rows",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "relu",
    "exp",
    "log",
    "square",
    "tensor_sum",
    "mean",
    "log_softmax",
    "logsumexp",
    "detach",
]


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


class ShapeError(ValueError):
    pass


_backprop_total = 0


def backprop_count() -> int:
    """Total number of reverse sweeps performed in this process."""
    return _backprop_total


class Tape:
    """Ordered record of the operations of one forward pass."""

    def __init__(self) -> None:
        self.nodes: list[Tensor] = []
        self.swept = False

    def leaf(self, value, name: str | None = None) -> "Tensor":
        data = np.array(value, dtype=np.float64)
        t = Tensor(data, tape=self, name=name or f"leaf{len(self.nodes)}")
        self._append(t)
        return t

    def _append(self, t: "Tensor") -> None:
        t.index = len(self.nodes)
        self.nodes.append(t)

    def __len__(self) -> int:
        return len(self.nodes)


class Tensor:
    """A float64 array, optionally recorded on a :class:`Tape`."""

    __slots__ = ("data", "tape", "index", "name", "op", "grad_fns", "detached")
    __array_priority__ = 100

    def __init__(self, data, tape: Tape | None = None, name: str | None = None, op: str = "leaf"):
        self.data = data
        self.tape = tape
        self.index = -1
        self.name = name
        self.op = op
        # (parent, vector-Jacobian product) pairs, only for parents on the tape
        self.grad_fns: tuple[tuple[Tensor, Callable[[np.ndarray], np.ndarray]], ...] = ()
        self.detached = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        where = f"node {self.index}" if self.tape is not None else "constant"
        return f"Tensor({self.op}, shape={self.shape}, {where})"

    __add__ = lambda self, o: add(self, o)  # noqa: E731
    __radd__ = lambda self, o: add(o, self)  # noqa: E731
    __sub__ = lambda self, o: sub(self, o)  # noqa: E731
    __rsub__ = lambda self, o: sub(o, self)  # noqa: E731
    __mul__ = lambda self, o: mul(self, o)  # noqa: E731
    __rmul__ = lambda self, o: mul(o, self)  # noqa: E731
    __matmul__ = lambda self, o: matmul(self, o)  # noqa: E731
    __rmatmul__ = lambda self, o: matmul(o, self)  # noqa: E731
    __neg__ = lambda self: neg(self)  # noqa: E731

    def sum(self, axis=None) -> "Tensor":
        return tensor_sum(self, axis)

    def mean(self, axis=None) -> "Tensor":
        return mean(self, axis)

    def detach(self) -> "Tensor":
        return detach(self)


def _value(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Tensor) and x.tape is not None:
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ValueError("operands recorded on different tapes")
    return tape


def _record(op: str, out: np.ndarray, parents: Sequence[tuple[object, Callable]]) -> Tensor:
    if not np.isfinite(out).all():
        names = ", ".join(
            (p.name or p.op) if isinstance(p, Tensor) else "constant" for p, _ in parents
        )
        raise NonFiniteError(f"non-finite value produced by '{op}' (inputs: {names})")
    tape = _tape_of(*(p for p, _ in parents))
    t = Tensor(out, tape=tape, op=op)
    if tape is not None:
        t.grad_fns = tuple(
            (p, fn) for p, fn in parents if isinstance(p, Tensor) and p.tape is not None
        )
        tape._append(t)
        t.name = f"{op}{t.index}"
    return t


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _binary(op: str, fn, av: np.ndarray, bv: np.ndarray) -> np.ndarray:
    try:
        return fn(av, bv)
    except ValueError as exc:
        raise ShapeError(f"{op}: incompatible shapes {av.shape} and {bv.shape}") from exc


def add(a, b) -> Tensor:
    av, bv = _value(a), _value(b)
    return _record(
        "add",
        _binary("add", np.add, av, bv),
        [(a, lambda g: _unbroadcast(g, av.shape)), (b, lambda g: _unbroadcast(g, bv.shape))],
    )


def sub(a, b) -> Tensor:
    av, bv = _value(a), _value(b)
    return _record(
        "sub",
        _binary("sub", np.subtract, av, bv),
        [(a, lambda g: _unbroadcast(g, av.shape)), (b, lambda g: -_unbroadcast(g, bv.shape))],
    )


def mul(a, b) -> Tensor:
    av, bv = _value(a), _value(b)
    return _record(
        "mul",
        _binary("mul", np.multiply, av, bv),
        [(a, lambda g: _unbroadcast(g * bv, av.shape)), (b, lambda g: _unbroadcast(g * av, bv.shape))],
    )


def neg(a) -> Tensor:
    return _record("neg", -_value(a), [(a, lambda g: -g)])


def matmul(a, b) -> Tensor:
    av, bv = _value(a), _value(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {av.shape} by {bv.shape}")
    return _record("matmul", av @ bv, [(a, lambda g: g @ bv.T), (b, lambda g: av.T @ g)])


def relu(a) -> Tensor:
    av = _value(a)
    # derivative at exactly 0 is taken as 0
    mask = av > 0
    return _record("relu", np.where(mask, av, 0.0), [(a, lambda g: g * mask)])


def exp(a) -> Tensor:
    out = np.exp(_value(a))
    return _record("exp", out, [(a, lambda g: g * out)])


def log(a) -> Tensor:
    av = _value(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(av)
    return _record("log", out, [(a, lambda g: g / av)])


def square(a) -> Tensor:
    av = _value(a)
    return _record("square", av * av, [(a, lambda g: 2.0 * g * av)])


def tensor_sum(a, axis=None) -> Tensor:
    av = _value(a)
    out = np.sum(av, axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape).copy()

    return _record("sum", np.asarray(out, dtype=np.float64), [(a, vjp)])


def mean(a, axis=None) -> Tensor:
    av = _value(a)
    n = av.size if axis is None else av.shape[axis]
    out = np.mean(av, axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g / n, av.shape).copy()

    return _record("mean", np.asarray(out, dtype=np.float64), [(a, vjp)])


def logsumexp(a, axis: int = -1) -> Tensor:
    av = _value(a)
    m = np.max(av, axis=axis, keepdims=True)
    s = np.log(np.sum(np.exp(av - m), axis=axis, keepdims=True)) + m
    soft = np.exp(av - s)
    return _record(
        "logsumexp", np.squeeze(s, axis=axis), [(a, lambda g: np.expand_dims(g, axis) * soft)]
    )


def log_softmax(a, axis: int = -1) -> Tensor:
    """Row-wise log-softmax, computed by max subtraction."""
    av = _value(a)
    z = av - np.max(av, axis=axis, keepdims=True)
    out = z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))
    soft = np.exp(out)

    def vjp(g):
        return g - soft * np.sum(g, axis=axis, keepdims=True)

    return _record("log_softmax", out, [(a, vjp)])


def detach(a) -> Tensor:
    """Copy of ``a`` that stays on the tape but passes no adjoint back."""
    t = _record("detach", _value(a).copy(), [(a, lambda g: np.zeros_like(g))])
    t.detached = True
    return t


def backward(output: Tensor, wrt: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of the scalar ``output`` with respect to each tensor in ``wrt``.

    Performs one reverse sweep and bumps the process-wide backprop counter.
    """
    global _backprop_total
    wrt = list(wrt)
    tape = output.tape
    if output.size != 1:
        raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")
    if tape is None:
        raise ValueError("output is a constant; nothing was recorded")
    for w in wrt:
        if w.tape is not tape or w.index < 0 or tape.nodes[w.index] is not w:
            raise ValueError(f"requested node {w.name!r} is not on this tape")

    keep = {w.index for w in wrt}
    adjoints: dict[int, np.ndarray] = {output.index: np.ones_like(output.data)}
    for node in reversed(tape.nodes[: output.index + 1]):
        if node.index in keep:
            g = adjoints.get(node.index)
        else:
            g = adjoints.pop(node.index, None)
        if g is None or node.detached:
            continue
        for parent, vjp in node.grad_fns:
            contrib = vjp(g)
            prev = adjoints.get(parent.index)
            adjoints[parent.index] = contrib if prev is None else prev + contrib
    tape.swept = True
    _backprop_total += 1
    return [adjoints.get(w.index, np.zeros_like(w.data)) for w in wrt]


def trace(fn: Callable[..., Tensor], **inputs) -> tuple[Tape, dict[str, Tensor], Tensor]:
    """Run ``fn`` on fresh leaves built from ``inputs`` and return the recording."""
    tape = Tape()
    leaves = {k: tape.leaf(v, name=k) for k, v in inputs.items()}
    return tape, leaves, fn(**leaves)


class Rng:
    """Seeded counter-based (Philox) generator with named disjoint substreams."""

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(path)
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *self.path])
        self.generator = np.random.Generator(np.random.Philox(ss))

    def substream(self, *keys) -> "Rng":
        """Independent generator identified by ``keys`` (ints or strings)."""
        ints = tuple(k if isinstance(k, int) else _str_key(k) for k in keys)
        return Rng(self.seed, self.path + ints)

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"


def _str_key(s: str) -> int:
    # stable across processes, unlike hash()
    return int.from_bytes(hashlib.blake2b(s.encode(), digest_size=4).digest(), "little")


def gaussian_unit_vector(rng: Rng, dim: int) -> np.ndarray:
    """Isotropic random direction: iid Gaussian draw scaled to unit L2 norm."""
    if dim < 1:
        raise ValueError("dim must be at least 1")
    return gaussian_unit_rows(rng, 1, dim)[0]


def gaussian_unit_rows(rng: Rng, n: int, dim: int) -> np.ndarray:
    if dim < 1:
        raise ValueError("dim must be at least 1")
    d = rng.normal((n, dim))
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    # an exactly-zero draw has probability zero; redraw rather than divide by it
    while np.any(norms == 0):
        bad = norms[:, 0] == 0
        d[bad] = rng.normal((int(bad.sum()), dim))
        norms = np.linalg.norm(d, axis=1, keepdims=True)
    return d / norms
