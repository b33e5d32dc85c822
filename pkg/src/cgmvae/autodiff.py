"""Reverse-mode automatic differentiation over dense float64 arrays.

The engine is define-by-run: while a :class:`Tape` is active, every primitive
records a backward closure in execution order. Replaying the closures in
reverse visits each node after all of its consumers, so a single pass
accumulates exact gradients. Without an active tape the primitives run in
plain eval mode and record nothing.

All values are 64-bit floats; the models here are small and exact gradient
checking matters more than speed.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DegenerateEmbeddingError, NumericDomainError, ShapeError

NORM_EPS = 1e-12

_active_tape: "Tape | None" = None


class Tensor:
    """Dense array plus an optional same-shape gradient buffer.

    Tensors are leaves (parameters, inputs, constants) or op outputs. The
    gradient buffer exists only when ``requires_grad`` is set; op outputs
    acquire it automatically while a tape is recording.
    """

    __slots__ = ("data", "grad", "requires_grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar over the strict-shape free functions
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return negate(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of one forward pass.

    Entries hold the op name, the op output, and a closure that pulls the
    output gradient and accumulates into the inputs. Execution order is a
    topological order, so reversing it is a valid backward schedule.
    """

    def __init__(self):
        self._entries: list[tuple[str, Tensor, object]] = []

    def __len__(self):
        return len(self._entries)

    def __enter__(self):
        global _active_tape
        if _active_tape is not None:
            raise RuntimeError("a tape is already recording; tapes do not nest")
        _active_tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _active_tape
        _active_tape = None
        return False

    def backward(self, loss: Tensor):
        """Seed d(loss)/d(loss) = 1 and replay the tape in reverse.

        Gradients accumulate additively, so leaf buffers must be zero on
        entry and a tape should be replayed once.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        if loss.grad is None:
            raise ShapeError("loss tensor was not recorded on a tape")
        loss.grad += 1.0
        for _name, out, fn in reversed(self._entries):
            fn(out.grad)


def backward(loss: Tensor):
    """Backward through the tape that recorded ``loss``."""
    if loss._tape is None:
        raise ShapeError("no tape recorded this tensor; wrap the forward pass in `with Tape():`")
    loss._tape.backward(loss)


def _out_of(data, *inputs) -> Tensor:
    """Build an op output; it requires grad iff a tape is live and any input does."""
    rec = _active_tape is not None and any(t.requires_grad for t in inputs)
    return Tensor(data, requires_grad=rec)


def _record(out: Tensor, name: str, fn) -> Tensor:
    if out.requires_grad:
        out._tape = _active_tape
        _active_tape._entries.append((name, out, fn))
    return out


# ---------------------------------------------------------------------------
# binary elementwise / linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes do not chain: {a.data.shape} x {b.data.shape}")
    out = _out_of(a.data @ b.data, a, b)

    def bw(g):
        if a.requires_grad:
            a.grad += g @ b.data.T
        if b.requires_grad:
            b.grad += a.data.T @ g

    return _record(out, "matmul", bw)


def _check_same_shape(op, a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op} needs equal shapes, got {a.data.shape} and {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    out = _out_of(a.data + b.data, a, b)

    def bw(g):
        if a.requires_grad:
            a.grad += g
        if b.requires_grad:
            b.grad += g

    return _record(out, "add", bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    out = _out_of(a.data - b.data, a, b)

    def bw(g):
        if a.requires_grad:
            a.grad += g
        if b.requires_grad:
            b.grad -= g

    return _record(out, "sub", bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    out = _out_of(a.data * b.data, a, b)

    def bw(g):
        if a.requires_grad:
            a.grad += g * b.data
        if b.requires_grad:
            b.grad += g * a.data

    return _record(out, "mul", bw)


def add_bias(m: Tensor, bias: Tensor) -> Tensor:
    """Add a length-n row vector to every row of a (B, n) matrix."""
    if m.data.ndim != 2 or bias.data.shape != (m.data.shape[1],):
        raise ShapeError(f"add_bias needs (B,n)+(n,), got {m.data.shape} and {bias.data.shape}")
    out = _out_of(m.data + bias.data, m, bias)

    def bw(g):
        if m.requires_grad:
            m.grad += g
        if bias.requires_grad:
            bias.grad += g.sum(axis=0)

    return _record(out, "add_bias", bw)


# ---------------------------------------------------------------------------
# unary elementwise


def negate(t: Tensor) -> Tensor:
    out = _out_of(-t.data, t)

    def bw(g):
        if t.requires_grad:
            t.grad -= g

    return _record(out, "negate", bw)


def scale(t: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar."""
    c = float(c)
    out = _out_of(t.data * c, t)

    def bw(g):
        if t.requires_grad:
            t.grad += g * c

    return _record(out, "scale", bw)


def add_const(t: Tensor, c: float) -> Tensor:
    """Add a python scalar (no gradient to the constant)."""
    out = _out_of(t.data + float(c), t)

    def bw(g):
        if t.requires_grad:
            t.grad += g

    return _record(out, "add_const", bw)


def exp(t: Tensor) -> Tensor:
    out = _out_of(np.exp(t.data), t)
    out_data = out.data

    def bw(g):
        if t.requires_grad:
            t.grad += g * out_data

    return _record(out, "exp", bw)


def log(t: Tensor) -> Tensor:
    if np.any(t.data <= 0.0):
        raise NumericDomainError("log requires strictly positive inputs")
    out = _out_of(np.log(t.data), t)

    def bw(g):
        if t.requires_grad:
            t.grad += g / t.data

    return _record(out, "log", bw)


def relu(t: Tensor) -> Tensor:
    out = _out_of(np.maximum(t.data, 0.0), t)

    def bw(g):
        if t.requires_grad:
            t.grad += g * (t.data > 0.0)

    return _record(out, "relu", bw)


def sigmoid_values(x: np.ndarray) -> np.ndarray:
    """Stable sigmoid on a plain array (no tape); split by sign so exp() never overflows."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(t: Tensor) -> Tensor:
    s = sigmoid_values(t.data)
    out = _out_of(s, t)

    def bw(g):
        if t.requires_grad:
            t.grad += g * s * (1.0 - s)

    return _record(out, "sigmoid", bw)


def log_sigmoid(t: Tensor) -> Tensor:
    """log(sigmoid(x)) = min(x, 0) - log1p(exp(-|x|)); never -inf for finite x."""
    x = t.data
    out = _out_of(np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x))), t)

    def bw(g):
        if t.requires_grad:
            t.grad += g * sigmoid_values(-x)

    return _record(out, "log_sigmoid", bw)


def clamp(t: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes through wherever the input was in range."""
    out = _out_of(np.clip(t.data, lo, hi), t)
    mask = (t.data >= lo) & (t.data <= hi)

    def bw(g):
        if t.requires_grad:
            t.grad += g * mask

    return _record(out, "clamp", bw)


# ---------------------------------------------------------------------------
# shape ops


def transpose(t: Tensor) -> Tensor:
    if t.data.ndim != 2:
        raise ShapeError(f"transpose needs rank 2, got shape {t.data.shape}")
    out = _out_of(t.data.T.copy(), t)

    def bw(g):
        if t.requires_grad:
            t.grad += g.T

    return _record(out, "transpose", bw)


def slice_cols(t: Tensor, start: int, stop: int) -> Tensor:
    """Columns [start:stop) of a rank-2 tensor."""
    if t.data.ndim != 2:
        raise ShapeError(f"slice_cols needs rank 2, got shape {t.data.shape}")
    out = _out_of(t.data[:, start:stop].copy(), t)

    def bw(g):
        if t.requires_grad:
            t.grad[:, start:stop] += g

    return _record(out, "slice_cols", bw)


def reshape(t: Tensor, shape: tuple) -> Tensor:
    if int(np.prod(shape)) != t.data.size:
        raise ShapeError(f"cannot reshape {t.data.shape} to {shape}")
    out = _out_of(t.data.reshape(shape).copy(), t)

    def bw(g):
        if t.requires_grad:
            t.grad += g.reshape(t.data.shape)

    return _record(out, "reshape", bw)


def repeat_rows(t: Tensor, n: int) -> Tensor:
    """Tile a single row (1, d) into (n, d); backward sums over the copies."""
    if t.data.ndim != 2 or t.data.shape[0] != 1:
        raise ShapeError(f"repeat_rows needs shape (1, d), got {t.data.shape}")
    out = _out_of(np.repeat(t.data, n, axis=0), t)

    def bw(g):
        if t.requires_grad:
            t.grad += g.sum(axis=0, keepdims=True)

    return _record(out, "repeat_rows", bw)


# ---------------------------------------------------------------------------
# reductions


def _check_axis(t: Tensor, axis):
    if axis is None:
        if t.data.size == 0:
            raise ShapeError("reduction over an empty tensor")
        return
    if not (0 <= axis < t.data.ndim):
        raise ShapeError(f"axis {axis} out of range for rank {t.data.ndim}")
    if t.data.shape[axis] == 0:
        raise ShapeError(f"reduction over empty axis {axis}")


def sum(t: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001 - reduction op name
    _check_axis(t, axis)
    out = _out_of(t.data.sum(axis=axis), t)

    def bw(g):
        if t.requires_grad:
            if axis is None:
                t.grad += g
            else:
                t.grad += np.expand_dims(g, axis)

    return _record(out, "sum", bw)


def mean(t: Tensor, axis: int | None = None) -> Tensor:
    _check_axis(t, axis)
    n = t.data.size if axis is None else t.data.shape[axis]
    out = _out_of(t.data.mean(axis=axis), t)

    def bw(g):
        if t.requires_grad:
            if axis is None:
                t.grad += g / n
            else:
                t.grad += np.expand_dims(g, axis) / n

    return _record(out, "mean", bw)


def logsumexp(t: Tensor, axis: int | None = None) -> Tensor:
    """Shift-stable log-sum-exp: m + log(sum(exp(x - m))) with m = max(x)."""
    _check_axis(t, axis)
    m = t.data.max(axis=axis, keepdims=True)
    shifted = np.exp(t.data - m)
    total = shifted.sum(axis=axis, keepdims=True)
    res = m + np.log(total)
    softmax = shifted / total
    if axis is None:
        out = _out_of(res.reshape(()), t)
    else:
        out = _out_of(np.squeeze(res, axis=axis), t)

    def bw(g):
        if t.requires_grad:
            if axis is None:
                t.grad += g * softmax
            else:
                t.grad += np.expand_dims(g, axis) * softmax

    return _record(out, "logsumexp", bw)


# ---------------------------------------------------------------------------
# row normalization and dropout


def l2_normalize(t: Tensor) -> Tensor:
    """Divide every row of an (R, E) tensor by its Euclidean norm.

    Backward applies the row-wise projection (I - v v^T) / ||w|| to the
    incoming gradient.
    """
    if t.data.ndim != 2:
        raise ShapeError(f"l2_normalize needs rank 2, got shape {t.data.shape}")
    norms = np.linalg.norm(t.data, axis=1, keepdims=True)
    if np.any(norms <= NORM_EPS):
        bad = int(np.argmin(norms))
        raise DegenerateEmbeddingError(f"row {bad} has near-zero norm {float(norms[bad, 0]):.3e}")
    v = t.data / norms
    out = _out_of(v, t)

    def bw(g):
        if t.requires_grad:
            gv = (g * v).sum(axis=1, keepdims=True)
            t.grad += (g - gv * v) / norms

    return _record(out, "l2_normalize", bw)


def dropout(t: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors by 1/(1-rate).

    Eval mode is the identity, so prediction never rescales.
    """
    if not (0.0 <= rate < 1.0):
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return t
    keep = rng.random(t.data.shape) >= rate
    scaled = keep / (1.0 - rate)
    out = _out_of(t.data * scaled, t)

    def bw(g):
        if t.requires_grad:
            t.grad += g * scaled

    return _record(out, "dropout", bw)


def constant(data) -> Tensor:
    """A non-differentiable tensor (masks, targets, noise draws)."""
    return Tensor(data, requires_grad=False)
