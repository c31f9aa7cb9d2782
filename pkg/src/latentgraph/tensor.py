"""Dense float64 tensors with reverse-mode automatic differentiation.

Small by design: just enough primitives to express MLP forward passes,
graph-variation objectives and input-gradient attacks. There is no implicit
broadcasting; every shape alignment is explicit (``scale`` for scalar
multiples, ``add_row`` for adding a (1, n) row to every row of an (m, n)
matrix). All data is float64.

Gradient conventions at non-differentiable points: relu'(0) = 0,
|.|'(0) = 0 and sqrt'(0) = 0. The sqrt convention makes norm-style
composites sqrt(sum(x*x)) return the minimum-norm subgradient (zero) at the
origin instead of overflowing.

A :class:`Tape` records operations while active (``with Tape() as tape:``)
and replays them in reverse on ``tape.backward(root)``. Tapes are
thread-local: one active tape per thread, tensors without tape identity are
immutable values safe to share between threads.
"""

from __future__ import annotations

import numbers
import threading
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateInputError, NumericError, ShapeError, UsageError

_STATE = threading.local()

_CHECKED = True


def set_checked(flag: bool) -> bool:
    """Toggle post-operation finiteness checks. Returns the previous value."""
    global _CHECKED
    previous = _CHECKED
    _CHECKED = bool(flag)
    return previous


def _active_tape() -> Optional["Tape"]:
    return getattr(_STATE, "tape", None)


class Tensor:
    """Immutable dense array of float64 values, optionally tied to a tape node."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data, tape: Optional["Tape"] = None, node_id: Optional[int] = None):
        arr = np.array(data, dtype=np.float64)  # always a private copy
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor creation: non-finite value")
        arr.flags.writeable = False
        self.data = arr
        self.tape = tape
        self.node_id = node_id

    @classmethod
    def _internal(cls, arr: np.ndarray, tape=None, node_id=None) -> "Tensor":
        # op results: freshly allocated arrays, finiteness already checked by _wrap
        t = object.__new__(cls)
        arr.flags.writeable = False
        t.data = arr
        t.tape = tape
        t.node_id = node_id
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f", node={self.node_id}" if self.node_id is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    # arithmetic sugar; all semantics live in the module-level functions
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return subtract(self, other)

    def __mul__(self, other):
        if isinstance(other, numbers.Real):
            return scale(self, float(other))
        return multiply(self, other)

    def __rmul__(self, other):
        if isinstance(other, numbers.Real):
            return scale(self, float(other))
        return NotImplemented

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return tensor_sum(self, axis=axis)

    def mean(self) -> "Tensor":
        return mean(self)


class _Node:
    __slots__ = ("parents", "backward_fn", "shape")

    def __init__(self, parents, backward_fn, shape):
        self.parents = parents
        self.backward_fn = backward_fn
        self.shape = shape


class Gradients:
    """Gradient of a scalar root with respect to every node of one tape."""

    def __init__(self, tape: "Tape", grads):
        self._tape = tape
        self._grads = grads

    def __getitem__(self, t: Tensor) -> np.ndarray:
        nid = self._tape._lookup(t)
        if nid is None:
            raise UsageError("gradient requested for a tensor not on this tape")
        g = self._grads[nid]
        if g is None:
            return np.zeros(self._tape._nodes[nid].shape)
        return g


class Tape:
    """Append-only record of primitive operations for one backward pass."""

    def __init__(self):
        self._nodes: list[_Node] = []
        # leaves registered on first use; keyed by object identity, the
        # tensor itself is kept referenced so ids stay unique
        self._leaves: dict[int, tuple[Tensor, int]] = {}

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise UsageError("a tape is already active on this thread")
        _STATE.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _STATE.tape = None
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, parents: tuple, backward_fn, shape) -> int:
        self._nodes.append(_Node(parents, backward_fn, shape))
        return len(self._nodes) - 1

    def _lookup(self, t: Tensor) -> Optional[int]:
        if t.tape is self and t.node_id is not None:
            return t.node_id
        entry = self._leaves.get(id(t))
        return entry[1] if entry is not None else None

    def _node_for(self, t: Tensor) -> int:
        nid = self._lookup(t)
        if nid is None:
            nid = self._record((), None, t.data.shape)
            self._leaves[id(t)] = (t, nid)
        return nid

    def backward(self, root: Tensor) -> Gradients:
        """Accumulate d(root)/d(node) for every node; root must be a scalar on this tape."""
        if root.data.shape != ():
            raise UsageError(f"backward root must be scalar, got shape {root.data.shape}")
        rid = self._lookup(root)
        if rid is None:
            raise UsageError("backward root was not recorded on this tape")
        grads: list[Optional[np.ndarray]] = [None] * len(self._nodes)
        grads[rid] = np.ones(())
        for nid in range(rid, -1, -1):
            g = grads[nid]
            if g is None:
                continue
            node = self._nodes[nid]
            if node.backward_fn is None:
                continue
            for pid, pg in zip(node.parents, node.backward_fn(g)):
                if grads[pid] is None:
                    grads[pid] = pg
                else:
                    grads[pid] = grads[pid] + pg
        return Gradients(self, grads)


def _wrap(op: str, out: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = np.asarray(out, dtype=np.float64)
    if _CHECKED and not np.all(np.isfinite(out)):
        raise NumericError(f"{op}: non-finite result")
    tape = _active_tape()
    if tape is None:
        return Tensor._internal(out)
    parents = tuple(tape._node_for(t) for t in inputs)
    node_id = tape._record(parents, backward_fn, out.shape)
    return Tensor._internal(out, tape, node_id)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def constant(data) -> Tensor:
    """A tensor that is never given tape identity by the caller's convention."""
    return Tensor(data)


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("add", a.shape, b.shape)
    return _wrap("add", a.data + b.data, (a, b), lambda g: (g, g))


def subtract(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("subtract", a.shape, b.shape)
    return _wrap("subtract", a.data - b.data, (a, b), lambda g: (g, -g))


def multiply(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("multiply", a.shape, b.shape)
    ad, bd = a.data, b.data
    return _wrap("multiply", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data
    return _wrap("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0  # subgradient 0 at the kink
    return _wrap("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def exp(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _wrap("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    ad = a.data
    return _wrap("log", out, (a,), lambda g: (g / ad,))


def sqrt(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)
    # derivative at 0 defined as 0 (minimum-norm subgradient for norm composites)
    def backward(g):
        return (np.where(out > 0, g * 0.5 / np.where(out > 0, out, 1.0), 0.0),)

    return _wrap("sqrt", out, (a,), backward)


def absolute(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    sign = np.sign(a.data)  # sign(0) = 0
    return _wrap("absolute", np.abs(a.data), (a,), lambda g: (g * sign,))


def scale(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    if not (isinstance(c, numbers.Real) and np.isfinite(c)):
        raise UsageError(f"scale factor must be a finite number, got {c!r}")
    c = float(c)
    return _wrap("scale", a.data * c, (a,), lambda g: (g * c,))


def tensor_sum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    """Full sum to a scalar, or a 2-D axis sum keeping the reduced dim as 1."""
    a = _as_tensor(a)
    if axis is None:
        shape = a.shape
        return _wrap("sum", a.data.sum(), (a,), lambda g: (np.full(shape, float(g)),))
    if a.data.ndim != 2 or axis not in (0, 1):
        raise ShapeError(f"sum(axis={axis})", a.shape)
    out = a.data.sum(axis=axis, keepdims=True)
    reps = a.shape[axis]

    def backward(g):
        return (np.repeat(g, reps, axis=axis),)

    return _wrap("sum", out, (a,), backward)


def mean(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size
    if n == 0:
        raise ShapeError("mean", a.shape)
    shape = a.shape
    return _wrap("mean", a.data.mean(), (a,), lambda g: (np.full(shape, float(g) / n),))


def transpose(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError("transpose", a.shape)
    return _wrap("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def row_normalize(a: Tensor) -> Tensor:
    """Divide each row of a 2-D tensor by its Euclidean norm."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError("row_normalize", a.shape)
    norms = np.linalg.norm(a.data, axis=1, keepdims=True)
    zero = np.flatnonzero(norms.ravel() == 0.0)
    if zero.size:
        raise DegenerateInputError(f"row_normalize: zero-norm row at index {int(zero[0])}")
    out = a.data / norms

    def backward(g):
        dots = (g * out).sum(axis=1, keepdims=True)
        return ((g - dots * out) / norms,)

    return _wrap("row_normalize", out, (a,), backward)


def add_row(a: Tensor, row: Tensor) -> Tensor:
    """Add a (1, n) row tensor to every row of an (m, n) matrix."""
    a, row = _as_tensor(a), _as_tensor(row)
    if a.data.ndim != 2 or row.shape != (1, a.shape[1]):
        raise ShapeError("add_row", a.shape, row.shape)
    return _wrap(
        "add_row",
        a.data + row.data,
        (a, row),
        lambda g: (g, g.sum(axis=0, keepdims=True)),
    )


# ---------------------------------------------------------------------------
# verification oracle


def finite_diff_check(f, x: Tensor, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients of f at x.

    ``f`` must map one tensor to a scalar tensor and be deterministic. The
    relative error per coordinate is |g_a - g_n| / max(1, |g_n|).
    """
    with Tape() as tape:
        y = f(x)
        if y.data.shape != ():
            raise UsageError("finite_diff_check: f must return a scalar")
        analytic = tape.backward(y)[x]

    def probe(arr) -> float:
        v = f(Tensor(arr))
        val = v.item()
        if not np.isfinite(val):
            raise NumericError("finite_diff_check: non-finite value while probing")
        return val

    flat = x.data.ravel()
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += step
        up = probe(bumped.reshape(x.shape))
        bumped[i] -= 2 * step
        down = probe(bumped.reshape(x.shape))
        numeric[i] = (up - down) / (2 * step)
    numeric = numeric.reshape(x.shape)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(err.max()) if err.size else 0.0


def finite_diff_check_multi(f, xs: Sequence[Tensor], step: float = 1e-5) -> float:
    """Like finite_diff_check for a function of several tensors; returns the max error."""
    worst = 0.0
    for i, x in enumerate(xs):
        def fi(t, i=i):
            args = list(xs)
            args[i] = t
            return f(*args)

        worst = max(worst, finite_diff_check(fi, x, step=step))
    return worst
