"""Dense float64 matrices with a small reverse-mode gradient tape.

Every value is a 2-D array. A :class:`Matrix` either stands alone (a
constant) or is bound to a :class:`GradTape`, in which case the operations
below record a node holding the parents and their vector-Jacobian products.
``backward`` walks the nodes in reverse recording order.

    >>> tape = GradTape()
    >>> w = tape.watch(np.ones((2, 2)), "w")
    >>> grads = backward(sum_all(w), tape)
    >>> grads["w"]
    array([[1., 1.],
           [1., 1.]])
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DegenerateError, DeterminismError, ShapeError, TapeError

NORM_FLOOR = 1e-12


class GradTape:
    """Records operations for one backward pass. Rebuild it for every step."""

    def __init__(self):
        self.nodes: list[tuple[tuple[int, ...], tuple[Callable, ...]]] = []
        self.shapes: list[tuple[int, int]] = []
        self.param_ids: dict[str, int] = {}
        self.consumed = False

    def _push(self, shape, parents=(), vjps=()):
        if self.consumed:
            raise TapeError("tape already used for backward; record a new one")
        self.nodes.append((tuple(parents), tuple(vjps)))
        self.shapes.append(shape)
        return len(self.nodes) - 1

    def watch(self, value, param_id: str) -> "Matrix":
        """Register ``value`` as a trainable leaf named ``param_id``."""
        if param_id in self.param_ids:
            raise TapeError(f"parameter {param_id!r} already watched")
        arr = _as_2d(value)
        node = self._push(arr.shape)
        self.param_ids[param_id] = node
        return Matrix(arr, self, node)


class Matrix:
    """A 2-D float64 array, optionally linked into a :class:`GradTape`."""

    __slots__ = ("value", "tape", "node")
    __array_priority__ = 100

    def __init__(self, value, tape: GradTape | None = None, node: int | None = None):
        self.value = _as_2d(value)
        self.tape = tape
        self.node = node

    @property
    def shape(self):
        return self.value.shape

    @property
    def rows(self):
        return self.value.shape[0]

    @property
    def cols(self):
        return self.value.shape[1]

    @property
    def traced(self):
        return self.tape is not None

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 matrix, got {self.shape}")
        return float(self.value[0, 0])

    def detach(self) -> "Matrix":
        return Matrix(self.value)

    def __repr__(self):
        tag = f", node={self.node}" if self.traced else ""
        return f"Matrix({self.value!r}{tag})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self):
        return transpose(self)


def _as_2d(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got {arr.ndim}")
    return arr


def as_matrix(x) -> Matrix:
    return x if isinstance(x, Matrix) else Matrix(x)


def _record(value: np.ndarray, inputs, vjps) -> Matrix:
    """Attach ``value`` to the tape shared by the traced ``inputs``."""
    tape = None
    parents, fns = [], []
    for inp, fn in zip(inputs, vjps):
        if not inp.traced:
            continue
        if tape is None:
            tape = inp.tape
        elif inp.tape is not tape:
            raise TapeError("operands belong to different tapes")
        parents.append(inp.node)
        fns.append(fn)
    if tape is None:
        return Matrix(value)
    return Matrix(value, tape, tape._push(value.shape, parents, fns))


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape[0] == 1 and grad.shape[0] != 1:
        grad = grad.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] != 1:
        grad = grad.sum(axis=1, keepdims=True)
    return grad


def _check_broadcast(a: Matrix, b: Matrix, op: str):
    for axis in (0, 1):
        if a.shape[axis] != b.shape[axis] and 1 not in (a.shape[axis], b.shape[axis]):
            raise ShapeError(f"{op}: cannot broadcast a{a.shape} with b{b.shape}")


def matmul(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    if a.cols != b.rows:
        raise ShapeError(
            f"matmul: inner dimensions differ, a is {a.rows}x{a.cols}, b is {b.rows}x{b.cols}"
        )
    av, bv = a.value, b.value
    return _record(av @ bv, (a, b), (lambda g: g @ bv.T, lambda g: av.T @ g))


def add(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _record(
        a.value + b.value,
        (a, b),
        (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(g, sb)),
    )


def sub(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _record(
        a.value - b.value,
        (a, b),
        (lambda g: _unbroadcast(g, sa), lambda g: -_unbroadcast(g, sb)),
    )


def mul(a, b) -> Matrix:
    """Elementwise product with row/column broadcasting."""
    a, b = as_matrix(a), as_matrix(b)
    _check_broadcast(a, b, "mul")
    av, bv = a.value, b.value
    return _record(
        av * bv,
        (a, b),
        (lambda g: _unbroadcast(g * bv, av.shape), lambda g: _unbroadcast(g * av, bv.shape)),
    )


def scale(a, c: float) -> Matrix:
    a = as_matrix(a)
    return _record(a.value * c, (a,), (lambda g: g * c,))


def transpose(a) -> Matrix:
    a = as_matrix(a)
    return _record(a.value.T.copy(), (a,), (lambda g: g.T,))


def relu(a) -> Matrix:
    a = as_matrix(a)
    mask = a.value > 0
    return _record(np.where(mask, a.value, 0.0), (a,), (lambda g: g * mask,))


def absolute(a) -> Matrix:
    a = as_matrix(a)
    sign = np.sign(a.value)
    return _record(np.abs(a.value), (a,), (lambda g: g * sign,))


def sum_all(a) -> Matrix:
    a = as_matrix(a)
    shape = a.shape
    return _record(
        np.array([[a.value.sum()]]), (a,), (lambda g: np.full(shape, g[0, 0]),)
    )


def mean_all(a) -> Matrix:
    a = as_matrix(a)
    return scale(sum_all(a), 1.0 / a.value.size)


def softmax_rows(x) -> Matrix:
    x = as_matrix(x)
    y = _softmax(x.value)
    return _record(
        y, (x,), (lambda g: y * (g - (g * y).sum(axis=1, keepdims=True)),)
    )


def log_softmax_rows(x) -> Matrix:
    x = as_matrix(x)
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)
    return _record(
        out, (x,), (lambda g: g - probs * g.sum(axis=1, keepdims=True),)
    )


def l2_normalize_rows(x) -> Matrix:
    """Scale each row to unit Euclidean norm; rows at or below NORM_FLOOR raise."""
    x = as_matrix(x)
    norms = np.sqrt((x.value * x.value).sum(axis=1, keepdims=True))
    bad = np.flatnonzero(norms[:, 0] <= NORM_FLOOR)
    if bad.size:
        raise DegenerateError(
            f"row {bad[0]} has norm {norms[bad[0], 0]:.3g} <= {NORM_FLOOR}", index=int(bad[0])
        )
    y = x.value / norms
    return _record(
        y, (x,), (lambda g: (g - y * (g * y).sum(axis=1, keepdims=True)) / norms,)
    )


def _softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax(v) -> np.ndarray:
    """Row softmax on a plain array, no tape involvement."""
    return _softmax(_as_2d(v))


def cosine_distance(u, v) -> float:
    """1 - cos(u, v), in [0, 2]."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"cosine_distance: lengths {u.size} and {v.size} differ")
    nu, nv = np.sqrt(u @ u), np.sqrt(v @ v)
    if nu <= NORM_FLOOR or nv <= NORM_FLOOR:
        raise DegenerateError("cosine_distance: zero-norm vector", index=0 if nu <= NORM_FLOOR else 1)
    return float(min(max(1.0 - (u @ v) / (nu * nv), 0.0), 2.0))


def cosine_distance_matrix(a, b) -> np.ndarray:
    """Pairwise cosine distances between rows of ``a`` (n x D) and ``b`` (m x D)."""
    a, b = _as_2d(a), _as_2d(b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"cosine_distance_matrix: widths {a.shape[1]} and {b.shape[1]} differ")
    na = np.sqrt((a * a).sum(axis=1))
    nb = np.sqrt((b * b).sum(axis=1))
    for name, norms in (("a", na), ("b", nb)):
        bad = np.flatnonzero(norms <= NORM_FLOOR)
        if bad.size:
            raise DegenerateError(f"row {bad[0]} of {name} has zero norm", index=int(bad[0]))
    return np.clip(1.0 - (a / na[:, None]) @ (b / nb[:, None]).T, 0.0, 2.0)


def backward(loss: Matrix, tape: GradTape) -> dict[str, np.ndarray]:
    """Gradients of a 1x1 ``loss`` for every leaf watched on ``tape``.

    Leaves not reachable from ``loss`` get exact zeros. A tape can be
    differentiated once.
    """
    if tape.consumed:
        raise TapeError("tape already used for backward; record a new one")
    if loss.tape is not tape:
        raise TapeError("loss is not recorded on this tape")
    if loss.shape != (1, 1):
        raise TapeError(f"loss must be 1x1, got {loss.shape}")
    tape.consumed = True

    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    grads[loss.node] = np.ones((1, 1))
    for idx in range(loss.node, -1, -1):
        g = grads[idx]
        if g is None:
            continue
        parents, fns = tape.nodes[idx]
        for p, fn in zip(parents, fns):
            contrib = fn(g)
            grads[p] = contrib if grads[p] is None else grads[p] + contrib
    return {
        name: grads[node] if grads[node] is not None else np.zeros(tape.shapes[node])
        for name, node in tape.param_ids.items()
    }


def value_and_grad(f, params: dict[str, np.ndarray]):
    """Evaluate ``f(leaves) -> Matrix`` on a fresh tape; return (value, grads)."""
    tape = GradTape()
    leaves = {k: tape.watch(v, k) for k, v in params.items()}
    out = f(leaves)
    if out.tape is None:
        # f ignored its parameters
        return out.item(), {k: np.zeros_like(v.value) for k, v in leaves.items()}
    return out.item(), backward(out, tape)


def finite_diff_check(f, params: dict[str, np.ndarray], step: float = 1e-5) -> float:
    """Max relative error between the tape gradient and central differences.

    ``f`` maps a dict of Matrix leaves (same keys as ``params``) to a 1x1
    Matrix and must be deterministic. The relative error of a coordinate is
    ``|a - n| / max(|a|, |n|, 1e-6)``; constant functions give 0.
    """
    params = {k: _as_2d(v).copy() for k, v in params.items()}

    def evaluate(ps):
        return f({k: Matrix(v) for k, v in ps.items()}).item()

    base = evaluate(params)
    if evaluate(params) != base:
        raise DeterminismError("function returned different values for identical parameters")
    _, analytic = value_and_grad(f, params)

    worst = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        agrad = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = evaluate(params)
            flat[i] = orig - step
            down = evaluate(params)
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            denom = max(abs(agrad[i]), abs(numeric), 1e-6)
            worst = max(worst, abs(agrad[i] - numeric) / denom)
    return worst
