"""Minimal automatic differentiation for scalar/vector expressions.

Two layers:

* ``Tape``/``Node``: reverse-mode AD over numpy float64 arrays (at most 2-D).
  Nodes are appended in evaluation order, so a single reversed sweep over the
  tape is a valid reverse-topological visit.
* ``Dual``: a forward-mode pair (value, d/dtau) whose *both* components are
  tape nodes. Because the tau-derivative is itself part of the recorded graph,
  reverse mode through it yields parameter gradients of the tau-derivative
  (forward-over-reverse), which is exactly what log-density training needs.

All math is double precision. Domain errors (log of a nonpositive value,
overflowing exp, division by zero) raise ``EvaluationError`` instead of
propagating NaN/inf silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "EvaluationError",
    "DualScalar",
    "Node",
    "Tape",
    "Dual",
    "ParamVector",
    "tanh",
    "sigmoid",
    "softplus",
    "relu",
    "absval",
    "exp",
    "log",
    "matmul",
    "transpose",
    "concat_rows",
    "asum",
    "maximum",
    "forward_dual",
    "grad",
    "grad_of_tau_derivative",
]


class EvaluationError(RuntimeError):
    """A recorded expression hit a numeric domain failure."""


@dataclass(frozen=True)
class DualScalar:
    """Value of a scalar expression together with its d/dtau."""

    value: float
    tau_derivative: float


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum an adjoint back down to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return np.asarray(g).reshape(shape)


class Node:
    """One recorded value in the computation graph."""

    __slots__ = ("tape", "idx", "value", "parents", "vjp", "fwd")

    def __init__(self, tape, idx, value, parents, vjp, fwd):
        self.tape = tape
        self.idx = idx
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.fwd = fwd

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(idx={self.idx}, shape={self.value.shape})"

    # arithmetic; non-Node operands become constants on the same tape
    def __add__(self, other):
        return _add(self, _wrap(self.tape, other))

    __radd__ = __add__

    def __sub__(self, other):
        return _add(self, _neg(_wrap(self.tape, other)))

    def __rsub__(self, other):
        return _add(_wrap(self.tape, other), _neg(self))

    def __neg__(self):
        return _neg(self)

    def __mul__(self, other):
        return _mul(self, _wrap(self.tape, other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _div(self, _wrap(self.tape, other))

    def __rtruediv__(self, other):
        return _div(_wrap(self.tape, other), self)

    def __matmul__(self, other):
        return matmul(self, _wrap(self.tape, other))


class Tape:
    """Append-only record of operations; single-writer, never shared mutably."""

    def __init__(self):
        self.nodes: list[Node] = []

    def _append(self, value, parents, vjp, fwd) -> Node:
        value = np.asarray(value, dtype=np.float64)
        node = Node(self, len(self.nodes), value, parents, vjp, fwd)
        self.nodes.append(node)
        return node

    def constant(self, value) -> Node:
        return self._append(value, (), None, None)

    # a leaf is a constant we intend to differentiate with respect to
    leaf = constant

    def bind(self, params: "ParamVector") -> dict[str, Node]:
        """One leaf per named parameter segment."""
        return {name: self.leaf(params.view(name)) for name in params.names()}

    def dual_seed(self, tau) -> "Dual":
        """The tau input: value tau, d/dtau identically 1."""
        val = self.leaf(tau)
        dot = self.constant(np.ones_like(val.value))
        return Dual(val, dot)

    def replay(self) -> list[np.ndarray]:
        """Recompute every node from its parents, in recorded order.

        Returns the recomputed values; bit-identical to the recorded ones.
        """
        values = []
        for node in self.nodes:
            if node.fwd is None:
                values.append(node.value)
            else:
                values.append(node.fwd(*(values[p.idx] for p in node.parents)))
        return values

    def gradient(self, root: Node, wrt: Sequence[Node], seed=1.0) -> list[np.ndarray]:
        """Adjoints of ``root`` with respect to the given leaves.

        Visits tape positions in reverse order exactly once; leaves that do
        not influence ``root`` get an exact zero.
        """
        if not np.all(np.isfinite(root.value)):
            raise EvaluationError("gradient of a non-finite value")
        adjoints: list = [None] * (root.idx + 1)
        adjoints[root.idx] = np.broadcast_to(
            np.asarray(seed, dtype=np.float64), root.value.shape
        ).copy()
        for node in reversed(self.nodes[: root.idx + 1]):
            g = adjoints[node.idx]
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                acc = adjoints[parent.idx]
                adjoints[parent.idx] = pg if acc is None else acc + pg
        out = []
        for w in wrt:
            a = adjoints[w.idx] if w.idx <= root.idx else None
            out.append(np.zeros_like(w.value) if a is None else np.asarray(a))
        return out

    def grad_params(self, root: Node, params: "ParamVector",
                    bindings: Mapping[str, Node], seed=1.0) -> "ParamVector":
        """Gradient of ``root`` packed into a ParamVector aligned with ``params``."""
        grads = self.gradient(root, [bindings[n] for n in params.names()], seed)
        out = params.zeros_like()
        for name, g in zip(params.names(), grads):
            out.view(name)[...] = g
        return out


def _wrap(tape: Tape, x) -> Node:
    return x if isinstance(x, Node) else tape.constant(x)


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------

def _add(a: Node, b: Node) -> Node:
    va, vb = a.value, b.value

    def vjp(g):
        return _unbroadcast(g, va.shape), _unbroadcast(g, vb.shape)

    return a.tape._append(va + vb, (a, b), vjp, lambda x, y: x + y)


def _neg(a: Node) -> Node:
    return a.tape._append(-a.value, (a,), lambda g: (-g,), lambda x: -x)


def _mul(a: Node, b: Node) -> Node:
    va, vb = a.value, b.value

    def vjp(g):
        return _unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape)

    return a.tape._append(va * vb, (a, b), vjp, lambda x, y: x * y)


def _div(a: Node, b: Node) -> Node:
    va, vb = a.value, b.value
    if np.any(vb == 0.0):
        raise EvaluationError("division by zero")
    out = va / vb

    def vjp(g):
        return (
            _unbroadcast(g / vb, va.shape),
            _unbroadcast(-g * va / (vb * vb), vb.shape),
        )

    return a.tape._append(out, (a, b), vjp, lambda x, y: x / y)


def matmul(a: Node, b: Node) -> Node:
    va, vb = a.value, b.value
    if va.ndim != 2 or vb.ndim != 2:
        raise ValueError("matmul is defined for 2-D operands only")

    def vjp(g):
        return g @ vb.T, va.T @ g

    return a.tape._append(va @ vb, (a, b), vjp, lambda x, y: x @ y)


def transpose(a: Node) -> Node:
    return a.tape._append(a.value.T, (a,), lambda g: (g.T,), lambda x: x.T)


def tanh(x):
    if isinstance(x, Dual):
        t = tanh(x.val)
        dot = None if x.dot is None else (1.0 - t * t) * x.dot
        return Dual(t, dot)
    t = np.tanh(x.value)
    return x.tape._append(t, (x,), lambda g: (g * (1.0 - t * t),), np.tanh)


def _sigmoid_np(v):
    return 0.5 * (np.tanh(0.5 * v) + 1.0)


def sigmoid(x):
    if isinstance(x, Dual):
        s = sigmoid(x.val)
        dot = None if x.dot is None else s * (1.0 - s) * x.dot
        return Dual(s, dot)
    s = _sigmoid_np(x.value)
    return x.tape._append(s, (x,), lambda g: (g * s * (1.0 - s),), _sigmoid_np)


def _softplus_np(v):
    return np.logaddexp(0.0, v)


def softplus(x):
    if isinstance(x, Dual):
        sp = softplus(x.val)
        dot = None if x.dot is None else sigmoid(x.val) * x.dot
        return Dual(sp, dot)
    v = x.value
    return x.tape._append(
        _softplus_np(v), (x,), lambda g: (g * _sigmoid_np(v),), _softplus_np
    )


def relu(x):
    """max{., 0}; subgradient at 0 is 0."""
    if isinstance(x, Dual):
        r = relu(x.val)
        mask = x.val.tape.constant((x.val.value > 0).astype(np.float64))
        dot = None if x.dot is None else mask * x.dot
        return Dual(r, dot)
    v = x.value
    mask = (v > 0).astype(np.float64)
    return x.tape._append(
        np.maximum(v, 0.0), (x,), lambda g: (g * mask,), lambda y: np.maximum(y, 0.0)
    )


def absval(x: Node) -> Node:
    """|x|; subgradient at 0 is 0."""
    v = x.value
    s = np.sign(v)
    return x.tape._append(np.abs(v), (x,), lambda g: (g * s,), np.abs)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.val)
        dot = None if x.dot is None else e * x.dot
        return Dual(e, dot)
    with np.errstate(over="ignore"):
        e = np.exp(x.value)
    if not np.all(np.isfinite(e)):
        raise EvaluationError("exp overflow")
    return x.tape._append(e, (x,), lambda g: (g * e,), np.exp)


def log(x):
    if isinstance(x, Dual):
        l = log(x.val)
        dot = None if x.dot is None else x.dot / x.val
        return Dual(l, dot)
    v = x.value
    if np.any(v <= 0.0):
        raise EvaluationError("log of a nonpositive value")
    return x.tape._append(np.log(v), (x,), lambda g: (g / v,), np.log)


def maximum(x: Node, floor: float) -> Node:
    """max{x, floor}; gradient passes only where x > floor."""
    v = x.value
    mask = (v > floor).astype(np.float64)
    return x.tape._append(
        np.maximum(v, floor), (x,), lambda g: (g * mask,),
        lambda y: np.maximum(y, floor),
    )


def asum(x: Node, axis=None) -> Node:
    v = x.value

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, v.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), v.shape).copy(),)

    return x.tape._append(
        v.sum(axis=axis), (x,), vjp, lambda y: y.sum(axis=axis)
    )


def concat_rows(parts: Sequence[Node]) -> Node:
    """Stack 2-D nodes along axis 0."""
    offsets = np.cumsum([0] + [p.value.shape[0] for p in parts])

    def vjp(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return parts[0].tape._append(
        np.concatenate([p.value for p in parts], axis=0),
        tuple(parts), vjp, lambda *vs: np.concatenate(vs, axis=0),
    )


# ---------------------------------------------------------------------------
# forward-mode pair carried through the tape
# ---------------------------------------------------------------------------

class Dual:
    """(value, d/dtau) pair; ``dot is None`` means a structural zero."""

    __slots__ = ("val", "dot")

    def __init__(self, val: Node, dot):
        self.val = val
        self.dot = dot

    def dot_node(self) -> Node:
        """The tau-derivative as a graph node (zeros if structurally zero)."""
        if self.dot is None:
            return self.val.tape.constant(np.zeros_like(self.val.value))
        return self.dot

    @staticmethod
    def lift(x) -> "Dual":
        return x if isinstance(x, Dual) else Dual(x, None)

    def __add__(self, other):
        if isinstance(other, Dual):
            if self.dot is None:
                dot = other.dot
            elif other.dot is None:
                dot = self.dot
            else:
                dot = self.dot + other.dot
            return Dual(self.val + other.val, dot)
        return Dual(self.val + other, self.dot)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Dual):
            if self.dot is None and other.dot is None:
                dot = None
            elif self.dot is None:
                dot = self.val * other.dot
            elif other.dot is None:
                dot = self.dot * other.val
            else:
                dot = self.dot * other.val + self.val * other.dot
            return Dual(self.val * other.val, dot)
        return Dual(self.val * other, None if self.dot is None else self.dot * other)

    __rmul__ = __mul__

    def __matmul__(self, w):
        if isinstance(w, Dual):
            raise TypeError("matmul by a tau-dependent matrix is not supported")
        return Dual(
            matmul(self.val, w),
            None if self.dot is None else matmul(self.dot, w),
        )


# ---------------------------------------------------------------------------
# named, flat parameter storage
# ---------------------------------------------------------------------------

class ParamVector:
    """Flat float64 parameter array with named segment views.

    Segments partition the flat array: sequential offsets, no overlap, no gap.
    """

    def __init__(self, data: np.ndarray, segments: dict[str, tuple[int, tuple]]):
        self.data = np.asarray(data, dtype=np.float64)
        self._segments = dict(segments)
        total = sum(int(np.prod(shape)) for _, shape in segments.values())
        if total != self.data.size:
            raise ValueError(
                f"segments cover {total} entries, data has {self.data.size}"
            )

    @classmethod
    def from_specs(cls, specs: Iterable[tuple[str, tuple]]) -> "ParamVector":
        """Zero-initialized vector from (name, shape) pairs."""
        segments = {}
        offset = 0
        for name, shape in specs:
            if name in segments:
                raise ValueError(f"duplicate segment {name!r}")
            segments[name] = (offset, tuple(shape))
            offset += int(np.prod(shape))
        return cls(np.zeros(offset), segments)

    @classmethod
    def from_dict(cls, arrays: Mapping[str, np.ndarray]) -> "ParamVector":
        pv = cls.from_specs((n, np.asarray(a).shape) for n, a in arrays.items())
        for n, a in arrays.items():
            pv.view(n)[...] = a
        return pv

    def names(self):
        return list(self._segments)

    def segments(self):
        return dict(self._segments)

    def view(self, name: str) -> np.ndarray:
        offset, shape = self._segments[name]
        return self.data[offset:offset + int(np.prod(shape))].reshape(shape)

    def copy(self) -> "ParamVector":
        return ParamVector(self.data.copy(), self._segments)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.data), self._segments)

    def __len__(self):
        return self.data.size

    def __repr__(self):
        return f"ParamVector({', '.join(self._segments)}; n={self.data.size})"


# ---------------------------------------------------------------------------
# recorded-expression entry points
# ---------------------------------------------------------------------------

def _as_scalar(node: Node) -> float:
    if node.value.size != 1:
        raise ValueError("expression is not scalar-valued")
    return float(node.value.reshape(()))


def forward_dual(expr: Callable, tau: float, params: ParamVector) -> DualScalar:
    """Evaluate ``expr(tau_dual, bindings) -> Dual`` and its d/dtau at once."""
    tape = Tape()
    out = expr(tape.dual_seed(float(tau)), tape.bind(params))
    out = Dual.lift(out)
    value = _as_scalar(out.val)
    if not math.isfinite(value):
        raise EvaluationError("forward value is not finite")
    dot = 0.0 if out.dot is None else _as_scalar(out.dot)
    return DualScalar(value, dot)


def grad(expr: Callable, params: ParamVector) -> ParamVector:
    """Parameter gradient of the scalar ``expr(bindings) -> Node``."""
    tape = Tape()
    bindings = tape.bind(params)
    out = expr(bindings)
    _as_scalar(out)
    return tape.grad_params(out, params, bindings)


def grad_of_tau_derivative(expr: Callable, tau: float,
                           params: ParamVector) -> ParamVector:
    """Parameter gradient of d(expr)/dtau for ``expr(tau_dual, bindings) -> Dual``.

    Reverse mode applied to the recorded forward-dual computation.
    """
    tape = Tape()
    bindings = tape.bind(params)
    out = Dual.lift(expr(tape.dual_seed(float(tau)), bindings))
    if out.dot is None:
        return params.zeros_like()
    _as_scalar(out.dot)
    return tape.grad_params(out.dot, params, bindings)
