"""Reverse-mode automatic differentiation over scalars and dense vectors.

Every operation records its inputs and a vector-Jacobian closure on an
implicit tape; `backward` walks the recorded graph once, in reverse order
of node creation, and returns the adjoints of all trainable leaves.
Payloads are float64 numpy arrays: 0-d (scalar), 1-d (vector) or, for
weight matrices consumed by `matvec`, 2-d. Broadcasting is restricted to
scalar-with-vector.

Evaluation order is fixed (descending node id), so repeated forward and
backward passes over the same graph are bit-identical.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit


class DomainError(ValueError):
    """Input outside a primitive's mathematical domain."""


class ShapeError(ValueError):
    """Operand shapes do not conform."""


_next_id = itertools.count()


class Value:
    """One node of the tape: a payload plus how it was produced.

    Leaves are created with `lift`; every primitive returns a new interior
    node whose `_vjp` maps the node's adjoint to per-parent contributions.
    """

    __slots__ = ("id", "payload", "op_tag", "trainable", "needs_grad", "_parents", "_vjp")

    def __init__(self, payload, parents=(), vjp=None, op_tag="const", trainable=False):
        self.id = next(_next_id)
        self.payload = payload
        self.op_tag = op_tag
        self.trainable = trainable
        self._parents = parents
        self._vjp = vjp
        self.needs_grad = trainable or any(p.needs_grad for p in parents)

    @property
    def is_leaf(self) -> bool:
        return self._vjp is None

    def __repr__(self):
        return f"Value(op={self.op_tag}, shape={self.payload.shape}, id={self.id})"

    # arithmetic operators; plain numbers are lifted to constant leaves

    def __add__(self, other):
        return add(self, _as_value(other))

    def __radd__(self, other):
        return add(_as_value(other), self)

    def __sub__(self, other):
        return sub(self, _as_value(other))

    def __rsub__(self, other):
        return sub(_as_value(other), self)

    def __mul__(self, other):
        return mul(self, _as_value(other))

    def __rmul__(self, other):
        return mul(_as_value(other), self)

    def __truediv__(self, other):
        return div(self, _as_value(other))

    def __rtruediv__(self, other):
        return div(_as_value(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    # elementwise / reduction methods

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def abs(self):
        return absolute(self)

    def relu(self):
        return relu(self)

    def clamp_min(self, lo):
        return clamp_min(self, lo)

    def sum(self):
        return vsum(self)

    def mean(self):
        return vmean(self)

    def gather(self, indices):
        return gather(self, indices)


def lift(x, trainable: bool = False) -> Value:
    """Wrap a finite scalar/vector/matrix as a leaf node."""
    payload = np.asarray(x, dtype=np.float64)
    if payload.ndim > 2:
        raise ShapeError(f"payloads are at most 2-d, got shape {payload.shape}")
    if not np.all(np.isfinite(payload)):
        raise DomainError("non-finite input rejected")
    return Value(payload, op_tag="param" if trainable else "const", trainable=trainable)


def _as_value(x) -> Value:
    return x if isinstance(x, Value) else lift(x)


def _broadcast_shape(a: Value, b: Value, op: str):
    sa, sb = a.payload.shape, b.payload.shape
    if sa == sb or a.payload.ndim == 0 or b.payload.ndim == 0:
        return
    raise ShapeError(f"{op}: shapes {sa} and {sb} do not conform")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if np.shape(g) != shape and shape == ():
        return np.sum(g)
    return g


def _require_vector(v: Value, op: str) -> None:
    if v.payload.ndim != 1:
        raise ShapeError(f"{op} expects a vector, got shape {v.payload.shape}")


# binary elementwise primitives


def add(a: Value, b: Value) -> Value:
    _broadcast_shape(a, b, "add")
    sa, sb = a.payload.shape, b.payload.shape
    return Value(a.payload + b.payload, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a: Value, b: Value) -> Value:
    _broadcast_shape(a, b, "sub")
    sa, sb = a.payload.shape, b.payload.shape
    return Value(a.payload - b.payload, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a: Value, b: Value) -> Value:
    _broadcast_shape(a, b, "mul")
    pa, pb = a.payload, b.payload
    return Value(pa * pb, (a, b),
                 lambda g: (_unbroadcast(g * pb, pa.shape), _unbroadcast(g * pa, pb.shape)), "mul")


def div(a: Value, b: Value) -> Value:
    _broadcast_shape(a, b, "div")
    pa, pb = a.payload, b.payload
    if np.any(pb == 0.0):
        raise DomainError("div: zero denominator")
    return Value(pa / pb, (a, b),
                 lambda g: (_unbroadcast(g / pb, pa.shape),
                            _unbroadcast(-g * pa / (pb * pb), pb.shape)), "div")


# unary elementwise primitives


def neg(a: Value) -> Value:
    return Value(-a.payload, (a,), lambda g: (-g,), "neg")


def exp(a: Value) -> Value:
    out = np.exp(a.payload)
    return Value(out, (a,), lambda g: (g * out,), "exp")


def log(a: Value) -> Value:
    if np.any(a.payload <= 0.0):
        raise DomainError("log: argument must be positive")
    pa = a.payload
    return Value(np.log(pa), (a,), lambda g: (g / pa,), "log")


def tanh(a: Value) -> Value:
    out = np.tanh(a.payload)
    return Value(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a: Value) -> Value:
    # expit evaluates 1/(1+exp(-x)) branch-by-sign, so large |x| never overflows
    out = expit(a.payload)
    return Value(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def absolute(a: Value) -> Value:
    pa = a.payload
    # subgradient 0 at 0 via np.sign
    return Value(np.abs(pa), (a,), lambda g: (g * np.sign(pa),), "abs")


def relu(a: Value) -> Value:
    pa = a.payload
    return Value(np.maximum(pa, 0.0), (a,), lambda g: (g * (pa > 0.0),), "relu")


def power(a: Value, exponent: float) -> Value:
    exponent = float(exponent)
    pa = a.payload
    if exponent != int(exponent) and np.any(pa < 0.0):
        raise DomainError("pow: negative base with non-integer exponent")
    if exponent < 0 and np.any(pa == 0.0):
        raise DomainError("pow: zero base with negative exponent")
    return Value(pa ** exponent, (a,),
                 lambda g: (g * exponent * pa ** (exponent - 1.0),), "pow")


def clamp_min(a: Value, lo: float) -> Value:
    lo = float(lo)
    pa = a.payload
    # gradient is blocked on the clamped side
    return Value(np.maximum(pa, lo), (a,), lambda g: (g * (pa > lo),), "clamp_min")


# vector primitives


def vsum(a: Value) -> Value:
    _require_vector(a, "sum")
    n = a.payload.shape[0]
    return Value(np.sum(a.payload), (a,), lambda g: (g * np.ones(n),), "sum")


def vmean(a: Value) -> Value:
    _require_vector(a, "mean")
    n = a.payload.shape[0]
    if n == 0:
        raise ShapeError("mean of an empty vector")
    return Value(np.mean(a.payload), (a,), lambda g: (np.full(n, g / n),), "mean")


def dot(a: Value, b: Value) -> Value:
    _require_vector(a, "dot")
    _require_vector(b, "dot")
    pa, pb = a.payload, b.payload
    if pa.shape != pb.shape:
        raise ShapeError(f"dot: lengths {pa.shape[0]} and {pb.shape[0]} differ")
    return Value(pa @ pb, (a, b), lambda g: (g * pb, g * pa), "dot")


def matvec(m: Value, v: Value) -> Value:
    if m.payload.ndim != 2:
        raise ShapeError(f"matvec expects a matrix, got shape {m.payload.shape}")
    _require_vector(v, "matvec")
    pm, pv = m.payload, v.payload
    if pm.shape[1] != pv.shape[0]:
        raise ShapeError(f"matvec: {pm.shape} @ {pv.shape} does not conform")
    return Value(pm @ pv, (m, v), lambda g: (np.outer(g, pv), pm.T @ g), "matvec")


def stack(values: Sequence[Value]) -> Value:
    """Join scalar nodes into one vector node."""
    values = tuple(values)
    if not values:
        raise ShapeError("stack of no values")
    for v in values:
        if v.payload.ndim != 0:
            raise ShapeError("stack expects scalar values")
    out = np.array([v.payload for v in values])
    return Value(out, values, lambda g: tuple(g[i] for i in range(len(values))), "stack")


def gather(a: Value, indices) -> Value:
    _require_vector(a, "gather")
    idx = np.asarray(indices, dtype=np.intp)
    n = a.payload.shape[0]

    def vjp(g):
        z = np.zeros(n)
        np.add.at(z, idx, g)
        return (z,)

    return Value(a.payload[idx], (a,), vjp, "gather")


def segment_sum(a: Value, segment_ids, num_segments: int) -> Value:
    """Sum vector entries into `num_segments` buckets given per-entry bucket ids."""
    _require_vector(a, "segment_sum")
    seg = np.asarray(segment_ids, dtype=np.intp)
    if seg.shape != a.payload.shape:
        raise ShapeError("segment_sum: one segment id per entry required")
    out = np.zeros(num_segments)
    np.add.at(out, seg, a.payload)
    return Value(out, (a,), lambda g: (g[seg],), "segment_sum")


class GradientMap:
    """Adjoints of the trainable leaves from one backward pass. Immutable."""

    def __init__(self, entries: dict):
        self._entries = entries

    def wrt(self, leaf: Value) -> np.ndarray:
        if not leaf.is_leaf:
            raise ValueError("adjoints are recorded for leaf nodes only")
        if not leaf.trainable:
            raise ValueError("adjoints are recorded for trainable leaves only")
        found = self._entries.get(leaf.id)
        if found is None:
            # trainable leaf not reachable from the output
            return np.zeros_like(leaf.payload)
        return found

    def __len__(self):
        return len(self._entries)


def backward(output: Value) -> GradientMap:
    """Reverse accumulation from a scalar output to every trainable leaf."""
    if output.payload.ndim != 0:
        raise ShapeError("backward requires a scalar output")

    # Iterative DFS; every collected node is an ancestor of the output, so
    # sorting by descending creation id yields a reverse topological order.
    nodes: dict[int, Value] = {}
    stack_ = [output]
    while stack_:
        node = stack_.pop()
        if node.id in nodes or not node.needs_grad:
            continue
        nodes[node.id] = node
        stack_.extend(node._parents)

    adjoints: dict[int, np.ndarray] = {output.id: np.float64(1.0)}
    leaf_grads: dict[int, np.ndarray] = {}
    for node_id in sorted(nodes, reverse=True):
        node = nodes[node_id]
        g = adjoints.pop(node_id, None)
        if g is None:
            continue
        if node._vjp is None:
            if node.trainable:
                leaf_grads[node_id] = np.asarray(g)
            continue
        for parent, contribution in zip(node._parents, node._vjp(g)):
            if not parent.needs_grad:
                continue
            held = adjoints.get(parent.id)
            adjoints[parent.id] = contribution if held is None else held + contribution
    return GradientMap(leaf_grads)


def grad_check(f: Callable[[Value], Value], point, step: float = 1e-6) -> float:
    """Largest relative disagreement between the tape gradient of `f` and
    central finite differences, over the coordinates of `point`.

    Relative error per coordinate is |analytic - numeric| / max(1, |analytic|).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    point = np.asarray(point, dtype=np.float64)
    leaf = lift(point, trainable=True)
    out = f(leaf)
    if out.payload.ndim != 0:
        raise ShapeError("grad_check requires a scalar-valued function")
    analytic = np.asarray(backward(out).wrt(leaf), dtype=np.float64)

    worst = 0.0
    for idx in np.ndindex(point.shape):
        plus = point.copy()
        minus = point.copy()
        plus[idx] += step
        minus[idx] -= step
        numeric = (f(lift(plus)).payload - f(lift(minus)).payload) / (2.0 * step)
        err = abs(float(analytic[idx]) - float(numeric)) / max(1.0, abs(float(analytic[idx])))
        worst = max(worst, err)
    return worst
