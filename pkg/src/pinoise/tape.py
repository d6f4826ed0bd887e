"""Tape-recorded reverse-mode gradients over a closed set of primitives.

This is not a general autodiff system. It covers exactly the operations the
training objective is built from: affine maps, the outer-product softmax
attention read, softplus, sigmoid, elementwise product/sum, and binary cross
entropy on a logit. Every value is float64.

Usage:

    tape = Tape()
    w = tape.param(np.zeros(4), "w")
    x = tape.input(np.ones(4))
    loss = bce_with_logit(dot(w, x), 1)
    table = backward(tape, loss)
    table[w]          # gradient array, same shape as w
    table.by_name["w"]

A tape is single use: `backward` consumes it. Gradients of intermediate
nodes stay readable from the returned table, which the identity checks rely
on.
"""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from . import functional as F


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class TapeUsageError(RuntimeError):
    """Tape reused after backward, or backward called on a non-scalar."""


class Node:
    __slots__ = ("tape", "value", "name", "track", "_parents", "_index")

    def __init__(self, tape: "Tape", value: np.ndarray, parents, name: str | None, track: bool):
        self.tape = tape
        self.value = value
        self.name = name
        self.track = track
        self._parents = parents
        self._index = len(tape._nodes)
        tape._nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, _lift(self.tape, other))

    def __radd__(self, other):
        return add(_lift(self.tape, other), self)

    def __mul__(self, other):
        if isinstance(other, Node):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        other = _lift(self.tape, other)
        return add(self, scale(other, -1.0))


class Tape:
    """Append-only record of primitive applications, in topological order."""

    def __init__(self):
        self._nodes: list[Node] = []
        self._params: list[Node] = []
        self._consumed = False

    def param(self, value: np.ndarray, name: str) -> Node:
        """Leaf registered for the gradient table."""
        node = Node(self, _as_f64(value), (), name, track=True)
        self._params.append(node)
        return node

    def input(self, value: np.ndarray, name: str | None = None) -> Node:
        """Leaf whose gradient is computed but not registered as a parameter."""
        return Node(self, _as_f64(value), (), name, track=True)

    def const(self, value: np.ndarray) -> Node:
        """Leaf excluded from gradient propagation."""
        return Node(self, _as_f64(value), (), None, track=False)


class GradientTable:
    """Gradients of one scalar loss with respect to the nodes of one tape."""

    def __init__(self, grads: dict[Node, np.ndarray], params: list[Node]):
        self._grads = grads
        self.by_name = {}
        for p in params:
            g = grads.get(p)
            if g is None:
                g = np.zeros_like(p.value)
                grads[p] = g
            self.by_name[p.name] = g

    def __getitem__(self, node: Node) -> np.ndarray:
        g = self._grads.get(node)
        return np.zeros_like(node.value) if g is None else g


def _as_f64(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


def _lift(tape: Tape, value) -> Node:
    return value if isinstance(value, Node) else tape.const(value)


def _emit(tape: Tape, value: np.ndarray, parents: Iterable[tuple[Node, Callable]]) -> Node:
    kept = tuple((p, vjp) for p, vjp in parents if p.track)
    return Node(tape, value, kept, None, track=bool(kept))


def add(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise DimensionError(f"add: shapes {a.value.shape} vs {b.value.shape}")
    return _emit(a.tape, a.value + b.value, [(a, lambda g: g), (b, lambda g: g)])


def mul(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise DimensionError(f"mul: shapes {a.value.shape} vs {b.value.shape}")
    av, bv = a.value, b.value
    return _emit(a.tape, av * bv, [(a, lambda g: g * bv), (b, lambda g: g * av)])


def scale(a: Node, c: float) -> Node:
    return _emit(a.tape, a.value * c, [(a, lambda g: g * c)])


def dot(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape or a.value.ndim != 1:
        raise DimensionError(f"dot: shapes {a.value.shape} vs {b.value.shape}")
    av, bv = a.value, b.value
    return _emit(a.tape, np.asarray(av @ bv), [(a, lambda g: g * bv), (b, lambda g: g * av)])


def affine(W: Node, x: Node) -> Node:
    """y = W @ x for a matrix W and vector x."""
    if W.value.ndim != 2 or x.value.ndim != 1 or W.value.shape[1] != x.value.shape[0]:
        raise DimensionError(f"affine: W {W.value.shape} incompatible with x {x.value.shape}")
    Wv, xv = W.value, x.value
    return _emit(W.tape, Wv @ xv, [(W, lambda g: np.outer(g, xv)), (x, lambda g: Wv.T @ g)])


def affine_t(W: Node, x: Node) -> Node:
    """y = W.T @ x; the output projections of the noise generator use this."""
    if W.value.ndim != 2 or x.value.ndim != 1 or W.value.shape[0] != x.value.shape[0]:
        raise DimensionError(f"affine_t: W {W.value.shape} incompatible with x {x.value.shape}")
    Wv, xv = W.value, x.value
    return _emit(W.tape, Wv.T @ xv, [(W, lambda g: np.outer(xv, g)), (x, lambda g: Wv @ g)])


def outer_softmax_attend(q: Node, k: Node, v: Node) -> Node:
    """a = row_softmax(q k^T) v, all vectors of one length, no scaling.

    The three-way backward is fused; with P the row-softmax of q k^T and
    G = g v^T the upstream on P, the score gradient is
    dS = P * (G - rowsum(G * P)).
    """
    if not (q.value.shape == k.value.shape == v.value.shape) or q.value.ndim != 1:
        raise DimensionError(
            f"outer_softmax_attend: shapes {q.value.shape}, {k.value.shape}, {v.value.shape}"
        )
    qv, kv, vv = q.value, k.value, v.value
    probs = F.row_softmax(np.outer(qv, kv))
    a = probs @ vv

    def _score_grad(g: np.ndarray) -> np.ndarray:
        G = np.outer(g, vv)
        return probs * (G - (G * probs).sum(axis=1, keepdims=True))

    return _emit(
        q.tape,
        a,
        [
            (q, lambda g: _score_grad(g) @ kv),
            (k, lambda g: _score_grad(g).T @ qv),
            (v, lambda g: probs.T @ g),
        ],
    )


def softplus(x: Node) -> Node:
    xv = x.value
    return _emit(x.tape, F.softplus(xv), [(x, lambda g: g * F.sigmoid(xv))])


def sigmoid(x: Node) -> Node:
    s = F.sigmoid(x.value)
    return _emit(x.tape, s, [(x, lambda g: g * s * (1.0 - s))])


def bce_with_logit(logit: Node, y: int) -> Node:
    """Stable ln(1 + exp(-s * logit)) with s = +1 for y=1, -1 for y=0."""
    if logit.value.ndim != 0:
        raise DimensionError("bce_with_logit expects a scalar logit")
    s = 1.0 if y else -1.0
    lv = logit.value
    loss = F.softplus(np.asarray(-s * lv))
    return _emit(logit.tape, loss, [(logit, lambda g: g * (-s) * F.sigmoid(-s * lv))])


def vsum(x: Node) -> Node:
    xv = x.value
    return _emit(x.tape, np.asarray(xv.sum()), [(x, lambda g: np.full_like(xv, float(g)))])


def average(nodes: list[Node]) -> Node:
    """Mean of scalar nodes; the batch and Monte Carlo reductions."""
    if not nodes:
        raise TapeUsageError("average of an empty list")
    n = float(len(nodes))
    value = np.asarray(sum(float(nd.value) for nd in nodes) / n)
    return _emit(nodes[0].tape, value, [(nd, lambda g: g / n) for nd in nodes])


def backward(tape: Tape, loss: Node) -> GradientTable:
    """Exact reverse-mode gradients of a scalar loss node; consumes the tape."""
    if loss.tape is not tape:
        raise TapeUsageError("loss node does not belong to this tape")
    if tape._consumed:
        raise TapeUsageError("tape already consumed by backward")
    if loss.value.ndim != 0:
        raise TapeUsageError("backward root must be a scalar node")
    tape._consumed = True

    grads: dict[Node, np.ndarray] = {loss: np.ones(())}
    for node in reversed(tape._nodes[: loss._index + 1]):
        g = grads.get(node)
        if g is None:
            continue
        for parent, vjp in node._parents:
            pg = vjp(g)
            acc = grads.get(parent)
            grads[parent] = pg if acc is None else acc + pg
    return GradientTable(grads, tape._params)
