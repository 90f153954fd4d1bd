"""Minimal dense-tensor reverse-mode differentiation engine.

A ``Graph`` records nodes in creation order, which is already a valid
topological order; ``backward`` walks it in exact reverse, so gradient
accumulation order is fixed and two runs over the same graph produce
bit-identical results.

Tensors come in three flavours:

* parameters  -- leaves with ``requires_grad=True`` (``graph`` is None),
* constants   -- leaves that never receive gradients,
* graph nodes -- results of operations, holding a backward rule.

Operations short-circuit to constants when no input needs a gradient or
when no graph is supplied, so inference runs without building any graph.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

Array = np.ndarray


class Graph:
    """Computation graph: an append-only list of operation nodes."""

    __slots__ = ("nodes",)

    def __init__(self) -> None:
        self.nodes: list[Tensor] = []


class Tensor:
    __slots__ = ("values", "inputs", "rule", "op", "requires_grad", "graph")

    def __init__(
        self,
        values: Array,
        *,
        requires_grad: bool = False,
        graph: Graph | None = None,
        inputs: tuple["Tensor", ...] = (),
        rule: Callable[[Array], Iterable[tuple["Tensor", Array]]] | None = None,
        op: str = "leaf",
    ) -> None:
        self.values = values
        self.requires_grad = requires_grad
        self.graph = graph
        self.inputs = inputs
        self.rule = rule
        self.op = op
        if graph is not None:
            graph.nodes.append(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(op={self.op}, shape={self.values.shape})"


def parameter(values: Array) -> Tensor:
    """Trainable leaf. Gradients are collected for it by ``backward``."""
    return Tensor(np.asarray(values), requires_grad=True)


def constant(values, dtype=None) -> Tensor:
    arr = np.asarray(values, dtype=dtype)
    return Tensor(arr)


def make_node(
    graph: Graph | None,
    values: Array,
    inputs: Sequence[Tensor],
    rule: Callable[[Array], Iterable[tuple[Tensor, Array]]],
    op: str,
) -> Tensor:
    """Create an operation node, or a constant when gradients cannot flow.

    Extension point for fused operations defined outside this module;
    their backward rules are verified by the same finite-difference
    harness as the built-in vocabulary.
    """
    needs = graph is not None and any(t.requires_grad for t in inputs)
    if not needs:
        return Tensor(values)
    return Tensor(
        values,
        requires_grad=True,
        graph=graph,
        inputs=tuple(inputs),
        rule=rule,
        op=op,
    )


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return constant(np.asarray(x, dtype=like.dtype))


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape`` (reverses numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    if shape == ():
        return grad.sum()
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# operation vocabulary
# ---------------------------------------------------------------------------


def matmul(graph: Graph | None, a: Tensor, b: Tensor, ta: bool = False, tb: bool = False) -> Tensor:
    av = a.values.T if ta else a.values
    bv = b.values.T if tb else b.values
    out = av @ bv

    def rule(g: Array):
        ga = g @ bv.T
        gb = av.T @ g
        if ta:
            ga = ga.T
        if tb:
            gb = gb.T
        return ((a, ga), (b, gb))

    return make_node(graph, out, (a, b), rule, "matmul")


def add(graph: Graph | None, a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    out = a.values + b.values

    def rule(g: Array):
        return ((a, _unbroadcast(g, a.values.shape)), (b, _unbroadcast(g, b.values.shape)))

    return make_node(graph, out, (a, b), rule, "add")


def mul(graph: Graph | None, a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    out = a.values * b.values

    def rule(g: Array):
        return (
            (a, _unbroadcast(g * b.values, a.values.shape)),
            (b, _unbroadcast(g * a.values, b.values.shape)),
        )

    return make_node(graph, out, (a, b), rule, "mul")


def sub(graph: Graph | None, a: Tensor, b) -> Tensor:
    return add(graph, a, mul(graph, _as_tensor(b, a), -1.0))


def tanh(graph: Graph | None, a: Tensor) -> Tensor:
    out = np.tanh(a.values)

    def rule(g: Array):
        return ((a, g * (1.0 - out * out)),)

    return make_node(graph, out, (a,), rule, "tanh")


def sigmoid(graph: Graph | None, a: Tensor) -> Tensor:
    v = a.values
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)

    def rule(g: Array):
        return ((a, g * out * (1.0 - out)),)

    return make_node(graph, out, (a,), rule, "sigmoid")


def log(graph: Graph | None, a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.values)

    def rule(g: Array):
        return ((a, g / a.values),)

    return make_node(graph, out, (a,), rule, "log")


def softmax(graph: Graph | None, a: Tensor, axis: int = -1) -> Tensor:
    v = a.values
    if not np.all(np.isfinite(v)):
        raise ValueError("softmax: non-finite input")
    shifted = v - v.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def rule(g: Array):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return ((a, out * (g - inner)),)

    return make_node(graph, out, (a,), rule, "softmax")


def logsumexp(graph: Graph | None, a: Tensor) -> Tensor:
    """log sum exp over all elements, computed with max-subtraction."""
    v = a.values
    if v.size == 0:
        raise ValueError("empty reduction")
    m = v.max()
    if not np.isfinite(m):
        if m == -np.inf:  # all terms are exp(-inf) = 0
            out = np.asarray(-np.inf, dtype=v.dtype)
            return make_node(graph, out, (a,), lambda g: ((a, np.zeros_like(v)),), "logsumexp")
        raise ValueError("logsumexp: non-finite input")
    e = np.exp(v - m)
    s = e.sum()
    out = np.asarray(m + np.log(s), dtype=v.dtype)

    def rule(g: Array):
        return ((a, (g * e / s).reshape(v.shape)),)

    return make_node(graph, out, (a,), rule, "logsumexp")


def concat(graph: Graph | None, parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = np.concatenate([p.values for p in parts], axis=axis)
    sizes = [p.values.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def rule(g: Array):
        grads = []
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            grads.append((p, g[tuple(idx)]))
        return grads

    return make_node(graph, out, tuple(parts), rule, "concat")


def gather_rows(graph: Graph | None, a: Tensor, idx: Sequence[int]) -> Tensor:
    index = np.asarray(idx, dtype=np.intp)
    out = a.values[index]

    def rule(g: Array):
        ga = np.zeros_like(a.values)
        np.add.at(ga, index, g)
        return ((a, ga),)

    return make_node(graph, out, (a,), rule, "gather_rows")


def take_per_row(graph: Graph | None, a: Tensor, cols: Sequence[int]) -> Tensor:
    """Pick one entry per row: out[t] = a[t, cols[t]]."""
    cols_ix = np.asarray(cols, dtype=np.intp)
    rows_ix = np.arange(a.values.shape[0])
    out = a.values[rows_ix, cols_ix]

    def rule(g: Array):
        ga = np.zeros_like(a.values)
        np.add.at(ga, (rows_ix, cols_ix), g)
        return ((a, ga),)

    return make_node(graph, out, (a,), rule, "take_per_row")


def sum_all(graph: Graph | None, a: Tensor) -> Tensor:
    out = np.asarray(a.values.sum(), dtype=a.dtype)

    def rule(g: Array):
        return ((a, np.broadcast_to(g, a.values.shape).copy()),)

    return make_node(graph, out, (a,), rule, "sum")


# ---------------------------------------------------------------------------
# backward and verification
# ---------------------------------------------------------------------------


def _first_bad_node(graph: Graph) -> Tensor | None:
    for node in graph.nodes:
        if not np.all(np.isfinite(node.values)):
            return node
    return None


def backward(loss: Tensor) -> dict[Tensor, Array]:
    """Gradients of a scalar loss with respect to every reachable leaf.

    Returns a mapping keyed by tensor identity; graph nodes are consumed
    during the walk so only leaves remain. Deterministic: accumulation
    follows exact reverse creation (topological) order.
    """
    if loss.values.size != 1:
        raise ValueError(f"backward: root must be scalar, got shape {loss.values.shape}")
    if loss.graph is None:
        return {}
    if not np.isfinite(loss.values):
        bad = _first_bad_node(loss.graph)
        where = f"{bad.op} node" if bad is not None else "graph root"
        raise FloatingPointError(f"backward: non-finite value at {where}")

    grads: dict[Tensor, Array] = {loss: np.ones_like(loss.values)}
    for node in reversed(loss.graph.nodes):
        g = grads.pop(node, None)
        if g is None or node.rule is None:
            continue
        for inp, gin in node.rule(g):
            if not inp.requires_grad:
                continue
            acc = grads.get(inp)
            if acc is None:
                grads[inp] = gin.astype(inp.dtype, copy=True) if gin.dtype != inp.dtype else gin.copy()
            else:
                acc += gin
    return grads


def check_gradient(
    loss_fn: Callable[[list[Tensor]], Tensor],
    points: Sequence[Array],
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must build a fresh graph from the given parameter tensors
    each call. Verification runs in 64-bit; the relative error for each
    coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    if step <= 0:
        raise ValueError("check_gradient: step must be positive")
    base = [np.asarray(p, dtype=np.float64) for p in points]
    params = [parameter(p.copy()) for p in base]
    loss = loss_fn(params)
    grads = backward(loss)
    worst = 0.0
    for k, p in enumerate(params):
        analytic = grads.get(p, np.zeros_like(base[k]))
        flat = base[k].reshape(-1)
        an_flat = np.asarray(analytic, dtype=np.float64).reshape(-1)
        for i in range(flat.size):
            for sgn in (1.0, -1.0):
                probe = [b.copy() for b in base]
                probe[k].reshape(-1)[i] += sgn * step
                val = loss_fn([parameter(q) for q in probe]).item()
                if not np.isfinite(val):
                    raise ValueError("check_gradient: loss not finite at perturbed point")
                if sgn > 0:
                    plus = val
                else:
                    minus = val
            numeric = (plus - minus) / (2.0 * step)
            err = abs(an_flat[i] - numeric) / max(1.0, abs(an_flat[i]), abs(numeric))
            worst = max(worst, err)
    return worst
