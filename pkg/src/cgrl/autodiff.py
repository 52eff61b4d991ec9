"""Reverse-mode differentiation over dense float64 matrices.

Every value is a 2-D array. Scalars are ``(1, 1)``. Binary elementwise ops
broadcast a ``(1, d)`` row vector, an ``(n, 1)`` column vector or a scalar
against a full matrix and nothing else.

Gradients accumulate on leaves (``requires_grad=True``) until
:func:`zero_grad` is called, so a loss can be backpropagated in pieces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    """Input outside an op's mathematical domain (log of <= 0, non-stochastic rows)."""


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False, name=None):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim == 0:
            value = value.reshape(1, 1)
        elif value.ndim == 1:
            value = value.reshape(-1, 1)
        elif value.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {value.shape}")
        self.value = value
        self.grad = np.zeros_like(value) if requires_grad else None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() on shape {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape})"

    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_lift(other), -1.0))

    def __rsub__(self, other):
        return add(_lift(other), scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return hadamard(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(value, name=None) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def constant(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


_lift = constant


def _node(value, parents, backward_fn):
    return Tensor(value, parents=parents, backward_fn=backward_fn)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    sa, sb = a.shape, b.shape
    for x, y in zip(sa, sb):
        if x != y and x != 1 and y != 1:
            raise ShapeError(f"{op}: incompatible shapes {sa} and {sb}")


# -- linear algebra ---------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _node(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _node(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.value * c, (a,), lambda g: (g * c,))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "hadamard")
    av, bv = a.value, b.value
    return _node(av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def concat_cols(parts) -> Tensor:
    parts = list(parts)
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ {sorted(rows)}")
    cuts = np.cumsum([p.shape[1] for p in parts])[:-1]
    return _node(np.concatenate([p.value for p in parts], axis=1), tuple(parts),
                 lambda g: tuple(np.split(g, cuts, axis=1)))


# -- reductions -------------------------------------------------------------

def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _node(a.value.sum().reshape(1, 1), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.value.size)


def row_sum(a: Tensor) -> Tensor:
    return _node(a.value.sum(axis=1, keepdims=True), (a,),
                 lambda g: (np.broadcast_to(g, a.shape).copy(),))


def rows_dot(a: Tensor, b: Tensor) -> Tensor:
    """Per-row inner product, ``(n, 1)``."""
    if a.shape != b.shape:
        raise ShapeError(f"rows_dot: {a.shape} vs {b.shape}")
    return row_sum(hadamard(a, b))


# -- elementwise nonlinearities ---------------------------------------------

def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return _node(a.value * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.value > 0, 1.0, slope)
    return _node(a.value * factor, (a,), lambda g: (g * factor,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return _node(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.value <= 0):
        raise DomainError("log of non-positive value")
    av = a.value
    return _node(np.log(av), (a,), lambda g: (g / av,))


def _softmax(x, axis):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _softmax_node(a, axis):
    if not np.all(np.isfinite(a.value)):
        raise DomainError("softmax of non-finite input")
    s = _softmax(a.value, axis)
    return _node(s, (a,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def row_softmax(a: Tensor) -> Tensor:
    return _softmax_node(a, 1)


def col_softmax(a: Tensor) -> Tensor:
    return _softmax_node(a, 0)


def dropout(a: Tensor, rate: float, seed=None, training: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _node(a.value * mask, (a,), lambda g: (g * mask,))


def l2_normalize_rows(a: Tensor, eps: float = 0.0) -> Tensor:
    """Rows divided by sqrt(||row||^2 + eps^2); ``eps=0`` rejects zero rows."""
    norms = np.sqrt((a.value ** 2).sum(axis=1, keepdims=True) + eps * eps)
    if np.any(norms == 0):
        raise DomainError("l2 normalization of a zero-norm row")
    y = a.value / norms

    def back(g):
        return ((g - y * (g * y).sum(axis=1, keepdims=True)) / norms,)

    return _node(y, (a,), back)


# -- indexing and sparse aggregation ----------------------------------------

def gather_rows(a: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    n = a.shape[0]
    return _node(a.value[index], (a,), lambda g: (kernels.scatter_add_rows(g, index, n),))


def scatter_add_rows(a: Tensor, index, n: int) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    if len(index) != a.shape[0]:
        raise ShapeError("scatter_add_rows: index length != rows")
    return _node(kernels.scatter_add_rows(a.value, index, n), (a,), lambda g: (g[index],))


def neighbor_scatter_add(h: Tensor, indptr, indices, weights) -> Tensor:
    """Sparse aggregation ``out[v] = sum_e w[e] * h[indices[e]]``.

    ``weights`` is a constant vector or an ``(m, 1)`` Tensor (e.g. attention);
    the latter receives gradient ``g[v] . h[u]`` per entry.
    """
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    n_src = h.shape[0]
    if len(indices) and indices.max() >= n_src:
        raise ShapeError("neighbor_scatter_add: index exceeds rows of h")
    if isinstance(weights, Tensor):
        if weights.shape != (len(indices), 1):
            raise ShapeError(f"edge weights shape {weights.shape}, expected ({len(indices)}, 1)")
        w = weights.value[:, 0]
        hv = h.value
        seg = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))

        def back(g):
            gw = (g[seg] * hv[indices]).sum(axis=1, keepdims=True)
            return kernels.spmm_t(indptr, indices, w, g, n_src), gw

        return _node(kernels.spmm(indptr, indices, w, hv), (h, weights), back)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != indices.shape:
        raise ShapeError("edge weights length != number of entries")
    return _node(kernels.spmm(indptr, indices, w, h.value), (h,),
                 lambda g: (kernels.spmm_t(indptr, indices, w, g, n_src),))


def segment_softmax(scores: Tensor, indptr) -> Tensor:
    """Softmax of an ``(m, 1)`` score column within each destination segment."""
    indptr = np.asarray(indptr, dtype=np.int64)
    if scores.shape != (int(indptr[-1]), 1):
        raise ShapeError(f"segment_softmax: scores {scores.shape} vs {indptr[-1]} entries")
    s = kernels.segment_softmax(scores.value[:, 0], indptr)[:, None]
    seg = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))

    def back(g):
        dot = kernels.segment_sum(g * s, indptr)[seg]
        return (s * (g - dot),)

    return _node(s, (scores,), back)


def segment_log_softmax(scores: Tensor, indptr) -> Tensor:
    """Log of :func:`segment_softmax`, computed without underflow."""
    indptr = np.asarray(indptr, dtype=np.int64)
    if scores.shape != (int(indptr[-1]), 1):
        raise ShapeError(f"segment_log_softmax: scores {scores.shape} vs {indptr[-1]} entries")
    s = kernels.segment_softmax(scores.value[:, 0], indptr)[:, None]
    seg = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    sv = scores.value[:, 0]
    seg_max = np.full(len(indptr) - 1, -np.inf)
    np.maximum.at(seg_max, seg, sv)
    shifted = sv - seg_max[seg]
    with np.errstate(divide="ignore"):  # empty segments are never gathered
        lse = np.log(kernels.segment_sum(np.exp(shifted)[:, None], indptr)[:, 0])
    out = (shifted - lse[seg])[:, None]

    def back(g):
        return (g - s * kernels.segment_sum(g, indptr)[seg],)

    return _node(out, (scores,), back)


# -- losses -----------------------------------------------------------------

def cross_entropy(logits: Tensor, labels, ids=None) -> Tensor:
    """Mean softmax cross-entropy over rows ``ids`` (all rows by default)."""
    labels = np.asarray(labels, dtype=np.int64)
    ids = np.arange(logits.shape[0]) if ids is None else np.asarray(ids, dtype=np.int64)
    if len(ids) == 0:
        raise ShapeError("cross_entropy over an empty id set")
    x = logits.value[ids]
    z = x - x.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = labels[ids]
    loss = -logp[np.arange(len(ids)), y].mean()
    shape = logits.shape

    def back(g):
        p = np.exp(logp)
        p[np.arange(len(ids)), y] -= 1.0
        full = np.zeros(shape)
        np.add.at(full, ids, p * (g[0, 0] / len(ids)))
        return (full,)

    return _node(np.array([[loss]]), (logits,), back)


def _check_stochastic(x, what, tol=1e-6):
    if np.any(x < 0) or np.any(np.abs(x.sum(axis=1) - 1.0) > tol):
        raise DomainError(f"{what} rows are not stochastic")


def kl_rows(q: Tensor, p) -> Tensor:
    """Per-row KL(q || p) as ``(n, 1)``; ``p`` is treated as a constant.

    Uses the 0 log 0 = 0 convention. Gradient flows through ``q`` only.
    """
    pv = p.value if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
    if q.shape != pv.shape:
        raise ShapeError(f"kl_rows: {q.shape} vs {pv.shape}")
    qv = q.value
    _check_stochastic(qv, "kl q")
    _check_stochastic(pv, "kl p")
    pos = qv > 0
    if np.any(pos & (pv <= 0)):
        raise DomainError("kl_rows: q has mass where p is zero")
    ratio = np.ones_like(qv)
    ratio[pos] = qv[pos] / pv[pos]
    terms = np.where(pos, qv * np.log(ratio), 0.0)
    out = np.maximum(terms.sum(axis=1, keepdims=True), 0.0)

    def back(g):
        return (np.where(pos, g * (np.log(ratio) + 1.0), 0.0),)

    return _node(out, (q,), back)


# -- backward pass ----------------------------------------------------------

def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``.grad``."""
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar root, got {loss.shape}")
    order = _topo_order(loss)
    grads = {id(loss): np.ones((1, 1))}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad += g
        if node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg


def zero_grad(params) -> None:
    for p in params:
        p.grad = np.zeros_like(p.value)


def grad_check(build, params, h: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |central difference|).

    ``build`` is a zero-argument closure returning a scalar loss computed from
    ``params``; leaf values are perturbed in place and restored.
    """
    params = list(params)
    zero_grad(params)
    loss = build()
    if not np.isfinite(loss.item()):
        raise DomainError("non-finite loss at the check point")
    backward(loss)
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = build().item()
            flat[i] = orig - h
            down = build().item()
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise DomainError("non-finite loss at a probe point")
            fd = (up - down) / (2 * h)
            err = abs(analytic.reshape(-1)[i] - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
    zero_grad(params)
    return worst


# -- optimizer --------------------------------------------------------------

@dataclass
class AdamState:
    """Adam with decoupled weight decay.

    ``dropout`` rides along as a training hyperparameter; the optimizer
    itself never reads it.
    """

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    dropout: float = 0.0
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params, grads=None) -> None:
    """One in-place Adam update of ``params`` (uses ``p.grad`` unless ``grads`` given).

    Decay is applied to the weights before the adaptive step.
    """
    params = list(params)
    grads = [p.grad for p in params] if grads is None else list(grads)
    for p, g in zip(params, grads):
        if g.shape != p.value.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter {p.value.shape}")
        if not np.all(np.isfinite(g)):
            raise DomainError(f"non-finite gradient for {p.name or p}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        key = p.name or i
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p.value)
            state.v[key] = np.zeros_like(p.value)
        v = state.v[key]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        if state.weight_decay:
            p.value -= state.lr * state.weight_decay * p.value
        m_hat = m / (1 - b1 ** state.t)
        v_hat = v / (1 - b2 ** state.t)
        p.value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
