"""Plain residual GCN with dense matrices and hand-written backprop.

Independent of the autodiff engine; used as the oracle that an ERM-GCN run
(supervised loss only, one branch, unit re-weighting) must reproduce.
"""

from __future__ import annotations

import numpy as np

from .graph import Graph


def dense_gcn_operator(g: Graph) -> np.ndarray:
    a = g.dense_adjacency() + np.eye(g.n)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return d[:, None] * a * d[None, :]


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def reference_init(in_dim, hidden, num_classes, layers, seed):
    # same draw order as the library initializer with one branch
    rng = np.random.default_rng(seed)
    p = {"W0": _glorot(rng, in_dim, hidden), "W1": _glorot(rng, hidden, hidden)}
    for l in range(layers):
        p[f"Wc{l}"] = _glorot(rng, hidden, hidden)
    p["Wout"] = _glorot(rng, hidden, num_classes)
    return p


def _mask(rng, shape, rate):
    if rate == 0.0 or rng is None:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def loss_and_grads(A, X, labels, ids, p, layers, dropout=0.0, rng=None):
    m0 = _mask(rng, X.shape, dropout)
    X0 = X * m0
    P0 = A @ X0
    S0 = P0 @ p["W0"]
    Z1 = np.maximum(S0, 0)
    m1 = _mask(rng, Z1.shape, dropout)
    Z1d = Z1 * m1
    P1 = A @ Z1d
    S1 = P1 @ p["W1"]
    H = np.maximum(S1, 0)
    cache = []
    for l in range(layers):
        M = A @ H
        S = M @ p[f"Wc{l}"]
        cache.append((H, M, S))
        H = H + np.maximum(S, 0)
    logits = H @ p["Wout"]

    x = logits[ids]
    x = x - x.max(axis=1, keepdims=True)
    prob = np.exp(x) / np.exp(x).sum(axis=1, keepdims=True)
    y = labels[ids]
    loss = -np.log(prob[np.arange(len(ids)), y]).mean()

    grads = {}
    dlog = np.zeros_like(logits)
    prob[np.arange(len(ids)), y] -= 1.0
    dlog[ids] = prob / len(ids)
    grads["Wout"] = H.T @ dlog
    dH = dlog @ p["Wout"].T
    for l in reversed(range(layers)):
        Hin, M, S = cache[l]
        dS = dH * (S > 0)
        grads[f"Wc{l}"] = M.T @ dS
        dH = dH + A.T @ (dS @ p[f"Wc{l}"].T)
    dS1 = dH * (S1 > 0)
    grads["W1"] = P1.T @ dS1
    dZ1 = (A.T @ (dS1 @ p["W1"].T)) * m1
    dS0 = dZ1 * (S0 > 0)
    grads["W0"] = P0.T @ dS0
    return float(loss), grads, logits


class ReferenceAdam:
    def __init__(self, lr, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.wd, self.b1, self.b2, self.eps = lr, weight_decay, beta1, beta2, eps
        self.t, self.m, self.v = 0, {}, {}

    def step(self, params, grads):
        self.t += 1
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m[...] = self.b1 * m + (1 - self.b1) * g
            v[...] = self.b2 * v + (1 - self.b2) * g * g
            params[k] = params[k] - self.lr * self.wd * params[k]
            mh = m / (1 - self.b1 ** self.t)
            vh = v / (1 - self.b2 ** self.t)
            params[k] = params[k] - self.lr * mh / (np.sqrt(vh) + self.eps)


def reference_train(g: Graph, train_ids, hidden, layers, lr, weight_decay, dropout, epochs,
                    seed) -> list[float]:
    """Per-epoch training losses; epoch e draws dropout masks from rng([seed, e, 1])."""
    A = dense_gcn_operator(g)
    p = reference_init(g.features.shape[1], hidden, g.num_classes, layers, seed)
    opt = ReferenceAdam(lr, weight_decay)
    ids = np.asarray(train_ids)
    curve = []
    for epoch in range(epochs):
        rng = np.random.default_rng([seed, epoch, 1])
        loss, grads, _ = loss_and_grads(A, g.features, g.labels, ids, p, layers, dropout, rng)
        opt.step(p, grads)
        curve.append(loss)
    return curve
