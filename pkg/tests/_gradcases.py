"""One closure factory per differentiable op, for finite-difference checks.

Each factory takes a seeded Generator and returns ``(build, params)``; the
loss contracts the op output against a fixed random matrix so every output
coordinate receives a distinct upstream gradient.
"""

import numpy as np

from cgrl import autodiff as ad
from cgrl.encoders import ModelSpec, forward, gumbel_noise, init_params
from cgrl.objectives import (LossWeights, combine_losses, inter_loss, intra_loss,
                             reconstruction_loss, sample_pairs, supervised_loss)

from _fixtures import graph12


def _away_from_zero(rng, shape, gap=0.1):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < gap, np.sign(x + 1e-12) * gap, x)


def _contract(rng, out):
    c = ad.constant(rng.standard_normal(out.shape))
    return ad.sum_all(ad.hadamard(out, c))


def _unary(fn, shape=(4, 3), positive=False, kink=False):
    def make(rng):
        if positive:
            x = ad.parameter(rng.uniform(0.2, 2.0, shape))
        elif kink:
            x = ad.parameter(_away_from_zero(rng, shape))
        else:
            x = ad.parameter(rng.standard_normal(shape))
        c = rng.standard_normal(shape)
        return (lambda: ad.sum_all(ad.hadamard(fn(x), ad.constant(c)))), [x]
    return make


def _binary(fn, sa, sb):
    def make(rng):
        a, b = ad.parameter(rng.standard_normal(sa)), ad.parameter(rng.standard_normal(sb))
        out_shape = fn(a, b).shape
        c = rng.standard_normal(out_shape)
        return (lambda: ad.sum_all(ad.hadamard(fn(a, b), ad.constant(c)))), [a, b]
    return make


def _csr(rng, n=6):
    rows = [sorted(set(rng.integers(0, n, rng.integers(1, 4)).tolist())) for _ in range(n)]
    indptr = np.concatenate([[0], np.cumsum([len(r) for r in rows])])
    return indptr, np.array([u for r in rows for u in r])


def _neighbor_const(rng):
    indptr, indices = _csr(rng)
    w = rng.random(len(indices))
    h = ad.parameter(rng.standard_normal((6, 3)))
    c = rng.standard_normal((6, 3))
    return (lambda: ad.sum_all(ad.hadamard(ad.neighbor_scatter_add(h, indptr, indices, w),
                                           ad.constant(c)))), [h]


def _neighbor_tensor(rng):
    indptr, indices = _csr(rng)
    w = ad.parameter(rng.random((len(indices), 1)))
    h = ad.parameter(rng.standard_normal((6, 3)))
    c = rng.standard_normal((6, 3))
    return (lambda: ad.sum_all(ad.hadamard(ad.neighbor_scatter_add(h, indptr, indices, w),
                                           ad.constant(c)))), [h, w]


def _segment(fn):
    def make(rng):
        indptr, indices = _csr(rng)
        s = ad.parameter(rng.standard_normal((len(indices), 1)))
        c = rng.standard_normal((len(indices), 1))
        return (lambda: ad.sum_all(ad.hadamard(fn(s, indptr), ad.constant(c)))), [s]
    return make


def _gather(rng):
    a = ad.parameter(rng.standard_normal((5, 3)))
    idx = rng.integers(0, 5, 8)
    c = rng.standard_normal((8, 3))
    return (lambda: ad.sum_all(ad.hadamard(ad.gather_rows(a, idx), ad.constant(c)))), [a]


def _scatter(rng):
    a = ad.parameter(rng.standard_normal((8, 3)))
    idx = rng.integers(0, 5, 8)
    c = rng.standard_normal((5, 3))
    return (lambda: ad.sum_all(ad.hadamard(ad.scatter_add_rows(a, idx, 5), ad.constant(c)))), [a]


def _dropout(rng):
    x = ad.parameter(rng.standard_normal((5, 4)))
    c = rng.standard_normal((5, 4))
    seed = int(rng.integers(1 << 30))
    return (lambda: ad.sum_all(ad.hadamard(ad.dropout(x, 0.3, seed, True), ad.constant(c)))), [x]


def _cross_entropy(rng):
    logits = ad.parameter(rng.standard_normal((6, 3)))
    labels = rng.integers(0, 3, 6)
    ids = np.array([0, 2, 3, 5])
    return (lambda: ad.cross_entropy(logits, labels, ids)), [logits]


def _kl(rng):
    q_logits = ad.parameter(rng.standard_normal((4, 3)))
    p = rng.dirichlet(np.ones(3), size=4)
    return (lambda: ad.sum_all(ad.kl_rows(ad.row_softmax(q_logits), p))), [q_logits]


def _matmul_xw(rng):
    x = ad.parameter(rng.standard_normal((4, 3)))
    w = ad.parameter(rng.standard_normal((3, 2)))
    c = rng.standard_normal((4, 2))
    return (lambda: ad.sum_all(ad.hadamard(ad.matmul(x, w), ad.constant(c)))), [x, w]


def _concat(rng):
    a, b = ad.parameter(rng.standard_normal((4, 2))), ad.parameter(rng.standard_normal((4, 3)))
    c = rng.standard_normal((4, 5))
    return (lambda: ad.sum_all(ad.hadamard(ad.concat_cols([a, b]), ad.constant(c)))), [a, b]


def _reductions(rng):
    x = ad.parameter(rng.standard_normal((4, 3)))
    c = rng.standard_normal((4, 1))
    return (lambda: ad.add(ad.mean_all(x), ad.sum_all(ad.hadamard(ad.row_sum(x),
                                                                   ad.constant(c))))), [x]


OP_CASES = {
    "matmul": _matmul_xw,
    "add": _binary(ad.add, (4, 3), (4, 3)),
    "add_broadcast_row": _binary(ad.add, (4, 3), (1, 3)),
    "add_broadcast_col": _binary(ad.add, (4, 3), (4, 1)),
    "scale": _unary(lambda x: ad.scale(x, -1.7)),
    "hadamard": _binary(ad.hadamard, (4, 3), (4, 3)),
    "concat_cols": _concat,
    "sum_mean_rowsum": _reductions,
    "rows_dot": _binary(ad.rows_dot, (5, 3), (5, 3)),
    "relu": _unary(ad.relu, kink=True),
    "leaky_relu": _unary(lambda x: ad.leaky_relu(x, 0.2), kink=True),
    "exp": _unary(ad.exp),
    "log": _unary(ad.log, positive=True),
    "row_softmax": _unary(ad.row_softmax),
    "col_softmax": _unary(ad.col_softmax),
    "dropout": _dropout,
    "l2_normalize_rows": _unary(lambda x: ad.l2_normalize_rows(x)),
    "gather_rows": _gather,
    "scatter_add_rows": _scatter,
    "neighbor_scatter_add": _neighbor_const,
    "neighbor_scatter_add_weighted": _neighbor_tensor,
    "segment_softmax": _segment(ad.segment_softmax),
    "segment_log_softmax": _segment(ad.segment_log_softmax),
    "cross_entropy": _cross_entropy,
    "kl_rows": _kl,
}


def model_loss_case(variant, seed=0, hidden=4, layers=2, branches=2):
    """Full CGRL total loss on the 12-node fixture with the Gumbel draw frozen."""
    g = graph12(dim=5, seed=seed)
    spec = ModelSpec(in_dim=5, hidden=hidden, num_classes=3, variant=variant, layers=layers,
                     branches=branches, dropout=0.0)
    params = init_params(spec, seed)
    rng = np.random.default_rng(seed + 100)
    noise = gumbel_noise((g.n, hidden), rng)
    train_ids = np.arange(0, 12, 2)
    pairs = sample_pairs(g.labels, np.arange(12), 16, seed=seed, margin=0.2)
    w = LossWeights(1.0, 1.0, 1.0)
    # the KL reference is a stopped gradient; pin it at the check point
    z0 = forward(g, params, spec, "train", tau=1.0, seed=0, noise=noise).z.value
    prior = np.exp(z0 - z0.max(axis=1, keepdims=True))
    prior /= prior.sum(axis=1, keepdims=True)

    def build():
        out = forward(g, params, spec, "train", tau=1.0, seed=0, noise=noise)
        rec = reconstruction_loss(out.z, out.q_node, out.h_c, params["energy.W"], g, prior).total
        return combine_losses(supervised_loss(out.logits, g.labels, train_ids), rec,
                              intra_loss(out.h_c, pairs, 1e-8), inter_loss(out.h_c, pairs, 1e-8), w)

    return build, list(params.values())
