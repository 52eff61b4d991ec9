import numpy as np
import pytest

from cgrl import autodiff as ad
from cgrl.encoders import (ModelSpec, attention_coefficients, cgrl_gat_layer, cgrl_gcn_layer,
                           classify, forward, gnn_encode, init_params, reweight_matrix)
from cgrl.graph import build_graph

from _fixtures import dense_gcn, graph12, path_graph


def _relu(x):
    return np.maximum(x, 0)


def _softmax(x, axis):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _spec(variant="gcn", **kw):
    base = dict(in_dim=5, hidden=4, num_classes=3, variant=variant, layers=2, branches=2)
    base.update(kw)
    return ModelSpec(**base)


def test_zero_weights_give_zero_z():
    g = path_graph(5, dim=3)
    params = {"enc.W0": ad.constant(np.zeros((3, 4))), "enc.W1": ad.constant(np.zeros((4, 4)))}
    assert not gnn_encode(g, params).value.any()


def test_isolated_node_self_term():
    g = build_graph([], np.array([[2.0, -1.0]]), [0], 1)
    params = {"enc.W0": ad.constant(np.eye(2)), "enc.W1": ad.constant(np.eye(2))}
    assert np.array_equal(gnn_encode(g, params).value, [[2.0, 0.0]])


def test_encoder_dense_oracle():
    g = path_graph(5, dim=3, seed=4)
    rng = np.random.default_rng(4)
    w0, w1 = rng.standard_normal((3, 4)), rng.standard_normal((4, 4))
    a = dense_gcn(g)
    expect = _relu(a @ _relu(a @ g.features @ w0) @ w1)
    got = gnn_encode(g, {"enc.W0": ad.constant(w0), "enc.W1": ad.constant(w1)}).value
    assert np.allclose(got, expect, atol=1e-10)


def test_encoder_shape_mismatch():
    g = path_graph(3, dim=3)
    with pytest.raises(ad.ShapeError):
        gnn_encode(g, {"enc.W0": ad.constant(np.ones((2, 4))), "enc.W1": ad.constant(np.ones((4, 4)))})


def test_reweight_examples():
    z = ad.constant(np.array([[np.log(2.0), 1.5], [0.0, 1.5]]))
    h = reweight_matrix(z).value
    assert np.allclose(h[:, 0], [2 / 3, 1 / 3], atol=1e-15)
    assert np.allclose(h[:, 1], [0.5, 0.5])
    h = reweight_matrix(ad.constant(np.random.default_rng(0).standard_normal((9, 4)))).value
    assert np.allclose(h.sum(axis=0), 1.0, atol=1e-9)


def test_gcn_layer_residual_and_additivity():
    g = graph12(dim=4)
    rng = np.random.default_rng(1)
    hc, hr = ad.constant(rng.standard_normal((12, 4))), ad.constant(rng.random((12, 4)))
    zero = [ad.constant(np.zeros((4, 4)))] * 2
    assert np.array_equal(cgrl_gcn_layer(hc, hr, g, zero).value, hc.value)
    w = [ad.constant(rng.standard_normal((4, 4)))]
    one = cgrl_gcn_layer(hc, hr, g, w).value
    more = cgrl_gcn_layer(hc, hr, g, w + zero).value
    assert np.allclose(one, more, atol=1e-14)
    with pytest.raises(ValueError):
        cgrl_gcn_layer(hc, hr, g, [])


def test_gcn_layer_two_node_hand():
    # one edge: deg+ = 2 at both ends, so Ahat = [[.5, .5], [.5, .5]]
    g = build_graph([(0, 1)], np.zeros((2, 2)), [0, 1], 2)
    hc = np.array([[1.0, 2.0], [3.0, -1.0]])
    hr = np.array([[0.25, 0.5], [0.75, 0.5]])
    w = np.array([[1.0, -1.0], [0.5, 2.0]])
    mod = hc * hr                                  # [[.25, 1], [2.25, -.5]]
    agg = 0.5 * (mod[0] + mod[1])                  # [1.25, .25] for both rows
    pre = agg @ w                                  # [1.375, -.75]
    expect = hc + np.maximum(pre, 0)[None, :]
    got = cgrl_gcn_layer(ad.constant(hc), ad.constant(hr), g, [ad.constant(w)]).value
    assert np.allclose(got, expect, atol=1e-15)


def _gat_params(rng, h):
    return (ad.constant(rng.standard_normal((h, h))), ad.constant(rng.standard_normal((h, h))),
            ad.constant(rng.standard_normal((2 * h, 1))))


def test_attention_rows_sum_to_one():
    g = graph12(dim=4)
    rng = np.random.default_rng(3)
    _, wa, a = _gat_params(rng, 4)
    alpha = attention_coefficients(ad.constant(rng.standard_normal((12, 4))), g, wa, a).value[:, 0]
    indptr, _ = g.csr_self_loops
    sums = np.add.reduceat(alpha, indptr[:-1])
    assert np.allclose(sums, 1.0, atol=1e-9)


def test_attention_symmetric_and_single_neighbor():
    g = build_graph([(0, 1), (0, 2), (0, 3)], np.zeros((4, 2)), [0] * 4, 1)
    rng = np.random.default_rng(0)
    _, wa, a = _gat_params(rng, 3)
    hc = ad.constant(np.tile([1.0, -2.0, 0.5], (4, 1)))
    alpha = attention_coefficients(hc, g, wa, a).value[:, 0]
    assert np.allclose(alpha[:4], 0.25)   # node 0 attends over itself and 3 identical leaves
    iso = build_graph([], np.zeros((1, 2)), [0], 1)
    assert attention_coefficients(ad.constant(np.ones((1, 3))), iso, wa, a).value[0, 0] == 1.0


def test_attention_three_node_hand():
    # path 0-1-2; node 1 attends over {0, 1, 2}
    g = build_graph([(0, 1), (1, 2)], np.zeros((3, 2)), [0, 0, 0], 1)
    hc = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    wa = np.eye(2)
    a = np.array([[1.0], [0.0], [0.5], [-1.0]])
    def lrelu(x):
        return x if x > 0 else 0.2 * x
    # e(u, v) = a[:2] . h_v + a[2:] . h_u with W_alpha = I
    e = [lrelu(a[:2, 0] @ hc[1] + a[2:, 0] @ hc[u]) for u in (0, 1, 2)]
    expect = np.exp(e) / np.exp(e).sum()
    alpha = attention_coefficients(ad.constant(hc), g, ad.constant(wa), ad.constant(a)).value[:, 0]
    indptr, indices = g.csr_self_loops
    assert list(indices[indptr[1]:indptr[2]]) == [0, 1, 2]
    assert np.allclose(alpha[indptr[1]:indptr[2]], expect, atol=1e-10)


def test_gat_layer_dense_oracle_and_residual():
    g = graph12(dim=4)
    rng = np.random.default_rng(5)
    hc, hr = rng.standard_normal((12, 4)), rng.random((12, 4))
    w, wa, a = _gat_params(rng, 4)
    alpha = attention_coefficients(ad.constant(hc), g, wa, a).value[:, 0]
    indptr, indices = g.csr_self_loops
    att = np.zeros((12, 12))
    for v in range(12):
        att[v, indices[indptr[v]:indptr[v + 1]]] = alpha[indptr[v]:indptr[v + 1]]
    expect = hc + _relu(att @ (hr * hc) @ w.value)
    got = cgrl_gat_layer(ad.constant(hc), ad.constant(hr), g, [w], [wa], [a]).value
    assert np.allclose(got, expect, atol=1e-12)
    zero = ad.constant(np.zeros((4, 4)))
    assert np.array_equal(cgrl_gat_layer(ad.constant(hc), ad.constant(hr), g, [zero], [wa], [a]).value, hc)
    with pytest.raises(ad.ShapeError):
        attention_coefficients(ad.constant(hc), g, wa, ad.constant(np.ones((3, 1))))


def test_classify_examples():
    hc = ad.constant(np.eye(3))
    assert not classify(hc, ad.constant(np.zeros((3, 3)))).value.any()
    assert list(classify(hc, ad.constant(np.eye(3))).value.argmax(axis=1)) == [0, 1, 2]
    with pytest.raises(ad.ShapeError):
        classify(hc, ad.constant(np.ones((2, 3))))


def _dense_forward(g, p, spec):
    a = dense_gcn(g)
    v = {k: t.value for k, t in p.items()}
    z = _relu(a @ _relu(a @ g.features @ v["enc.W0"]) @ v["enc.W1"])
    hr, hc = _softmax(z, axis=0), z
    for l in range(spec.layers):
        s = sum(a @ (hr * hc) @ v[f"cgrl{l}.{k}.Wc"] for k in range(spec.branches))
        hc = hc + _relu(s)
    return z, hr, hc, hc @ v["cls.W"]


def test_forward_test_mode_dense_oracle():
    g = graph12(dim=5, seed=2)
    spec = _spec()
    p = init_params(spec, 2)
    out = forward(g, p, spec, "test")
    z, hr, hc, logits = _dense_forward(g, p, spec)
    assert np.allclose(out.logits.value, logits, atol=1e-8)
    assert np.allclose(out.h_r.value, hr, atol=1e-12)
    assert np.allclose(out.h_r.value.sum(axis=0), 1.0, atol=1e-6)
    assert np.array_equal(out.h_c.value, forward(g, p, spec, "test").h_c.value)


def test_h_c_starts_from_encoder_output():
    g = graph12()
    spec = _spec(layers=0)
    p = init_params(spec, 0)
    out = forward(g, p, spec, "test")
    assert np.array_equal(out.h_c.value, out.z.value)


def test_train_mode_seeded_and_tau():
    g = graph12()
    spec = _spec(dropout=0.3)
    p = init_params(spec, 1)
    a = forward(g, p, spec, "train", 1.0, seed=11)
    b = forward(g, p, spec, "train", 1.0, seed=11)
    assert np.array_equal(a.logits.value, b.logits.value)
    assert np.allclose(a.q_node.value.sum(axis=1), 1.0, atol=1e-9)
    assert np.allclose(a.h_r.value.sum(axis=0), 1.0, atol=1e-9)
    with pytest.raises(ValueError):
        forward(g, p, spec, "train", 0.0, seed=1)
    with pytest.raises(ValueError):
        forward(g, p, spec, "eval")


@pytest.mark.parametrize("variant", ["gcn", "gat"])
def test_permutation_equivariance(variant):
    g = graph12(dim=5, seed=6)
    spec = _spec(variant)
    p = init_params(spec, 6)
    perm = np.random.default_rng(6).permutation(g.n)
    inv = np.argsort(perm)
    # node i of the new graph is node perm[i] of the old one
    edges = [(inv[u], inv[v]) for u, v in g.edges()]
    gp = build_graph(edges, g.features[perm], g.labels[perm], 3)
    a, b = forward(g, p, spec, "test"), forward(gp, p, spec, "test")
    for x, y in ((a.z, b.z), (a.h_r, b.h_r), (a.h_c, b.h_c), (a.logits, b.logits)):
        assert np.allclose(x.value[perm], y.value, atol=1e-12)


def test_uniform_reweight_is_unit_modulation():
    g = graph12()
    spec = _spec(reweight="uniform", branches=1)
    p = init_params(spec, 0)
    out = forward(g, p, spec, "test")
    a = dense_gcn(g)
    hc = out.z.value
    for l in range(2):
        hc = hc + _relu(a @ hc @ p[f"cgrl{l}.0.Wc"].value)
    assert np.allclose(out.h_c.value, hc, atol=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        _spec(branches=0)
    with pytest.raises(ValueError):
        _spec(variant="sage")
