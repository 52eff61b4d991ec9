"""GCN encoder, node re-weighting, K-branch CGRL-GCN / CGRL-GAT layers, classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import Graph

LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of one model instance.

    ``reweight`` is ``"softmax"`` (node-axis softmax of Z, Gumbel-perturbed
    in training) or ``"uniform"`` (unit modulation, every node weighted
    equally). ``gumbel=False`` trains with the plain softmax instead.
    """

    in_dim: int
    hidden: int
    num_classes: int
    variant: str = "gcn"
    layers: int = 2
    branches: int = 2
    dropout: float = 0.0
    reweight: str = "softmax"
    gumbel: bool = True
    recompute_reweight: bool = False

    def __post_init__(self):
        if self.variant not in ("gcn", "gat"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.branches < 1:
            raise ValueError("need at least one branch (K >= 1)")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.reweight not in ("softmax", "uniform"):
            raise ValueError(f"unknown reweight mode {self.reweight!r}")


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(spec: ModelSpec, seed: int) -> dict[str, Tensor]:
    """Fresh parameters; the same seed always gives the same values."""
    rng = np.random.default_rng(seed)
    h = spec.hidden
    p = {
        "enc.W0": _glorot(rng, spec.in_dim, h),
        "enc.W1": _glorot(rng, h, h),
    }
    for layer in range(spec.layers):
        for k in range(spec.branches):
            p[f"cgrl{layer}.{k}.Wc"] = _glorot(rng, h, h)
            if spec.variant == "gat":
                p[f"cgrl{layer}.{k}.Wa"] = _glorot(rng, h, h)
                p[f"cgrl{layer}.{k}.a"] = _glorot(rng, 2 * h, 1)
    p["cls.W"] = _glorot(rng, h, spec.num_classes)
    p["energy.W"] = _glorot(rng, h, h)
    return {name: ad.parameter(v, name=name) for name, v in p.items()}


def gcn_aggregate(g: Graph, h: Tensor) -> Tensor:
    """D^-1/2 (A + I) D^-1/2 h."""
    indptr, indices = g.csr_self_loops
    return ad.neighbor_scatter_add(h, indptr, indices, g.gcn_weights)


def gnn_encode(g: Graph, params, dropout: float = 0.0, rng=None, training: bool = False) -> Tensor:
    """Two rounds of normalized aggregation -> linear -> ReLU."""
    W0, W1 = params["enc.W0"], params["enc.W1"]
    if g.features.shape[1] != W0.shape[0]:
        raise ad.ShapeError(f"feature dim {g.features.shape[1]} != encoder input {W0.shape[0]}")
    x = ad.dropout(ad.constant(g.features), dropout, rng, training)
    z = ad.relu(ad.matmul(gcn_aggregate(g, x), W0))
    z = ad.dropout(z, dropout, rng, training)
    return ad.relu(ad.matmul(gcn_aggregate(g, z), W1))


def reweight_matrix(z: Tensor) -> Tensor:
    """Softmax over the node axis, one distribution per hidden dimension."""
    return ad.col_softmax(z)


def gumbel_noise(shape, rng) -> np.ndarray:
    """Standard Gumbel draws -log(-log(u)), u ~ U(0, 1) open interval."""
    u = rng.random(shape)
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).eps)
    return -np.log(-np.log(u))


def _check_branches(h_c, h_r, weights):
    if len(weights) == 0:
        raise ValueError("need at least one branch (K >= 1)")
    if h_c.shape != h_r.shape and h_r.shape != (1, 1):
        raise ad.ShapeError(f"H_c {h_c.shape} and H_r {h_r.shape} differ")
    for w in weights:
        if w.shape != (h_c.shape[1], h_c.shape[1]):
            raise ad.ShapeError(f"branch weight {w.shape} is not hidden x hidden")


def cgrl_gcn_layer(h_c: Tensor, h_r: Tensor, g: Graph, branch_weights) -> Tensor:
    """H_c + ReLU(sum_k Ahat (H_r * H_c) W_k)."""
    _check_branches(h_c, h_r, branch_weights)
    agg = gcn_aggregate(g, ad.hadamard(h_r, h_c))
    total = None
    for w in branch_weights:
        term = ad.matmul(agg, w)
        total = term if total is None else ad.add(total, term)
    return ad.add(h_c, ad.relu(total))


def attention_coefficients(h_c: Tensor, g: Graph, w_att: Tensor, a: Tensor) -> Tensor:
    """Per-edge alpha over N(v) plus v, as an ``(m, 1)`` column in CSR order."""
    hidden = h_c.shape[1]
    if a.shape != (2 * hidden, 1):
        raise ad.ShapeError(f"attention vector {a.shape}, expected ({2 * hidden}, 1)")
    indptr, indices = g.csr_self_loops
    dst = np.repeat(np.arange(g.n), np.diff(indptr))
    proj = ad.matmul(h_c, w_att)
    # e_uv = a[:h] . W h_v + a[h:] . W h_u
    a_dst = ad.matmul(proj, _slice_rows(a, 0, hidden))
    a_src = ad.matmul(proj, _slice_rows(a, hidden, 2 * hidden))
    e = ad.add(ad.gather_rows(a_dst, dst), ad.gather_rows(a_src, indices))
    return ad.segment_softmax(ad.leaky_relu(e, LEAKY_SLOPE), indptr)


def _slice_rows(t: Tensor, start: int, stop: int) -> Tensor:
    return ad.gather_rows(t, np.arange(start, stop))


def cgrl_gat_layer(h_c: Tensor, h_r: Tensor, g: Graph, branch_weights, att_weights,
                   att_vectors) -> Tensor:
    """H_c + ReLU(sum_k sum_u alpha_k(u, v) (H_r * H_c)_u W_k)."""
    _check_branches(h_c, h_r, branch_weights)
    if not len(branch_weights) == len(att_weights) == len(att_vectors):
        raise ValueError("branch, attention-weight and attention-vector counts differ")
    indptr, indices = g.csr_self_loops
    mod = ad.hadamard(h_r, h_c)
    total = None
    for w, wa, a in zip(branch_weights, att_weights, att_vectors):
        alpha = attention_coefficients(h_c, g, wa, a)
        term = ad.neighbor_scatter_add(ad.matmul(mod, w), indptr, indices, alpha)
        total = term if total is None else ad.add(total, term)
    return ad.add(h_c, ad.relu(total))


def classify(h_c: Tensor, w_cls: Tensor) -> Tensor:
    return ad.matmul(h_c, w_cls)


@dataclass
class ForwardOutput:
    z: Tensor
    h_r: Tensor
    h_c: Tensor
    logits: Tensor
    mode: str
    q_node: Tensor | None = None
    noise: np.ndarray | None = None

    def predictions(self) -> np.ndarray:
        return self.logits.value.argmax(axis=1)

    def probabilities(self) -> np.ndarray:
        x = self.logits.value
        e = np.exp(x - x.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)


def _branch(params, layer, k, kind):
    return params[f"cgrl{layer}.{k}.{kind}"]


def forward(g: Graph, params, spec: ModelSpec, mode: str = "test", tau: float = 1.0,
            seed=None, noise: np.ndarray | None = None) -> ForwardOutput:
    """Full pass. Test: Z -> softmax -> CGRL layers -> classifier.

    Train: Gumbel noise perturbs Z wherever the test path uses its softmax;
    the row-wise sample ``q_node`` feeds reconstruction. ``noise`` overrides
    the seeded Gumbel draw (used to freeze it for gradient checks).
    """
    if mode not in ("train", "test"):
        raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")
    training = mode == "train"
    if training and tau <= 0:
        raise ValueError("Gumbel temperature must be positive")
    rng = np.random.default_rng(seed)
    z = gnn_encode(g, params, spec.dropout, rng, training)

    q_node = None
    use_gumbel = training and spec.gumbel
    if use_gumbel and noise is None:
        noise = gumbel_noise(z.shape, rng)
    if not use_gumbel:
        noise = None

    def reweight(source):
        if spec.reweight == "uniform":
            return ad.constant(np.ones((1, 1)))
        if noise is not None:
            return ad.col_softmax(ad.scale(ad.add(source, ad.constant(noise)), 1.0 / tau))
        return reweight_matrix(source)

    if noise is not None:
        q_node = ad.row_softmax(ad.scale(ad.add(z, ad.constant(noise)), 1.0 / tau))
    elif training:
        q_node = ad.row_softmax(z)

    h_r = reweight(z)
    h_c = z
    for layer in range(spec.layers):
        wc = [_branch(params, layer, k, "Wc") for k in range(spec.branches)]
        if spec.variant == "gcn":
            h_c = cgrl_gcn_layer(h_c, h_r, g, wc)
        else:
            wa = [_branch(params, layer, k, "Wa") for k in range(spec.branches)]
            av = [_branch(params, layer, k, "a") for k in range(spec.branches)]
            h_c = cgrl_gat_layer(h_c, h_r, g, wc, wa, av)
        if spec.recompute_reweight and layer + 1 < spec.layers:
            h_r = reweight(h_c)
    logits = classify(h_c, params["cls.W"])
    return ForwardOutput(z, h_r, h_c, logits, mode, q_node, noise)
