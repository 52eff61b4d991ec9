"""Synthetic stochastic-block-model graphs and controlled feature/degree shifts."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import (Graph, GraphError, NodeSplit, build_graph, read_edge_list, read_features,
                    read_labels, split_nodes, write_edge_list, write_features, write_labels)


@dataclass(frozen=True)
class SbmSpec:
    classes: int = 4
    nodes_per_class: int = 75
    p_in: float = 0.06
    p_out: float = 0.005
    dim: int = 32
    separation: float = 1.0
    noise: float = 0.6
    seed: int = 0

    def __post_init__(self):
        for name in ("p_in", "p_out"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
        if self.p_out > self.p_in:
            raise ValueError("p_out must not exceed p_in")
        if self.separation <= 0:
            raise ValueError("class-mean separation must be positive")
        if self.classes < 1 or self.nodes_per_class < 1:
            raise ValueError("need at least one class and one node per class")
        if self.dim < self.classes:
            raise ValueError("feature dim must be >= number of classes")


@dataclass(frozen=True)
class ShiftSpec:
    strengths: tuple[float, ...] = (0.0, 0.1, 0.2, 0.4, 0.7, 1.0)
    id_domains: tuple[int, ...] = (1, 2, 3)
    ood_domains: tuple[int, ...] = (4, 5, 6)
    seed: int = 0

    def __post_init__(self):
        s = self.strengths
        if s[0] != 0.0:
            raise ValueError("the first domain must be the identity (strength 0)")
        if any(b <= a for a, b in zip(s, s[1:])):
            raise ValueError("domain strengths must be strictly increasing")
        domains = set(self.id_domains) | set(self.ood_domains)
        if not domains <= set(range(1, len(s) + 1)):
            raise ValueError("domain ids must index the strengths")

    @property
    def num_domains(self) -> int:
        return len(self.strengths)


def gen_sbm(spec: SbmSpec) -> Graph:
    """SBM graph; class c has mean ``separation * e_c`` plus isotropic Gaussian noise."""
    rng = np.random.default_rng(spec.seed)
    n = spec.classes * spec.nodes_per_class
    labels = np.repeat(np.arange(spec.classes), spec.nodes_per_class)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], spec.p_in, spec.p_out)
    keep = rng.random(len(iu)) < prob
    means = np.zeros((spec.classes, spec.dim))
    means[np.arange(spec.classes), np.arange(spec.classes)] = spec.separation
    features = means[labels] + spec.noise * rng.standard_normal((n, spec.dim))
    return build_graph(zip(iu[keep], ju[keep]), features, labels, spec.classes)


def _domain_rng(spec: ShiftSpec, domain: int):
    return np.random.default_rng([spec.seed, domain])


def shift_transform(spec: ShiftSpec, domain: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """The (R_k, mu_k) pair of a domain, entries N(0, 1/d).

    With that scale E||x R||^2 = ||x||^2 and E||mu||^2 = 1, matching the
    unit class-mean separation of the default SBM.
    """
    rng = _domain_rng(spec, domain)
    r = rng.standard_normal((dim, dim)) / np.sqrt(dim)
    mu = rng.standard_normal((1, dim)) / np.sqrt(dim)
    return r, mu


def shift_features(features: np.ndarray, spec: ShiftSpec, domain: int) -> np.ndarray:
    if not 1 <= domain <= spec.num_domains:
        raise ValueError(f"domain {domain} outside 1..{spec.num_domains}")
    sigma = spec.strengths[domain - 1]
    if sigma == 0.0:
        return features.copy()
    r, mu = shift_transform(spec, domain, features.shape[1])
    return features + sigma * (features @ r) + sigma * mu


def inject_feature_shift(g: Graph, spec: ShiftSpec, domain: int) -> Graph:
    """X_k = X (I + s_k R_k) + s_k mu_k; labels and edges untouched."""
    return g.with_features(shift_features(g.features, spec, domain))


class UnsplittableError(ValueError):
    pass


def degree_domain_split(g: Graph, quantile: float) -> tuple[np.ndarray, np.ndarray]:
    """High-degree nodes form the ID domain, the rest OOD.

    Nodes are ranked by degree (descending, ties by ascending id) and the top
    ``round((1 - quantile) * n)`` go to ID.
    """
    if not 0.0 < quantile < 1.0:
        raise ValueError("quantile must lie strictly between 0 and 1")
    deg = g.degrees
    if g.n == 0 or np.all(deg == deg[0]):
        raise UnsplittableError("all node degrees are equal")
    order = np.lexsort((np.arange(g.n), -deg))
    n_id = int(round((1.0 - quantile) * g.n))
    return np.sort(order[:n_id]), np.sort(order[n_id:])


def _hash(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode() + str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def topology_hash(g: Graph) -> str:
    indptr, indices = g.csr
    return _hash(indptr, indices)


def label_hash(g: Graph) -> str:
    return _hash(g.labels)


@dataclass
class Benchmark:
    """ID training graph, its split, and one evaluation graph per OOD domain."""

    sbm: SbmSpec
    shift: ShiftSpec
    id_graph: Graph
    split: NodeSplit
    ood_graphs: dict[int, Graph]
    domain_features: dict[int, np.ndarray] = field(default_factory=dict)

    def manifest(self) -> dict[str, str]:
        m = {f"sbm.{k}": repr(v) for k, v in asdict(self.sbm).items()}
        m.update({f"shift.{k}": repr(v) for k, v in asdict(self.shift).items()})
        m["n"] = str(self.id_graph.n)
        m["edges"] = str(self.id_graph.num_edges)
        m["topology_hash"] = topology_hash(self.id_graph)
        m["label_hash"] = label_hash(self.id_graph)
        m["id_features_hash"] = _hash(self.id_graph.features)
        m["split_sizes"] = ",".join(str(len(s)) for s in
                                    (self.split.train_ids, self.split.val_ids, self.split.test_ids))
        m["split_hash"] = _hash(self.split.train_ids, self.split.val_ids, self.split.test_ids)
        for k, og in sorted(self.ood_graphs.items()):
            m[f"ood{k}_features_hash"] = _hash(og.features)
        return m

    def manifest_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.manifest().items())

    @property
    def key(self) -> str:
        return hashlib.sha256(self.manifest_text().encode()).hexdigest()[:12]


def assemble_benchmark(sbm: SbmSpec | None = None, shift: ShiftSpec | None = None,
                       ratios=(0.5, 0.25, 0.25)) -> Benchmark:
    """Pure function of the two specs.

    Each node draws one ID domain uniformly and takes that domain's features;
    ID nodes are split by ``ratios``; every OOD domain is applied to the
    whole graph.
    """
    sbm = sbm or SbmSpec()
    shift = shift or ShiftSpec()
    base = gen_sbm(sbm)
    assign_rng, split_seed = np.random.default_rng([shift.seed, 0, 1]), shift.seed
    domains = np.asarray(shift.id_domains)[assign_rng.integers(0, len(shift.id_domains), base.n)]
    per_domain = {k: shift_features(base.features, shift, k) for k in range(1, shift.num_domains + 1)}
    mixed = np.empty_like(base.features)
    for k in shift.id_domains:
        rows = domains == k
        mixed[rows] = per_domain[k][rows]
    id_graph = base.with_features(mixed).with_domains(domains)
    split = split_nodes(base.n, ratios, seed=split_seed)
    ood = {k: base.with_features(per_domain[k]).with_domains(np.full(base.n, k))
           for k in shift.ood_domains}
    return Benchmark(sbm, shift, id_graph, split, ood, per_domain)


# -- on-disk bundle ---------------------------------------------------------

def _write_ids(ids, path):
    Path(path).write_text("".join(f"{int(i)}\n" for i in ids))


def _read_ids(path):
    return np.array([int(s) for s in Path(path).read_text().split()], dtype=np.int64)


def save_benchmark(bench: Benchmark, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(bench.id_graph, out / "edges.txt")
    write_labels(bench.id_graph.labels, out / "labels.txt")
    write_labels(bench.id_graph.domain_ids, out / "id_domains.txt")
    write_features(bench.id_graph.features, out / "features_id.csv")
    for k, feats in sorted(bench.domain_features.items()):
        write_features(feats, out / f"features_domain{k}.csv")
    _write_ids(bench.split.train_ids, out / "train_ids.txt")
    _write_ids(bench.split.val_ids, out / "val_ids.txt")
    _write_ids(bench.split.test_ids, out / "test_ids.txt")
    (out / "manifest.txt").write_text(bench.manifest_text())
    return out


def _parse_manifest(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            k, _, v = line.partition(" = ")
            out[k.strip()] = v.strip()
    return out


def load_benchmark(bundle_dir) -> Benchmark:
    """Rebuild a bundle from disk and check it against its manifest."""
    import ast

    d = Path(bundle_dir)
    manifest = _parse_manifest((d / "manifest.txt").read_text())
    sbm = SbmSpec(**{k[4:]: ast.literal_eval(v) for k, v in manifest.items() if k.startswith("sbm.")})
    shift = ShiftSpec(**{k[6:]: ast.literal_eval(v) for k, v in manifest.items()
                         if k.startswith("shift.")})
    labels = read_labels(d / "labels.txt")
    edges = read_edge_list(d / "edges.txt")
    id_graph = build_graph(edges, read_features(d / "features_id.csv"), labels, sbm.classes,
                           read_labels(d / "id_domains.txt"))
    domain_features = {k: read_features(d / f"features_domain{k}.csv")
                       for k in range(1, shift.num_domains + 1)}
    split = NodeSplit(_read_ids(d / "train_ids.txt"), _read_ids(d / "val_ids.txt"),
                      _read_ids(d / "test_ids.txt"))
    ood = {k: id_graph.with_features(domain_features[k]).with_domains(np.full(id_graph.n, k))
           for k in shift.ood_domains}
    bench = Benchmark(sbm, shift, id_graph, split, ood, domain_features)
    got = bench.manifest()
    for key in ("topology_hash", "label_hash", "split_hash"):
        if got[key] != manifest.get(key):
            raise GraphError(f"bundle {d} does not match its manifest ({key})")
    return bench
