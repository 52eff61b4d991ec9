"""Undirected graphs, GCN normalization, node splits and ego-graphs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph with dense features.

    ``neighbor_lists`` are sorted tuples without self-loops; self-loops are
    only introduced by the normalized aggregation operators.
    """

    n: int
    neighbor_lists: tuple[tuple[int, ...], ...]
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    domain_ids: np.ndarray | None = None

    @property
    def num_edges(self) -> int:
        return sum(len(nb) for nb in self.neighbor_lists) // 2

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbor_lists], dtype=np.int64)

    def edges(self) -> list[tuple[int, int]]:
        """Each undirected edge once, as (u, v) with u < v."""
        return [(u, v) for u, nb in enumerate(self.neighbor_lists) for v in nb if u < v]

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Destination-major (indptr, indices) without self-loops."""
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(self.degrees)
        indices = np.fromiter(
            (u for nb in self.neighbor_lists for u in nb), dtype=np.int64, count=int(indptr[-1])
        )
        return indptr, indices

    @cached_property
    def csr_self_loops(self) -> tuple[np.ndarray, np.ndarray]:
        """Destination-major (indptr, indices) of N(v) plus v itself, sorted."""
        rows = [sorted(nb + (v,)) for v, nb in enumerate(self.neighbor_lists)]
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(r) for r in rows])
        indices = np.fromiter((u for r in rows for u in r), dtype=np.int64, count=int(indptr[-1]))
        return indptr, indices

    @cached_property
    def gcn_weights(self) -> np.ndarray:
        """1/sqrt(deg+(u) deg+(v)) for every entry of ``csr_self_loops``."""
        indptr, indices = self.csr_self_loops
        deg_plus = self.degrees + 1.0
        dst = np.repeat(np.arange(self.n), np.diff(indptr))
        return 1.0 / np.sqrt(deg_plus[dst] * deg_plus[indices])

    def with_features(self, features: np.ndarray) -> "Graph":
        features = np.asarray(features, dtype=float)
        if features.shape[0] != self.n:
            raise GraphError(f"feature rows {features.shape[0]} != n {self.n}")
        return Graph(self.n, self.neighbor_lists, features, self.labels, self.num_classes, self.domain_ids)

    def with_domains(self, domain_ids: np.ndarray) -> "Graph":
        return Graph(self.n, self.neighbor_lists, self.features, self.labels, self.num_classes,
                     np.asarray(domain_ids, dtype=np.int64))

    def dense_adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for v, nb in enumerate(self.neighbor_lists):
            a[v, list(nb)] = 1.0
        return a


def build_graph(edge_list, features, labels, num_classes: int | None = None,
                domain_ids=None) -> Graph:
    """Build a symmetric, deduplicated graph from an iterable of (u, v) pairs."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2:
        raise GraphError("features must be a 2-D matrix")
    labels = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    if labels.shape != (n,):
        raise GraphError(f"labels length {labels.shape} does not match feature rows {n}")
    if n and labels.min() < 0:
        raise GraphError("labels must be non-negative")
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if n else 0
    if n and labels.max() >= num_classes:
        raise GraphError(f"label {labels.max()} >= num_classes {num_classes}")

    adj: list[set[int]] = [set() for _ in range(n)]
    for u, v in edge_list:
        u, v = int(u), int(v)
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edge ({u}, {v}) out of range for n={n}")
        if u == v:
            raise GraphError(f"self-loop at node {u}")
        adj[u].add(v)
        adj[v].add(u)
    neighbor_lists = tuple(tuple(sorted(s)) for s in adj)
    if domain_ids is not None:
        domain_ids = np.asarray(domain_ids, dtype=np.int64)
    return Graph(n, neighbor_lists, features, labels, num_classes, domain_ids)


def normalized_coeff(g: Graph, u: int, v: int) -> float:
    """Symmetric GCN coefficient 1/(sqrt(deg+(u)) sqrt(deg+(v))), deg+ = deg + 1."""
    if u != v and u not in g.neighbor_lists[v]:
        raise GraphError(f"nodes {u} and {v} are not adjacent")
    return 1.0 / np.sqrt((g.degrees[u] + 1.0) * (g.degrees[v] + 1.0))


@dataclass(frozen=True)
class NodeSplit:
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray


def split_nodes(n: int, ratios=(0.5, 0.25, 0.25), seed: int = 0, ids=None) -> NodeSplit:
    """Random disjoint train/val/test partition of ``ids`` (default ``range(n)``).

    Sizes are floor(ratio * n) for train and val; test takes the remainder.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise GraphError("ratios must have three entries")
    if any(r < 0 for r in ratios):
        raise GraphError(f"negative ratio in {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise GraphError(f"ratios sum to {sum(ratios)}, expected 1")
    pool = np.arange(n) if ids is None else np.asarray(ids, dtype=np.int64)
    m = len(pool)
    perm = pool[np.random.default_rng(seed).permutation(m)]
    n_train = int(np.floor(ratios[0] * m + 1e-9))
    n_val = int(np.floor(ratios[1] * m + 1e-9))
    return NodeSplit(
        np.sort(perm[:n_train]),
        np.sort(perm[n_train:n_train + n_val]),
        np.sort(perm[n_train + n_val:]),
    )


@dataclass(frozen=True)
class EgoGraph:
    center: int
    members: tuple[int, ...]
    neighbor_lists: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, nb in self.neighbor_lists.items() for v in nb if u < v]


def extract_ego_graph(g: Graph, center: int, hops: int) -> EgoGraph:
    """Subgraph induced by all nodes within ``hops`` of ``center`` (BFS)."""
    if not 0 <= center < g.n:
        raise GraphError(f"center {center} out of range")
    if hops < 0:
        raise GraphError("hops must be >= 0")
    dist = {center: 0}
    queue = deque([center])
    while queue:
        v = queue.popleft()
        if dist[v] == hops:
            continue
        for u in g.neighbor_lists[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    members = tuple(sorted(dist))
    inside = set(members)
    induced = {v: tuple(u for u in g.neighbor_lists[v] if u in inside) for v in members}
    return EgoGraph(center, members, induced)


# -- text formats -----------------------------------------------------------

def write_edge_list(g: Graph, path) -> None:
    Path(path).write_text("".join(f"{u} {v}\n" for u, v in g.edges()))


def read_edge_list(path) -> list[tuple[int, int]]:
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"{path}:{lineno}: expected 'u v', got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return edges


def write_features(features: np.ndarray, path) -> None:
    np.savetxt(path, features, delimiter=",", fmt="%.17g")


def read_features(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))


def write_labels(labels: np.ndarray, path) -> None:
    Path(path).write_text("".join(f"{int(y)}\n" for y in labels))


def read_labels(path) -> np.ndarray:
    return np.array([int(s) for s in Path(path).read_text().split()], dtype=np.int64)


def load_graph(edges_path, features_path, labels_path, num_classes=None) -> Graph:
    return build_graph(read_edge_list(edges_path), read_features(features_path),
                       read_labels(labels_path), num_classes)
