"""Small deterministic graphs shared by the test modules."""

import numpy as np

from cgrl.graph import build_graph

# two 6-node communities joined by one bridge, plus a pendant pair
EDGES_12 = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (4, 5), (3, 5),
            (5, 6),
            (6, 7), (6, 8), (7, 8), (8, 9), (9, 10), (10, 11), (9, 11)]
LABELS_12 = np.array([0, 0, 0, 0, 1, 1, 2, 2, 2, 1, 2, 0])


def graph12(dim=5, seed=0):
    rng = np.random.default_rng(seed)
    return build_graph(EDGES_12, rng.standard_normal((12, dim)), LABELS_12, 3)


def path_graph(n, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    return build_graph([(i, i + 1) for i in range(n - 1)], rng.standard_normal((n, dim)),
                       np.arange(n) % 2, 2)


def star_graph(leaves, dim=2):
    return build_graph([(0, i) for i in range(1, leaves + 1)], np.ones((leaves + 1, dim)),
                       np.zeros(leaves + 1, dtype=int), 1)


def dense_gcn(g):
    a = g.dense_adjacency() + np.eye(g.n)
    d = a.sum(axis=1) ** -0.5
    return d[:, None] * a * d[None, :]
