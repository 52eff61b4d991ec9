"""Pure numpy implementations of the sparse segment kernels.

Every routine here has a compiled twin in ``_kernels.pyx`` with the same
signature. Edges are stored destination-major: the entries of segment ``v``
occupy ``indptr[v]:indptr[v + 1]`` and ``indices`` holds the source node.
"""

import numpy as np


def _segment_ids(indptr):
    return np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))


def spmm(indptr, indices, data, x):
    """out[v] = sum_e data[e] * x[indices[e]] over the segment of v."""
    n = len(indptr) - 1
    contrib = x[indices] * data[:, None]
    out = np.zeros((n, x.shape[1]))
    np.add.at(out, _segment_ids(indptr), contrib)
    return out


def spmm_t(indptr, indices, data, g, n_src):
    """Transpose product: out[indices[e]] += data[e] * g[v]."""
    contrib = g[_segment_ids(indptr)] * data[:, None]
    out = np.zeros((n_src, g.shape[1]))
    np.add.at(out, indices, contrib)
    return out


def segment_sum(values, indptr):
    """Sum rows of ``values`` within each segment."""
    n = len(indptr) - 1
    out = np.zeros((n, values.shape[1]))
    np.add.at(out, _segment_ids(indptr), values)
    return out


def segment_softmax(scores, indptr):
    """Softmax of a column of edge scores within each segment (max-shifted)."""
    seg = _segment_ids(indptr)
    n = len(indptr) - 1
    seg_max = np.full(n, -np.inf)
    np.maximum.at(seg_max, seg, scores)
    ex = np.exp(scores - seg_max[seg])
    denom = np.zeros(n)
    np.add.at(denom, seg, ex)
    return ex / denom[seg]


def scatter_add_rows(values, index, n):
    """out[index[i]] += values[i]."""
    out = np.zeros((n, values.shape[1]))
    np.add.at(out, index, values)
    return out
