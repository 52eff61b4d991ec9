"""Backend selection for the sparse segment kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded. Set ``CGRL_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("CGRL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def spmm(indptr, indices, data, x):
    return _impl.spmm(_i64(indptr), _i64(indices), _f64(data), _f64(x))


def spmm_t(indptr, indices, data, g, n_src):
    return _impl.spmm_t(_i64(indptr), _i64(indices), _f64(data), _f64(g), int(n_src))


def segment_sum(values, indptr):
    return _impl.segment_sum(_f64(values), _i64(indptr))


def segment_softmax(scores, indptr):
    return _impl.segment_softmax(_f64(scores), _i64(indptr))


def scatter_add_rows(values, index, n):
    return _impl.scatter_add_rows(_f64(values), _i64(index), int(n))
