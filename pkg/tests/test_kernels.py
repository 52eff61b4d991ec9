import os
import subprocess
import sys

import numpy as np
import pytest

from cgrl import _kernels_py as py
from cgrl import kernels

compiled = pytest.importorskip("cgrl._kernels", reason="compiled extension not built")


def _case(seed, n=30, dim=4):
    rng = np.random.default_rng(seed)
    counts = rng.integers(0, 5, n)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    indices = rng.integers(0, n, indptr[-1]).astype(np.int64)
    return rng, indptr, indices, rng.random(indptr[-1]), rng.standard_normal((n, dim))


def _dense(indptr, indices, data, n):
    a = np.zeros((len(indptr) - 1, n))
    for v in range(len(indptr) - 1):
        for e in range(indptr[v], indptr[v + 1]):
            a[v, indices[e]] += data[e]
    return a


@pytest.mark.parametrize("seed", range(5))
def test_backends_agree_and_match_dense(seed):
    rng, indptr, indices, data, x = _case(seed)
    n = x.shape[0]
    a = _dense(indptr, indices, data, n)
    for impl in (py, compiled):
        assert np.allclose(impl.spmm(indptr, indices, data, x), a @ x, atol=1e-12)
        assert np.allclose(impl.spmm_t(indptr, indices, data, x, n), a.T @ x, atol=1e-12)
    m = len(indices)
    vals = rng.standard_normal((m, 3))
    scores = rng.standard_normal(m)
    pairs = [
        (py.spmm(indptr, indices, data, x), compiled.spmm(indptr, indices, data, x)),
        (py.spmm_t(indptr, indices, data, x, n), compiled.spmm_t(indptr, indices, data, x, n)),
        (py.segment_sum(vals, indptr), compiled.segment_sum(vals, indptr)),
        (py.segment_softmax(scores, indptr), compiled.segment_softmax(scores, indptr)),
        (py.scatter_add_rows(vals, indices, n), compiled.scatter_add_rows(vals, indices, n)),
    ]
    for a_, b_ in pairs:
        assert np.allclose(a_, b_, atol=1e-13, rtol=0)


def test_segment_softmax_sums_and_empty_segments():
    indptr = np.array([0, 3, 3, 4], dtype=np.int64)
    s = np.array([1.0, 2.0, 3.0, -5.0])
    for impl in (py, compiled):
        out = np.asarray(impl.segment_softmax(s, indptr))
        assert out[:3].sum() == pytest.approx(1.0) and out[3] == 1.0
        assert np.asarray(impl.segment_sum(np.ones((4, 1)), indptr))[:, 0].tolist() == [3, 0, 1]


def test_wrapper_casts_inputs():
    indptr, indices = [0, 1, 2], [1, 0]
    out = kernels.spmm(indptr, indices, [2, 3], np.array([[1, 2], [3, 4]], dtype=np.int32))
    assert out.dtype == np.float64 and out.tolist() == [[6.0, 8.0], [3.0, 6.0]]


def test_env_forces_fallback():
    code = "from cgrl import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, CGRL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "python"
    if os.environ.get("CGRL_PURE_PYTHON", "") in ("", "0"):
        assert kernels.BACKEND == "compiled"
