import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgrl.metrics import (MiSeries, accuracy, confidence_histogram, mi_from_counts, mi_stability,
                          mutual_information, roc_auc, saturated_fraction)

# 30-digit evaluation of the plug-in sum for joint counts [[45, 5], [5, 45]]
MI_45_5 = 0.368064207168497069910682093234


def test_accuracy_examples():
    y = np.array([0, 1, 2, 1])
    assert accuracy(y, y) == 1.0
    assert accuracy((y + 1) % 3, y) == 0.0
    assert accuracy(np.array([0, 1, 2, 0]), y) == 0.75
    assert accuracy(np.array([0, 0, 0, 0]), y, ids=[0]) == 1.0
    with pytest.raises(ValueError):
        accuracy(y, y, ids=[])


def test_roc_auc_examples():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.5] * 4, [0, 1, 0, 1]) == 0.5
    assert roc_auc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == 0.75
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [1, 1])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 40))
def test_roc_auc_complement(seed, n):
    rng = np.random.default_rng(seed)
    s = rng.permutation(n).astype(float)
    y = np.r_[0, 1, rng.integers(0, 2, n - 2)]
    assert roc_auc(s, y) + roc_auc(-s, y) == pytest.approx(1.0)


def test_mi_examples():
    y = np.array([0, 1] * 50)
    assert mutual_information(y, y) == pytest.approx(np.log(2))
    assert mutual_information(np.zeros(100, dtype=int), y) == 0.0
    assert mi_from_counts([[45, 5], [5, 45]]) == pytest.approx(MI_45_5, abs=1e-14)
    pred = np.r_[np.zeros(45), np.ones(5), np.zeros(5), np.ones(45)].astype(int)
    true = np.r_[np.zeros(50), np.ones(50)].astype(int)
    assert mutual_information(pred, true) == pytest.approx(MI_45_5, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 5))
def test_mi_bounds_and_symmetry(seed, ka, kb):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, ka, 60), rng.integers(0, kb, 60)
    mi = mutual_information(a, b)
    bound = min(np.log(len(np.unique(a))), np.log(len(np.unique(b))))
    assert 0.0 <= mi <= bound + 1e-12
    assert mi == pytest.approx(mutual_information(b, a), abs=1e-12)


def test_mi_stability_examples():
    assert mi_stability([0.3] * 10, 5) == 0.0
    assert mi_stability([0, 1, 0, 1, 0, 1], 4) == pytest.approx(np.sqrt(1 / 3))
    s = MiSeries()
    for v in (0.1, 0.2, 0.4):
        s.append(v)
    assert mi_stability(s, 3) == pytest.approx(np.std([0.1, 0.2, 0.4], ddof=1))
    with pytest.raises(ValueError):
        mi_stability([1.0], 0)
    with pytest.raises(ValueError):
        mi_stability([1.0, 2.0], 3)
    with pytest.raises(ValueError):
        s.append(-0.1)


def test_confidence_histogram_examples():
    d = confidence_histogram(np.ones(50), 10)
    assert d[-1] == pytest.approx(10.0) and not d[:-1].any()
    u = confidence_histogram(np.linspace(0, 1, 100001), 10)
    assert np.allclose(u, 1.0, atol=1e-3)
    p = np.array([0.05, 0.12, 0.18, 0.33, 0.5, 0.51, 0.77, 0.9, 0.95, 1.0])
    counts = [sum(1 for x in p if (i / 10 <= x < (i + 1) / 10) or (i == 9 and x == 1.0))
              for i in range(10)]
    assert np.allclose(confidence_histogram(p, 10), np.array(counts) / (len(p) * 0.1))
    assert (confidence_histogram(p, 7) * (1 / 7)).sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        confidence_histogram([1.2], 10)
    with pytest.raises(ValueError):
        confidence_histogram([0.5], 1)


def test_saturated_fraction():
    assert saturated_fraction([0.5, 0.995, 1.0, 0.99]) == 0.5
