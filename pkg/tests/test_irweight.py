import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfwrec.core import FeatureMatrix
from cfwrec.irweight import Bm25Params, bm25, content_knn, tf_idf

from .conftest import random_icm


def test_tfidf_ubiquitous_feature_vanishes():
    icm = FeatureMatrix(np.array([[1.0, 1.0], [1.0, 0.0], [1.0, 0.0]]))
    out = tf_idf(icm).csr.toarray()
    assert np.all(out[:, 0] == 0)
    assert out[0, 1] == pytest.approx(math.log(3))


def test_tfidf_single_item_feature():
    dense = np.zeros((4, 2))
    dense[:, 1] = 1.0
    dense[2, 0] = 1.0
    out = tf_idf(FeatureMatrix(dense)).csr.toarray()
    assert out[2, 0] == pytest.approx(1.3862943611, abs=1e-10)


def test_tfidf_linear_in_value():
    a = FeatureMatrix(np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 0.0]]))
    b = FeatureMatrix(np.array([[2.0, 0.0], [0.0, 2.0], [3.0, 0.0]]))
    assert tf_idf(b).csr[0, 0] == pytest.approx(2 * tf_idf(a).csr[0, 0])


def test_bm25_hand_value():
    # item 0 is the only holder of feature 0; all items have length 1
    dense = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
    out = bm25(FeatureMatrix(dense), Bm25Params(1.2, 0.75)).csr.toarray()
    idf = math.log(3.5 / 1.5 + 1)
    assert idf == pytest.approx(1.2039728, abs=1e-6)
    assert out[0, 0] == pytest.approx(idf * 2.2 / 2.2, abs=1e-12)


def test_bm25_b_zero_ignores_length():
    short = np.array([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    long = short.copy()
    long[0, 1] = 5.0
    long[1, 1] = 0.0
    long[1, 2] = 1.0
    p = Bm25Params(1.2, 0.0)
    a, b = bm25(FeatureMatrix(short), p).csr, bm25(FeatureMatrix(long), p).csr
    # feature 0 has the same tf and df in both, only item 0's length differs
    assert a[0, 0] == pytest.approx(b[0, 0])
    p = Bm25Params(1.2, 0.75)
    assert bm25(FeatureMatrix(short), p).csr[0, 0] != pytest.approx(bm25(FeatureMatrix(long), p).csr[0, 0])


def test_bm25_smoothing_keeps_ubiquitous_positive():
    n = 6
    out = bm25(FeatureMatrix(np.ones((n, 1)))).csr.toarray()
    assert np.all(out > 0)
    tf_part = 2.2 / (1 + 1.2)
    assert out[0, 0] == pytest.approx(math.log(0.5 / (n + 0.5) + 1) * tf_part)


def test_bm25_parameter_validation():
    with pytest.raises(ValueError):
        Bm25Params(k1=0)
    with pytest.raises(ValueError):
        Bm25Params(b=1.5)


def test_empty_matrix_rejected():
    with pytest.raises(ValueError):
        tf_idf(FeatureMatrix(np.zeros((2, 2))))


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_weightings_preserve_pattern_and_sign(seed):
    rng = np.random.default_rng(seed)
    icm, dense = random_icm(rng, 8, 5, density=0.5, binary=False)
    if icm.nnz == 0:
        return
    for fn in (tf_idf, bm25):
        out = fn(icm).csr.toarray()
        assert np.all(out >= 0)
        assert np.all(out[dense == 0] == 0)


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_weightings_commute_with_item_permutation(seed):
    rng = np.random.default_rng(seed)
    icm, dense = random_icm(rng, 9, 4, density=0.5, binary=False)
    if icm.nnz == 0:
        return
    perm = rng.permutation(9)
    for fn in (tf_idf, bm25):
        a = fn(FeatureMatrix(dense[perm])).csr.toarray()
        b = fn(icm).csr.toarray()[perm]
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_content_knn_cosine(rng):
    icm, dense = random_icm(rng, 7, 5, density=0.5)
    s = content_knn(icm, k=10).toarray()
    norms = np.linalg.norm(dense, axis=1)
    for i in range(7):
        for j in range(7):
            expected = 0.0 if i == j or norms[i] * norms[j] == 0 else dense[i] @ dense[j] / (norms[i] * norms[j])
            assert s[i, j] == pytest.approx(expected, abs=1e-12)
