import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cfwrec.core import (
    FeatureWeights,
    InteractionMatrix,
    SimilarityMatrix,
    prune_topk,
    sparse_dot_row,
    transpose,
)

from .conftest import random_urm


def dense_urm(max_side=8):
    shapes = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shapes.flatmap(
        lambda s: arrays(np.float64, s, elements=st.sampled_from([0.0, 0.0, 1.0, 2.5, 4.0, 5.0]))
    )


def test_transpose_empty():
    m = InteractionMatrix.empty(2, 3)
    t = transpose(m)
    assert t.shape == (3, 2)
    assert t.nnz == 0


def test_transpose_single_entry():
    m = InteractionMatrix.from_triples([0], [1], [3.0], 2, 3)
    t = transpose(m)
    assert t.shape == (3, 2)
    assert [tuple(x) for x in zip(*t.triples())] == [(1, 0, 3.0)]


def test_transpose_round_trip(rng):
    m, _ = random_urm(rng, 5, 4)
    assert transpose(transpose(m)) == m


@given(dense_urm())
def test_row_and_column_views_hold_same_entries(dense):
    m = InteractionMatrix(dense)
    row = sorted(zip(*[a.tolist() for a in m.triples()]))
    col = sorted(zip(*[a.tolist() for a in m.column_triples()]))
    assert row == col
    assert len(row) == np.count_nonzero(dense)


def test_interaction_matrix_rejects_bad_input():
    with pytest.raises(ValueError, match="> 0"):
        InteractionMatrix(np.array([[0.0, -1.0]]))
    with pytest.raises(ValueError, match="finite"):
        InteractionMatrix(np.array([[np.inf]]))
    with pytest.raises(ValueError, match=r"duplicate \(user, item\) pair \(0, 1\)"):
        InteractionMatrix.from_triples([0, 0], [1, 1], [1.0, 2.0], 1, 2)


def test_matrices_are_read_only(rng):
    m, _ = random_urm(rng, 4, 4)
    with pytest.raises(ValueError):
        m.csr.data[0] = 9.0


def _column(scores: dict, n=4, col=3):
    rows = list(scores)
    return SimilarityMatrix.from_triples(rows, [col] * len(rows), list(scores.values()), n)


def test_prune_keeps_largest():
    s = prune_topk(_column({0: 0.9, 1: 0.5, 2: 0.1}), 2)
    assert dict(zip(s.csc[:, 3].indices, s.csc[:, 3].data)) == {0: 0.9, 1: 0.5}


def test_prune_noop_when_k_covers_column():
    s = _column({0: 0.9, 1: 0.5, 2: 0.1})
    assert (prune_topk(s, 3).csc != s.csc).nnz == 0
    assert (prune_topk(s, 10).csc != s.csc).nnz == 0


def test_prune_tie_prefers_lower_row():
    s = prune_topk(_column({2: 0.5, 1: 0.5}), 1)
    assert s.csc[:, 3].indices.tolist() == [1]


def test_prune_rejects_k_zero():
    with pytest.raises(ValueError):
        prune_topk(_column({0: 1.0}), 0)


@settings(max_examples=60)
@given(
    arrays(np.float64, (6, 6), elements=st.sampled_from([0.0, -1.0, 0.25, 0.5, 0.5, 1.0])),
    st.integers(1, 6),
)
def test_prune_matches_exhaustive_dominance(dense, k):
    s = SimilarityMatrix(dense)
    p = prune_topk(s, k)
    for j in range(6):
        col = {i: s.csc[i, j] for i in s.csc[:, j].indices}
        kept = set(p.csc[:, j].indices)
        assert len(kept) == min(k, len(col))
        # every kept entry beats every dropped one on (score desc, row asc)
        for a in kept:
            for b in set(col) - kept:
                assert (col[a], -a) > (col[b], -b)
        assert all(p.csc[i, j] == col[i] for i in kept)


@given(arrays(np.float64, (7, 7), elements=st.sampled_from([0.0, 0.1, 0.3, 0.3, 0.7, 2.0])), st.integers(1, 7))
def test_prune_is_idempotent_and_bounds_columns(dense, k):
    once = prune_topk(SimilarityMatrix(dense), k)
    twice = prune_topk(once, k)
    assert (once.csc != twice.csc).nnz == 0
    assert once.column_nnz().max(initial=0) <= k


def test_similarity_drops_diagonal_when_excluded():
    s = SimilarityMatrix(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert s.toarray().tolist() == [[0.0, 2.0], [3.0, 0.0]]
    kept = SimilarityMatrix(np.eye(2), diagonal_excluded=False)
    assert kept.nnz == 2


def test_sparse_dot_row_zero_row():
    m = InteractionMatrix(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 2.0]]))
    s = SimilarityMatrix(np.ones((3, 3)))
    assert np.array_equal(sparse_dot_row(m, 0, s), np.zeros(3))


def test_sparse_dot_row_identity():
    dense = np.array([[4.0, 0.0, 2.0]])
    m = InteractionMatrix(dense)
    s = SimilarityMatrix(np.eye(3), diagonal_excluded=False)
    assert np.array_equal(sparse_dot_row(m, 0, s), dense[0])


def test_sparse_dot_row_random_3x3(rng):
    m, dense = random_urm(rng, 3, 3, density=0.8)
    sd = rng.random((3, 3))
    s = SimilarityMatrix(sd, diagonal_excluded=False)
    for u in range(3):
        np.testing.assert_allclose(sparse_dot_row(m, u, s), dense[u] @ sd, atol=1e-12)


@settings(max_examples=40)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**31))
def test_sparse_dot_row_agrees_with_dense(n_users, n_items, seed):
    rng = np.random.default_rng(seed)
    m, dense = random_urm(rng, n_users, n_items)
    sd = rng.uniform(0, 5, (n_items, n_items)) * (rng.random((n_items, n_items)) < 0.5)
    s = SimilarityMatrix(sd, diagonal_excluded=False)
    for u in range(n_users):
        expected = sum(dense[u, i] * sd[i, :] for i in range(n_items))
        np.testing.assert_allclose(sparse_dot_row(m, u, s), expected, rtol=0, atol=1e-12)


def test_sparse_dot_row_errors():
    m = InteractionMatrix(np.ones((2, 2)))
    with pytest.raises(IndexError):
        sparse_dot_row(m, 2, SimilarityMatrix(np.zeros((2, 2))))
    with pytest.raises(ValueError):
        sparse_dot_row(m, 0, SimilarityMatrix(np.zeros((3, 3))))


def test_feature_weights_components():
    w = FeatureWeights(np.array([1.0, 2.0]), np.array([[0.5, -0.5]]))
    assert w.n_latent == 1
    assert w.component("d").v is None
    assert np.array_equal(w.component("v").d, np.zeros(2))
    assert w.component("dv") == w
    assert FeatureWeights(np.ones(2), np.zeros((0, 2))).n_latent == 0
    with pytest.raises(ValueError):
        FeatureWeights(np.ones(2), np.ones((1, 3)))
    with pytest.raises(ValueError):
        w.component("x")
