import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfwrec.cfsim import (
    KNN_METRICS,
    GraphConfig,
    KnnConfig,
    SlimConfig,
    bpr_loss,
    build_similarity,
    knn_similarity,
    p3alpha,
    p3alpha_full,
    read_similarity,
    rp3beta,
    sample_bpr_triples,
    slim_bpr,
    slim_bpr_step,
    slim_bpr_weights,
    slim_mse,
    slim_mse_column,
    write_similarity,
)
from cfwrec.core import InteractionMatrix

from . import oracles
from .conftest import random_urm


@pytest.mark.parametrize("metric", KNN_METRICS)
def test_identical_columns_have_unit_similarity(metric):
    r = np.array([[5.0, 5.0, 1.0], [3.0, 3.0, 0.0], [0.0, 0.0, 2.0], [1.0, 1.0, 4.0]])
    s = knn_similarity(InteractionMatrix(r), KnnConfig(metric, k=5)).toarray()
    if metric in ("cosine", "jaccard", "adjusted_cosine"):
        assert s[0, 1] == pytest.approx(1.0, abs=1e-12)
    else:
        assert s[0, 1] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("metric", KNN_METRICS)
def test_disjoint_supports_give_zero(metric):
    r = np.array([[4.0, 0.0], [2.0, 0.0], [0.0, 5.0], [0.0, 1.0]])
    s = knn_similarity(InteractionMatrix(r), KnnConfig(metric, k=5)).toarray()
    assert np.all(s == 0)


@pytest.mark.parametrize("metric", KNN_METRICS)
@pytest.mark.parametrize("seed", range(4))
def test_knn_matches_dense_oracle_4x3(metric, seed):
    rng = np.random.default_rng(seed)
    r = rng.integers(0, 6, size=(4, 3)).astype(float)
    s = knn_similarity(InteractionMatrix(r), KnnConfig(metric, k=3)).toarray()
    np.testing.assert_allclose(s, oracles.knn_dense(r, metric), atol=1e-12, rtol=0)


@pytest.mark.parametrize("metric", KNN_METRICS)
def test_knn_shrink_and_topk_match_oracle(metric, rng):
    urm, r = random_urm(rng, 12, 9, density=0.5)
    cfg = KnnConfig(metric, k=3, shrink=2.0)
    s = knn_similarity(urm, cfg).toarray()
    np.testing.assert_allclose(s, oracles.topk_dense(oracles.knn_dense(r, metric, 2.0), 3), atol=1e-12, rtol=0)


def test_empty_item_column_gives_zero_not_nan():
    r = np.array([[1.0, 0.0, 2.0], [3.0, 0.0, 1.0]])
    for metric in KNN_METRICS:
        s = knn_similarity(InteractionMatrix(r), KnnConfig(metric)).toarray()
        assert np.all(np.isfinite(s))
        assert np.all(s[:, 1] == 0) and np.all(s[1, :] == 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_knn_score_ranges(seed):
    rng = np.random.default_rng(seed)
    urm, _ = random_urm(rng, 10, 8, density=0.5)
    for metric, lo in (("cosine", 0.0), ("jaccard", 0.0), ("pearson", -1.0), ("adjusted_cosine", -1.0)):
        s = knn_similarity(urm, KnnConfig(metric, k=8)).csc.data
        assert np.all(s >= lo - 1e-12) and np.all(s <= 1 + 1e-12)


def test_p3alpha_single_user_walk():
    urm = InteractionMatrix(np.array([[1.0, 1.0]]))
    s = p3alpha(urm, GraphConfig(alpha=1.0, k=5)).toarray()
    assert s[0, 1] == pytest.approx(0.5)
    assert s[1, 0] == pytest.approx(0.5)


def test_p3alpha_alpha_zero_counts_co_raters(rng):
    urm, r = random_urm(rng, 7, 5, density=0.5)
    b = (r > 0).astype(float)
    co = b.T @ b
    np.fill_diagonal(co, 0)
    s = p3alpha(urm, GraphConfig(alpha=0.0, k=10)).toarray()
    np.testing.assert_allclose(s, co, atol=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.7])
def test_p3alpha_matches_dense_oracle(alpha, rng):
    urm, r = random_urm(rng, 6, 5, density=0.6)
    s = p3alpha(urm, GraphConfig(alpha=alpha, k=10)).toarray()
    np.testing.assert_allclose(s, oracles.p3alpha_dense(r, alpha), atol=1e-12, rtol=0)


def test_p3alpha_full_rows_are_stochastic(rng):
    urm, r = random_urm(rng, 15, 10, density=0.3)
    sums = np.asarray(p3alpha_full(urm, 1.0).sum(axis=1)).ravel()
    has_support = (r > 0).any(axis=0)
    np.testing.assert_allclose(sums[has_support], 1.0, atol=1e-12)


def test_rp3beta_zero_exponent_is_p3alpha(rng):
    urm, _ = random_urm(rng, 9, 7)
    a = p3alpha(urm, GraphConfig(1.0, 0.0, k=4)).toarray()
    b = rp3beta(urm, GraphConfig(1.0, 0.0, k=4)).toarray()
    assert np.array_equal(a, b)


def test_rp3beta_divides_by_popularity():
    # items 1 and 2 are reached from item 0 with equal walk mass;
    # item 1 has one rater, item 2 four
    r = np.zeros((4, 3))
    r[0, :] = 1.0
    r[1:, 2] = 1.0
    r[1:, 0] = 0.0
    urm = InteractionMatrix(r)
    walk = p3alpha(urm, GraphConfig(1.0, k=5)).toarray()
    assert walk[0, 1] == pytest.approx(walk[0, 2])
    s = rp3beta(urm, GraphConfig(1.0, pop_exponent=1.0, k=5)).toarray()
    assert s[0, 1] == pytest.approx(4 * s[0, 2])


@pytest.mark.parametrize("k", [2, 10])
def test_rp3beta_matches_compositional_oracle(k, rng):
    urm, r = random_urm(rng, 10, 8, density=0.4)
    s = rp3beta(urm, GraphConfig(alpha=0.8, pop_exponent=0.6, k=k)).toarray()
    expected = oracles.topk_dense(oracles.rp3beta_dense(r, 0.8, 0.6), k)
    np.testing.assert_allclose(s, expected, atol=1e-12, rtol=0)


def test_slim_mse_duplicate_items_reconstruct_exactly(rng):
    r = rng.integers(1, 6, size=(8, 4)).astype(float)
    r[:, 1] = r[:, 0]
    s = slim_mse(InteractionMatrix(r), SlimConfig(l1=0.0, l2=0.0, epochs=20_000, tol=1e-13, k=4)).toarray()
    assert s[0, 1] == pytest.approx(1.0, abs=1e-6)
    assert np.abs(s[2:, 1]).max() < 1e-6


def test_slim_mse_huge_l1_gives_zero(rng):
    urm, r = random_urm(rng, 6, 4, density=0.7)
    l1 = np.abs(r.T @ r).max() + 1.0
    assert slim_mse(urm, SlimConfig(l1=l1, l2=0.0)).nnz == 0


@pytest.mark.parametrize("seed", range(5))
def test_slim_mse_objective_matches_independent_solver(seed):
    rng = np.random.default_rng(seed)
    urm, r = random_urm(rng, 5, 4, density=0.7)
    s = slim_mse(urm, SlimConfig(l1=0.01, l2=0.01, epochs=1000, k=4)).toarray()
    for j in range(4):
        _, best = oracles.elastic_net_bounded(r, j, 0.01, 0.01)
        ours = oracles.elastic_net_objective(r, j, s[:, j], 0.01, 0.01)
        assert abs(ours - best) < 1e-5


def test_slim_mse_objective_non_increasing(rng):
    urm, r = random_urm(rng, 12, 8, density=0.5)
    gram = r.T @ r
    for j in range(3):
        values = []
        for sweeps in range(1, 12):
            w, _, _ = slim_mse_column(gram, j, 0.05, 0.1, sweeps, tol=0.0)
            values.append(oracles.elastic_net_objective(r, j, w, 0.05, 0.1))
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_slim_mse_flags_unconverged_columns(rng):
    urm, _ = random_urm(rng, 10, 6, density=0.6)
    s = slim_mse(urm, SlimConfig(l1=0.0, l2=0.0, epochs=1, tol=1e-12))
    assert len(s.meta["unconverged_columns"]) > 0


def test_slim_bpr_zero_epochs_is_zero(rng):
    urm, _ = random_urm(rng, 6, 5)
    assert slim_bpr(urm, SlimConfig(epochs=0)).nnz == 0


def test_slim_bpr_single_step_by_hand():
    w = np.zeros((4, 4))
    w[0, 2] = 0.3
    w[1, 2] = -0.1
    w[0, 3] = 0.2
    w[1, 3] = 0.4
    profile = np.array([0, 1, 2])
    lr, l2 = 0.1, 0.05
    x_pos = w[0, 2] + w[1, 2]
    x_neg = w[0, 3] + w[1, 3] + w[2, 3]
    z = 1 / (1 + np.exp(x_pos - x_neg))
    expected = w.copy()
    for l in (0, 1):
        expected[l, 2] += lr * (z - l2 * w[l, 2])
    for l in (0, 1, 2):
        expected[l, 3] += lr * (-z - l2 * w[l, 3])
    gap = slim_bpr_step(w, profile, 2, 3, lr, l2)
    assert gap == pytest.approx(x_pos - x_neg)
    np.testing.assert_allclose(w, expected, atol=1e-15)
    assert w[2, 2] == 0 and w[3, 3] == 0


def _block_urm(rng, n_users=20, n_items=10):
    r = np.zeros((n_users, n_items))
    for u in range(n_users):
        block = range(0, 5) if u < n_users // 2 else range(5, 10)
        chosen = rng.choice(list(block), size=3, replace=False)
        r[u, chosen] = 1.0
    return InteractionMatrix(r)


def test_slim_bpr_reduces_loss_on_blocks(rng):
    urm = _block_urm(rng)
    cfg = SlimConfig(l2=1e-4, learning_rate=0.05, epochs=200, seed=3, k=10)
    triples = sample_bpr_triples(urm, 2000, np.random.default_rng(99))
    before = bpr_loss(np.zeros((10, 10)), urm, triples)
    after = bpr_loss(slim_bpr_weights(urm, cfg), urm, triples)
    assert after < before
    assert before == pytest.approx(np.log(2))


def test_bpr_sampling_respects_support(rng):
    urm, r = random_urm(rng, 15, 8, density=0.4)
    r[0] = 1.0  # user 0 rated everything and must never be sampled
    urm = InteractionMatrix(r)
    users, pos, neg = sample_bpr_triples(urm, 500, rng)
    assert 0 not in set(users.tolist())
    assert np.all(r[users, pos] > 0)
    assert np.all(r[users, neg] == 0)


@pytest.mark.parametrize("name, params", [
    ("knn", {"metric": "cosine", "k": 3}),
    ("p3alpha", {"alpha": 0.7, "k": 3}),
    ("rp3beta", {"alpha": 0.7, "pop_exponent": 0.4, "k": 3}),
    ("slim_mse", {"l1": 0.01, "l2": 0.01, "k": 3}),
    ("slim_bpr", {"epochs": 3, "k": 3, "seed": 5}),
])
def test_builders_shape_and_determinism(name, params, rng):
    urm, _ = random_urm(rng, 15, 9, density=0.4)
    a = build_similarity(name, urm, **params)
    b = build_similarity(name, urm, **params)
    assert np.all(a.csc.diagonal() == 0)
    assert a.column_nnz().max() <= 3
    assert (a.csc != b.csc).nnz == 0


def test_unknown_builder():
    with pytest.raises(ValueError, match="unknown algorithm"):
        build_similarity("svd", InteractionMatrix(np.ones((2, 2))))


def test_similarity_tsv_round_trip(tmp_path, rng):
    urm, _ = random_urm(rng, 10, 7)
    s = p3alpha(urm, GraphConfig(alpha=0.9, k=4))
    write_similarity(tmp_path / "s.tsv", s)
    back = read_similarity(tmp_path / "s.tsv")
    assert back.n_items == 7
    assert np.array_equal(back.toarray(), s.toarray())
