"""Synthetic datasets whose preferences are driven by a subset of item features.

Items carry a few *genre* features, which users actually care about, and a
larger number of *noise* features, which they ignore. Unweighted content
similarity is dominated by the noise; a collaborative similarity only sees the
genre structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeatureMatrix, InteractionMatrix


@dataclass
class SyntheticData:
    urm: InteractionMatrix
    icm: FeatureMatrix
    informative: np.ndarray
    user_genres: list[np.ndarray]


def feature_driven(n_users: int = 500, n_items: int = 300, n_features: int = 60, n_genres: int = 12,
                   genres_per_item: tuple[int, int] = (1, 2), noise_per_item: int = 6,
                   genres_per_user: int = 2, interactions_per_user: tuple[int, int] = (15, 40),
                   affinity: float = 3.0, seed: int = 0) -> SyntheticData:
    """Sample users who prefer items sharing their favourite genres.

    An item is picked with weight ``exp(affinity * shared_genres)``; ratings are
    ``2 + shared_genres`` plus a coin flip, clipped to ``[1, 5]``.
    """
    if n_genres >= n_features:
        raise ValueError("need at least one noise feature")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_features)
    genre_ids, noise_ids = perm[:n_genres], perm[n_genres:]

    item_genres = np.zeros((n_items, n_features))
    icm_rows, icm_cols = [], []
    for i in range(n_items):
        g = rng.choice(genre_ids, size=rng.integers(genres_per_item[0], genres_per_item[1] + 1), replace=False)
        z = rng.choice(noise_ids, size=min(noise_per_item, len(noise_ids)), replace=False)
        item_genres[i, g] = 1.0
        feats = np.concatenate([g, z])
        icm_rows.extend([i] * len(feats))
        icm_cols.extend(feats.tolist())
    icm = FeatureMatrix.from_triples(icm_rows, icm_cols, np.ones(len(icm_rows)), n_items, n_features)

    users, items, ratings, prefs = [], [], [], []
    for u in range(n_users):
        pref = rng.choice(genre_ids, size=genres_per_user, replace=False)
        prefs.append(np.sort(pref))
        shared = item_genres[:, pref].sum(axis=1)
        p = np.exp(affinity * shared)
        p /= p.sum()
        n = int(rng.integers(interactions_per_user[0], interactions_per_user[1] + 1))
        chosen = rng.choice(n_items, size=min(n, n_items), replace=False, p=p)
        r = np.clip(2 + shared[chosen] + rng.integers(0, 2, size=len(chosen)), 1, 5)
        users.extend([u] * len(chosen))
        items.extend(chosen.tolist())
        ratings.extend(r.tolist())
    urm = InteractionMatrix.from_triples(users, items, ratings, n_users, n_items)
    informative = np.zeros(n_features, dtype=bool)
    informative[genre_ids] = True
    return SyntheticData(urm, icm, informative, prefs)


def planted_weights(n_items: int = 50, n_features: int = 20, density: float = 0.25, seed: int = 0):
    """Binary ICM and non-negative weights with target ``F diag(w) F^T`` (diagonal dropped).

    Returns ``(icm, w_true, target_dense)``.
    """
    rng = np.random.default_rng(seed)
    f = (rng.random((n_items, n_features)) < density).astype(np.float64)
    # every item gets at least one feature
    empty = f.sum(axis=1) == 0
    f[empty, rng.integers(n_features, size=int(empty.sum()))] = 1.0
    w_true = rng.uniform(0.0, 1.0, n_features)
    target = f @ np.diag(w_true) @ f.T
    np.fill_diagonal(target, 0.0)
    return FeatureMatrix(f), w_true, target
