"""Sparse matrix containers shared by every other module.

All three containers wrap :mod:`scipy.sparse` storage, are built once and are
treated as read-only afterwards. Identifiers are dense zero-based indices; the
mapping to external string ids lives in :mod:`cfwrec.ingest`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps


def _as_canonical(m, shape=None) -> sps.csr_matrix:
    m = sps.csr_matrix(m, shape=shape, dtype=np.float64, copy=True)
    m.sum_duplicates()
    m.sort_indices()
    return m


def _freeze(m) -> None:
    for arr in (m.data, m.indices, m.indptr):
        arr.flags.writeable = False


class InteractionMatrix:
    """Users x items ratings (the URM), held in both CSR and CSC orientation.

    Missing entries mean "no interaction", so every stored rating must be a
    finite positive number.
    """

    def __init__(self, matrix, shape=None):
        csr = _as_canonical(matrix, shape)
        csr.eliminate_zeros()
        if not np.all(np.isfinite(csr.data)):
            raise ValueError("ratings must be finite")
        if np.any(csr.data <= 0):
            raise ValueError("ratings must be > 0")
        self.csr = csr
        self.csc = csr.tocsc()
        self.csc.sort_indices()
        _freeze(self.csr)
        _freeze(self.csc)

    @classmethod
    def from_triples(cls, users, items, ratings, n_users: int, n_items: int) -> "InteractionMatrix":
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        ratings = np.asarray(ratings, dtype=np.float64)
        if len(users):
            keys = users * n_items + items
            uniq, counts = np.unique(keys, return_counts=True)
            if np.any(counts > 1):
                dup = uniq[counts > 1][0]
                raise ValueError(f"duplicate (user, item) pair ({dup // n_items}, {dup % n_items})")
        m = sps.coo_matrix((ratings, (users, items)), shape=(n_users, n_items))
        return cls(m)

    @classmethod
    def empty(cls, n_users: int, n_items: int) -> "InteractionMatrix":
        return cls(sps.csr_matrix((n_users, n_items)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.csr.shape

    @property
    def n_users(self) -> int:
        return self.csr.shape[0]

    @property
    def n_items(self) -> int:
        return self.csr.shape[1]

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    def triples(self):
        """Entries in row-major order as ``(users, items, ratings)`` arrays."""
        coo = self.csr.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy()

    def column_triples(self):
        """Entries in column-major order as ``(users, items, ratings)`` arrays."""
        coo = self.csc.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy()

    def items_of(self, user: int) -> np.ndarray:
        return self.csr.indices[self.csr.indptr[user]:self.csr.indptr[user + 1]]

    def users_of(self, item: int) -> np.ndarray:
        return self.csc.indices[self.csc.indptr[item]:self.csc.indptr[item + 1]]

    def binarized(self) -> "InteractionMatrix":
        m = self.csr.copy()
        m.data = np.ones_like(m.data)
        return InteractionMatrix(m)

    def restrict_items(self, mask) -> "InteractionMatrix":
        """Keep only entries whose item is flagged in the boolean ``mask``; shape is unchanged."""
        keep = np.asarray(mask, dtype=bool)
        coo = self.csr.tocoo()
        sel = keep[coo.col]
        return InteractionMatrix(
            sps.coo_matrix((coo.data[sel], (coo.row[sel], coo.col[sel])), shape=self.shape)
        )

    def select_entries(self, mask) -> "InteractionMatrix":
        """Keep entries flagged in ``mask``, given in row-major (CSR) entry order."""
        keep = np.asarray(mask, dtype=bool)
        coo = self.csr.tocoo()
        return InteractionMatrix(
            sps.coo_matrix((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=self.shape)
        )

    def __eq__(self, other):
        if not isinstance(other, InteractionMatrix):
            return NotImplemented
        return other.shape == self.shape and (self.csr != other.csr).nnz == 0

    def __repr__(self):
        return f"InteractionMatrix(n_users={self.n_users}, n_items={self.n_items}, nnz={self.nnz})"


class FeatureMatrix:
    """Items x features descriptors (the ICM). Values are finite and non-negative."""

    def __init__(self, matrix, shape=None):
        csr = _as_canonical(matrix, shape)
        csr.eliminate_zeros()
        if not np.all(np.isfinite(csr.data)):
            raise ValueError("feature values must be finite")
        if np.any(csr.data < 0):
            raise ValueError("feature values must be >= 0")
        self.csr = csr
        _freeze(self.csr)

    @classmethod
    def from_triples(cls, items, features, values, n_items: int, n_features: int) -> "FeatureMatrix":
        items = np.asarray(items, dtype=np.int64)
        features = np.asarray(features, dtype=np.int64)
        if len(items):
            keys = items * n_features + features
            uniq, counts = np.unique(keys, return_counts=True)
            if np.any(counts > 1):
                dup = uniq[counts > 1][0]
                raise ValueError(f"duplicate (item, feature) pair ({dup // n_features}, {dup % n_features})")
        m = sps.coo_matrix(
            (np.asarray(values, dtype=np.float64), (items, features)), shape=(n_items, n_features)
        )
        return cls(m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.csr.shape

    @property
    def n_items(self) -> int:
        return self.csr.shape[0]

    @property
    def n_features(self) -> int:
        return self.csr.shape[1]

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    def feature_item_counts(self) -> np.ndarray:
        return np.bincount(self.csr.indices, minlength=self.n_features)

    def __repr__(self):
        return f"FeatureMatrix(n_items={self.n_items}, n_features={self.n_features}, nnz={self.nnz})"


class SimilarityMatrix:
    """Items x items scores. Row ``i``, column ``j`` is the contribution of ``i`` to ``j``.

    ``meta`` carries builder diagnostics (e.g. unconverged SLIM columns) and is
    not part of the numeric content.
    """

    def __init__(self, matrix, diagonal_excluded: bool = True, meta: dict | None = None):
        csc = sps.csc_matrix(matrix, dtype=np.float64, copy=True)
        if csc.shape[0] != csc.shape[1]:
            raise ValueError(f"similarity must be square, got {csc.shape}")
        csc.sum_duplicates()
        if diagonal_excluded:
            coo = csc.tocoo()
            off = coo.row != coo.col
            csc = sps.csc_matrix((coo.data[off], (coo.row[off], coo.col[off])), shape=csc.shape)
        csc.eliminate_zeros()
        csc.sort_indices()
        if not np.all(np.isfinite(csc.data)):
            raise ValueError("similarity scores must be finite")
        self.csc = csc
        self.csr = csc.tocsr()
        self.csr.sort_indices()
        _freeze(self.csc)
        _freeze(self.csr)
        self.diagonal_excluded = diagonal_excluded
        self.meta = dict(meta or {})

    @classmethod
    def from_triples(cls, rows, cols, scores, n_items: int, diagonal_excluded: bool = True):
        m = sps.coo_matrix(
            (np.asarray(scores, dtype=np.float64), (np.asarray(rows), np.asarray(cols))),
            shape=(n_items, n_items),
        )
        return cls(m, diagonal_excluded=diagonal_excluded)

    @property
    def n_items(self) -> int:
        return self.csc.shape[0]

    @property
    def nnz(self) -> int:
        return self.csc.nnz

    def toarray(self) -> np.ndarray:
        return self.csc.toarray()

    def column_nnz(self) -> np.ndarray:
        return np.diff(self.csc.indptr)

    def __repr__(self):
        return f"SimilarityMatrix(n_items={self.n_items}, nnz={self.nnz})"


@dataclass
class FeatureWeights:
    """Bilinear feature weights ``W = diag(d) + v.T @ v``.

    ``v is None`` is the diagonal-only model; code paths for it never touch the
    latent block.
    """

    d: np.ndarray
    v: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=np.float64)
        if self.d.ndim != 1:
            raise ValueError("d must be a vector")
        if not np.all(np.isfinite(self.d)):
            raise ValueError("d must be finite")
        if self.v is not None:
            self.v = np.asarray(self.v, dtype=np.float64)
            if self.v.ndim != 2 or self.v.shape[1] != self.d.shape[0]:
                raise ValueError(f"v must have shape (n_latent, {self.d.shape[0]})")
            if not np.all(np.isfinite(self.v)):
                raise ValueError("v must be finite")
            if self.v.shape[0] == 0:
                self.v = None

    @property
    def n_features(self) -> int:
        return self.d.shape[0]

    @property
    def n_latent(self) -> int:
        return 0 if self.v is None else self.v.shape[0]

    def component(self, which: str) -> "FeatureWeights":
        """Ablation view: ``"d"`` drops the latent block, ``"v"`` zeroes the diagonal, ``"dv"`` keeps both."""
        if which == "dv":
            return FeatureWeights(self.d.copy(), None if self.v is None else self.v.copy())
        if which == "d":
            return FeatureWeights(self.d.copy(), None)
        if which == "v":
            return FeatureWeights(np.zeros_like(self.d), None if self.v is None else self.v.copy())
        raise ValueError(f"unknown component {which!r}, expected 'd', 'v' or 'dv'")

    def __eq__(self, other):
        if not isinstance(other, FeatureWeights):
            return NotImplemented
        if not np.array_equal(self.d, other.d):
            return False
        if self.v is None or other.v is None:
            return self.v is None and other.v is None
        return np.array_equal(self.v, other.v)


def transpose(m: InteractionMatrix) -> InteractionMatrix:
    return InteractionMatrix(m.csr.T)


def prune_topk(s: SimilarityMatrix, k: int) -> SimilarityMatrix:
    """Keep the ``k`` largest scores of every column; ties go to the lower row index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return SimilarityMatrix(
        _topk_columns(s.csc, k), diagonal_excluded=s.diagonal_excluded, meta=s.meta
    )


def _topk_columns(csc: sps.csc_matrix, k: int) -> sps.csc_matrix:
    csc = sps.csc_matrix(csc, copy=True)
    csc.sort_indices()
    counts = np.diff(csc.indptr)
    if counts.size == 0 or counts.max(initial=0) <= k:
        return csc
    n_cols = csc.shape[1]
    col_of = np.repeat(np.arange(n_cols), counts)
    # sort by column, then score descending, then row ascending
    order = np.lexsort((csc.indices, -csc.data, col_of))
    rank = np.arange(csc.nnz) - np.repeat(csc.indptr[:-1], counts)
    keep = order[rank < k]
    return sps.csc_matrix(
        (csc.data[keep], (csc.indices[keep], col_of[keep])), shape=csc.shape
    )


def sparse_dot_row(m: InteractionMatrix, row: int, s: SimilarityMatrix) -> np.ndarray:
    """Item-based scores for one user: ``out[j] = sum_i m[row, i] * s[i, j]``."""
    if not 0 <= row < m.n_users:
        raise IndexError(f"row {row} out of range for {m.n_users} users")
    if m.n_items != s.n_items:
        raise ValueError(f"item count mismatch: {m.n_items} vs {s.n_items}")
    lo, hi = m.csr.indptr[row], m.csr.indptr[row + 1]
    items = m.csr.indices[lo:hi]
    ratings = m.csr.data[lo:hi]
    out = np.zeros(s.n_items)
    if len(items):
        out += np.asarray(s.csr[items].T @ ratings).ravel()
    return out
