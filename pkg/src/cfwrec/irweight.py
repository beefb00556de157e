"""TF-IDF and BM25 re-weighting of the item content matrix, plus plain content KNN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .cfsim import _finish, column_similarity
from .core import FeatureMatrix, SimilarityMatrix


@dataclass
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 <= 0:
            raise ValueError("k1 must be > 0")
        if not 0 <= self.b <= 1:
            raise ValueError("b must be in [0, 1]")


def _document_frequency(icm: FeatureMatrix) -> np.ndarray:
    return icm.feature_item_counts().astype(np.float64)


def tf_idf(icm: FeatureMatrix) -> FeatureMatrix:
    """Scale each value by ``ln(n_items / df)``; features present everywhere vanish."""
    if icm.nnz == 0:
        raise ValueError("feature matrix is empty")
    df = _document_frequency(icm)
    idf = np.log(np.divide(icm.n_items, df, out=np.ones_like(df), where=df > 0))
    out = icm.csr.copy()
    out.data = out.data * idf[out.indices]
    return FeatureMatrix(out)


def bm25(icm: FeatureMatrix, p: Bm25Params | None = None) -> FeatureMatrix:
    """Okapi BM25 term weights with the ``+1`` smoothed idf, so weights stay non-negative.

    Item length is the row sum; the average runs over items with at least one
    feature.
    """
    p = p or Bm25Params()
    if icm.nnz == 0:
        raise ValueError("feature matrix is empty")
    n = icm.n_items
    df = _document_frequency(icm)
    idf = np.log((n - df + 0.5) / (df + 0.5) + 1.0)
    csr = icm.csr
    lengths = np.asarray(csr.sum(axis=1)).ravel()
    avglen = lengths[lengths > 0].mean()
    row_len = np.repeat(lengths, np.diff(csr.indptr))
    tf = csr.data
    weights = idf[csr.indices] * tf * (p.k1 + 1) / (tf + p.k1 * (1 - p.b + p.b * row_len / avglen))
    out = sps.csr_matrix((weights, csr.indices.copy(), csr.indptr.copy()), shape=csr.shape)
    return FeatureMatrix(out)


def content_knn(icm: FeatureMatrix, k: int = 100, shrink: float = 0.0, metric: str = "cosine") -> SimilarityMatrix:
    """Item-item similarity from feature vectors (the CBF KNN baseline)."""
    return _finish(column_similarity(icm.csr.T, metric, shrink), k)


WEIGHTINGS = {
    "raw": lambda icm: icm,
    "tfidf": tf_idf,
    "bm25": bm25,
}
