"""Collaborative item-item similarities used as the feature-weighting target.

Every builder returns a :class:`~cfwrec.core.SimilarityMatrix` without
diagonal entries and with at most ``k`` neighbours per column.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .core import InteractionMatrix, SimilarityMatrix, _topk_columns

log = logging.getLogger(__name__)

KNN_METRICS = ("cosine", "pearson", "adjusted_cosine", "jaccard")


@dataclass
class KnnConfig:
    metric: str = "cosine"
    k: int = 100
    shrink: float = 0.0

    def __post_init__(self):
        if self.metric not in KNN_METRICS:
            raise ValueError(f"unknown metric {self.metric!r}, expected one of {KNN_METRICS}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.shrink < 0:
            raise ValueError("shrink must be >= 0")


@dataclass
class GraphConfig:
    alpha: float = 1.0
    pop_exponent: float = 0.0
    k: int = 100

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class SlimConfig:
    l1: float = 1e-3
    l2: float = 1e-3
    learning_rate: float = 0.05
    epochs: int = 30
    k: int = 100
    seed: int = 0
    tol: float = 1e-4

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError("l1 and l2 must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")


def _finish(m, k: int, meta=None) -> SimilarityMatrix:
    m = sps.coo_matrix(m)
    off = m.row != m.col
    m = sps.csc_matrix((m.data[off], (m.row[off], m.col[off])), shape=m.shape)
    m.eliminate_zeros()
    return SimilarityMatrix(_topk_columns(m, k), diagonal_excluded=True, meta=meta)


def _center(x: sps.csr_matrix, axis: int) -> sps.csr_matrix:
    """Subtract the mean of stored entries along ``axis`` (0: per column, 1: per row)."""
    x = x.tocsr() if axis == 1 else x.tocsc()
    x = x.copy()
    counts = np.diff(x.indptr)
    sums = np.bincount(np.repeat(np.arange(len(counts)), counts), weights=x.data, minlength=len(counts))
    means = np.divide(sums, counts, out=np.zeros(len(counts)), where=counts > 0)
    x.data = x.data - np.repeat(means, counts)
    return x.tocsr()


def column_similarity(x, metric: str = "cosine", shrink: float = 0.0) -> sps.csr_matrix:
    """Full (unpruned) similarity between the columns of a rows x columns sparse matrix."""
    x = sps.csr_matrix(x, dtype=np.float64)
    if metric == "jaccard":
        b = x.copy()
        b.data = np.ones_like(b.data)
        inter = (b.T @ b).tocoo()
        sizes = np.asarray(b.sum(axis=0)).ravel()
        union = sizes[inter.row] + sizes[inter.col] - inter.data + shrink
        vals = np.divide(inter.data, union, out=np.zeros_like(inter.data), where=union > 0)
        return sps.csr_matrix((vals, (inter.row, inter.col)), shape=inter.shape)
    if metric == "pearson":
        x = _center(x, axis=0)
    elif metric == "adjusted_cosine":
        x = _center(x, axis=1)
    elif metric != "cosine":
        raise ValueError(f"unknown metric {metric!r}")
    gram = (x.T @ x).tocoo()
    norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=0)).ravel())
    denom = norms[gram.row] * norms[gram.col] + shrink
    vals = np.divide(gram.data, denom, out=np.zeros_like(gram.data), where=denom > 0)
    return sps.csr_matrix((vals, (gram.row, gram.col)), shape=gram.shape)


def knn_similarity(urm: InteractionMatrix, cfg: KnnConfig) -> SimilarityMatrix:
    """Item-item KNN over rating columns with one of four metrics, shrinkage and top-k."""
    full = column_similarity(urm.csr, cfg.metric, cfg.shrink)
    return _finish(full, cfg.k)


def _row_normalize(m: sps.csr_matrix) -> sps.csr_matrix:
    m = m.copy()
    sums = np.asarray(m.sum(axis=1)).ravel()
    counts = np.diff(m.indptr)
    scale = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    m.data = m.data * np.repeat(scale, counts)
    return m


def p3alpha_full(urm: InteractionMatrix, alpha: float) -> sps.csr_matrix:
    """Two-hop item -> user -> item walk probabilities with each hop raised to ``alpha``."""
    b = urm.binarized().csr
    p_ui = _row_normalize(b)
    p_iu = _row_normalize(b.T.tocsr())
    p_ui.data = np.power(p_ui.data, alpha)
    p_iu.data = np.power(p_iu.data, alpha)
    return (p_iu @ p_ui).tocsr()


def p3alpha(urm: InteractionMatrix, cfg: GraphConfig) -> SimilarityMatrix:
    return _finish(p3alpha_full(urm, cfg.alpha), cfg.k)


def rp3beta(urm: InteractionMatrix, cfg: GraphConfig) -> SimilarityMatrix:
    """P3alpha scores divided by ``pop(j) ** pop_exponent`` before pruning."""
    walk = p3alpha_full(urm, cfg.alpha).tocoo()
    pop = np.diff(urm.csc.indptr).astype(np.float64)
    scale = np.power(pop, -cfg.pop_exponent, out=np.zeros_like(pop), where=pop > 0)
    vals = walk.data * scale[walk.col]
    return _finish(sps.coo_matrix((vals, (walk.row, walk.col)), shape=walk.shape), cfg.k)


def slim_objective(urm: InteractionMatrix, j: int, w: np.ndarray, l1: float, l2: float) -> float:
    """``0.5 ||r_j - R w||^2 + l1 ||w||_1 + 0.5 l2 ||w||^2`` for a single target column."""
    r = urm.csc
    resid = r[:, [j]].toarray().ravel() - r @ w
    return 0.5 * resid @ resid + l1 * np.abs(w).sum() + 0.5 * l2 * w @ w


def _soft(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


def slim_mse_column(gram: np.ndarray, j: int, l1: float, l2: float, max_sweeps: int, tol: float):
    """Cyclic coordinate descent for one ElasticNet column on the Gram matrix.

    Returns ``(w, sweeps, converged)``. ``w[j]`` is pinned to zero.
    """
    n = gram.shape[0]
    w = np.zeros(n)
    # g = R^T (r_j - R w)
    g = gram[:, j].copy()
    diag = np.diag(gram)
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_delta = 0.0
        for l in range(n):
            if l == j or diag[l] == 0.0:
                continue
            old = w[l]
            if old == 0.0 and abs(g[l]) <= l1:
                continue
            new = _soft(g[l] + diag[l] * old, l1) / (diag[l] + l2)
            delta = new - old
            if delta != 0.0:
                g -= gram[:, l] * delta
                w[l] = new
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            converged = True
            break
    return w, sweeps, converged


def slim_mse(urm: InteractionMatrix, cfg: SlimConfig) -> SimilarityMatrix:
    """SLIM with an ElasticNet (squared error) loss, one column at a time."""
    gram = (urm.csc.T @ urm.csc).toarray()
    n = urm.n_items
    rows, cols, vals = [], [], []
    unconverged = []
    for j in range(n):
        w, _, ok = slim_mse_column(gram, j, cfg.l1, cfg.l2, max(cfg.epochs, 1), cfg.tol)
        if not ok:
            unconverged.append(j)
        nz = np.flatnonzero(w)
        rows.append(nz)
        cols.append(np.full(len(nz), j))
        vals.append(w[nz])
    if unconverged:
        log.warning("SLIM MSE: %d of %d columns hit the sweep cap", len(unconverged), n)
    m = sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return _finish(m, cfg.k, meta={"unconverged_columns": unconverged})


def sample_bpr_triples(urm: InteractionMatrix, n: int, rng: np.random.Generator):
    """Draw ``n`` (user, positive, negative) triples.

    Users are uniform among those with at least one interaction and at least one
    non-interacted item; negatives are drawn uniformly by rejection.
    """
    csr = urm.csr
    deg = np.diff(csr.indptr)
    eligible = np.flatnonzero((deg > 0) & (deg < urm.n_items))
    if n == 0 or len(eligible) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy(), empty.copy()
    users = eligible[rng.integers(len(eligible), size=n)]
    pos = csr.indices[csr.indptr[users] + (rng.random(n) * deg[users]).astype(np.int64)]
    seen = np.sort(np.repeat(np.arange(urm.n_users), deg).astype(np.int64) * urm.n_items + csr.indices)
    neg = np.empty(n, dtype=np.int64)
    todo = np.arange(n)
    while len(todo):
        cand = rng.integers(urm.n_items, size=len(todo))
        keys = users[todo] * urm.n_items + cand
        hit = np.searchsorted(seen, keys)
        clash = (hit < len(seen)) & (seen[np.minimum(hit, len(seen) - 1)] == keys)
        neg[todo[~clash]] = cand[~clash]
        todo = todo[clash]
    return users.astype(np.int64), pos.astype(np.int64), neg


def slim_bpr_step(w: np.ndarray, profile: np.ndarray, pos: int, neg: int, lr: float, l2: float) -> float:
    """One in-place SGD ascent step on ``ln sigmoid(x_pos - x_neg)``; returns the pre-step gap."""
    others = profile[profile != pos]
    x = w[others, pos].sum() - w[profile, neg].sum()
    z = 1.0 / (1.0 + np.exp(x))
    w[others, pos] += lr * (z - l2 * w[others, pos])
    w[profile, neg] += lr * (-z - l2 * w[profile, neg])
    return x


def bpr_loss(w: np.ndarray, urm: InteractionMatrix, triples) -> float:
    """Mean ``-ln sigmoid(x_ui - x_uj)`` of item-item weights ``w`` over ``triples``."""
    users, pos, neg = triples
    if len(users) == 0:
        return 0.0
    csr = urm.csr
    xs = np.empty(len(users))
    for t, (u, i, j) in enumerate(zip(users, pos, neg)):
        prof = csr.indices[csr.indptr[u]:csr.indptr[u + 1]]
        xs[t] = w[prof[prof != i], i].sum() - w[prof, j].sum()
    return float(np.mean(np.logaddexp(0.0, -xs)))


def slim_bpr_weights(urm: InteractionMatrix, cfg: SlimConfig) -> np.ndarray:
    """Dense item-item weights trained by BPR SGD; one epoch is ``nnz`` samples."""
    b = urm.binarized()
    n = b.n_items
    w = np.zeros((n, n))
    rng = np.random.default_rng(cfg.seed)
    csr = b.csr
    for epoch in range(cfg.epochs):
        users, pos, neg = sample_bpr_triples(b, b.nnz, rng)
        for u, i, j in zip(users, pos, neg):
            slim_bpr_step(w, csr.indices[csr.indptr[u]:csr.indptr[u + 1]], i, j, cfg.learning_rate, cfg.l2)
        log.debug("SLIM BPR epoch %d done", epoch + 1)
    return w


def slim_bpr(urm: InteractionMatrix, cfg: SlimConfig) -> SimilarityMatrix:
    return _finish(sps.coo_matrix(slim_bpr_weights(urm, cfg)), cfg.k)


BUILDERS = {
    "knn": (KnnConfig, knn_similarity),
    "p3alpha": (GraphConfig, p3alpha),
    "rp3beta": (GraphConfig, rp3beta),
    "slim_mse": (SlimConfig, slim_mse),
    "slim_bpr": (SlimConfig, slim_bpr),
}


def build_similarity(name: str, urm: InteractionMatrix, **params) -> SimilarityMatrix:
    """Build a collaborative similarity by algorithm name with keyword parameters."""
    try:
        cfg_cls, fn = BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}, expected one of {sorted(BUILDERS)}") from None
    return fn(urm, cfg_cls(**params))


def write_similarity(path, s: SimilarityMatrix) -> None:
    coo = s.csc.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n_items={s.n_items} diagonal_excluded={int(s.diagonal_excluded)}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r}\t{c}\t{float(v)!r}\n")


def read_similarity(path) -> SimilarityMatrix:
    rows, cols, vals = [], [], []
    n_items, diag_ex = None, True
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    if key == "n_items":
                        n_items = int(val)
                    elif key == "diagonal_excluded":
                        diag_ex = bool(int(val))
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'row<TAB>col<TAB>score'")
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(float(parts[2]))
    if n_items is None:
        n_items = max(max(rows, default=-1), max(cols, default=-1)) + 1
    return SimilarityMatrix.from_triples(rows, cols, vals, n_items, diagonal_excluded=diag_ex)
