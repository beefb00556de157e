"""Collaborative-boosted feature weighting.

The content similarity of items ``i`` and ``j`` is the bilinear form
``f_i^T (diag(d) + V^T V) f_j``. :func:`train_cfw` fits ``d`` (and optionally
``V``) so that this similarity reproduces a given collaborative similarity,
minimising half the squared error over item pairs plus ridge penalties, with
mini-batch Adam. :func:`train_fbsm` fits the same model directly on user
interactions with a BPR loss and serves as the embedded baseline.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .cfsim import sample_bpr_triples
from .core import FeatureMatrix, FeatureWeights, InteractionMatrix, SimilarityMatrix, _topk_columns

log = logging.getLogger(__name__)

FORMAT_HEADER = "# cfwrec feature weights v1"


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass
class CfwTrainConfig:
    n_latent: int = 0
    lam: float = 0.0
    beta: float = 0.0
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 50
    zero_sample_ratio: float = 1.0
    symmetrize_target: bool = True
    seed: int = 0
    batch_size: int = 128
    squared_norms: bool = True
    clamp_d: bool = False
    init_d_scale: float = 0.1

    def __post_init__(self):
        if self.n_latent < 0:
            raise ValueError("n_latent must be >= 0")
        if self.lam < 0 or self.beta < 0:
            raise ValueError("regularization weights must be >= 0")
        if not 0 < self.adam_beta1 < 1 or not 0 < self.adam_beta2 < 1:
            raise ValueError("Adam decay rates must lie in (0, 1)")
        if self.zero_sample_ratio < 0:
            raise ValueError("zero_sample_ratio must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AdamState:
    m_d: np.ndarray
    s_d: np.ndarray
    m_v: np.ndarray | None = None
    s_v: np.ndarray | None = None
    step_count: int = 0

    @classmethod
    def zeros_like(cls, w: FeatureWeights) -> "AdamState":
        if w.v is None:
            return cls(np.zeros_like(w.d), np.zeros_like(w.d))
        return cls(np.zeros_like(w.d), np.zeros_like(w.d), np.zeros_like(w.v), np.zeros_like(w.v))


@dataclass
class TrainTrace:
    mse_term: list[float] = field(default_factory=list)
    reg_term: list[float] = field(default_factory=list)
    n_pairs: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.mse_term)


def init_weights(n_features: int, n_latent: int, rng: np.random.Generator, d_scale: float = 0.1) -> FeatureWeights:
    d = rng.uniform(0.0, d_scale, n_features)
    if n_latent == 0:
        return FeatureWeights(d)
    v = rng.normal(0.0, 0.01 / math.sqrt(n_latent), (n_latent, n_features))
    return FeatureWeights(d, v)


def bilinear_similarity(icm: FeatureMatrix, w: FeatureWeights, i: int, j: int) -> float:
    fi = icm.csr.getrow(i)
    fj = icm.csr.getrow(j)
    shared = fi.multiply(fj).tocoo()
    score = float(shared.data @ w.d[shared.col])
    if w.v is not None:
        score += float((fi @ w.v.T).ravel() @ (fj @ w.v.T).ravel())
    return score


def _pair_products(f: sps.csr_matrix, rows, cols) -> sps.csr_matrix:
    return f[rows].multiply(f[cols]).tocsr()


def _predict(w: FeatureWeights, f: sps.csr_matrix, rows, cols, prods=None, proj=None):
    prods = _pair_products(f, rows, cols) if prods is None else prods
    s_hat = prods @ w.d
    if w.v is not None:
        proj = (f @ w.v.T) if proj is None else proj
        s_hat = s_hat + np.einsum("pk,pk->p", proj[rows], proj[cols])
    return s_hat


def _lookup(target: SimilarityMatrix, rows, cols) -> np.ndarray:
    if len(rows) == 0:
        return np.zeros(0)
    return np.asarray(target.csr[rows, cols]).ravel()


def _as_pairs(pairs):
    rows, cols = pairs
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if np.any(rows == cols):
        raise ValueError("pairs must not contain diagonal (i, i) entries")
    return rows, cols


def regularization(w: FeatureWeights, cfg: CfwTrainConfig) -> float:
    nd = float(w.d @ w.d)
    nv = 0.0 if w.v is None else float(np.sum(w.v * w.v))
    if cfg.squared_norms:
        return cfg.lam * nd + cfg.beta * nv
    return cfg.lam * math.sqrt(nd) + cfg.beta * math.sqrt(nv)


def _reg_gradients(w: FeatureWeights, cfg: CfwTrainConfig):
    if cfg.squared_norms:
        gd = 2.0 * cfg.lam * w.d
        gv = None if w.v is None else 2.0 * cfg.beta * w.v
        return gd, gv
    nd = np.linalg.norm(w.d)
    gd = cfg.lam * w.d / nd if nd > 0 else np.zeros_like(w.d)
    gv = None
    if w.v is not None:
        nv = np.linalg.norm(w.v)
        gv = cfg.beta * w.v / nv if nv > 0 else np.zeros_like(w.v)
    return gd, gv


def cfw_loss(w: FeatureWeights, target: SimilarityMatrix, icm: FeatureMatrix, pairs, cfg: CfwTrainConfig):
    """Return ``(mse_term, reg_term)`` over the given off-diagonal pairs."""
    rows, cols = _as_pairs(pairs)
    err = _predict(w, icm.csr, rows, cols) - _lookup(target, rows, cols)
    return 0.5 * float(err @ err), regularization(w, cfg)


def _data_gradients(w: FeatureWeights, f: sps.csr_matrix, rows, cols, tgt):
    prods = _pair_products(f, rows, cols)
    proj = None if w.v is None else f @ w.v.T
    err = _predict(w, f, rows, cols, prods, proj) - tgt
    grad_d = prods.T @ err
    grad_v = None
    if w.v is not None:
        # sum_p e_p (V f_i f_j^T + V f_j f_i^T)
        grad_v = (f[cols].T @ (proj[rows] * err[:, None])).T + (f[rows].T @ (proj[cols] * err[:, None])).T
        grad_v = np.asarray(grad_v)
    return err, np.asarray(grad_d).ravel(), grad_v


def cfw_gradients(w: FeatureWeights, target: SimilarityMatrix, icm: FeatureMatrix, pairs, cfg: CfwTrainConfig):
    """Analytic gradients of ``mse_term + reg_term`` with respect to ``d`` and ``V``."""
    rows, cols = _as_pairs(pairs)
    _, gd, gv = _data_gradients(w, icm.csr, rows, cols, _lookup(target, rows, cols))
    rd, rv = _reg_gradients(w, cfg)
    return gd + rd, (None if gv is None else gv + rv)


def adam_step(state: AdamState, w: FeatureWeights, grads, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam update of ``d`` and ``V``; returns new state and weights."""
    grad_d, grad_v = grads
    t = state.step_count + 1
    m_d = beta1 * state.m_d + (1 - beta1) * grad_d
    s_d = beta2 * state.s_d + (1 - beta2) * grad_d ** 2
    c1 = 1 - beta1 ** t
    c2 = 1 - beta2 ** t
    d = w.d - lr * (m_d / c1) / (np.sqrt(s_d / c2) + eps)
    if w.v is None:
        return AdamState(m_d, s_d, None, None, t), FeatureWeights(d)
    m_v = beta1 * state.m_v + (1 - beta1) * grad_v
    s_v = beta2 * state.s_v + (1 - beta2) * grad_v ** 2
    v = w.v - lr * (m_v / c1) / (np.sqrt(s_v / c2) + eps)
    return AdamState(m_d, s_d, m_v, s_v, t), FeatureWeights(d, v)


def _sample_zero_pairs(n_items: int, nonzero_keys: np.ndarray, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    available = n_items * (n_items - 1) - len(nonzero_keys)
    if n <= 0 or available <= 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    rows = np.empty(n, dtype=np.int64)
    cols = np.empty(n, dtype=np.int64)
    todo = np.arange(n)
    while len(todo):
        r = rng.integers(n_items, size=len(todo))
        c = rng.integers(n_items, size=len(todo))
        keys = r * n_items + c
        pos = np.searchsorted(nonzero_keys, keys)
        hit = (pos < len(nonzero_keys)) & (nonzero_keys[np.minimum(pos, len(nonzero_keys) - 1)] == keys)
        ok = (r != c) & ~hit
        rows[todo[ok]] = r[ok]
        cols[todo[ok]] = c[ok]
        todo = todo[~ok]
    return rows, cols


def train_cfw(target: SimilarityMatrix, icm: FeatureMatrix, cfg: CfwTrainConfig | None = None):
    """Fit feature weights so the weighted content similarity matches ``target``.

    Each epoch trains on every stored target entry plus
    ``zero_sample_ratio * nnz`` freshly drawn absent pairs (target 0). The
    regularizer is spread across mini-batches in proportion to batch size.
    Returns ``(weights, trace)``.
    """
    cfg = cfg or CfwTrainConfig()
    if target.n_items != icm.n_items:
        raise ValueError(f"target covers {target.n_items} items but the ICM has {icm.n_items}")
    rng = np.random.default_rng(cfg.seed)
    w = init_weights(icm.n_features, cfg.n_latent, rng, cfg.init_d_scale)
    s = target.csr
    if cfg.symmetrize_target:
        s = ((s + s.T) * 0.5).tocsr()
    s = s.tocoo()
    off = (s.row != s.col) & (s.data != 0)
    nz_rows = s.row[off].astype(np.int64)
    nz_cols = s.col[off].astype(np.int64)
    nz_vals = s.data[off].astype(np.float64)
    nz_keys = np.sort(nz_rows * icm.n_items + nz_cols)
    n_zero = int(round(cfg.zero_sample_ratio * len(nz_rows)))
    f = icm.csr
    state = AdamState.zeros_like(w)
    trace = TrainTrace()
    for epoch in range(1, cfg.epochs + 1):
        zr, zc = _sample_zero_pairs(icm.n_items, nz_keys, n_zero, rng)
        rows = np.concatenate([nz_rows, zr])
        cols = np.concatenate([nz_cols, zc])
        tgt = np.concatenate([nz_vals, np.zeros(len(zr))])
        n_pairs = len(rows)
        if n_pairs == 0:
            break
        order = rng.permutation(n_pairs)
        for start in range(0, n_pairs, cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            _, gd, gv = _data_gradients(w, f, rows[b], cols[b], tgt[b])
            rd, rv = _reg_gradients(w, cfg)
            share = len(b) / n_pairs
            gd = gd + share * rd
            if gv is not None:
                gv = gv + share * rv
            state, w = adam_step(state, w, (gd, gv), cfg.learning_rate,
                                 cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
            if cfg.clamp_d:
                w.d = np.maximum(w.d, 0.0)
        err = _predict(w, f, rows, cols) - tgt
        mse = 0.5 * float(err @ err)
        reg = regularization(w, cfg)
        if not (math.isfinite(mse) and math.isfinite(reg)):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch} (mse={mse}, reg={reg})")
        trace.mse_term.append(mse)
        trace.reg_term.append(reg)
        trace.n_pairs.append(n_pairs)
        log.debug("CFW epoch %d: mse %.6g reg %.6g over %d pairs", epoch, mse, reg, n_pairs)
    return w, trace


def weighted_content_similarity(icm: FeatureMatrix, w: FeatureWeights, k: int = 100,
                                block_size: int = 1024) -> SimilarityMatrix:
    """Item-item similarity under the learned weights, diagonal dropped, top-``k`` per column."""
    if w.n_features != icm.n_features:
        raise ValueError(f"weights cover {w.n_features} features but the ICM has {icm.n_features}")
    f = icm.csr
    fd = sps.csr_matrix(f.multiply(w.d[None, :]))
    n = icm.n_items
    if w.v is None:
        return SimilarityMatrix(_topk_columns(_drop_diag(fd @ f.T), k))
    proj = np.asarray(f @ w.v.T)
    blocks = []
    for lo in range(0, n, block_size):
        hi = min(n, lo + block_size)
        dense = np.asarray((fd @ f[lo:hi].T).todense()) + proj @ proj[lo:hi].T
        dense[np.arange(lo, hi), np.arange(hi - lo)] = 0.0
        blocks.append(_topk_columns(sps.csc_matrix(dense), k))
    return SimilarityMatrix(sps.hstack(blocks, format="csc"))


def _drop_diag(m) -> sps.csc_matrix:
    coo = sps.coo_matrix(m)
    off = coo.row != coo.col
    out = sps.csc_matrix((coo.data[off], (coo.row[off], coo.col[off])), shape=coo.shape)
    out.eliminate_zeros()
    return out


def fbsm_bpr_step(w: FeatureWeights, profile_pos: np.ndarray, f_pos: np.ndarray,
                  profile_neg: np.ndarray, f_neg: np.ndarray, lr: float,
                  lam: float = 0.0, beta: float = 0.0) -> float:
    """One in-place SGD ascent step of ``ln sigmoid(x_pos - x_neg)`` for the bilinear scorer.

    ``profile_*`` is the summed feature vector of the user's other items, so
    ``x = profile^T W f``. Returns the pre-step score gap.
    """
    x_pos = profile_pos @ (w.d * f_pos)
    x_neg = profile_neg @ (w.d * f_neg)
    if w.v is not None:
        vp_pos, vf_pos = w.v @ profile_pos, w.v @ f_pos
        vp_neg, vf_neg = w.v @ profile_neg, w.v @ f_neg
        x_pos += vp_pos @ vf_pos
        x_neg += vp_neg @ vf_neg
    x = x_pos - x_neg
    z = 1.0 / (1.0 + math.exp(x)) if x > -700 else 1.0
    grad_d = z * (profile_pos * f_pos - profile_neg * f_neg) - 2.0 * lam * w.d
    if w.v is not None:
        grad_v = z * (np.outer(vp_pos, f_pos) + np.outer(vf_pos, profile_pos)
                      - np.outer(vp_neg, f_neg) - np.outer(vf_neg, profile_neg)) - 2.0 * beta * w.v
        w.v += lr * grad_v
    w.d += lr * grad_d
    return float(x)


def _fbsm_vectors(profiles: sps.csr_matrix, f: sps.csr_matrix, u: int, i: int, j: int):
    prof = profiles.getrow(u).toarray().ravel()
    fi = f.getrow(i).toarray().ravel()
    fj = f.getrow(j).toarray().ravel()
    return prof - fi, fi, prof, fj


def fbsm_bpr_loss(w: FeatureWeights, urm: InteractionMatrix, icm: FeatureMatrix, triples) -> float:
    """Mean ``-ln sigmoid(x_ui - x_uj)`` of the bilinear scorer over ``triples``."""
    users, pos, neg = triples
    if len(users) == 0:
        return 0.0
    f = icm.csr
    profiles = (urm.binarized().csr @ f).tocsr()
    gaps = np.empty(len(users))
    wm = np.diag(w.d) if w.v is None else np.diag(w.d) + w.v.T @ w.v
    for t, (u, i, j) in enumerate(zip(users, pos, neg)):
        a_i, fi, a_j, fj = _fbsm_vectors(profiles, f, u, i, j)
        gaps[t] = a_i @ wm @ fi - a_j @ wm @ fj
    return float(np.mean(np.logaddexp(0.0, -gaps)))


def train_fbsm(urm: InteractionMatrix, icm: FeatureMatrix, cfg: CfwTrainConfig | None = None) -> FeatureWeights:
    """Fit the bilinear weights on interactions with BPR and plain SGD (one epoch = nnz triples)."""
    cfg = cfg or CfwTrainConfig()
    if urm.n_items != icm.n_items:
        raise ValueError(f"URM has {urm.n_items} items but the ICM has {icm.n_items}")
    rng = np.random.default_rng(cfg.seed)
    w = init_weights(icm.n_features, cfg.n_latent, rng, cfg.init_d_scale)
    b = urm.binarized()
    f = icm.csr
    profiles = (b.csr @ f).tocsr()
    for epoch in range(1, cfg.epochs + 1):
        users, pos, neg = sample_bpr_triples(b, b.nnz, rng)
        for u, i, j in zip(users, pos, neg):
            fbsm_bpr_step(w, *_fbsm_vectors(profiles, f, u, i, j), cfg.learning_rate, cfg.lam, cfg.beta)
        if not np.all(np.isfinite(w.d)) or (w.v is not None and not np.all(np.isfinite(w.v))):
            raise TrainingDivergedError(f"non-finite FBSM weights at epoch {epoch}")
        if cfg.clamp_d:
            w.d = np.maximum(w.d, 0.0)
    return w


def write_weights(path, w: FeatureWeights) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(FORMAT_HEADER + "\n")
        fh.write(f"n_features\t{w.n_features}\n")
        fh.write(f"n_latent\t{w.n_latent}\n")
        for idx, val in enumerate(w.d):
            fh.write(f"d\t{idx}\t{float(val)!r}\n")
        if w.v is not None:
            for (r, c), val in np.ndenumerate(w.v):
                fh.write(f"v\t{r}\t{c}\t{float(val)!r}\n")


def read_weights(path) -> FeatureWeights:
    n_features = n_latent = None
    d = v = None
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != FORMAT_HEADER:
            raise ValueError(f"{path}: not a feature weights file (header {first!r})")
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").split("\t")
            if parts == [""]:
                continue
            tag = parts[0]
            if tag == "n_features":
                n_features = int(parts[1])
                d = np.zeros(n_features)
            elif tag == "n_latent":
                n_latent = int(parts[1])
                v = np.zeros((n_latent, n_features)) if n_latent else None
            elif tag == "d":
                d[int(parts[1])] = float(parts[2])
            elif tag == "v":
                v[int(parts[1]), int(parts[2])] = float(parts[3])
            else:
                raise ValueError(f"{path}:{lineno}: unknown record {tag!r}")
    if n_features is None or n_latent is None:
        raise ValueError(f"{path}: missing n_features/n_latent header")
    return FeatureWeights(d, v)
