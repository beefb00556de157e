"""Dataset loading, filtering and the warm/cold item split.

File formats (UTF-8, tab separated, ``#`` starts a comment line):

* interactions: ``user_id  item_id  rating``
* features: ``item_id  feature_id  [value]`` (value defaults to 1.0)
* split manifest: ``item_id  A|B|C``
"""

from __future__ import annotations

import contextlib
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sps

from .core import FeatureMatrix, InteractionMatrix

log = logging.getLogger(__name__)

SPLIT_LABELS = ("A", "B", "C")


class DataFormatError(ValueError):
    """A data file could not be parsed; the message names file and line."""


class LeakageError(RuntimeError):
    """Cold-split interactions were requested while the bundle was sealed."""


class EmptyCoreWarning(UserWarning):
    pass


@dataclass
class RawDatasetConfig:
    interactions_path: str | Path
    features_path: str | Path
    min_items_per_feature: int = 5
    max_feature_item_share: float = 0.30
    user_core: int = 0
    item_core: int = 0

    def __post_init__(self):
        if not 0 < self.max_feature_item_share <= 1:
            raise ValueError("max_feature_item_share must be in (0, 1]")
        if self.user_core < 0 or self.item_core < 0:
            raise ValueError("core sizes must be >= 0")


class IdMap:
    """Bijection between external string ids and dense indices (first-seen order)."""

    def __init__(self, ids=()):
        self.ids: list[str] = []
        self.index: dict[str, int] = {}
        for x in ids:
            self.add(x)

    def add(self, key: str) -> int:
        idx = self.index.get(key)
        if idx is None:
            idx = self.index[key] = len(self.ids)
            self.ids.append(key)
        return idx

    def subset(self, keep) -> "IdMap":
        keep = np.asarray(keep, dtype=bool)
        return IdMap(x for x, k in zip(self.ids, keep) if k)

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, idx: int) -> str:
        return self.ids[idx]

    def __eq__(self, other):
        return isinstance(other, IdMap) and self.ids == other.ids


class Dataset(NamedTuple):
    urm: InteractionMatrix
    icm: FeatureMatrix
    users: IdMap
    items: IdMap
    features: IdMap


def _rows(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line.split("\t")


def read_interactions(path, users: IdMap | None = None, items: IdMap | None = None):
    """Parse an interactions file into ``(urm, users, items)``."""
    users = IdMap() if users is None else users
    items = IdMap() if items is None else items
    u_idx, i_idx, vals = [], [], []
    seen: dict[tuple[int, int], int] = {}
    for lineno, parts in _rows(path):
        if len(parts) != 3:
            raise DataFormatError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        try:
            rating = float(parts[2])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: rating {parts[2]!r} is not a number") from None
        if not math.isfinite(rating) or rating <= 0:
            raise DataFormatError(f"{path}:{lineno}: rating must be finite and > 0, got {parts[2]!r}")
        u, i = users.add(parts[0]), items.add(parts[1])
        if (u, i) in seen:
            raise DataFormatError(
                f"{path}:{lineno}: duplicate pair (user {parts[0]!r}, item {parts[1]!r}), "
                f"first seen on line {seen[(u, i)]}"
            )
        seen[(u, i)] = lineno
        u_idx.append(u)
        i_idx.append(i)
        vals.append(rating)
    urm = InteractionMatrix.from_triples(u_idx, i_idx, vals, len(users), len(items))
    return urm, users, items


def read_features(path, items: IdMap, features: IdMap | None = None):
    """Parse a features file. Unknown item ids are appended to ``items``."""
    features = IdMap() if features is None else features
    it, ft, vals = [], [], []
    seen: set[tuple[int, int]] = set()
    for lineno, parts in _rows(path):
        if len(parts) not in (2, 3):
            raise DataFormatError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields, got {len(parts)}")
        value = 1.0
        if len(parts) == 3:
            try:
                value = float(parts[2])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: value {parts[2]!r} is not a number") from None
            if not math.isfinite(value) or value < 0:
                raise DataFormatError(f"{path}:{lineno}: feature value must be finite and >= 0")
        i, f = items.add(parts[0]), features.add(parts[1])
        if (i, f) in seen:
            raise DataFormatError(f"{path}:{lineno}: duplicate pair (item {parts[0]!r}, feature {parts[1]!r})")
        seen.add((i, f))
        it.append(i)
        ft.append(f)
        vals.append(value)
    return FeatureMatrix.from_triples(it, ft, vals, len(items), len(features)), features


def load_dataset(cfg: RawDatasetConfig) -> Dataset:
    """Read both files with dense indexing; no filtering is applied here."""
    urm, users, items = read_interactions(cfg.interactions_path)
    icm, features = read_features(cfg.features_path, items)
    if len(items) > urm.n_items:
        # items that only appear in the features file
        urm = InteractionMatrix(urm.csr, shape=(urm.n_users, len(items)))
    return Dataset(urm, icm, users, items, features)


def write_interactions(path, urm: InteractionMatrix, users: IdMap | None = None, items: IdMap | None = None):
    u, i, r = urm.triples()
    with open(path, "w", encoding="utf-8") as fh:
        for a, b, c in zip(u, i, r):
            ua = users[a] if users is not None else str(a)
            ib = items[b] if items is not None else str(b)
            fh.write(f"{ua}\t{ib}\t{float(c)!r}\n")


def write_features(path, icm: FeatureMatrix, items: IdMap | None = None, features: IdMap | None = None):
    coo = icm.csr.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        for a, b, c in zip(coo.row, coo.col, coo.data):
            ia = items[a] if items is not None else str(a)
            fb = features[b] if features is not None else str(b)
            fh.write(f"{ia}\t{fb}\t{float(c)!r}\n")


def feature_keep_mask(icm: FeatureMatrix, min_items: int, max_share: float) -> np.ndarray:
    counts = icm.feature_item_counts()
    # tolerance guards against 0.3 * 100 evaluating below 30
    upper = math.floor(max_share * icm.n_items + 1e-9)
    return (counts >= min_items) & (counts <= upper)


def filter_features(icm: FeatureMatrix, min_items: int = 5, max_share: float = 0.30) -> FeatureMatrix:
    """Drop features used by fewer than ``min_items`` items or by more than ``max_share`` of them.

    Surviving features are re-indexed densely; item indices are untouched.
    """
    keep = feature_keep_mask(icm, min_items, max_share)
    return FeatureMatrix(icm.csr[:, np.flatnonzero(keep)])


def k_core(urm: InteractionMatrix, user_core: int, item_core: int) -> InteractionMatrix:
    """Iteratively delete users/items below their core size until nothing changes.

    The shape is preserved; removed users and items simply lose their entries.
    """
    if user_core < 0 or item_core < 0:
        raise ValueError("core sizes must be >= 0")
    m = urm.csr.copy()
    m.data = np.ones_like(m.data)
    user_alive = np.ones(urm.n_users, dtype=bool)
    item_alive = np.ones(urm.n_items, dtype=bool)
    while True:
        u_deg = np.asarray(m.sum(axis=1)).ravel()
        i_deg = np.asarray(m.sum(axis=0)).ravel()
        bad_u = user_alive & (u_deg < user_core)
        bad_i = item_alive & (i_deg < item_core)
        if not bad_u.any() and not bad_i.any():
            break
        user_alive &= ~bad_u
        item_alive &= ~bad_i
        coo = m.tocoo()
        keep = user_alive[coo.row] & item_alive[coo.col]
        m = sps.coo_matrix((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=m.shape).tocsr()
    coo = urm.csr.tocoo()
    keep = user_alive[coo.row] & item_alive[coo.col]
    out = InteractionMatrix(
        sps.coo_matrix((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=urm.shape)
    )
    if out.nnz == 0 and urm.nnz > 0:
        warnings.warn(
            f"k-core with user_core={user_core}, item_core={item_core} removed every interaction",
            EmptyCoreWarning,
            stacklevel=2,
        )
    return out


def drop_empty(ds: Dataset) -> Dataset:
    """Remove users and items left without interactions, re-indexing densely."""
    u_keep = np.diff(ds.urm.csr.indptr) > 0
    i_keep = np.diff(ds.urm.csc.indptr) > 0
    urm = InteractionMatrix(ds.urm.csr[np.flatnonzero(u_keep)][:, np.flatnonzero(i_keep)])
    icm = FeatureMatrix(ds.icm.csr[np.flatnonzero(i_keep)])
    return Dataset(urm, icm, ds.users.subset(u_keep), ds.items.subset(i_keep), ds.features)


def prepare_dataset(ds: Dataset, cfg: RawDatasetConfig) -> Dataset:
    """k-core, drop empty rows/columns, then filter features on the full item set."""
    urm = ds.urm
    if cfg.user_core or cfg.item_core:
        urm = k_core(urm, cfg.user_core, cfg.item_core)
    ds = drop_empty(ds._replace(urm=urm))
    keep = feature_keep_mask(ds.icm, cfg.min_items_per_feature, cfg.max_feature_item_share)
    icm = FeatureMatrix(ds.icm.csr[:, np.flatnonzero(keep)])
    log.info(
        "prepared dataset: %d users, %d items, %d interactions, %d/%d features kept",
        ds.urm.n_users, ds.urm.n_items, ds.urm.nnz, icm.n_features, len(ds.features),
    )
    return ds._replace(icm=icm, features=ds.features.subset(keep))


def largest_remainder(n: int, ratios) -> list[int]:
    """Integer sizes proportional to ``ratios`` that sum exactly to ``n``."""
    ratios = np.asarray(ratios, dtype=np.float64)
    raw = ratios / ratios.sum() * n
    sizes = np.floor(raw + 1e-9).astype(int)
    short = n - sizes.sum()
    # biggest fractional part first, earlier split on ties
    order = sorted(range(len(raw)), key=lambda k: (-(raw[k] - sizes[k]), k))
    for k in order[:short]:
        sizes[k] += 1
    return sizes.tolist()


class SplitBundle:
    """Items partitioned into A (warm train), B (warm validation) and C (cold test).

    ``holdout_mask`` flags, in row-major entry order of the full URM, the warm
    interactions reserved for tuning the collaborative model. While the bundle
    is sealed, reading :attr:`cold_test` raises :class:`LeakageError`; every
    read is recorded in ``access_log`` with the current stage label.
    """

    def __init__(self, urm: InteractionMatrix, item_assignment, holdout_mask):
        self.item_assignment = np.asarray(item_assignment, dtype="<U1")
        if self.item_assignment.shape != (urm.n_items,):
            raise ValueError("item_assignment must have one label per item")
        if not np.isin(self.item_assignment, SPLIT_LABELS).all():
            raise ValueError("item labels must be A, B or C")
        self.holdout_mask = np.asarray(holdout_mask, dtype=bool)
        if self.holdout_mask.shape != (urm.nnz,):
            raise ValueError("holdout_mask must have one flag per interaction")
        _, items, _ = urm.triples()
        if np.any(self.holdout_mask & (self.item_assignment[items] == "C")):
            raise ValueError("holdout_mask may only flag warm interactions")
        self.n_users, self.n_items = urm.shape
        self.warm_train = urm.restrict_items(self.item_assignment == "A")
        self.warm_validation = urm.restrict_items(self.item_assignment == "B")
        self.warm = urm.restrict_items(self.item_assignment != "C")
        self._cold = urm.restrict_items(self.item_assignment == "C")
        warm_entries = self.item_assignment[items] != "C"
        self.warm_fit = urm.select_entries(warm_entries & ~self.holdout_mask)
        self.warm_holdout = urm.select_entries(self.holdout_mask)
        self.sealed = False
        self.stage = "unstaged"
        self.access_log: list[str] = []

    def items(self, label: str) -> np.ndarray:
        return np.flatnonzero(self.item_assignment == label)

    @property
    def cold_test(self) -> InteractionMatrix:
        if self.sealed:
            raise LeakageError(f"cold split read during sealed stage {self.stage!r}")
        self.access_log.append(self.stage)
        return self._cold

    def seal(self) -> None:
        self.sealed = True

    def unseal(self) -> None:
        self.sealed = False

    @contextlib.contextmanager
    def staged(self, name: str, sealed: bool):
        """Run a block under a stage label, sealed or not, restoring the previous state."""
        prev = self.stage, self.sealed
        self.stage, self.sealed = name, sealed
        try:
            yield self
        finally:
            self.stage, self.sealed = prev


def _holdout_mask(urm: InteractionMatrix, warm_entries: np.ndarray, fraction: float, rng, min_user: int = 5):
    mask = np.zeros(urm.nnz, dtype=bool)
    if fraction <= 0:
        return mask
    indptr = urm.csr.indptr
    for u in range(urm.n_users):
        pos = np.arange(indptr[u], indptr[u + 1])
        pos = pos[warm_entries[pos]]
        if len(pos) < min_user:
            continue
        n_out = max(1, int(round(fraction * len(pos))))
        mask[rng.choice(pos, size=n_out, replace=False)] = True
    return mask


def bundle_from_assignment(urm: InteractionMatrix, item_assignment, seed=0, holdout: float = 0.2) -> SplitBundle:
    item_assignment = np.asarray(item_assignment, dtype="<U1")
    rng = np.random.default_rng([0x5EED, int(seed)])
    _, items, _ = urm.triples()
    warm_entries = item_assignment[items] != "C"
    return SplitBundle(urm, item_assignment, _holdout_mask(urm, warm_entries, holdout, rng))


def split_cold_items(urm: InteractionMatrix, ratios=(0.6, 0.2, 0.2), seed=0, holdout: float = 0.2) -> SplitBundle:
    """Randomly assign items to A/B/C with largest-remainder sizes, then draw the warm holdout."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive fractions, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    sizes = largest_remainder(urm.n_items, ratios)
    if min(sizes) == 0:
        empty = [lab for lab, n in zip(SPLIT_LABELS, sizes) if n == 0]
        raise ValueError(f"split {', '.join(empty)} would receive zero of {urm.n_items} items")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(urm.n_items)
    assignment = np.empty(urm.n_items, dtype="<U1")
    assignment[perm[: sizes[0]]] = "A"
    assignment[perm[sizes[0]: sizes[0] + sizes[1]]] = "B"
    assignment[perm[sizes[0] + sizes[1]:]] = "C"
    return bundle_from_assignment(urm, assignment, seed=seed, holdout=holdout)


def write_split_manifest(path, bundle: SplitBundle, items: IdMap | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, label in enumerate(bundle.item_assignment):
            fh.write(f"{items[i] if items is not None else i}\t{label}\n")


def read_split_manifest(path, items: IdMap | None = None) -> np.ndarray:
    """Return per-item labels ordered by ``items`` (or by integer id when no map is given)."""
    labels: dict[str, str] = {}
    for lineno, parts in _rows(path):
        if len(parts) != 2 or parts[1] not in SPLIT_LABELS:
            raise DataFormatError(f"{path}:{lineno}: expected 'item_id<TAB>A|B|C'")
        labels[parts[0]] = parts[1]
    keys = items.ids if items is not None else [str(i) for i in range(len(labels))]
    missing = [k for k in keys if k not in labels]
    if missing:
        raise DataFormatError(f"{path}: no split label for {len(missing)} item(s), e.g. {missing[0]!r}")
    return np.array([labels[k] for k in keys], dtype="<U1")
