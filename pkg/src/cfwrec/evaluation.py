"""Top-N ranking metrics, cold-item evaluation and grid search."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .core import InteractionMatrix, SimilarityMatrix
from .ingest import LeakageError, SplitBundle

log = logging.getLogger(__name__)

METRICS = ("precision", "recall", "mrr", "map", "ndcg")
METRIC_LABELS = {"precision": "Precision", "recall": "Recall", "mrr": "MRR", "map": "MAP", "ndcg": "NDCG"}


class EmptyEvaluationError(ValueError):
    """No user had a relevant item in the evaluated split."""


class GridSearchError(RuntimeError):
    def __init__(self, failures):
        self.failures = failures
        lines = "; ".join(f"{params}: {err!r}" for params, err in failures)
        super().__init__(f"every grid point failed: {lines}")


@dataclass(frozen=True)
class MetricRow:
    precision: float
    recall: float
    mrr: float
    map: float
    ndcg: float


@dataclass
class MetricReport:
    precision: float
    recall: float
    mrr: float
    map: float
    ndcg: float
    cutoff: int
    n_users_evaluated: int
    n_users_skipped: int = 0
    name: str = ""

    def as_dict(self) -> dict:
        return asdict(self)

    def metric(self, name: str) -> float:
        if name not in METRICS:
            raise KeyError(f"unknown metric {name!r}")
        return getattr(self, name)


def recommend(profile_items, profile_ratings, s: SimilarityMatrix, candidates, n: int) -> np.ndarray:
    """Top-``n`` candidates by ``sum_i profile[i] * s[i, j]``; ties go to the lower item index.

    Items present in the profile are never returned.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    if len(candidates) == 0:
        raise ValueError("candidates must be non-empty")
    profile_items = np.asarray(profile_items, dtype=np.int64)
    profile_ratings = np.asarray(profile_ratings, dtype=np.float64)
    scores = np.zeros(s.n_items)
    if len(profile_items):
        scores = np.asarray(s.csr[profile_items].T @ profile_ratings).ravel()
    cand = np.setdiff1d(candidates, profile_items)
    order = np.lexsort((cand, -scores[cand]))
    return cand[order[:n]]


def ranking_metrics(ranked, relevant, cutoff: int) -> MetricRow | None:
    """Binary-relevance metrics of one ranked list; ``None`` when ``relevant`` is empty."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    relevant = set(int(x) for x in relevant)
    if not relevant:
        return None
    top = [int(x) for x in ranked[:cutoff]]
    hits = np.array([x in relevant for x in top], dtype=bool)
    n_hits = int(hits.sum())
    positions = np.flatnonzero(hits) + 1
    mrr = 1.0 / positions[0] if n_hits else 0.0
    denom = min(len(relevant), cutoff)
    ap = float(np.sum(np.arange(1, n_hits + 1) / positions)) / denom
    dcg = float(np.sum(1.0 / np.log2(positions + 1)))
    idcg = float(np.sum(1.0 / np.log2(np.arange(1, denom + 1) + 1)))
    return MetricRow(
        precision=n_hits / cutoff,
        recall=n_hits / len(relevant),
        mrr=mrr,
        map=ap,
        ndcg=dcg / idcg,
    )


def evaluate_split(s: SimilarityMatrix, profiles: InteractionMatrix, targets: InteractionMatrix,
                   candidates, cutoff: int = 10, min_rating: float | None = None, name: str = "") -> MetricReport:
    """Average metrics over users with at least one relevant item in ``targets``.

    ``profiles`` supplies the scoring history; ``targets`` the relevant items,
    which must all be among ``candidates``.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    if s.n_items != profiles.n_items:
        raise ValueError("similarity and interaction matrices disagree on the item count")
    p_csr, t_csr = profiles.csr, targets.csr
    totals = np.zeros(len(METRICS))
    evaluated = skipped = 0
    for u in range(targets.n_users):
        lo, hi = t_csr.indptr[u], t_csr.indptr[u + 1]
        if lo == hi:
            continue
        rel = t_csr.indices[lo:hi]
        if min_rating is not None:
            rel = rel[t_csr.data[lo:hi] >= min_rating]
        if len(rel) == 0:
            skipped += 1
            continue
        p_items = p_csr.indices[p_csr.indptr[u]:p_csr.indptr[u + 1]]
        p_vals = p_csr.data[p_csr.indptr[u]:p_csr.indptr[u + 1]]
        ranked = recommend(p_items, p_vals, s, candidates, cutoff)
        row = ranking_metrics(ranked, rel, cutoff)
        totals += [getattr(row, m) for m in METRICS]
        evaluated += 1
    if evaluated == 0:
        raise EmptyEvaluationError("no user has a relevant item in the evaluated split")
    means = totals / evaluated
    return MetricReport(*means.tolist(), cutoff=cutoff, n_users_evaluated=evaluated,
                        n_users_skipped=skipped, name=name)


def evaluate_cold(s: SimilarityMatrix, bundle: SplitBundle, cutoff: int = 10,
                  min_rating: float | None = None, name: str = "") -> MetricReport:
    """Rank cold (C) items for every user from their warm (A and B) history."""
    if s.n_items != bundle.n_items:
        raise ValueError("similarity must cover every item of the split")
    cold_items = bundle.items("C")
    cold = bundle.cold_test
    warm = bundle.warm
    if np.isin(warm.csr.indices, cold_items).any() or not np.isin(cold.csr.indices, cold_items).all():
        raise LeakageError("warm profiles and cold targets share items")
    return evaluate_split(s, warm, cold, cold_items, cutoff, min_rating, name)


def evaluate_pseudo_cold(s: SimilarityMatrix, bundle: SplitBundle, cutoff: int = 10,
                         min_rating: float | None = None, name: str = "") -> MetricReport:
    """Step-2 validation: B items ranked as if cold, from each user's A history."""
    return evaluate_split(s, bundle.warm_train, bundle.warm_validation, bundle.items("B"),
                          cutoff, min_rating, name)


def evaluate_warm_holdout(s: SimilarityMatrix, bundle: SplitBundle, cutoff: int = 10,
                          min_rating: float | None = None, name: str = "") -> MetricReport:
    """Step-1 validation: held-out warm interactions ranked among all warm items."""
    warm_items = np.flatnonzero(bundle.item_assignment != "C")
    return evaluate_split(s, bundle.warm_fit, bundle.warm_holdout, warm_items, cutoff, min_rating, name)


def expand_grid(grid: dict) -> list[dict]:
    """Cartesian product of a ``{name: [values]}`` grid in a fixed order."""
    if not grid:
        return [{}]
    if any(len(v) == 0 for v in grid.values()):
        raise ValueError("every grid dimension needs at least one value")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


@dataclass
class GridResult:
    best_params: dict
    best_report: MetricReport
    leaderboard: list[tuple[dict, MetricReport]] = field(default_factory=list)
    failures: list[tuple[dict, Exception]] = field(default_factory=list)


def grid_search(build: Callable[..., object], grid: dict, evaluate: Callable[[object], MetricReport],
                objective: str = "map") -> GridResult:
    """Evaluate every grid point; the best objective wins, the earliest point on ties.

    ``build(**params)`` produces a model (typically a similarity) and
    ``evaluate(model)`` scores it. Points that raise are recorded and skipped.
    """
    if objective not in METRICS:
        raise ValueError(f"unknown objective {objective!r}")
    points = expand_grid(grid)
    scored, failures = [], []
    for params in points:
        try:
            report = evaluate(build(**params))
        except Exception as err:
            log.warning("grid point %s failed: %r", params, err)
            failures.append((params, err))
            continue
        value = report.metric(objective)
        if not math.isfinite(value):
            failures.append((params, FloatingPointError(f"{objective} is {value}")))
            continue
        scored.append((params, report))
    if not scored:
        raise GridSearchError(failures)
    leaderboard = sorted(enumerate(scored), key=lambda t: (-t[1][1].metric(objective), t[0]))
    leaderboard = [entry for _, entry in leaderboard]
    best_params, best_report = leaderboard[0]
    return GridResult(best_params, best_report, leaderboard, failures)


def compare_report(reports: list[MetricReport]) -> str:
    """Plain-text table, one row per report, best value per column starred."""
    rows = compare_rows(reports)
    name_w = max(len("Algorithm"), *(len(r.name) for r in reports))
    header = f"{'Algorithm':<{name_w}}  " + "  ".join(f"{METRIC_LABELS[m]:>10}" for m in METRICS)
    lines = [f"cutoff = {reports[0].cutoff}", header, "-" * len(header)]
    for report, marks in rows:
        cells = [f"{report.metric(m):.4f}{'*' if marks[m] else ' '}" for m in METRICS]
        lines.append(f"{report.name:<{name_w}}  " + "  ".join(f"{c:>10}" for c in cells))
    return "\n".join(lines) + "\n"


def compare_rows(reports: list[MetricReport]):
    """Pair each report with a ``{metric: is_column_best}`` map; cutoffs must agree."""
    if not reports:
        raise ValueError("need at least one report")
    cutoffs = {r.cutoff for r in reports}
    if len(cutoffs) > 1:
        raise ValueError(f"reports use different cutoffs: {sorted(cutoffs)}")
    best = {m: max(r.metric(m) for r in reports) for m in METRICS}
    return [(r, {m: r.metric(m) == best[m] for m in METRICS}) for r in reports]


def format_tsv(reports: list[MetricReport]) -> str:
    lines = ["name\tcutoff\tprecision\trecall\tmrr\tmap\tndcg\tn_users_evaluated\tn_users_skipped"]
    for r in reports:
        vals = "\t".join(f"{r.metric(m):.10f}" for m in METRICS)
        lines.append(f"{r.name}\t{r.cutoff}\t{vals}\t{r.n_users_evaluated}\t{r.n_users_skipped}")
    return "\n".join(lines) + "\n"


def parse_tsv(text: str) -> list[MetricReport]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("name\tcutoff"):
        raise ValueError("not a metric report TSV")
    out = []
    for ln in lines[1:]:
        p = ln.split("\t")
        out.append(MetricReport(*(float(x) for x in p[2:7]), cutoff=int(p[1]),
                                n_users_evaluated=int(p[7]), n_users_skipped=int(p[8]), name=p[0]))
    return out
