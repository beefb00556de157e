"""Two-step experiment driver.

Step 1 tunes a collaborative similarity on warm items (20% interaction
holdout) and retrains it on split A. Step 2 fits feature weights to that
similarity and tunes them on split B, treated as cold. Finally every requested
model is scored on the cold split C.

Configuration is an INI file. In ``[step1]`` and ``[step2]`` every key other
than the fixed ones may hold a comma-separated list, which becomes a grid
dimension::

    [dataset]
    interactions = interactions.tsv
    features = features.tsv
    min_items_per_feature = 5
    max_feature_item_share = 0.30
    user_core = 0
    item_core = 0

    [split]
    ratios = 0.6, 0.2, 0.2
    seed = 0
    holdout = 0.2

    [step1]
    algorithm = knn
    metric = cosine, jaccard
    k = 50, 100

    [step2]
    learning_rate = 0.01, 0.003
    lam = 0, 0.001
    epochs = 30
    neighbours = 50
    dv_latent = 3

    [fbsm]
    n_latent = 3
    epochs = 5
    learning_rate = 0.001

    [eval]
    cutoff = 10
    objective = map
    output_dir = results
    baselines = cbf_raw, cbf_tfidf, cbf_bm25, fbsm, cfw_d, cfw_dv
    ablation = true
    content_k = 50

Relative paths resolve against the directory of the config file.
"""

from __future__ import annotations

import configparser
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import cfsim, irweight
from .cfw import (
    CfwTrainConfig,
    train_cfw,
    train_fbsm,
    weighted_content_similarity,
    write_weights,
)
from .core import SimilarityMatrix
from .evaluation import (
    METRICS,
    MetricReport,
    compare_report,
    evaluate_cold,
    evaluate_pseudo_cold,
    evaluate_warm_holdout,
    format_tsv,
    grid_search,
)
from .ingest import (
    Dataset,
    RawDatasetConfig,
    SplitBundle,
    load_dataset,
    prepare_dataset,
    split_cold_items,
    write_split_manifest,
)

log = logging.getLogger(__name__)

ALGORITHMS = ("knn", "p3alpha", "rp3beta", "slim_mse", "slim_bpr")
BASELINES = ("cbf_raw", "cbf_tfidf", "cbf_bm25", "fbsm", "cfw_d", "cfw_dv")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


@dataclass
class ExperimentConfig:
    dataset: RawDatasetConfig
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    split_seed: int = 0
    holdout: float = 0.2
    algorithm: str = "knn"
    step1_grid: dict = field(default_factory=dict)
    step2_grid: dict = field(default_factory=dict)
    neighbours: int = 50
    dv_latent: int = 3
    fbsm: dict = field(default_factory=dict)
    cutoff: int = 10
    objective: str = "map"
    min_rating: float | None = None
    output_dir: Path = Path("results")
    baselines: tuple[str, ...] = BASELINES
    ablation: bool = True
    content_k: int = 50
    reuse_checkpoint: bool = False


def _parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _parse_list(text: str) -> list:
    return [_parse_value(x) for x in text.split(",") if x.strip()]


def _check_params(cls, params: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(params) - names
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s) {sorted(unknown)}; valid keys are {sorted(names)}")


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment INI file without touching any data file."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    base = path.parent
    try:
        return _build_config(parser, base)
    except ConfigError:
        raise
    except (KeyError, ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err


def _build_config(parser: configparser.ConfigParser, base: Path) -> ExperimentConfig:
    for required in ("dataset", "step1"):
        if not parser.has_section(required):
            raise ConfigError(f"missing [{required}] section")
    ds = parser["dataset"]
    for key in ("interactions", "features"):
        if key not in ds:
            raise ConfigError(f"[dataset] needs '{key}'")
    dataset = RawDatasetConfig(
        interactions_path=base / ds["interactions"],
        features_path=base / ds["features"],
        min_items_per_feature=ds.getint("min_items_per_feature", 5),
        max_feature_item_share=ds.getfloat("max_feature_item_share", 0.30),
        user_core=ds.getint("user_core", 0),
        item_core=ds.getint("item_core", 0),
    )
    split = parser["split"] if parser.has_section("split") else {}
    ratios = tuple(float(x) for x in split.get("ratios", "0.6, 0.2, 0.2").split(","))
    if len(ratios) != 3:
        raise ConfigError("[split] ratios needs three values")

    step1 = dict(parser["step1"])
    algorithm = step1.pop("algorithm", "knn").strip()
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"[step1] unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    step1_grid = {k: _parse_list(v) for k, v in step1.items()}
    _check_params(cfsim.BUILDERS[algorithm][0], step1_grid, "step1")

    step2 = dict(parser["step2"]) if parser.has_section("step2") else {}
    neighbours = int(step2.pop("neighbours", 50))
    dv_latent = int(step2.pop("dv_latent", 3))
    step2_grid = {k: _parse_list(v) for k, v in step2.items()}
    _check_params(CfwTrainConfig, step2_grid, "step2")

    fbsm = {k: _parse_value(v) for k, v in parser["fbsm"].items()} if parser.has_section("fbsm") else {}
    _check_params(CfwTrainConfig, fbsm, "fbsm")

    ev = parser["eval"] if parser.has_section("eval") else {}
    baselines = tuple(x.strip() for x in ev.get("baselines", ", ".join(BASELINES)).split(",") if x.strip())
    bad = [b for b in baselines if b not in BASELINES]
    if bad:
        raise ConfigError(f"[eval] unknown baseline(s) {bad}; expected names from {BASELINES}")
    objective = ev.get("objective", "map").strip()
    if objective not in METRICS:
        raise ConfigError(f"[eval] unknown objective {objective!r}")
    min_rating = ev.get("min_rating")
    return ExperimentConfig(
        dataset=dataset,
        ratios=ratios,
        split_seed=int(split.get("seed", 0)),
        holdout=float(split.get("holdout", 0.2)),
        algorithm=algorithm,
        step1_grid=step1_grid,
        step2_grid=step2_grid,
        neighbours=neighbours,
        dv_latent=dv_latent,
        fbsm=fbsm,
        cutoff=int(ev.get("cutoff", 10)),
        objective=objective,
        min_rating=None if min_rating in (None, "") else float(min_rating),
        output_dir=base / ev.get("output_dir", "results"),
        baselines=baselines,
        ablation=_parse_value(str(ev.get("ablation", "true"))) is True,
        content_k=int(ev.get("content_k", 50)),
        reuse_checkpoint=_parse_value(str(ev.get("reuse_checkpoint", "false"))) is True,
    )


@dataclass
class ExperimentResult:
    reports: list[MetricReport]
    bundle: SplitBundle
    dataset: Dataset
    step1_params: dict
    step2_params: dict
    artifacts: dict[str, Path]


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def _cfw_config(params: dict, **overrides) -> CfwTrainConfig:
    return CfwTrainConfig(**{**params, **overrides})


def prepare(cfg: ExperimentConfig) -> Dataset:
    with _Stage("ingest"):
        ds = load_dataset(cfg.dataset)
    with _Stage("filter"):
        return prepare_dataset(ds, cfg.dataset)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run both steps and the final cold-item evaluation, writing artifacts to ``cfg.output_dir``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}
    ds = prepare(cfg)
    icm = ds.icm

    with _Stage("split"):
        bundle = split_cold_items(ds.urm, cfg.ratios, seed=cfg.split_seed, holdout=cfg.holdout)
        artifacts["split"] = out / "split.tsv"
        write_split_manifest(artifacts["split"], bundle, ds.items)

    checkpoint = out / "similarity.tsv"
    step1_params: dict = {}
    with bundle.staged("step1", sealed=True), _Stage("step1"):
        if cfg.reuse_checkpoint and checkpoint.exists():
            log.info("reusing similarity checkpoint %s", checkpoint)
            s_cf = cfsim.read_similarity(checkpoint)
        else:
            res = grid_search(
                lambda **p: cfsim.build_similarity(cfg.algorithm, bundle.warm_fit, **p),
                cfg.step1_grid,
                lambda s: evaluate_warm_holdout(s, bundle, cfg.cutoff, cfg.min_rating),
                cfg.objective,
            )
            step1_params = res.best_params
            _write_leaderboard(out / "leaderboard_step1.tsv", res.leaderboard)
            s_cf = cfsim.build_similarity(cfg.algorithm, bundle.warm_train, **step1_params)
            cfsim.write_similarity(checkpoint, s_cf)
        artifacts["similarity"] = checkpoint

    models: dict[str, SimilarityMatrix] = {}
    with bundle.staged("step2", sealed=True), _Stage("step2"):
        trained = {}

        def build(**params):
            key = tuple(sorted(params.items()))
            if key not in trained:
                trained[key] = train_cfw(s_cf, icm, _cfw_config(params))[0]
            return weighted_content_similarity(icm, trained[key], cfg.neighbours)

        res = grid_search(
            build, cfg.step2_grid,
            lambda s: evaluate_pseudo_cold(s, bundle, cfg.cutoff, cfg.min_rating),
            cfg.objective,
        )
        step2_params = res.best_params
        _write_leaderboard(out / "leaderboard_step2.tsv", res.leaderboard)
        best = trained[tuple(sorted(step2_params.items()))]
        artifacts["model"] = out / "model.tsv"
        write_weights(artifacts["model"], best)

        if "cfw_d" in cfg.baselines:
            w_d = best if best.n_latent == 0 else train_cfw(s_cf, icm, _cfw_config(step2_params, n_latent=0))[0]
            models["cfw_d"] = weighted_content_similarity(icm, w_d, cfg.neighbours)
            write_weights(out / "model_d.tsv", w_d)
        if "cfw_dv" in cfg.baselines or cfg.ablation:
            n_l = cfg.dv_latent
            w_dv = best if best.n_latent == n_l else train_cfw(s_cf, icm, _cfw_config(step2_params, n_latent=n_l))[0]
            artifacts["model_dv"] = out / "model_dv.tsv"
            write_weights(artifacts["model_dv"], w_dv)
            if "cfw_dv" in cfg.baselines:
                models["cfw_dv"] = weighted_content_similarity(icm, w_dv, cfg.neighbours)
            if cfg.ablation:
                for part, label in (("d", "D"), ("v", "V"), ("dv", "D+V")):
                    models[f"cfw_dv:{label}"] = weighted_content_similarity(icm, w_dv.component(part), cfg.neighbours)

    with bundle.staged("baselines", sealed=True), _Stage("baselines"):
        for name, weighting in (("cbf_raw", "raw"), ("cbf_tfidf", "tfidf"), ("cbf_bm25", "bm25")):
            if name in cfg.baselines:
                models[name] = irweight.content_knn(irweight.WEIGHTINGS[weighting](icm), k=cfg.content_k)
        if "fbsm" in cfg.baselines:
            w_fbsm = train_fbsm(bundle.warm_train, icm, CfwTrainConfig(**cfg.fbsm))
            write_weights(out / "model_fbsm.tsv", w_fbsm)
            models["fbsm"] = weighted_content_similarity(icm, w_fbsm, cfg.neighbours)

    order = [b for b in BASELINES if b in models] + [k for k in models if k not in BASELINES]
    reports = []
    with bundle.staged("final", sealed=False), _Stage("evaluate"):
        for name in order:
            reports.append(evaluate_cold(models[name], bundle, cfg.cutoff, cfg.min_rating, name=name))

    artifacts["report"] = out / "report.tsv"
    artifacts["report_table"] = out / "report.txt"
    artifacts["report"].write_text(format_tsv(reports), encoding="utf-8")
    artifacts["report_table"].write_text(compare_report(reports), encoding="utf-8")
    return ExperimentResult(reports, bundle, ds, step1_params, step2_params, artifacts)


def _write_leaderboard(path: Path, leaderboard) -> None:
    lines = ["params\t" + "\t".join(METRICS)]
    for params, rep in leaderboard:
        p = ",".join(f"{k}={v}" for k, v in params.items()) or "-"
        lines.append(p + "\t" + "\t".join(f"{rep.metric(m):.10f}" for m in METRICS))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
