"""Batch command line: ``biasbench clean|cv|cross-eval|analyze|dqe|synth``.

Every stage reads a JSON config (paths relative to the config file) and
writes into its own subdirectory of the output directory, so stages can be
rerun independently.  Exit codes: 0 success, 2 configuration error,
3 missing prerequisite artifact, 4 data error.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cleaning import clean_dataset, load_wordlist
from .corpus import LabeledDataset, apply_label_map, get_preset, load_csv, write_csv
from .dqe import contamination_report, expand_iteratively, load_pool
from .errors import BiasBenchError, ConfigError, DataError, DegenerateInputError, MissingArtifactError
from .evaluate import (
    CVResult,
    ExperimentResult,
    cross_dataset_eval,
    cross_validate,
    select_top,
    select_top_per_family,
)
from .model import FAMILIES, ClassifierSpec, default_grid
from .schemas import validate
from .stats import kendall_tau_b, spearman_rho
from .synth import SynthConfig, generate, write_corpus
from .vectorize import fit_vocabulary, oov_ratio

log = logging.getLogger("biasbench")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_DATA = 0, 2, 3, 4

FLAT_COLUMNS = (
    "experiment_id", "train_set", "test_set", "family", "vectorizer",
    "cv_mean_f1_macro", "cross_f1_macro", "drop_f1_macro",
    "cv_mean_f1_weighted", "cross_f1_weighted", "drop_f1_weighted",
)
SUMMARY_COLUMNS = (
    "experiment_id", "train_set", "test_set", "avg_drop_f1_macro", "avg_drop_f1_weighted",
)


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass
class DatasetConfig:
    name: str
    path: Path
    text_column: str = "text"
    label_column: str = "label"
    label_map: str = "binary"
    unmapped: str = "error"


@dataclass
class RunConfig:
    base_dir: Path
    output_dir: Path
    seed: int = 0
    datasets: list[DatasetConfig] = field(default_factory=list)
    wordlist: Path | None = None
    english_threshold: float = 0.5
    grid: list[ClassifierSpec] = field(default_factory=list)
    k: int = 6
    holdout_fraction: float = 0.1
    top_n: int = 10
    top_per_family: bool = True
    dqe: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def dataset(self, name: str) -> DatasetConfig:
        for d in self.datasets:
            if d.name == name:
                return d
        raise ConfigError(f"unknown dataset {name!r}")

    def stage_dir(self, stage: str) -> Path:
        return self.output_dir / stage


def _grid_from(raw) -> list[ClassifierSpec]:
    if raw is None:
        return default_grid()
    if isinstance(raw, list):
        return [ClassifierSpec.from_dict(d) for d in raw]
    if not isinstance(raw, dict):
        raise ConfigError("grid must be a list of specs or a grid description")
    axes = {
        "learning_rates": raw.get("learning_rates", (0.05, 0.1, 0.3)),
        "max_depths": raw.get("max_depths", (3, 6)),
        "l2_penalties": raw.get("l2_penalties", (0.0, 0.1, 1.0)),
        "vectorizers": raw.get("vectorizers", ("count", "tfidf")),
        "families": raw.get("families", FAMILIES),
    }
    fixed = {k: v for k, v in raw.items() if k not in axes}
    try:
        return default_grid(**axes, **fixed)
    except TypeError as exc:
        raise ConfigError(f"bad grid description: {exc}") from None


def _number(raw: dict, key: str, default, kind, lo=None, hi=None):
    value = raw.get(key, default)
    try:
        value = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be {kind.__name__}, got {value!r}") from None
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        raise ConfigError(f"{key}={value} outside [{lo}, {hi}]")
    return value


def load_config(path: str | Path | None, out: str | None = None, seed: int | None = None) -> RunConfig:
    if path is None:
        raw, base = {}, Path.cwd()
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        base = path.resolve().parent
    output = Path(out) if out else base / raw.get("output_dir", "out")
    datasets = []
    for d in raw.get("datasets", []):
        try:
            dc = DatasetConfig(
                name=d["name"],
                path=base / d["path"],
                text_column=d.get("text_column", "text"),
                label_column=d.get("label_column", "label"),
                label_map=d.get("label_map", "binary"),
                unmapped=d.get("unmapped", "error"),
            )
        except KeyError as exc:
            raise ConfigError(f"dataset entry missing {exc}") from None
        get_preset(dc.label_map)
        datasets.append(dc)
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate dataset names: {names}")
    cleaning = raw.get("cleaning", {})
    wordlist = cleaning.get("wordlist")
    return RunConfig(
        base_dir=base,
        output_dir=output,
        seed=seed if seed is not None else _number(raw, "seed", 0, int),
        datasets=datasets,
        wordlist=base / wordlist if wordlist else None,
        english_threshold=_number(cleaning, "english_threshold", 0.5, float, 0.0, 1.0),
        grid=_grid_from(raw.get("grid")),
        k=_number(raw, "k", 6, int, 2),
        holdout_fraction=_number(raw, "holdout_fraction", 0.1, float, 0.0, 1.0),
        top_n=_number(raw, "top_n", 10, int, 1),
        top_per_family=bool(raw.get("top_per_family", True)),
        dqe=raw.get("dqe", {}),
        synth=raw.get("synth", {}),
        raw=raw,
    )


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------


def _write_json(path: Path, doc: dict, kind: str | None = None) -> None:
    if kind is not None:
        validate(doc, kind)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _read_json(path: Path, what: str) -> dict:
    if not path.is_file():
        raise MissingArtifactError(f"missing {what}: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def _write_rows(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def _cleaned_path(cfg: RunConfig, name: str) -> Path:
    return cfg.stage_dir("clean") / f"{name}.csv"


def _load_cleaned(cfg: RunConfig, name: str) -> LabeledDataset:
    p = _cleaned_path(cfg, name)
    if not p.is_file():
        raise MissingArtifactError(f"missing cleaned dataset {name!r}: {p} (run `clean` first)")
    return load_csv(p, "text", "label", name=name)


def _require_datasets(cfg: RunConfig, n: int = 1) -> None:
    if len(cfg.datasets) < n:
        raise ConfigError(f"config must declare at least {n} dataset(s)")


# --------------------------------------------------------------------------
# Stages
# --------------------------------------------------------------------------


def cmd_clean(cfg: RunConfig) -> dict:
    _require_datasets(cfg)
    if cfg.wordlist is None:
        raise ConfigError("cleaning.wordlist is required")
    wordlist = load_wordlist(cfg.wordlist)
    reports = {}
    for d in cfg.datasets:
        raw = load_csv(d.path, d.text_column, d.label_column, name=d.name)
        mapped = apply_label_map(raw, d.label_map, unmapped=d.unmapped)
        cleaned, report = clean_dataset(mapped, wordlist, cfg.english_threshold)
        if len(cleaned) == 0:
            raise DataError(f"dataset {d.name!r} is empty after cleaning")
        write_csv(cleaned, _cleaned_path(cfg, d.name))
        doc = {
            "schema": "biasbench.cleaning/1",
            "dataset": d.name,
            "label_map": d.label_map,
            "rejected_rows": raw.rejected_rows,
            "dropped_unmapped": len(raw) - len(mapped),
            "class_counts": cleaned.class_counts(),
            **report.to_dict(),
        }
        _write_json(cfg.stage_dir("clean") / f"{d.name}.report.json", doc, "cleaning")
        reports[d.name] = doc
        log.info("clean %s: %d -> %d entries", d.name, report.input_count, report.output_count)
    return reports


def _select(cfg: RunConfig, results: list[CVResult]):
    if cfg.top_per_family:
        return select_top_per_family(results, cfg.top_n)
    return select_top(results, cfg.top_n)


def cmd_cv(cfg: RunConfig) -> dict:
    _require_datasets(cfg)
    out = {}
    for d in cfg.datasets:
        ds = _load_cleaned(cfg, d.name)
        results = cross_validate(ds, cfg.grid, cfg.k, cfg.holdout_fraction, cfg.seed)
        top = _select(cfg, results)
        doc = {
            "schema": "biasbench.cv/1",
            "dataset": d.name,
            "k": cfg.k,
            "holdout_fraction": cfg.holdout_fraction,
            "seed": cfg.seed,
            "results": [r.to_dict() for r in results],
            "top": [r.index for r in top],
            "top_n": cfg.top_n,
            "top_per_family": cfg.top_per_family,
            "top_shortfall": top.shortfall,
            "failed": sum(r.failed for r in results),
        }
        _write_json(cfg.stage_dir("cv") / f"{d.name}.json", doc, "cv")
        out[d.name] = doc
        log.info("cv %s: %d grid points, %d failed", d.name, len(results), doc["failed"])
    return out


def _load_top(cfg: RunConfig, name: str) -> list[CVResult]:
    p = cfg.stage_dir("cv") / f"{name}.json"
    if not p.is_file():
        raise MissingArtifactError(f"missing CV output for dataset {name!r}: {p}")
    doc = json.loads(p.read_text(encoding="utf-8"))
    by_index = {r["index"]: CVResult.from_dict(r) for r in doc["results"]}
    return [by_index[i] for i in doc["top"]]


def experiment_pairs(cfg: RunConfig) -> list[tuple[int, str, str]]:
    names = [d.name for d in cfg.datasets]
    pairs = [(x, y) for x in names for y in names if x != y]
    return [(i + 1, x, y) for i, (x, y) in enumerate(pairs)]


def cmd_cross_eval(cfg: RunConfig) -> dict:
    _require_datasets(cfg, 2)
    tops = {d.name: _load_top(cfg, d.name) for d in cfg.datasets}
    data = {d.name: _load_cleaned(cfg, d.name) for d in cfg.datasets}
    experiments = []
    models_dir = cfg.stage_dir("cross_eval") / "models"
    for exp_id, x, y in experiment_pairs(cfg):
        if not tops[x]:
            raise DataError(f"dataset {x!r} has no successful CV results to evaluate")
        res = cross_dataset_eval(data[x], data[y], tops[x], cfg.holdout_fraction, cfg.seed, exp_id)
        for rank, pipeline in enumerate(res.pipelines):
            models_dir.mkdir(parents=True, exist_ok=True)
            pipeline.model.save(models_dir / f"exp{exp_id}_{rank:02d}.json")
        experiments.append(res)
        log.info("exp %d %s->%s avg macro drop %s", exp_id, x, y, res.avg_drop_f1_macro)

    doc = {
        "schema": "biasbench.cross_eval/1",
        "seed": cfg.seed,
        "experiments": [e.to_dict() for e in experiments],
        "summary": [
            {k: e.to_dict()[k] for k in SUMMARY_COLUMNS} for e in experiments
        ],
    }
    stage = cfg.stage_dir("cross_eval")
    _write_json(stage / "experiments.json", doc, "cross_eval")
    _write_rows(
        stage / "summary.csv",
        SUMMARY_COLUMNS,
        [(e.experiment_id, e.train_set, e.test_set, _fmt(e.avg_drop_f1_macro),
          _fmt(e.avg_drop_f1_weighted)) for e in experiments],
    )
    _write_rows(
        stage / "models.csv",
        FLAT_COLUMNS,
        [
            (e.experiment_id, e.train_set, e.test_set, m.spec.family, m.spec.vectorizer,
             _fmt(m.cv_mean_f1_macro), _fmt(m.cross_f1_macro), _fmt(m.drop_f1_macro),
             _fmt(m.cv_mean_f1_weighted), _fmt(m.cross_f1_weighted), _fmt(m.drop_f1_weighted))
            for e in experiments
            for m in e.per_model
        ],
    )
    return doc


CORRELATIONS = (("kendall_tau_b", kendall_tau_b), ("spearman", spearman_rho))


def _correlate(method: str, fn, x, y) -> dict:
    try:
        return {"error": None, **fn(x, y).to_dict()}
    except DegenerateInputError as exc:
        # constant drops or ratios: report the gap instead of failing the stage
        return {"error": str(exc), "coefficient": None, "p_value": None, "n": len(x),
                "method": method, "p_method": None}


def _overlap(data: dict[str, LabeledDataset]) -> list[dict]:
    texts = {n: set(ds.texts) for n, ds in data.items()}
    return [
        {"datasets": [a, b], "exact_duplicates": len(texts[a] & texts[b])}
        for a, b in itertools.combinations(sorted(data), 2)
    ]


def cmd_analyze(cfg: RunConfig) -> dict:
    _require_datasets(cfg, 2)
    xe = _read_json(cfg.stage_dir("cross_eval") / "experiments.json", "cross-eval output")
    experiments = [ExperimentResult.from_dict(e) for e in xe["experiments"]]
    data = {d.name: _load_cleaned(cfg, d.name) for d in cfg.datasets}
    vocabs = {n: fit_vocabulary(ds) for n, ds in data.items()}

    oov, r_values, macro, weighted = [], [], [], []
    for e in experiments:
        report = oov_ratio(vocabs[e.train_set], data[e.test_set])
        oov.append({"experiment_id": e.experiment_id, "train_set": e.train_set,
                    "test_set": e.test_set, **report.to_dict()})
        for m in e.per_model:
            r_values.append(report.ratio_token_level)
            macro.append(m.drop_f1_macro)
            weighted.append(m.drop_f1_weighted)

    correlations = []
    for target, drops in (("drop_f1_macro", macro), ("drop_f1_weighted", weighted)):
        for method, fn in CORRELATIONS:
            correlations.append(
                {"x": "oov_ratio_token_level", "y": target, **_correlate(method, fn, r_values, drops)}
            )

    all_macro = [m.drop_f1_macro for e in experiments for m in e.per_model]
    all_weighted = [m.drop_f1_weighted for e in experiments for m in e.per_model]
    report = {
        "schema": "biasbench.analysis/1",
        "seed": cfg.seed,
        "oov_level": "token",
        "experiments": [
            {k: e.to_dict()[k] for k in SUMMARY_COLUMNS}
            | {"n_models": len(e.per_model), "failed_models": len(e.failed_models)}
            for e in experiments
        ],
        "oov": oov,
        "correlations": correlations,
        "overall_avg_drop_f1_macro": float(np.mean(all_macro)) if all_macro else None,
        "overall_avg_drop_f1_weighted": float(np.mean(all_weighted)) if all_weighted else None,
        "failed_models_excluded": sum(len(e.failed_models) for e in experiments),
        "overlap": _overlap(data),
        "dqe_estimate": None,
    }
    dqe_path = cfg.stage_dir("dqe") / "estimate.json"
    if dqe_path.is_file():
        report["dqe_estimate"] = json.loads(dqe_path.read_text(encoding="utf-8"))["estimate"]
    stage = cfg.stage_dir("analysis")
    _write_json(stage / "report.json", report, "analysis")

    for target, key in (("macro", "drop_f1_macro"), ("weighted", "drop_f1_weighted")):
        overall = report[f"overall_avg_{key}"]
        rows = []
        for e in experiments:
            exp_mean = float(np.mean([getattr(m, key) for m in e.per_model])) if e.per_model else None
            for rank, m in enumerate(e.per_model):
                rows.append((e.experiment_id, e.train_set, e.test_set, rank, m.spec.label,
                             _fmt(getattr(m, key)), _fmt(exp_mean), _fmt(overall)))
        _write_rows(stage / f"drops_{target}.csv",
                    ("experiment_id", "train_set", "test_set", "model_rank", "model",
                     key, "experiment_mean", "overall_mean"), rows)
    return report


def cmd_dqe(cfg: RunConfig) -> dict:
    opts = cfg.dqe
    if not opts:
        raise ConfigError("config has no 'dqe' section")
    name = opts.get("dataset")
    if name is None:
        raise ConfigError("dqe.dataset is required")
    cfg.dataset(name)
    if "pool" not in opts:
        raise ConfigError("dqe.pool is required")
    ds = _load_cleaned(cfg, name)
    pool = load_pool(cfg.base_dir / opts["pool"], opts.get("text_column", "text"))
    expansion, keyword_sets = expand_iteratively(
        ds,
        pool,
        int(opts.get("per_class_k", 10)),
        int(opts.get("global_exclude_k", 20)),
        int(opts.get("iterations", 1)),
        opts.get("scoring", "frequency"),
    )
    sample_n = opts.get("sample_n") or {label: c for label, c in ds.class_counts().items()}
    estimate = contamination_report(ds, expansion, sample_n)
    stage = cfg.stage_dir("dqe")
    stage.mkdir(parents=True, exist_ok=True)
    expansion.write_csv(stage / "expanded.csv", name=f"{name}+dqe")
    doc = {
        "schema": "biasbench.dqe/1",
        "dataset": name,
        "pool_size": len(pool),
        "added": len(expansion.added),
        "added_per_label": expansion.added_counts(),
        "skipped_ambiguous": expansion.skipped_ambiguous,
        "skipped_no_match": expansion.skipped_no_match,
        "keywords": {ks.label: [t for t, _ in ks.keywords] for ks in keyword_sets},
        "estimate": estimate.to_dict(),
    }
    _write_json(stage / "estimate.json", doc, "dqe")
    return doc


def cmd_synth(cfg: RunConfig) -> dict:
    config = SynthConfig.from_dict(cfg.synth) if cfg.synth else SynthConfig()
    corpus = generate(config, cfg.seed)
    paths = write_corpus(corpus, cfg.output_dir)
    return {k: str(v) for k, v in paths.items()}


COMMANDS = {
    "clean": cmd_clean,
    "cv": cmd_cv,
    "cross-eval": cmd_cross_eval,
    "analyze": cmd_analyze,
    "dqe": cmd_dqe,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biasbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"biasbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "synth", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, args.out, args.seed)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"biasbench: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"biasbench: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (DataError, BiasBenchError) as exc:
        print(f"biasbench: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"biasbench: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
