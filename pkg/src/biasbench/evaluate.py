"""Metrics, stratified cross-validation over a grid, top-model selection and
cross-dataset evaluation."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import NEGATIVE, POSITIVE, LabeledDataset, holdout_split, stratified_folds
from .errors import BiasBenchError, ConfigError, DataError
from .model import (
    ClassifierSpec,
    TrainedModel,
    compute_class_weights,
    predict,
    train,
)
from .vectorize import FeatureMatrix, Vocabulary, encode, fit_vocabulary

log = logging.getLogger(__name__)

LOW_VARIANCE_STD = 0.01


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(y_true, y_pred) -> ConfusionCounts:
    """Confusion counts with Cyberbullying (1) as the positive class."""
    t = np.asarray(y_true).astype(bool)
    p = np.asarray(y_pred).astype(bool)
    if t.shape != p.shape:
        raise DataError(f"length mismatch: {t.size} true labels vs {p.size} predictions")
    if t.size == 0:
        raise DataError("cannot score an empty prediction set")
    return ConfusionCounts(
        tp=int(np.sum(t & p)),
        fp=int(np.sum(~t & p)),
        fn=int(np.sum(t & ~p)),
        tn=int(np.sum(~t & ~p)),
    )


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def _f1(precision: float, recall: float) -> float:
    s = precision + recall
    return 2.0 * precision * recall / s if s else 0.0


@dataclass(frozen=True)
class ScoreReport:
    precision: dict[str, float]
    recall: dict[str, float]
    f1_per_class: dict[str, float]
    support: dict[str, int]
    f1_macro: float
    f1_weighted: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreReport":
        return cls(**d)


def f1_scores(c: ConfusionCounts) -> ScoreReport:
    """Per-class precision/recall/F1 plus macro and support-weighted F1.

    The negative class is scored by swapping roles (its true positives are
    the true negatives).  Any zero denominator yields 0.
    """
    if c.total < 1:
        raise DataError("confusion counts are empty")
    per_class = {
        POSITIVE: (c.tp, c.fp, c.fn),
        NEGATIVE: (c.tn, c.fn, c.fp),
    }
    precision, recall, f1, support = {}, {}, {}, {}
    for name, (tp, fp, fn) in per_class.items():
        precision[name] = _ratio(tp, tp + fp)
        recall[name] = _ratio(tp, tp + fn)
        f1[name] = _f1(precision[name], recall[name])
        support[name] = tp + fn
    macro = 0.5 * (f1[POSITIVE] + f1[NEGATIVE])
    weighted = sum(support[k] / c.total * f1[k] for k in (POSITIVE, NEGATIVE))
    return ScoreReport(precision, recall, f1, support, macro, weighted)


def score(y_true, y_pred) -> ScoreReport:
    return f1_scores(confusion(y_true, y_pred))


def drop(cv_mean: float, cross_score: float) -> float:
    """Cross-validation score minus cross-dataset score; negative is allowed."""
    return cv_mean - cross_score


# --------------------------------------------------------------------------
# Fitting one pipeline (vectorizer + classifier)
# --------------------------------------------------------------------------


@dataclass
class FittedPipeline:
    vocabulary: Vocabulary
    model: TrainedModel

    def features(self, ds: LabeledDataset) -> FeatureMatrix:
        return encode(ds.documents, self.vocabulary, self.model.spec.vectorizer)

    def predict(self, ds: LabeledDataset) -> np.ndarray:
        return predict(self.model, self.features(ds))


def _vectorizer_key(spec: ClassifierSpec) -> tuple:
    return (spec.vectorizer, spec.min_df, spec.ngram_max)


class _EncodedSplit:
    """Vocabulary and encodings of one (train, holdout, eval) split, cached
    per vectorizer configuration so grid points sharing it encode once."""

    def __init__(self, train: LabeledDataset, holdout: LabeledDataset, evaluation):
        self.train, self.holdout, self.evaluation = train, holdout, evaluation
        self._cache: dict[tuple, tuple] = {}

    def get(self, spec: ClassifierSpec):
        key = _vectorizer_key(spec)
        if key not in self._cache:
            vocab = fit_vocabulary(self.train, min_df=spec.min_df, ngram_max=spec.ngram_max)
            enc = spec.vectorizer
            self._cache[key] = (
                vocab,
                encode(self.train.documents, vocab, enc),
                encode(self.holdout.documents, vocab, enc),
                encode(self.evaluation.documents, vocab, enc)
                if self.evaluation is not None
                else None,
            )
        return self._cache[key]


def _fit(split: _EncodedSplit, spec: ClassifierSpec) -> tuple[FittedPipeline, FeatureMatrix]:
    vocab, X, Xh, Xe = split.get(spec)
    y = split.train.targets()
    model = train(X, y, (Xh, split.holdout.targets()), spec, compute_class_weights(y))
    return FittedPipeline(vocab, model), Xe


def fit_pipeline(
    train_ds: LabeledDataset, holdout_ds: LabeledDataset, spec: ClassifierSpec
) -> FittedPipeline:
    """Fit the vocabulary on ``train_ds`` only and train with holdout early stopping."""
    return _fit(_EncodedSplit(train_ds, holdout_ds, None), spec)[0]


# --------------------------------------------------------------------------
# Cross-validation
# --------------------------------------------------------------------------


@dataclass
class CVResult:
    spec: ClassifierSpec
    per_fold_scores: list[ScoreReport]
    mean_f1_macro: float | None
    std_f1_macro: float | None
    mean_f1_weighted: float | None
    low_variance_flag: bool
    index: int = 0
    rounds_used: list[int] = field(default_factory=list)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @classmethod
    def from_folds(
        cls,
        spec: ClassifierSpec,
        scores: Sequence[ScoreReport],
        index: int = 0,
        rounds_used: Sequence[int] = (),
    ) -> "CVResult":
        """Aggregate fold scores; std is the population standard deviation."""
        macro = np.array([s.f1_macro for s in scores])
        weighted = np.array([s.f1_weighted for s in scores])
        std = float(np.std(macro))
        return cls(
            spec,
            list(scores),
            float(np.mean(macro)),
            std,
            float(np.mean(weighted)),
            std < LOW_VARIANCE_STD,
            index,
            list(rounds_used),
        )

    @classmethod
    def failure(cls, spec: ClassifierSpec, error: str, index: int = 0) -> "CVResult":
        return cls(spec, [], None, None, None, False, index, [], error)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "spec": self.spec.to_dict(),
            "per_fold_scores": [s.to_dict() for s in self.per_fold_scores],
            "mean_f1_macro": self.mean_f1_macro,
            "std_f1_macro": self.std_f1_macro,
            "mean_f1_weighted": self.mean_f1_weighted,
            "low_variance_flag": self.low_variance_flag,
            "rounds_used": self.rounds_used,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CVResult":
        return cls(
            ClassifierSpec.from_dict(d["spec"]),
            [ScoreReport.from_dict(s) for s in d["per_fold_scores"]],
            d["mean_f1_macro"],
            d["std_f1_macro"],
            d["mean_f1_weighted"],
            d["low_variance_flag"],
            d["index"],
            d["rounds_used"],
            d["error"],
        )


def _run_fold(args) -> list[tuple[ScoreReport, int] | str]:
    """Train and score every grid point on one fold.  Errors are returned,
    not raised, so one bad grid point cannot abort the others."""
    train_ds, holdout_ds, eval_ds, grid = args
    split = _EncodedSplit(train_ds, holdout_ds, eval_ds)
    y_eval = eval_ds.targets()
    out = []
    for spec in grid:
        try:
            pipeline, Xe = _fit(split, spec)
            out.append((score(y_eval, predict(pipeline.model, Xe)), pipeline.model.rounds_used))
        except BiasBenchError as exc:
            out.append(f"{type(exc).__name__}: {exc}")
    return out


def default_jobs() -> int:
    raw = os.environ.get("BIASBENCH_THREADS")
    if raw is None:
        return 1
    try:
        jobs = int(raw)
    except ValueError:
        raise ConfigError(f"BIASBENCH_THREADS must be an integer, got {raw!r}") from None
    return max(1, jobs)


def _map(fn, items: list, n_jobs: int) -> list:
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(n_jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def cross_validate(
    ds: LabeledDataset,
    grid: Sequence[ClassifierSpec],
    k: int = 6,
    holdout_fraction: float = 0.10,
    seed: int = 0,
    n_jobs: int | None = None,
) -> list[CVResult]:
    """Stratified k-fold CV of every grid point, in grid order.

    The early-stopping holdout is removed first and never enters a fold.
    Each fold fits its own vocabulary on the k-1 training folds.  A grid
    point failing on any fold is reported with ``error`` set.
    """
    if not grid:
        raise ConfigError("empty hyperparameter grid")
    rest, holdout = holdout_split(ds, holdout_fraction, seed)
    folds = stratified_folds(rest, k, seed).fold_indices(rest)
    units = []
    for f in range(k):
        train_idx = np.concatenate([folds[j] for j in range(k) if j != f])
        train_idx.sort()
        units.append(
            (rest.subset(train_idx), holdout, rest.subset(folds[f]), list(grid))
        )
    per_fold = _map(_run_fold, units, n_jobs or default_jobs())

    results = []
    for i, spec in enumerate(grid):
        outcomes = [per_fold[f][i] for f in range(k)]
        errors = [o for o in outcomes if isinstance(o, str)]
        if errors:
            log.warning("grid point %d (%s) failed: %s", i, spec.label, errors[0])
            results.append(CVResult.failure(spec, errors[0], index=i))
            continue
        results.append(
            CVResult.from_folds(
                spec, [o[0] for o in outcomes], index=i, rounds_used=[o[1] for o in outcomes]
            )
        )
    return results


@dataclass
class TopModels:
    results: list[CVResult]
    requested: int
    shortfall: bool

    def __iter__(self):
        return iter(self.results)

    def __len__(self) -> int:
        return len(self.results)

    def __getitem__(self, i):
        return self.results[i]


def select_top(
    results: Sequence[CVResult], n: int = 10, family: str | None = None
) -> TopModels:
    """Best ``n`` successful results by mean macro F1.

    Ties go to the lower standard deviation, then to the earlier result.
    ``shortfall`` is set when fewer than ``n`` candidates exist.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    pool = [r for r in results if not r.failed]
    if family is not None:
        pool = [r for r in pool if r.spec.family == family]
    ranked = sorted(pool, key=lambda r: (-r.mean_f1_macro, r.std_f1_macro))
    short = len(ranked) < n
    if short:
        log.warning("only %d candidates for top-%d selection", len(ranked), n)
    return TopModels(ranked[:n], n, short)


def select_top_per_family(
    results: Sequence[CVResult], n: int = 10, families: Sequence[str] = ("logistic", "gbdt")
) -> TopModels:
    picked, short = [], False
    for fam in families:
        if not any(r.spec.family == fam for r in results):
            continue
        top = select_top(results, n, family=fam)
        picked.extend(top.results)
        short |= top.shortfall
    return TopModels(picked, n, short)


# --------------------------------------------------------------------------
# Cross-dataset evaluation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelDrop:
    spec: ClassifierSpec
    cv_mean_f1_macro: float
    cross_f1_macro: float
    drop_f1_macro: float
    cv_mean_f1_weighted: float
    cross_f1_weighted: float
    drop_f1_weighted: float

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["spec"] = self.spec.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelDrop":
        return cls(**{**d, "spec": ClassifierSpec.from_dict(d["spec"])})


@dataclass
class ExperimentResult:
    experiment_id: int
    train_set: str
    test_set: str
    per_model: list[ModelDrop]
    avg_drop_f1_macro: float | None
    avg_drop_f1_weighted: float | None
    failed_models: list[dict] = field(default_factory=list)
    pipelines: list[FittedPipeline] = field(default_factory=list, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "train_set": self.train_set,
            "test_set": self.test_set,
            "per_model": [m.to_dict() for m in self.per_model],
            "avg_drop_f1_macro": self.avg_drop_f1_macro,
            "avg_drop_f1_weighted": self.avg_drop_f1_weighted,
            "failed_models": self.failed_models,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentResult":
        return cls(
            d["experiment_id"],
            d["train_set"],
            d["test_set"],
            [ModelDrop.from_dict(m) for m in d["per_model"]],
            d["avg_drop_f1_macro"],
            d["avg_drop_f1_weighted"],
            d.get("failed_models", []),
        )


def cross_dataset_eval(
    train_ds: LabeledDataset,
    test_ds: LabeledDataset,
    top: Sequence[CVResult],
    holdout_fraction: float = 0.10,
    seed: int = 0,
    experiment_id: int = 1,
) -> ExperimentResult:
    """Refit each top model on ``train_ds`` and score it on all of ``test_ds``.

    Early stopping uses a stratified holdout carved from ``train_ds``; the
    test set is never split.  Drops are taken against each model's own
    cross-validation means.  Models whose refit fails are excluded from the
    averages and listed in ``failed_models``.
    """
    top = list(top)
    if not top:
        raise ConfigError("no top models given")
    rest, holdout = holdout_split(train_ds, holdout_fraction, seed)
    split = _EncodedSplit(rest, holdout, None)
    y_test = test_ds.targets()
    rows, pipelines, failed = [], [], []
    for cv in top:
        try:
            pipeline, _ = _fit(split, cv.spec)
        except BiasBenchError as exc:
            failed.append({"spec": cv.spec.to_dict(), "error": f"{type(exc).__name__}: {exc}"})
            continue
        s = score(y_test, pipeline.predict(test_ds))
        rows.append(
            ModelDrop(
                cv.spec,
                cv.mean_f1_macro,
                s.f1_macro,
                drop(cv.mean_f1_macro, s.f1_macro),
                cv.mean_f1_weighted,
                s.f1_weighted,
                drop(cv.mean_f1_weighted, s.f1_weighted),
            )
        )
        pipelines.append(pipeline)
    avg_macro = float(np.mean([r.drop_f1_macro for r in rows])) if rows else None
    avg_weighted = float(np.mean([r.drop_f1_weighted for r in rows])) if rows else None
    return ExperimentResult(
        experiment_id,
        train_ds.name,
        test_ds.name,
        rows,
        avg_macro,
        avg_weighted,
        failed,
        pipelines,
    )
