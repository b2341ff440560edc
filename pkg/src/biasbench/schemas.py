"""JSON Schemas for every document the command line writes.

Each document carries a ``schema`` field naming its kind and version; the
CLI validates before writing so a malformed report never reaches disk.
"""
from __future__ import annotations

import jsonschema

from .errors import BiasBenchError

_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}
_count = {"type": "integer", "minimum": 0}
_str_counts = {"type": "object", "additionalProperties": _count}
_str_nums = {"type": "object", "additionalProperties": _num}


def _const(name: str) -> dict:
    return {"const": name}


def _obj(required: dict, optional: dict | None = None, closed: bool = True) -> dict:
    props = dict(required)
    props.update(optional or {})
    return {
        "type": "object",
        "required": sorted(required),
        "properties": props,
        "additionalProperties": not closed,
    }


SPEC = _obj(
    {
        "family": {"enum": ["logistic", "gbdt"]},
        "vectorizer": {"enum": ["count", "tfidf"]},
        "learning_rate": _num,
        "l2_penalty": _num,
        "max_depth": _count,
        "max_rounds": _count,
        "early_stopping_patience": _count,
        "seed": {"type": "integer"},
    },
    closed=False,
)

SCORE = _obj(
    {
        "precision": _str_nums,
        "recall": _str_nums,
        "f1_per_class": _str_nums,
        "support": _str_counts,
        "f1_macro": _num,
        "f1_weighted": _num,
    }
)

CV_RESULT = _obj(
    {
        "index": _count,
        "spec": SPEC,
        "per_fold_scores": {"type": "array", "items": SCORE},
        "mean_f1_macro": _opt_num,
        "std_f1_macro": _opt_num,
        "mean_f1_weighted": _opt_num,
        "low_variance_flag": {"type": "boolean"},
        "rounds_used": {"type": "array", "items": _count},
        "error": {"type": ["string", "null"]},
    }
)

MODEL_DROP = _obj(
    {
        "spec": SPEC,
        "cv_mean_f1_macro": _num,
        "cross_f1_macro": _num,
        "drop_f1_macro": _num,
        "cv_mean_f1_weighted": _num,
        "cross_f1_weighted": _num,
        "drop_f1_weighted": _num,
    },
    closed=False,
)

EXPERIMENT = _obj(
    {
        "experiment_id": {"type": "integer", "minimum": 1},
        "train_set": {"type": "string"},
        "test_set": {"type": "string"},
        "per_model": {"type": "array", "items": MODEL_DROP},
        "avg_drop_f1_macro": _opt_num,
        "avg_drop_f1_weighted": _opt_num,
        "failed_models": {"type": "array"},
    }
)

SUMMARY_ROW = _obj(
    {
        "experiment_id": {"type": "integer", "minimum": 1},
        "train_set": {"type": "string"},
        "test_set": {"type": "string"},
        "avg_drop_f1_macro": _opt_num,
        "avg_drop_f1_weighted": _opt_num,
    },
    closed=False,
)

ESTIMATE = _obj(
    {
        "per_label": {
            "type": "array",
            "items": _obj(
                {
                    "label": {"type": "string"},
                    "draws": _count,
                    "dqe_count": _count,
                    "total": _count,
                    "expected": {"type": "number", "minimum": 0},
                }
            ),
        },
        "total_expected": {"type": "number", "minimum": 0},
    }
)

CORRELATION = _obj(
    {
        "x": {"type": "string"},
        "y": {"type": "string"},
        "coefficient": _opt_num,
        "p_value": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "n": _count,
        "method": {"enum": ["kendall_tau_b", "spearman"]},
        "p_method": {"type": ["string", "null"]},
        "error": {"type": ["string", "null"]},
    }
)

SCHEMAS: dict[str, dict] = {
    "cleaning": _obj(
        {
            "schema": _const("biasbench.cleaning/1"),
            "dataset": {"type": "string"},
            "label_map": {"type": "string"},
            "rejected_rows": _count,
            "dropped_unmapped": _count,
            "class_counts": _str_counts,
            "input_count": _count,
            "removed_non_english": _count,
            "emptied_and_dropped": _count,
            "output_count": _count,
        }
    ),
    "cv": _obj(
        {
            "schema": _const("biasbench.cv/1"),
            "dataset": {"type": "string"},
            "k": {"type": "integer", "minimum": 2},
            "holdout_fraction": _num,
            "seed": {"type": "integer"},
            "results": {"type": "array", "items": CV_RESULT},
            "top": {"type": "array", "items": _count},
            "top_n": {"type": "integer", "minimum": 1},
            "top_per_family": {"type": "boolean"},
            "top_shortfall": {"type": "boolean"},
            "failed": _count,
        }
    ),
    "cross_eval": _obj(
        {
            "schema": _const("biasbench.cross_eval/1"),
            "seed": {"type": "integer"},
            "experiments": {"type": "array", "items": EXPERIMENT},
            "summary": {"type": "array", "items": SUMMARY_ROW},
        }
    ),
    "analysis": _obj(
        {
            "schema": _const("biasbench.analysis/1"),
            "seed": {"type": "integer"},
            "oov_level": {"enum": ["token", "type"]},
            "experiments": {"type": "array", "items": SUMMARY_ROW},
            "oov": {"type": "array"},
            "correlations": {"type": "array", "items": CORRELATION},
            "overall_avg_drop_f1_macro": _opt_num,
            "overall_avg_drop_f1_weighted": _opt_num,
            "failed_models_excluded": _count,
            "overlap": {"type": "array"},
            "dqe_estimate": {"oneOf": [{"type": "null"}, ESTIMATE]},
        }
    ),
    "dqe": _obj(
        {
            "schema": _const("biasbench.dqe/1"),
            "dataset": {"type": "string"},
            "pool_size": _count,
            "added": _count,
            "added_per_label": _str_counts,
            "skipped_ambiguous": _count,
            "skipped_no_match": _count,
            "keywords": {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "string"}}},
            "estimate": ESTIMATE,
        }
    ),
    "model": _obj(
        {
            "schema": _const("biasbench.model/1"),
            "spec": SPEC,
            "n_features": _count,
            "rounds_used": _count,
            "train_history": {"type": "array"},
        },
        closed=False,
    ),
}


class SchemaError(BiasBenchError):
    """A document does not match its declared schema."""


def validate(doc: dict, kind: str) -> None:
    """Raise :class:`SchemaError` unless ``doc`` matches schema ``kind``."""
    try:
        schema = SCHEMAS[kind]
    except KeyError:
        raise SchemaError(f"unknown schema kind {kind!r}") from None
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{kind} document invalid at {where}: {exc.message}") from None
