"""Dynamic Query Expansion simulator.

Keywords are extracted per class (skipping the terms that dominate the
whole dataset), pool documents matching one class's keywords are pulled in,
and each is stamped with that class's label.  No human ever looks at the
added documents, which is the bias mechanism this module exists to study.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .cleaning import strip_artifacts
from .corpus import Document, Entry, LabeledDataset, write_csv
from .errors import ConfigError, DataError
from .stats import DQEEstimate, LabelCounts, expected_dqe_samples

SCORINGS = ("frequency", "tfidf")


@dataclass(frozen=True)
class KeywordSet:
    label: str
    keywords: tuple[tuple[str, float], ...]

    @property
    def terms(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.keywords)


@dataclass(frozen=True)
class DocumentPool:
    documents: tuple[Document, ...]

    def __post_init__(self):
        ids = [d.id for d in self.documents]
        if len(set(ids)) != len(ids):
            raise DataError("pool document ids must be unique")

    def __len__(self) -> int:
        return len(self.documents)

    @classmethod
    def from_texts(cls, texts: Sequence[str], prefix: str = "pool-") -> "DocumentPool":
        return cls(tuple(Document(f"{prefix}{i}", t) for i, t in enumerate(texts)))


def load_pool(path: str | Path, text_column: str = "text", clean: bool = True) -> DocumentPool:
    """Read an unlabeled pool CSV; artifacts are stripped unless ``clean=False``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"pool file not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or text_column not in reader.fieldnames:
            raise DataError(f"column not found: {text_column!r} in {path}")
        texts = [row[text_column] or "" for row in reader]
    if clean:
        texts = [strip_artifacts(t) for t in texts]
    return DocumentPool(
        tuple(Document(f"pool-{i}", t) for i, t in enumerate(texts) if t)
    )


def _top_terms(scores: Mapping[str, float], k: int, exclude=frozenset()) -> list[tuple[str, float]]:
    ranked = sorted(
        ((t, s) for t, s in scores.items() if t not in exclude), key=lambda ts: (-ts[1], ts[0])
    )
    return ranked[:k]


def global_exclusions(ds: LabeledDataset, k: int) -> frozenset[str]:
    """The ``k`` most frequent terms of the whole dataset."""
    freq: Counter[str] = Counter()
    for doc in ds.documents:
        freq.update(doc.terms())
    return frozenset(t for t, _ in _top_terms(freq, k))


def class_keywords(
    ds: LabeledDataset,
    per_class_k: int,
    global_exclude_k: int,
    scoring: str = "frequency",
) -> list[KeywordSet]:
    """Top ``per_class_k`` terms of each class, barring the global top terms.

    With ``scoring="frequency"`` a term scores its occurrence count inside
    the class; ``"tfidf"`` multiplies that by the smoothed idf over the
    whole dataset.  Classes are returned in sorted label order.
    """
    if per_class_k < 1 or global_exclude_k < 0:
        raise ConfigError("per_class_k must be >= 1 and global_exclude_k >= 0")
    if scoring not in SCORINGS:
        raise ConfigError(f"unknown keyword scoring {scoring!r}")
    excluded = global_exclusions(ds, global_exclude_k) if global_exclude_k else frozenset()
    per_class: dict[str, Counter[str]] = {label: Counter() for label in sorted(ds.label_set)}
    df: Counter[str] = Counter()
    for e in ds.entries:
        terms = e.document.terms()
        per_class[e.label].update(terms)
        df.update(set(terms))
    out = []
    for label, freq in per_class.items():
        if not freq:
            raise DataError(f"class {label!r} has an empty vocabulary")
        if scoring == "tfidf":
            n = len(ds)
            scores = {t: c * (math.log((1 + n) / (1 + df[t])) + 1.0) for t, c in freq.items()}
        else:
            scores = {t: float(c) for t, c in freq.items()}
        out.append(KeywordSet(label, tuple(_top_terms(scores, per_class_k, excluded))))
    return out


@dataclass(frozen=True)
class ExpandedDocument:
    document: Document
    label: str
    matched_keywords: tuple[str, ...]


@dataclass
class ExpansionResult:
    added: list[ExpandedDocument] = field(default_factory=list)
    skipped_ambiguous: int = 0
    skipped_no_match: int = 0

    def added_counts(self) -> dict[str, int]:
        return dict(Counter(a.label for a in self.added))

    def to_dataset(self, name: str = "expanded", label_set=None) -> LabeledDataset:
        entries = tuple(Entry(a.document, a.label) for a in self.added)
        labels = frozenset(label_set) if label_set is not None else frozenset(a.label for a in self.added)
        return LabeledDataset(name, entries, labels)

    def write_csv(self, path: str | Path, name: str = "expanded") -> None:
        """Labeled-dataset CSV plus a ``matched_keywords`` column (space separated)."""
        ds = self.to_dataset(name)
        write_csv(ds, path, {"matched_keywords": [" ".join(a.matched_keywords) for a in self.added]})


def expand(keyword_sets: Sequence[KeywordSet], pool: DocumentPool) -> ExpansionResult:
    """One expansion pass over ``pool``.

    A document is added when one class matches strictly more distinct
    keywords than every other class; it receives that class's label.
    """
    if not keyword_sets:
        raise ConfigError("no keyword sets given")
    vocab = [(ks.label, frozenset(ks.terms)) for ks in keyword_sets]
    result = ExpansionResult()
    for doc in pool.documents:
        terms = set(doc.terms())
        matches = [(label, sorted(terms & kw)) for label, kw in vocab]
        counts = sorted((len(m) for _, m in matches), reverse=True)
        if counts[0] == 0:
            result.skipped_no_match += 1
        elif len(counts) > 1 and counts[0] == counts[1]:
            result.skipped_ambiguous += 1
        else:
            label, matched = max(matches, key=lambda lm: len(lm[1]))
            result.added.append(ExpandedDocument(doc, label, tuple(matched)))
    return result


def expand_iteratively(
    ds: LabeledDataset,
    pool: DocumentPool,
    per_class_k: int,
    global_exclude_k: int,
    iterations: int = 1,
    scoring: str = "frequency",
) -> tuple[ExpansionResult, list[KeywordSet]]:
    """Repeat keyword extraction and expansion, feeding added documents back.

    Documents added in one iteration leave the pool, so none can be
    relabeled later.  The skip counters describe the final pass.
    """
    if iterations < 1:
        raise ConfigError(f"iterations must be >= 1, got {iterations}")
    current = ds
    remaining = pool
    total = ExpansionResult()
    keyword_sets: list[KeywordSet] = []
    for _ in range(iterations):
        keyword_sets = class_keywords(current, per_class_k, global_exclude_k, scoring)
        step = expand(keyword_sets, remaining)
        total.added.extend(step.added)
        total.skipped_ambiguous = step.skipped_ambiguous
        total.skipped_no_match = step.skipped_no_match
        if not step.added:
            break
        taken = {a.document.id for a in step.added}
        remaining = DocumentPool(tuple(d for d in remaining.documents if d.id not in taken))
        added_entries = tuple(
            Entry(Document(f"dqe-{a.document.id}", a.document.text, a.document.tokens), a.label)
            for a in step.added
        )
        current = LabeledDataset(current.name, current.entries + added_entries, current.label_set)
    return total, keyword_sets


def contamination_report(
    original: LabeledDataset,
    expanded: ExpansionResult,
    sample_n: Mapping[str, int],
) -> DQEEstimate:
    """Expected DQE-origin count when sampling ``sample_n[label]`` per label
    from the union of original and expanded data."""
    orig = original.class_counts()
    added = expanded.added_counts()
    rows = []
    for label in sorted(set(orig) | set(added)):
        if label not in sample_n:
            continue
        n_added = added.get(label, 0)
        rows.append(LabelCounts(label, sample_n[label], n_added, orig.get(label, 0) + n_added))
    unknown = sorted(set(sample_n) - set(orig) - set(added))
    if unknown:
        raise DataError(f"sample sizes given for unknown labels: {unknown}")
    return expected_dqe_samples(rows)
