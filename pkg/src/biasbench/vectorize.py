"""Tokenization, vocabulary fitting, count / tf-idf encodings and OOV ratios.

Feature matrices are backed by ``scipy.sparse.csr_matrix``; the
:class:`SparseVector` view exists for inspection and small tests.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DataError

if TYPE_CHECKING:
    from .corpus import Document, LabeledDataset

_TOKEN = re.compile(r"[^\W_]+")

ENCODINGS = ("count", "tfidf")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every maximal run of non-alphanumeric characters."""
    return _TOKEN.findall(text.lower())


def ngrams(tokens: Sequence[str], ngram_max: int = 1) -> list[str]:
    """Unigrams followed by space-joined n-grams up to ``ngram_max``."""
    if not 1 <= ngram_max <= 3:
        raise ConfigError(f"ngram_max must be in [1, 3], got {ngram_max}")
    terms = list(tokens)
    for n in range(2, ngram_max + 1):
        terms.extend(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return terms


@dataclass(frozen=True)
class Vocabulary:
    term_to_index: Mapping[str, int]
    document_frequency: Mapping[str, int]
    fitted_on: str
    n_documents: int
    ngram_max: int = 1

    def __len__(self) -> int:
        return len(self.term_to_index)

    def __contains__(self, term: str) -> bool:
        return term in self.term_to_index

    @property
    def terms(self) -> list[str]:
        return sorted(self.term_to_index, key=self.term_to_index.__getitem__)

    def idf(self) -> np.ndarray:
        """Smoothed idf per column: ln((1 + n) / (1 + df)) + 1."""
        df = np.array([self.document_frequency[t] for t in self.terms], dtype=float)
        return np.log((1.0 + self.n_documents) / (1.0 + df)) + 1.0


def _doc_terms(doc, ngram_max: int) -> list[str]:
    return ngrams(doc.terms(), ngram_max)


def fit_vocabulary(
    ds: "LabeledDataset",
    min_df: int = 1,
    max_features: int | None = None,
    ngram_max: int = 1,
) -> Vocabulary:
    """Fit term indices and document frequencies on ``ds``.

    Terms with document frequency below ``min_df`` are dropped; with
    ``max_features`` only the most frequent (by document frequency,
    lexicographic tie-break) survive.  Indices follow lexicographic order.
    """
    if len(ds) == 0:
        raise DataError("cannot fit a vocabulary on an empty dataset")
    if min_df < 1:
        raise ConfigError(f"min_df must be >= 1, got {min_df}")
    df: Counter[str] = Counter()
    for doc in ds.documents:
        df.update(set(_doc_terms(doc, ngram_max)))
    kept = [t for t, c in df.items() if c >= min_df]
    if max_features is not None:
        kept.sort(key=lambda t: (-df[t], t))
        kept = kept[:max_features]
    if not kept:
        raise DataError("empty vocabulary")
    kept.sort()
    return Vocabulary(
        {t: i for i, t in enumerate(kept)},
        {t: df[t] for t in kept},
        ds.name,
        len(ds),
        ngram_max,
    )


@dataclass(frozen=True)
class SparseVector:
    indices: tuple[int, ...]
    values: tuple[float, ...]

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.indices, self.values))


@dataclass(frozen=True)
class FeatureMatrix:
    matrix: sp.csr_matrix
    encoding: str

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    @property
    def rows(self) -> list[SparseVector]:
        m = self.matrix
        return [
            SparseVector(
                tuple(int(i) for i in m.indices[m.indptr[r] : m.indptr[r + 1]]),
                tuple(float(v) for v in m.data[m.indptr[r] : m.indptr[r + 1]]),
            )
            for r in range(m.shape[0])
        ]

    def take(self, rows: Sequence[int]) -> "FeatureMatrix":
        return FeatureMatrix(self.matrix[np.asarray(rows, dtype=np.intp)], self.encoding)


def encode_count(docs: Iterable["Document"], vocab: Vocabulary) -> FeatureMatrix:
    """Row r, column j = number of occurrences of term j in document r."""
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    index = vocab.term_to_index
    for doc in docs:
        counts = Counter(t for t in _doc_terms(doc, vocab.ngram_max) if t in index)
        for j, c in sorted((index[t], c) for t, c in counts.items()):
            indices.append(j)
            data.append(float(c))
        indptr.append(len(indices))
    m = sp.csr_matrix(
        (np.array(data, dtype=float), np.array(indices, dtype=np.int32), np.array(indptr)),
        shape=(len(indptr) - 1, len(vocab)),
    )
    return FeatureMatrix(m, "count")


def encode_tfidf(docs: Iterable["Document"], vocab: Vocabulary) -> FeatureMatrix:
    """Counts scaled by smoothed idf, then each nonzero row L2-normalized."""
    counts = encode_count(docs, vocab).matrix
    m = counts @ sp.diags(vocab.idf())
    m = sp.csr_matrix(m)
    norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
    norms[norms == 0.0] = 1.0
    m = sp.csr_matrix(sp.diags(1.0 / norms) @ m)
    m.sort_indices()
    return FeatureMatrix(m, "tfidf")


def encode(docs: Iterable["Document"], vocab: Vocabulary, encoding: str) -> FeatureMatrix:
    if encoding == "count":
        return encode_count(docs, vocab)
    if encoding == "tfidf":
        return encode_tfidf(docs, vocab)
    raise ConfigError(f"unknown encoding {encoding!r}; expected one of {ENCODINGS}")


def save_coordinate(fm: FeatureMatrix, path: str | Path) -> None:
    """Write ``rows cols nnz encoding`` then one ``row col value`` line per nonzero."""
    coo = fm.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{fm.n_rows} {fm.n_columns} {coo.nnz} {fm.encoding}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")


def load_coordinate(path: str | Path) -> FeatureMatrix:
    with open(path, encoding="utf-8") as fh:
        n_rows, n_cols, nnz, encoding = fh.readline().split()
        rows, cols, vals = [], [], []
        for line in fh:
            r, c, v = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
    if len(vals) != int(nnz):
        raise DataError(f"{path}: header declares {nnz} nonzeros, found {len(vals)}")
    m = sp.csr_matrix((vals, (rows, cols)), shape=(int(n_rows), int(n_cols)))
    return FeatureMatrix(m, encoding)


@dataclass(frozen=True)
class OOVReport:
    ratio_token_level: float
    ratio_type_level: float
    oov_token_count: int
    total_token_count: int
    oov_type_count: int
    total_type_count: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def oov_ratio(train_vocab: Vocabulary, test_ds: "LabeledDataset") -> OOVReport:
    """Share of test terms missing from ``train_vocab``, by occurrence and by type."""
    occurrences: Counter[str] = Counter()
    for doc in test_ds.documents:
        occurrences.update(_doc_terms(doc, train_vocab.ngram_max))
    total_tokens = sum(occurrences.values())
    if total_tokens == 0:
        raise DataError(f"dataset {test_ds.name!r} has no tokens")
    oov_types = [t for t in occurrences if t not in train_vocab]
    oov_tokens = sum(occurrences[t] for t in oov_types)
    return OOVReport(
        ratio_token_level=oov_tokens / total_tokens,
        ratio_type_level=len(oov_types) / len(occurrences),
        oov_token_count=oov_tokens,
        total_token_count=total_tokens,
        oov_type_count=len(oov_types),
        total_type_count=len(occurrences),
    )


def corpus_term_frequency(docs: Iterable["Document"]) -> Counter[str]:
    counts: Counter[str] = Counter()
    for doc in docs:
        counts.update(doc.terms())
    return counts

