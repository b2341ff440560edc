"""Labeled text datasets: data model, CSV ingestion, label harmonization and
stratified partitioning.

A dataset is an immutable sequence of ``(Document, label)`` entries.  Labels
are plain strings; after harmonization they are the two values of
:class:`BinaryLabel`.
"""
from __future__ import annotations

import csv
import enum
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .vectorize import tokenize


class BinaryLabel(str, enum.Enum):
    CYBERBULLYING = "Cyberbullying"
    NOT_CYBERBULLYING = "Not Cyberbullying"

    def __str__(self) -> str:
        return self.value


POSITIVE = BinaryLabel.CYBERBULLYING.value
NEGATIVE = BinaryLabel.NOT_CYBERBULLYING.value
BINARY_LABELS = frozenset({POSITIVE, NEGATIVE})


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    tokens: tuple[str, ...] | None = None

    def terms(self) -> tuple[str, ...]:
        """Tokens if already computed, otherwise tokenize ``text``."""
        if self.tokens is not None:
            return self.tokens
        return tuple(tokenize(self.text))


@dataclass(frozen=True)
class Entry:
    document: Document
    label: str


@dataclass(frozen=True)
class LabeledDataset:
    name: str
    entries: tuple[Entry, ...]
    label_set: frozenset[str]
    # rows rejected while loading; informational only
    rejected_rows: int = field(default=0, compare=False)

    def __post_init__(self):
        ids = [e.document.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DataError(f"dataset {self.name!r}: duplicate entry ids")
        for e in self.entries:
            if e.label not in self.label_set:
                raise DataError(
                    f"dataset {self.name!r}: label {e.label!r} not in label set"
                )

    @classmethod
    def from_pairs(
        cls,
        name: str,
        pairs: Iterable[tuple[str, str]],
        label_set: Iterable[str] | None = None,
    ) -> "LabeledDataset":
        """Build a dataset from ``(text, label)`` pairs with ordinal ids."""
        entries = tuple(
            Entry(Document(str(i), text), str(label))
            for i, (text, label) in enumerate(pairs)
        )
        labels = (
            frozenset(label_set)
            if label_set is not None
            else frozenset(e.label for e in entries)
        )
        return cls(name, entries, labels)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def documents(self) -> list[Document]:
        return [e.document for e in self.entries]

    @property
    def texts(self) -> list[str]:
        return [e.document.text for e in self.entries]

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    @property
    def ids(self) -> list[str]:
        return [e.document.id for e in self.entries]

    def token_lists(self) -> list[tuple[str, ...]]:
        return [e.document.terms() for e in self.entries]

    def class_counts(self) -> dict[str, int]:
        counts = {label: 0 for label in sorted(self.label_set)}
        for e in self.entries:
            counts[e.label] += 1
        return counts

    def is_binary(self) -> bool:
        return self.label_set <= BINARY_LABELS

    def targets(self) -> np.ndarray:
        """0/1 targets, 1 for Cyberbullying.  Requires binary labels."""
        if not self.is_binary():
            extra = sorted(self.label_set - BINARY_LABELS)
            raise DataError(
                f"dataset {self.name!r} is not binary-labeled (found {extra}); "
                "apply a label map first"
            )
        return np.fromiter(
            (e.label == POSITIVE for e in self.entries), dtype=np.int8, count=len(self)
        )

    def subset(self, indices: Sequence[int], name: str | None = None) -> "LabeledDataset":
        """Entries at ``indices`` (kept in the given order), same label set."""
        return LabeledDataset(
            name or self.name,
            tuple(self.entries[i] for i in indices),
            self.label_set,
        )

    def concat(self, other: "LabeledDataset", name: str | None = None) -> "LabeledDataset":
        return LabeledDataset(
            name or self.name,
            self.entries + other.entries,
            self.label_set | other.label_set,
        )


# --------------------------------------------------------------------------
# CSV I/O
# --------------------------------------------------------------------------

_SURROGATE = re.compile("[\udc80-\udcff]")


def load_csv(
    path: str | Path,
    text_column: str,
    label_column: str,
    name: str | None = None,
) -> LabeledDataset:
    """Read a labeled dataset from a UTF-8, comma-delimited CSV with header.

    Rows containing bytes that are not valid UTF-8, or with too few cells,
    are rejected and counted in ``rejected_rows``.  Entry ids are the
    zero-based ordinal of the data row in the file.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    raw = path.read_bytes()
    if raw.startswith(b"\xef\xbb\xbf"):
        raw = raw[3:]
    # lone surrogates mark undecodable bytes so whole rows can be rejected
    text = raw.decode("utf-8", errors="surrogateescape")
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{path}: no header row") from None
    for col in (text_column, label_column):
        if col not in header:
            raise DataError(f"column not found: {col!r} in {path}")
    ti, li = header.index(text_column), header.index(label_column)

    entries = []
    rejected = 0
    for ordinal, row in enumerate(reader):
        if not row:
            continue
        if len(row) <= max(ti, li) or any(_SURROGATE.search(cell) for cell in row):
            rejected += 1
            continue
        entries.append(Entry(Document(str(ordinal), row[ti]), row[li]))
    if not entries:
        raise DataError(f"{path}: empty dataset")
    return LabeledDataset(
        name or path.stem,
        tuple(entries),
        frozenset(e.label for e in entries),
        rejected_rows=rejected,
    )


def write_csv(
    ds: LabeledDataset,
    path: str | Path,
    extra: Mapping[str, Sequence[str]] | None = None,
) -> None:
    """Write ``id,text,label`` (plus optional extra columns) as RFC-4180 CSV."""
    extra = dict(extra or {})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "text", "label", *extra])
        for i, e in enumerate(ds.entries):
            writer.writerow(
                [e.document.id, e.document.text, e.label, *(v[i] for v in extra.values())]
            )


# --------------------------------------------------------------------------
# Label harmonization
# --------------------------------------------------------------------------


def _norm(label: str) -> str:
    return re.sub(r"[\s_\-]+", " ", label.strip()).lower()


@dataclass(frozen=True)
class LabelMap:
    """Source label name -> :class:`BinaryLabel`.

    Names are matched case-insensitively with ``_``/``-``/whitespace folded,
    so ``not_cyberbullying`` matches ``Not Cyberbullying``.  ``default``
    catches every label not listed explicitly.
    """

    mapping: Mapping[str, BinaryLabel]
    preset_id: str | None = None
    default: BinaryLabel | None = None

    def lookup(self, label: str) -> BinaryLabel | None:
        normalized = {_norm(k): v for k, v in self.mapping.items()}
        return normalized.get(_norm(label), self.default)


_C, _N = BinaryLabel.CYBERBULLYING, BinaryLabel.NOT_CYBERBULLYING

PRESETS: dict[str, LabelMap] = {
    # every class other than Not Cyberbullying is a kind of cyberbullying
    "dataset1": LabelMap({"Not Cyberbullying": _N}, "dataset1", default=_C),
    "dataset2": LabelMap(
        {"Hate Speech": _C, "Offensive": _N, "Non-Offensive": _N}, "dataset2"
    ),
    "dataset3": LabelMap({"Harassing": _C, "Non-Harassing": _N}, "dataset3"),
    "binary": LabelMap({"Cyberbullying": _C, "Not Cyberbullying": _N}, "binary"),
}


def get_preset(preset_id: str) -> LabelMap:
    try:
        return PRESETS[preset_id]
    except KeyError:
        raise ConfigError(
            f"unknown label-map preset {preset_id!r}; choose from {sorted(PRESETS)}"
        ) from None


def apply_label_map(
    ds: LabeledDataset, label_map: LabelMap | str, unmapped: str = "error"
) -> LabeledDataset:
    """Relabel every entry onto the two binary classes.

    ``unmapped="error"`` (default) raises on the first label the map does not
    cover; ``unmapped="drop"`` silently removes such entries.
    """
    if isinstance(label_map, str):
        label_map = get_preset(label_map)
    if unmapped not in ("error", "drop"):
        raise ConfigError(f"unmapped policy must be 'error' or 'drop', got {unmapped!r}")
    out = []
    for e in ds.entries:
        target = label_map.lookup(e.label)
        if target is None:
            if unmapped == "error":
                raise DataError(f"unmapped label: {e.label}")
            continue
        out.append(Entry(e.document, target.value))
    if not out:
        raise DataError(f"dataset {ds.name!r}: no entries left after label mapping")
    return LabeledDataset(ds.name, tuple(out), BINARY_LABELS)


# --------------------------------------------------------------------------
# Stratified partitioning
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: Mapping[str, int]

    def fold_indices(self, ds: LabeledDataset) -> list[np.ndarray]:
        """Positions (into ``ds.entries``) of each fold's members, ascending."""
        folds = np.array([self.assignment[i] for i in ds.ids])
        return [np.flatnonzero(folds == f) for f in range(self.k)]


def _class_positions(ds: LabeledDataset) -> dict[str, list[int]]:
    positions: dict[str, list[int]] = {label: [] for label in sorted(ds.label_set)}
    for i, e in enumerate(ds.entries):
        positions[e.label].append(i)
    return positions


def stratified_folds(ds: LabeledDataset, k: int, seed: int) -> FoldAssignment:
    """Assign each entry to one of ``k`` folds preserving class proportions.

    Within each class the members are shuffled and dealt round-robin, so
    per-fold class counts are floor or ceil of ``N_c / k``.  Each class
    continues dealing where the previous one stopped, which keeps total
    fold sizes within one of each other as well.
    """
    if k < 1:
        raise ConfigError(f"k must be positive, got {k}")
    rng = np.random.default_rng(seed)
    assignment: dict[str, int] = {}
    offset = 0
    for label, members in _class_positions(ds).items():
        if len(members) == 0:
            continue
        if len(members) < k:
            raise DataError(
                f"class {label!r} has {len(members)} members, fewer than k={k}"
            )
        order = rng.permutation(len(members))
        for rank, j in enumerate(order):
            assignment[ds.entries[members[j]].document.id] = (offset + rank) % k
        offset = (offset + len(members)) % k
    return FoldAssignment(k, assignment)


def _apportion(total: int, quotas: Sequence[float]) -> list[int]:
    """Largest-remainder rounding of ``quotas`` to integers summing to ``total``."""
    base = [math.floor(q) for q in quotas]
    remainders = sorted(
        range(len(quotas)), key=lambda i: (-(quotas[i] - base[i]), i)
    )
    for i in remainders[: total - sum(base)]:
        base[i] += 1
    return base


def holdout_split(
    ds: LabeledDataset, fraction: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified split into ``(remainder, holdout)``.

    The holdout size is ``round(fraction * N)`` apportioned over classes by
    largest remainder.  Both parts keep the source entry order.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"holdout fraction must be in (0, 1), got {fraction}")
    positions = _class_positions(ds)
    labels = list(positions)
    total = round(fraction * len(ds))
    sizes = _apportion(total, [fraction * len(positions[c]) for c in labels])
    if sum(sizes) == 0:
        raise DataError(f"empty holdout: fraction {fraction} of {len(ds)} entries")
    if sum(sizes) == len(ds):
        raise DataError(f"empty training part: fraction {fraction} of {len(ds)} entries")

    rng = np.random.default_rng(seed)
    held = set()
    for label, size in zip(labels, sizes):
        members = positions[label]
        order = rng.permutation(len(members))
        held.update(members[j] for j in order[:size])
    rest = [i for i in range(len(ds)) if i not in held]
    hold = sorted(held)
    return ds.subset(rest), ds.subset(hold, name=f"{ds.name}:holdout")
