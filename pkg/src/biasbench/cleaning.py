"""Tweet preprocessing: artifact stripping and non-English filtering."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Sequence

from .corpus import Document, Entry, LabeledDataset
from .errors import ConfigError
from .vectorize import tokenize

DEFAULT_ENGLISH_THRESHOLD = 0.5

_URL = re.compile(r"\b[a-zA-Z][a-zA-Z0-9+.\-]*://\S+|\bwww\.\S+", re.IGNORECASE)
# "RT" only when it acts as a retweet marker: followed by mentions and/or a colon
_RETWEET = re.compile(r"\bRT\b(?:\s*@\w+)+\s*:?|\bRT\s*:")
_MENTION = re.compile(r"@\w+")
_ENTITY = re.compile(r"&(?:[a-zA-Z][a-zA-Z0-9]*|#\d+|#[xX][0-9a-fA-F]+);")
_SPACES = re.compile(r"\s+")


def _strip_once(text: str) -> str:
    for pattern in (_URL, _RETWEET, _MENTION, _ENTITY):
        text = pattern.sub(" ", text)
    return _SPACES.sub(" ", text).strip()


def strip_artifacts(text: str) -> str:
    """Remove links, retweet markers, mentions and HTML entities.

    Removal is repeated until nothing changes, since deleting one span can
    expose another (a link between ``RT`` and a mention), which keeps the
    function idempotent.
    """
    previous = None
    while text != previous:
        previous, text = text, _strip_once(text)
    return text


def english_token_ratio(tokens: Sequence[str], wordlist: Collection[str]) -> float:
    if not wordlist:
        raise ConfigError("english wordlist is empty")
    if not tokens:
        return 1.0
    return sum(1 for t in tokens if t in wordlist) / len(tokens)


def load_wordlist(path: str | Path) -> frozenset[str]:
    """One lowercase term per line; blank lines and ``#`` comments ignored."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"wordlist not found: {path}")
    words = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            words.add(line)
    if not words:
        raise ConfigError(f"wordlist is empty: {path}")
    return frozenset(words)


@dataclass(frozen=True)
class CleaningReport:
    input_count: int
    removed_non_english: int
    emptied_and_dropped: int
    output_count: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def clean_dataset(
    ds: LabeledDataset,
    wordlist: Collection[str],
    english_threshold: float = DEFAULT_ENGLISH_THRESHOLD,
) -> tuple[LabeledDataset, CleaningReport]:
    """Strip artifacts, drop predominantly non-English and empty documents.

    Surviving entries keep their id and label; their text is the cleaned
    text and their tokens are cached on the document.
    """
    if not 0.0 <= english_threshold <= 1.0:
        raise ConfigError(f"english_threshold must be in [0, 1], got {english_threshold}")
    if not wordlist:
        raise ConfigError("english wordlist is empty")
    kept = []
    non_english = emptied = 0
    for e in ds.entries:
        text = strip_artifacts(e.document.text)
        tokens = tuple(tokenize(text))
        if english_token_ratio(tokens, wordlist) < english_threshold:
            non_english += 1
        elif not tokens:
            emptied += 1
        else:
            kept.append(Entry(Document(e.document.id, text, tokens), e.label))
    report = CleaningReport(len(ds), non_english, emptied, len(kept))
    return LabeledDataset(ds.name, tuple(kept), ds.label_set), report
