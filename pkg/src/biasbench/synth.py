"""Synthetic corpora that reproduce lexicon-based collection bias.

Three datasets share a neutral vocabulary but mark their positive class with
different keyword families: dataset A with family ``K_A``, dataset B with a
disjoint family ``K_B``, dataset C with a mix of both.  A small shared
family appears in positives everywhere.  A model trained on A therefore
learns A's lexicon and loses most of its recall on B.

Raw labels follow each source's own scheme (six-class, hate/offensive,
harassment) so the label-map presets are exercised end to end.
"""
from __future__ import annotations

import csv
import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

_CONSONANTS = "bdfgklmnprstv"
_VOWELS = "aeiou"
_FOREIGN_ONSETS = ("zh", "xq", "qj", "kx", "zz", "jq")

DATASET1_POSITIVE = ("Age", "Ethnicity", "Gender", "Religion", "Other Cyberbullying")


@dataclass
class SynthConfig:
    n_docs: int = 2000
    neutral_vocab_size: int = 600
    keyword_family_size: int = 15
    shared_family_size: int = 5
    marker_prob: float = 0.95
    shared_prob: float = 0.2
    negative_marker_rate: float = 0.02
    min_len: int = 8
    max_len: int = 20
    positive_fraction: dict = field(default_factory=lambda: {"A": 0.6, "B": 0.15, "C": 0.25})
    foreign_fraction: float = 0.03
    artifact_prob: float = 0.35
    mention_only_fraction: float = 0.005
    overlap_docs: int = 20
    pool_size: int = 3000
    pool_keyword_fraction: dict = field(default_factory=lambda: {"A": 0.15, "B": 0.15})

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            from .errors import ConfigError

            raise ConfigError(f"unknown synth parameters: {sorted(unknown)}")
        return cls(**d)


def _syllable_words(rng: np.random.Generator, count: int, exclude=()) -> list[str]:
    syllables = [c + v for c in _CONSONANTS for v in _VOWELS]
    words = ["".join(p) for n in (2, 3) for p in itertools.product(syllables, repeat=n)]
    words = [w for w in words if w not in set(exclude)]
    picked = rng.choice(len(words), size=count, replace=False)
    return [words[i] for i in picked]


def _foreign_words(rng: np.random.Generator, count: int) -> list[str]:
    words = {
        onset + v + c
        for onset in _FOREIGN_ONSETS
        for v in _VOWELS
        for c in _CONSONANTS
    }
    words = sorted(words)
    return [words[i] for i in rng.choice(len(words), size=count, replace=False)]


@dataclass
class SynthCorpus:
    datasets: dict[str, list[tuple[str, str]]]
    pool: list[str]
    neutral: list[str]
    families: dict[str, list[str]]
    foreign: list[str]
    config: SynthConfig
    seed: int

    @property
    def wordlist(self) -> list[str]:
        words = set(self.neutral)
        for fam in self.families.values():
            words.update(fam)
        return sorted(words)


class _Writer:
    def __init__(self, rng, neutral, cfg: SynthConfig):
        self.rng = rng
        self.neutral = neutral
        self.cfg = cfg
        ranks = np.arange(1, len(neutral) + 1)
        self.p = (1.0 / ranks) / np.sum(1.0 / ranks)

    def filler(self, n: int) -> list[str]:
        return [self.neutral[i] for i in self.rng.choice(len(self.neutral), size=n, p=self.p)]

    def sentence(self, inserts: list[str]) -> list[str]:
        n = int(self.rng.integers(self.cfg.min_len, self.cfg.max_len + 1))
        words = self.filler(max(1, n - len(inserts)))
        for w in inserts:
            words.insert(int(self.rng.integers(0, len(words) + 1)), w)
        return words

    def decorate(self, words: list[str]) -> str:
        rng, text = self.rng, " ".join(words)
        if rng.random() < self.cfg.artifact_prob:
            kind = int(rng.integers(0, 4))
            handle = f"@user{int(rng.integers(1, 999))}"
            if kind == 0:
                text = f"RT {handle}: {text}"
            elif kind == 1:
                text = f"{text} https://t.co/{int(rng.integers(10**5, 10**6)):x}"
            elif kind == 2:
                text = f"{handle} {text}"
            else:
                cut = len(words) // 2
                text = " ".join(words[:cut]) + " &amp; " + " ".join(words[cut:])
        return text


def generate(config: SynthConfig | None = None, seed: int = 0) -> SynthCorpus:
    cfg = config or SynthConfig()
    rng = np.random.default_rng(seed)
    k = cfg.keyword_family_size
    vocab = _syllable_words(rng, cfg.neutral_vocab_size + 3 * k + cfg.shared_family_size)
    neutral = vocab[: cfg.neutral_vocab_size]
    rest = vocab[cfg.neutral_vocab_size :]
    families = {
        "A": rest[:k],
        "B": rest[k : 2 * k],
        "C": rest[2 * k : 3 * k],
        "shared": rest[3 * k :],
    }
    foreign = _foreign_words(rng, 200)
    writer = _Writer(rng, neutral, cfg)

    def pick(fam: str, n: int) -> list[str]:
        words = families[fam]
        return [words[i] for i in rng.choice(len(words), size=n, replace=False)]

    def positive_markers(name: str) -> list[str]:
        inserts = []
        if rng.random() < cfg.marker_prob:
            fam = name if name != "C" else ("A" if rng.random() < 0.5 else "B")
            inserts += pick(fam, int(rng.integers(1, 3)))
        if rng.random() < cfg.shared_prob:
            inserts += pick("shared", 1)
        return inserts

    def raw_label(name: str, positive: bool) -> str:
        if name == "A":
            return str(rng.choice(DATASET1_POSITIVE)) if positive else "Not Cyberbullying"
        if name == "B":
            if positive:
                return "Hate Speech"
            return "Offensive" if rng.random() < 0.3 else "Non-Offensive"
        return "Harassing" if positive else "Non-Harassing"

    datasets: dict[str, list[tuple[str, str]]] = {}
    for name in ("A", "B", "C"):
        rows = []
        n_pos = int(round(cfg.positive_fraction[name] * cfg.n_docs))
        flags = np.zeros(cfg.n_docs, dtype=bool)
        flags[:n_pos] = True
        rng.shuffle(flags)
        for positive in flags:
            u = rng.random()
            if u < cfg.mention_only_fraction:
                text = " ".join(f"@user{int(rng.integers(1, 999))}" for _ in range(3))
            elif u < cfg.mention_only_fraction + cfg.foreign_fraction:
                n = int(rng.integers(cfg.min_len, cfg.max_len + 1))
                words = [foreign[i] for i in rng.integers(0, len(foreign), size=n)]
                words[: n // 5] = writer.filler(n // 5)
                text = writer.decorate(words)
            else:
                if positive:
                    inserts = positive_markers(name)
                elif rng.random() < cfg.negative_marker_rate:
                    fam = name if name != "C" else "A"
                    inserts = pick(fam, 1)
                else:
                    inserts = []
                text = writer.decorate(writer.sentence(inserts))
            rows.append((text, raw_label(name, bool(positive))))
        datasets[name] = rows

    # exact duplicates of B negatives inside A, mimicking aggregated sources
    b_neg = [t for t, lab in datasets["B"] if lab != "Hate Speech"]
    for j, i in enumerate(rng.choice(len(b_neg), size=min(cfg.overlap_docs, len(b_neg)), replace=False)):
        datasets["A"][j * 7 % len(datasets["A"])] = (b_neg[i], "Not Cyberbullying")

    pool = []
    for _ in range(cfg.pool_size):
        u = rng.random()
        inserts = []
        edge = 0.0
        for fam, frac in cfg.pool_keyword_fraction.items():
            if edge <= u < edge + frac:
                inserts = pick(fam, int(rng.integers(1, 3)))
            edge += frac
        pool.append(writer.decorate(writer.sentence(inserts)))

    return SynthCorpus(datasets, pool, neutral, families, foreign, cfg, seed)


def default_pipeline_config(seed: int) -> dict:
    """Pipeline config pointing at the files written by :func:`write_corpus`."""
    return {
        "schema": "biasbench.config/1",
        "seed": seed,
        "output_dir": "run",
        "datasets": [
            {"name": n, "path": f"{n}.csv", "text_column": "text", "label_column": "label",
             "label_map": preset}
            for n, preset in (("A", "dataset1"), ("B", "dataset2"), ("C", "dataset3"))
        ],
        "cleaning": {"wordlist": "wordlist.txt", "english_threshold": 0.5},
        "grid": {
            "families": ["logistic", "gbdt"],
            "vectorizers": ["count", "tfidf"],
            "learning_rates": [0.05, 0.1, 0.3],
            "max_depths": [3, 6],
            "l2_penalties": [0.0, 0.1, 1.0],
            "max_rounds": 200,
            "early_stopping_patience": 10,
        },
        "k": 6,
        "holdout_fraction": 0.1,
        "top_n": 10,
        "top_per_family": True,
        "dqe": {
            "dataset": "A",
            "pool": "pool.csv",
            "text_column": "text",
            "per_class_k": 10,
            "global_exclude_k": 20,
            "iterations": 1,
            "sample_n": {"Cyberbullying": 500, "Not Cyberbullying": 500},
        },
    }


def write_corpus(corpus: SynthCorpus, out_dir: str | Path) -> dict[str, Path]:
    """Write A/B/C CSVs, pool, wordlist, parameter sidecar and a pipeline config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, rows in corpus.datasets.items():
        p = out / f"{name}.csv"
        with open(p, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["text", "label"])
            w.writerows(rows)
        paths[name] = p
    p = out / "pool.csv"
    with open(p, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["text"])
        w.writerows([t] for t in corpus.pool)
    paths["pool"] = p
    paths["wordlist"] = out / "wordlist.txt"
    paths["wordlist"].write_text(
        "# synthetic English wordlist\n" + "\n".join(corpus.wordlist) + "\n", encoding="utf-8"
    )
    sidecar = {
        "schema": "biasbench.synth/1",
        "seed": corpus.seed,
        "parameters": asdict(corpus.config),
        "keyword_families": corpus.families,
        "neutral_vocabulary_size": len(corpus.neutral),
    }
    paths["params"] = out / "synth_params.json"
    paths["params"].write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    paths["config"] = out / "config.json"
    paths["config"].write_text(
        json.dumps(default_pipeline_config(corpus.seed), indent=1) + "\n", encoding="utf-8"
    )
    return paths
