from pathlib import Path

import numpy as np
import pytest

from biasbench.corpus import NEGATIVE, POSITIVE, LabeledDataset
from biasbench.synth import SynthConfig

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


def binary_dataset(n_pos: int, n_neg: int, name: str = "toy", seed: int = 0) -> LabeledDataset:
    """Balanced-vocabulary toy data: positives mention 'troll', negatives 'friend'."""
    rng = np.random.default_rng(seed)
    filler = ["the", "day", "good", "people", "world", "very", "like", "just"]
    pairs = []
    for label, n, marker in ((POSITIVE, n_pos, "troll"), (NEGATIVE, n_neg, "friend")):
        for _ in range(n):
            words = list(rng.choice(filler, size=5)) + [marker]
            rng.shuffle(words)
            pairs.append((" ".join(words), label))
    order = rng.permutation(len(pairs))
    return LabeledDataset.from_pairs(name, [pairs[i] for i in order])


SMALL_SYNTH = SynthConfig(n_docs=300, neutral_vocab_size=200, pool_size=400, overlap_docs=5)


# acceptance outcomes, printed once at the end of the session
ACCEPTANCE: list[tuple[int, str, bool, float, float, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, elapsed, budget, detail in sorted(ACCEPTANCE):
        status = "PASS" if ok else "FAIL"
        line = f"{status} criterion {number}: {title} ({elapsed:.1f}s of {budget:.0f}s)"
        terminalreporter.write_line(line + (f" | {detail}" if detail else ""))
