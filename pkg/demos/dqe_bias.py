"""Keyword-driven expansion and the contamination it leaves behind.

Run with ``python demos/dqe_bias.py``; takes a few seconds.
"""
# %%
from biasbench.cleaning import clean_dataset
from biasbench.corpus import POSITIVE, LabeledDataset, apply_label_map
from biasbench.dqe import DocumentPool, contamination_report, expand_iteratively
from biasbench.stats import LabelCounts, monte_carlo_dqe
from biasbench.synth import SynthConfig, generate

# %%
corpus = generate(SynthConfig(n_docs=800, pool_size=1500), seed=2)
raw = apply_label_map(LabeledDataset.from_pairs("A", corpus.datasets["A"]), "dataset1")
seed_set, _ = clean_dataset(raw, frozenset(corpus.wordlist), 0.5)
pool = DocumentPool.from_texts(corpus.pool)

# %% [markdown]
# Each class contributes its most frequent terms, minus the terms common to
# the whole set.  Pool documents matching one class best inherit its label.

# %%
expansion, keyword_sets = expand_iteratively(seed_set, pool, per_class_k=10, global_exclude_k=20)
for ks in keyword_sets:
    print(ks.label, ks.terms)
print("added per label:", expansion.added_counts())
print("ambiguous:", expansion.skipped_ambiguous, "unmatched:", expansion.skipped_no_match)

planted = set(corpus.families["A"])
hits = sum(bool(set(a.document.terms()) & planted) for a in expansion.added if a.label == POSITIVE)
print(f"{hits} of the added positives carry a planted keyword")

# %% [markdown]
# How many expansion-origin documents would a sample of 200 per label
# contain?  The closed form and a simulation should agree.

# %%
sample_n = {label: 200 for label in seed_set.label_set}
estimate = contamination_report(seed_set, expansion, sample_n)
print("expected:", round(estimate.total_expected, 2))

orig, added = seed_set.class_counts(), expansion.added_counts()
rows = [
    LabelCounts(label, 200, added.get(label, 0), orig[label] + added.get(label, 0))
    for label in sorted(sample_n)
]
print("simulated:", round(monte_carlo_dqe(rows, 5000, seed=0), 2))
