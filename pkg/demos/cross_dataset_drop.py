"""Train on one synthetic dataset, test on another, and watch F1 fall.

Run with ``python demos/cross_dataset_drop.py``; takes a few seconds.
"""
# %%
import numpy as np

from biasbench.cleaning import clean_dataset
from biasbench.corpus import LabeledDataset, apply_label_map
from biasbench.evaluate import cross_dataset_eval, cross_validate, select_top
from biasbench.model import ClassifierSpec
from biasbench.stats import spearman_rho
from biasbench.synth import SynthConfig, generate
from biasbench.vectorize import fit_vocabulary, oov_ratio

# %% [markdown]
# Three labelled sets share a neutral vocabulary, but each marks its
# positive class with its own keyword family.

# %%
corpus = generate(SynthConfig(n_docs=600, pool_size=0), seed=1)
words = frozenset(corpus.wordlist)
presets = {"A": "dataset1", "B": "dataset2", "C": "dataset3"}
data = {}
for name, rows in corpus.datasets.items():
    raw = apply_label_map(LabeledDataset.from_pairs(name, rows), presets[name])
    data[name], report = clean_dataset(raw, words, 0.5)
    print(f"{name}: {report.input_count} -> {report.output_count} after cleaning")

# %%
grid = [
    ClassifierSpec("logistic", vectorizer=v, learning_rate=lr, max_rounds=100)
    for v in ("count", "tfidf")
    for lr in (0.1, 0.3)
] + [ClassifierSpec("gbdt", max_depth=3, max_rounds=40)]

results = cross_validate(data["A"], grid, k=6, seed=0)
top = select_top(results, 3)
for r in top:
    print(f"{r.spec.label:40s} CV macro F1 {r.mean_f1_macro:.3f} +/- {r.std_f1_macro:.3f}")

# %% [markdown]
# Evaluate the top models of A on B and C.  Drop is CV score minus the
# score on the unseen dataset.

# %%
r_values, drops = [], []
vocab_a = fit_vocabulary(data["A"])
for exp_id, target in enumerate(("B", "C"), start=1):
    exp = cross_dataset_eval(data["A"], data[target], top, 0.1, 0, experiment_id=exp_id)
    oov = oov_ratio(vocab_a, data[target]).ratio_token_level
    print(f"A -> {target}: avg macro drop {exp.avg_drop_f1_macro:.3f}, OOV ratio {oov:.3f}")
    for m in exp.per_model:
        r_values.append(oov)
        drops.append(m.drop_f1_macro)

print(f"mean drop {np.mean(drops):.3f}")
print(spearman_rho(r_values, drops))
