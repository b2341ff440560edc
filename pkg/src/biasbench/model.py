"""Reference classifiers: class-weighted logistic regression and gradient
boosted trees, both trained with holdout early stopping.

Both families share one training loop shape: round 0 is the untrained
model, every later round is one gradient step (logistic) or one tree
(gbdt), and the returned parameters are those of the round with the lowest
holdout loss.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import _tree_kernels as _kernels
from .errors import ConfigError, DataError, TrainingDivergedError
from .vectorize import ENCODINGS, FeatureMatrix

FAMILIES = ("logistic", "gbdt")
MODEL_SCHEMA = "biasbench.model/1"
PROBA_EPS = 1e-12
# leaf regularization of the boosted trees
TREE_LAMBDA = 1.0


@dataclass(frozen=True)
class ClassifierSpec:
    family: str
    vectorizer: str = "count"
    learning_rate: float = 0.1
    l2_penalty: float = 0.0
    max_depth: int = 3
    max_rounds: int = 200
    early_stopping_patience: int = 10
    seed: int = 0
    min_df: int = 1
    ngram_max: int = 1
    colsample: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.vectorizer not in ENCODINGS:
            raise ConfigError(f"unknown vectorizer {self.vectorizer!r}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.l2_penalty < 0:
            raise ConfigError(f"l2_penalty must be >= 0, got {self.l2_penalty}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.max_rounds < 0:
            raise ConfigError(f"max_rounds must be >= 0, got {self.max_rounds}")
        if self.early_stopping_patience < 1:
            raise ConfigError("early_stopping_patience must be >= 1")
        if not 0.0 < self.colsample <= 1.0:
            raise ConfigError(f"colsample must be in (0, 1], got {self.colsample}")

    @property
    def label(self) -> str:
        if self.family == "logistic":
            knobs = f"lr={self.learning_rate:g},l2={self.l2_penalty:g}"
        else:
            knobs = f"lr={self.learning_rate:g},depth={self.max_depth}"
        return f"{self.family}[{self.vectorizer},{knobs}]"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierSpec":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad classifier spec {d!r}: {exc}") from None


@dataclass(frozen=True)
class ClassWeights:
    positive_weight: float
    negative_weight: float = 1.0

    def per_sample(self, y: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(y) == 1, self.positive_weight, self.negative_weight)


def compute_class_weights(y) -> ClassWeights:
    """Positive class weighted by N_neg / N_pos.

    Accepts 0/1 targets or a binary :class:`LabeledDataset`.
    """
    if hasattr(y, "targets"):
        y = y.targets()
    y = np.asarray(y)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError(
            f"both classes required for class weights (pos={n_pos}, neg={n_neg})"
        )
    return ClassWeights(n_neg / n_pos)


# --------------------------------------------------------------------------
# Losses
# --------------------------------------------------------------------------


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def weighted_log_loss(margin: np.ndarray, y: np.ndarray, c: np.ndarray) -> float:
    """Class-weighted mean logistic loss, sum(c * loss) / sum(c)."""
    signed = np.where(y == 1, 1.0, -1.0)
    return float(np.sum(c * _softplus(-signed * margin)) / np.sum(c))


def logistic_objective(
    w: np.ndarray, b: float, X, y: np.ndarray, c: np.ndarray, l2: float
) -> tuple[float, np.ndarray, float]:
    """Total weighted L2-regularized loss and its gradient in (w, b).

    ``sum_i c_i log(1 + exp(-s_i (w.x_i + b))) + l2/2 |w|^2`` with
    ``s_i`` in {-1, +1}.
    """
    margin = X @ w + b
    signed = np.where(y == 1, 1.0, -1.0)
    loss = float(np.sum(c * _softplus(-signed * margin)) + 0.5 * l2 * np.dot(w, w))
    residual = c * (_sigmoid(margin) - y)
    grad_w = X.T @ residual + l2 * w
    return loss, np.asarray(grad_w).ravel(), float(residual.sum())


# --------------------------------------------------------------------------
# Trees
# --------------------------------------------------------------------------


class _KeyedMatrix:
    """CSR matrix with a sorted ``row * n_cols + col`` key per nonzero, so
    arbitrary (row, col) lookups are one vectorized binary search."""

    def __init__(self, X):
        X = sp.csr_matrix(X)
        X.sort_indices()
        self.shape = X.shape
        rows = np.repeat(np.arange(X.shape[0], dtype=np.int64), np.diff(X.indptr))
        self.keys = rows * X.shape[1] + X.indices.astype(np.int64)
        self.data = X.data

    def lookup(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        if self.keys.size == 0:
            return np.zeros(rows.size)
        q = rows * self.shape[1] + cols
        pos = np.minimum(np.searchsorted(self.keys, q), self.keys.size - 1)
        return np.where(self.keys[pos] == q, self.data[pos], 0.0)


@dataclass
class Tree:
    """Flat binary tree.  Internal nodes route a row right when its value in
    ``feature`` is nonzero and ``>= threshold``; zeros (absent entries) go
    left.  ``value`` holds already-shrunk leaf outputs."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def leaf_index(self, X) -> np.ndarray:
        km = X if isinstance(X, _KeyedMatrix) else _KeyedMatrix(X)
        node = np.zeros(km.shape[0], dtype=np.int64)
        while True:
            rows = np.flatnonzero(self.left[node] >= 0)
            if rows.size == 0:
                return node
            at = node[rows]
            x = km.lookup(rows, self.feature[at])
            go_right = (x != 0) & (x >= self.threshold[at])
            node[rows] = np.where(go_right, self.right[at], self.left[at])

    def predict(self, X) -> np.ndarray:
        return self.value[self.leaf_index(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
        )


@dataclass(frozen=True)
class SplitChoice:
    feature: int
    threshold: float
    gain: float


def _sorted_entries(X: sp.csr_matrix, features: np.ndarray | None = None):
    """(row, feature, value) of the nonzeros, ordered by feature asc, value desc."""
    coo = sp.coo_matrix(X)
    keep = coo.data != 0
    if features is not None:
        keep &= np.isin(coo.col, features)
    rows, cols, vals = coo.row[keep], coo.col[keep], coo.data[keep]
    order = np.lexsort((rows, -vals, cols))
    return (
        rows[order].astype(np.int64),
        cols[order].astype(np.int64),
        vals[order].astype(float),
    )


def _level_splits(node, feat, val, ge, he, G_node, H_node, n_node, lam):
    """Best split per node from entries grouped by node, then feature asc,
    then value desc.

    Candidate thresholds are the distinct nonzero values of each feature
    inside the node: rows at or above go right, everything else (absent
    zeros included) goes left.  Gain ties resolve to the lowest feature,
    then the highest threshold.
    """
    if node.size == 0:
        return {}
    bf, bt, bg = _kernels.level_splits(
        node, feat, val, ge, he,
        np.asarray(G_node, float), np.asarray(H_node, float),
        np.asarray(n_node, np.int64), float(lam),
    )
    return {
        int(j): SplitChoice(int(bf[j]), float(bt[j]), float(bg[j]))
        for j in np.flatnonzero(bf >= 0)
    }


def best_split(X, g, h, lam: float = TREE_LAMBDA) -> SplitChoice | None:
    """Best single split over all rows of ``X`` (the root node)."""
    X = sp.csr_matrix(X, dtype=float)
    g, h = np.asarray(g, float), np.asarray(h, float)
    row, feat, val = _sorted_entries(X)
    node = np.zeros(row.size, dtype=np.int64)
    totals = np.array([g.sum()]), np.array([h.sum()]), np.array([X.shape[0]])
    return _level_splits(node, feat, val, g[row], h[row], *totals, lam).get(0)


def _grow_tree(entries, n_rows, g, h, max_depth, learning_rate, lam=TREE_LAMBDA):
    """Grow one tree level by level; returns the tree and each row's leaf.

    The working entry arrays stay grouped by node: after each level a
    stable partition moves every split node's entries into its two
    children, and entries of nodes that became leaves are dropped.
    """
    row, feat, val = entries
    ge, he = g[row], h[row]
    node = np.zeros(row.size, dtype=np.int64)
    node_of_row = np.zeros(n_rows, dtype=np.int64)
    feature, threshold, left, right = [-1], [0.0], [-1], [-1]

    for _ in range(max_depth):
        size = len(feature)
        G_node = np.bincount(node_of_row, weights=g, minlength=size)
        H_node = np.bincount(node_of_row, weights=h, minlength=size)
        n_node = np.bincount(node_of_row, minlength=size)
        splits = _level_splits(node, feat, val, ge, he, G_node, H_node, n_node, lam)
        splits = {j: s for j, s in splits.items() if s.gain > 1e-12}
        if not splits:
            break
        split_feat = np.full(size, -1, dtype=np.int64)
        split_thr = np.zeros(size)
        for j in sorted(splits):
            s = splits[j]
            left[j], right[j] = len(feature), len(feature) + 1
            feature[j], threshold[j] = s.feature, s.threshold
            split_feat[j], split_thr[j] = s.feature, s.threshold
            feature += [-1, -1]
            threshold += [0.0, 0.0]
            left += [-1, -1]
            right += [-1, -1]
        left_of = np.asarray(left[:size], dtype=np.int64)

        order, node = _kernels.route_and_partition(
            node, row, feat, val, split_feat, split_thr, left_of, node_of_row
        )
        if order.size == 0:
            break
        row, feat, val, ge, he = (a[order] for a in (row, feat, val, ge, he))

    size = len(feature)
    G = np.bincount(node_of_row, weights=g, minlength=size)
    H = np.bincount(node_of_row, weights=h, minlength=size)
    value = np.where(np.asarray(left) < 0, -G / (H + lam), 0.0) * learning_rate
    tree = Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        value,
    )
    return tree, node_of_row


# --------------------------------------------------------------------------
# Trained model
# --------------------------------------------------------------------------


@dataclass
class TrainedModel:
    spec: ClassifierSpec
    n_features: int
    rounds_used: int
    train_history: list[tuple[int, float]]
    weights: np.ndarray | None = None
    bias: float = 0.0
    base_score: float = 0.0
    trees: list[Tree] = field(default_factory=list)

    def margin(self, X) -> np.ndarray:
        X = X.matrix if isinstance(X, FeatureMatrix) else X
        if X.shape[1] != self.n_features:
            raise DataError(
                f"feature width mismatch: model expects {self.n_features}, got {X.shape[1]}"
            )
        if self.spec.family == "logistic":
            return np.asarray(X @ self.weights).ravel() + self.bias
        out = np.full(X.shape[0], self.base_score)
        if self.trees:
            km = _KeyedMatrix(X)
            for tree in self.trees:
                out += tree.predict(km)
        return out

    def to_dict(self) -> dict:
        d = {
            "schema": MODEL_SCHEMA,
            "spec": self.spec.to_dict(),
            "n_features": self.n_features,
            "rounds_used": self.rounds_used,
            "train_history": [[r, loss] for r, loss in self.train_history],
        }
        if self.spec.family == "logistic":
            d["parameters"] = {"weights": self.weights.tolist(), "bias": self.bias}
        else:
            d["parameters"] = {
                "base_score": self.base_score,
                "trees": [t.to_dict() for t in self.trees],
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise DataError(f"unsupported model schema {d.get('schema')!r}")
        spec = ClassifierSpec.from_dict(d["spec"])
        p = d["parameters"]
        common = dict(
            spec=spec,
            n_features=d["n_features"],
            rounds_used=d["rounds_used"],
            train_history=[(int(r), float(v)) for r, v in d["train_history"]],
        )
        if spec.family == "logistic":
            return cls(weights=np.asarray(p["weights"], dtype=float), bias=p["bias"], **common)
        return cls(
            base_score=p["base_score"],
            trees=[Tree.from_dict(t) for t in p["trees"]],
            **common,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def predict_proba(model: TrainedModel, X) -> np.ndarray:
    """Sigmoid of the margin, clamped to [1e-12, 1 - 1e-12]."""
    return np.clip(_sigmoid(model.margin(X)), PROBA_EPS, 1.0 - PROBA_EPS)


def predict(model: TrainedModel, X, threshold: float = 0.5) -> np.ndarray:
    """1 (Cyberbullying) where probability >= threshold."""
    return (predict_proba(model, X) >= threshold).astype(np.int8)


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


def _check_inputs(X, y, holdout):
    Xm = X.matrix if isinstance(X, FeatureMatrix) else sp.csr_matrix(X)
    y = np.asarray(y, dtype=float)
    if Xm.shape[0] != y.size or y.size == 0:
        raise DataError(f"X has {Xm.shape[0]} rows but y has {y.size} labels")
    Xh, yh = holdout
    Xh = Xh.matrix if isinstance(Xh, FeatureMatrix) else sp.csr_matrix(Xh)
    yh = np.asarray(yh, dtype=float)
    if Xh.shape[0] == 0 or Xh.shape[0] != yh.size:
        raise DataError("holdout must be nonempty with one label per row")
    if Xh.shape[1] != Xm.shape[1]:
        raise DataError("holdout feature width differs from training width")
    return sp.csr_matrix(Xm, dtype=float), y, sp.csr_matrix(Xh, dtype=float), yh


class _EarlyStopper:
    def __init__(self, patience: int):
        self.patience = patience
        self.history: list[tuple[int, float]] = []
        self.best_round = 0
        self.best_loss = np.inf

    def update(self, rnd: int, loss: float) -> tuple[bool, bool]:
        """Record a round; returns (improved, stop)."""
        self.history.append((rnd, loss))
        if loss < self.best_loss:
            self.best_loss, self.best_round = loss, rnd
            return True, False
        return False, rnd - self.best_round >= self.patience


def _diverged(what: str, rnd: int, spec: ClassifierSpec) -> TrainingDivergedError:
    return TrainingDivergedError(
        f"{spec.family}: non-finite {what} at round {rnd} "
        f"(learning_rate={spec.learning_rate:g}); lower the learning rate"
    )


def train_logistic(X, y, holdout, spec: ClassifierSpec, weights: ClassWeights) -> TrainedModel:
    """Full-batch gradient descent on the weighted L2-regularized log-loss.

    The step is ``learning_rate / sum(c)`` times the gradient of the total
    loss, i.e. a ``learning_rate`` step on the per-sample average; the
    minimizer is unchanged but step sizes stop depending on corpus size.
    """
    X, y, Xh, yh = _check_inputs(X, y, holdout)
    c, ch = weights.per_sample(y), weights.per_sample(yh)
    step = spec.learning_rate / c.sum()
    w = np.zeros(X.shape[1])
    b = 0.0
    stopper = _EarlyStopper(spec.early_stopping_patience)
    stopper.update(0, weighted_log_loss(Xh @ w + b, yh, ch))
    best_w, best_b = w.copy(), b
    for rnd in range(1, spec.max_rounds + 1):
        # overflow is caught by the finiteness checks below
        with np.errstate(over="ignore", invalid="ignore"):
            loss, gw, gb = logistic_objective(w, b, X, y, c, spec.l2_penalty)
            if not np.isfinite(loss):
                raise _diverged("training loss", rnd, spec)
            w = w - step * gw
            b = b - step * gb
            if not (np.all(np.isfinite(w)) and np.isfinite(b)):
                raise _diverged("weights", rnd, spec)
            hl = weighted_log_loss(Xh @ w + b, yh, ch)
        if not np.isfinite(hl):
            raise _diverged("holdout loss", rnd, spec)
        improved, stop = stopper.update(rnd, hl)
        if improved:
            best_w, best_b = w.copy(), b
        if stop:
            break
    return TrainedModel(
        spec,
        X.shape[1],
        stopper.best_round,
        stopper.history,
        weights=best_w,
        bias=float(best_b),
    )


def train_gbdt(X, y, holdout, spec: ClassifierSpec, weights: ClassWeights) -> TrainedModel:
    """Second-order gradient boosting on the weighted logistic loss."""
    X, y, Xh, yh = _check_inputs(X, y, holdout)
    c, ch = weights.per_sample(y), weights.per_sample(yh)
    pos_mass, neg_mass = c[y == 1].sum(), c[y == 0].sum()
    if pos_mass == 0 or neg_mass == 0:
        raise DataError("gbdt needs both classes in the training data")
    base = float(np.log(pos_mass / neg_mass))

    features = None
    if spec.colsample < 1.0:
        rng = np.random.default_rng(spec.seed)
        n_keep = max(1, int(round(spec.colsample * X.shape[1])))
        features = np.sort(rng.choice(X.shape[1], n_keep, replace=False))
    entries = _sorted_entries(X, features)
    Xh_keyed = _KeyedMatrix(Xh)

    margin = np.full(X.shape[0], base)
    margin_h = np.full(Xh.shape[0], base)
    trees: list[Tree] = []
    stopper = _EarlyStopper(spec.early_stopping_patience)
    stopper.update(0, weighted_log_loss(margin_h, yh, ch))
    for rnd in range(1, spec.max_rounds + 1):
        p = _sigmoid(margin)
        g = c * (p - y)
        h = c * p * (1.0 - p)
        tree, leaf_of_row = _grow_tree(
            entries, X.shape[0], g, h, spec.max_depth, spec.learning_rate
        )
        if not np.all(np.isfinite(tree.value)):
            raise _diverged("leaf value", rnd, spec)
        trees.append(tree)
        margin = margin + tree.value[leaf_of_row]
        margin_h = margin_h + tree.predict(Xh_keyed)
        hl = weighted_log_loss(margin_h, yh, ch)
        if not np.isfinite(hl):
            raise _diverged("holdout loss", rnd, spec)
        _, stop = stopper.update(rnd, hl)
        if stop:
            break
    return TrainedModel(
        spec,
        X.shape[1],
        stopper.best_round,
        stopper.history,
        base_score=base,
        trees=trees[: stopper.best_round],
    )


def train(X, y, holdout, spec: ClassifierSpec, weights: ClassWeights) -> TrainedModel:
    if spec.family == "logistic":
        return train_logistic(X, y, holdout, spec, weights)
    return train_gbdt(X, y, holdout, spec, weights)


def default_grid(
    learning_rates: Sequence[float] = (0.05, 0.1, 0.3),
    max_depths: Sequence[int] = (3, 6),
    l2_penalties: Sequence[float] = (0.0, 0.1, 1.0),
    vectorizers: Sequence[str] = ENCODINGS,
    families: Sequence[str] = FAMILIES,
    **fixed,
) -> list[ClassifierSpec]:
    """Cartesian grid; logistic varies the L2 penalty, gbdt the tree depth."""
    grid = []
    for family in families:
        for vec in vectorizers:
            for lr in learning_rates:
                knobs = l2_penalties if family == "logistic" else max_depths
                for knob in knobs:
                    extra = {"l2_penalty": knob} if family == "logistic" else {"max_depth": knob}
                    grid.append(
                        ClassifierSpec(family, vec, learning_rate=lr, **extra, **fixed)
                    )
    return grid
