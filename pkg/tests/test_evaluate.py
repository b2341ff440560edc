import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from biasbench.corpus import NEGATIVE, POSITIVE, LabeledDataset
from biasbench.errors import ConfigError, DataError
from biasbench.evaluate import (
    ConfusionCounts,
    CVResult,
    ExperimentResult,
    confusion,
    cross_dataset_eval,
    cross_validate,
    drop,
    f1_scores,
    fit_pipeline,
    score,
    select_top,
    select_top_per_family,
)
from biasbench.model import ClassifierSpec

from conftest import binary_dataset


def oracle_f1(y_true, y_pred):
    """Per-class F1 straight from the definitions, one class at a time."""
    out = {}
    for cls in (0, 1):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p == cls)
        pred = sum(1 for p in y_pred if p == cls)
        actual = sum(1 for t in y_true if t == cls)
        precision = tp / pred if pred else 0.0
        recall = tp / actual if actual else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out[cls] = (f1, actual)
    n = len(y_true)
    macro = (out[0][0] + out[1][0]) / 2
    weighted = out[0][0] * out[0][1] / n + out[1][0] * out[1][1] / n
    return macro, weighted


def constant_spec(**kw):
    return ClassifierSpec("logistic", max_rounds=0, **kw)


class TestConfusion:
    def test_all_positive_match(self):
        assert confusion([1] * 5, [1] * 5) == ConfusionCounts(5, 0, 0, 0)

    def test_complement(self):
        c = confusion([1, 0, 1, 0], [0, 1, 0, 1])
        assert c.tp == 0 and c.tn == 0

    def test_hand_case(self):
        y_true = [1] * 60 + [0] * 40
        y_pred = [1] * 40 + [0] * 20 + [1] * 10 + [0] * 30
        assert confusion(y_true, y_pred) == ConfusionCounts(40, 10, 20, 30)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            confusion([1, 0], [1])


class TestF1:
    def test_perfect(self):
        r = score([1, 0, 1, 0], [1, 0, 1, 0])
        assert r.f1_macro == 1.0 and r.f1_weighted == 1.0

    def test_hand_case(self):
        r = f1_scores(ConfusionCounts(40, 10, 20, 30))
        assert r.f1_per_class[POSITIVE] == pytest.approx(0.727273, abs=1e-6)
        assert r.f1_per_class[NEGATIVE] == pytest.approx(0.666667, abs=1e-6)
        assert r.f1_macro == pytest.approx(0.696970, abs=1e-6)
        assert r.f1_weighted == pytest.approx(0.703030, abs=1e-6)
        assert r.support == {POSITIVE: 60, NEGATIVE: 40}

    def test_all_positive_on_balanced(self):
        r = score([1] * 5 + [0] * 5, [1] * 10)
        assert r.f1_per_class[POSITIVE] == pytest.approx(2 / 3)
        assert r.f1_per_class[NEGATIVE] == 0.0
        assert r.f1_macro == pytest.approx(1 / 3)

    def test_zero_division_is_zero(self):
        r = score([0, 0, 0], [0, 0, 0])
        assert r.precision[POSITIVE] == 0.0 and r.f1_per_class[POSITIVE] == 0.0

    def test_empty(self):
        with pytest.raises(DataError):
            f1_scores(ConfusionCounts(0, 0, 0, 0))

    def test_oracle_random(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            n = int(rng.integers(1, 201))
            y_true = rng.integers(0, 2, n)
            y_pred = rng.integers(0, 2, n)
            r = score(y_true, y_pred)
            macro, weighted = oracle_f1(y_true.tolist(), y_pred.tolist())
            assert abs(r.f1_macro - macro) <= 1e-12
            assert abs(r.f1_weighted - weighted) <= 1e-12

    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=2, max_size=50))
    def test_balanced_macro_equals_weighted(self, pairs):
        half = [p for p in pairs]
        y_true = [1] * len(half) + [0] * len(half)
        y_pred = [p for p, _ in half] + [q for _, q in half]
        r = score(y_true, y_pred)
        assert r.f1_macro == r.f1_weighted

    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
    def test_scores_in_unit_interval(self, pairs):
        r = score([a for a, _ in pairs], [b for _, b in pairs])
        for v in [r.f1_macro, r.f1_weighted, *r.f1_per_class.values(), *r.precision.values()]:
            assert 0.0 <= v <= 1.0
        assert r.f1_macro == pytest.approx(np.mean(list(r.f1_per_class.values())), abs=1e-15)


class TestDrop:
    @pytest.mark.parametrize(
        "cv,cross,expected", [(0.8, 0.6, 0.2), (0.7, 0.7, 0.0), (0.5, 0.6, -0.1)]
    )
    def test_drop(self, cv, cross, expected):
        assert drop(cv, cross) == pytest.approx(expected)


class TestCrossValidate:
    def test_constant_classifier(self):
        ds = binary_dataset(60, 60)
        (r,) = cross_validate(ds, [constant_spec()], k=6, holdout_fraction=0.1, seed=0)
        assert len(r.per_fold_scores) == 6
        for s in r.per_fold_scores:
            assert s.f1_macro == pytest.approx(1 / 3)
        assert r.std_f1_macro == 0.0
        assert r.low_variance_flag

    def test_twelve_entries_violate_precondition(self):
        # the holdout takes one entry first, leaving a class of 5 for 6 folds
        with pytest.raises(DataError, match="fewer than k=6"):
            cross_validate(binary_dataset(6, 6), [constant_spec()], k=6, holdout_fraction=0.1)

    def test_six_folds_of_two(self):
        (r,) = cross_validate(binary_dataset(7, 7), [constant_spec()], k=6, holdout_fraction=1 / 7)
        assert [sum(s.support.values()) for s in r.per_fold_scores] == [2] * 6

    def test_aggregates_recomputable_and_deterministic(self):
        ds = binary_dataset(40, 50)
        grid = [ClassifierSpec("logistic", max_rounds=30), ClassifierSpec("gbdt", "tfidf", max_rounds=10)]
        a = cross_validate(ds, grid, seed=2)
        b = cross_validate(ds, grid, seed=2)
        assert [r.to_dict() for r in a] == [r.to_dict() for r in b]
        for r in a:
            macro = [s.f1_macro for s in r.per_fold_scores]
            assert abs(r.mean_f1_macro - np.mean(macro)) <= 1e-12
            assert abs(r.std_f1_macro - np.std(macro)) <= 1e-12
            assert r.low_variance_flag == (r.std_f1_macro < 0.01)
            assert abs(r.mean_f1_weighted - np.mean([s.f1_weighted for s in r.per_fold_scores])) <= 1e-12

    def test_failed_spec_isolated(self):
        ds = binary_dataset(30, 30)
        grid = [ClassifierSpec("logistic", learning_rate=1e308, max_rounds=20), constant_spec()]
        bad, good = cross_validate(ds, grid)
        assert bad.failed and "TrainingDivergedError" in bad.error
        assert not good.failed

    def test_parallel_matches_serial(self):
        ds = binary_dataset(30, 36)
        grid = [ClassifierSpec("gbdt", max_rounds=8)]
        serial = cross_validate(ds, grid, n_jobs=1)
        parallel = cross_validate(ds, grid, n_jobs=2)
        assert serial[0].to_dict() == parallel[0].to_dict()

    def test_empty_grid(self):
        with pytest.raises(ConfigError):
            cross_validate(binary_dataset(10, 10), [])

    def test_result_round_trip(self):
        (r,) = cross_validate(binary_dataset(20, 20), [constant_spec()])
        assert CVResult.from_dict(r.to_dict()) == r


def fake_result(mean, std=0.0, index=0, family="logistic"):
    return CVResult(ClassifierSpec(family, learning_rate=0.1 + index), [], mean, std, mean, std < 0.01, index)


class TestSelectTop:
    def test_sorted(self):
        rs = [fake_result(0.7, index=0), fake_result(0.9, index=1), fake_result(0.8, index=2)]
        top = select_top(rs, 2)
        assert [r.mean_f1_macro for r in top] == [0.9, 0.8]
        assert not top.shortfall

    def test_tie_lower_std_then_order(self):
        rs = [fake_result(0.8, 0.05, 0), fake_result(0.8, 0.01, 1), fake_result(0.8, 0.01, 2)]
        assert [r.index for r in select_top(rs, 3)] == [1, 2, 0]

    def test_all_equal_keeps_order(self):
        rs = [fake_result(0.5, index=i) for i in range(5)]
        assert [r.index for r in select_top(rs, 3)] == [0, 1, 2]

    def test_shortfall(self):
        rs = [fake_result(0.5, index=i) for i in range(6)]
        top = select_top(rs, 10)
        assert len(top) == 6 and top.shortfall

    def test_failures_skipped(self):
        rs = [CVResult.failure(ClassifierSpec("gbdt"), "boom", 0), fake_result(0.4, index=1)]
        assert [r.index for r in select_top(rs, 2)] == [1]

    def test_per_family(self):
        rs = [fake_result(0.1 * i, index=i, family="logistic" if i % 2 else "gbdt") for i in range(8)]
        top = select_top_per_family(rs, 2)
        # families come out in declared order, logistic first
        assert [r.index for r in top] == [7, 5, 6, 4]

    def test_bad_n(self):
        with pytest.raises(ConfigError):
            select_top([], 0)


@pytest.fixture(scope="module")
def data():
    train = binary_dataset(60, 80, name="train", seed=1)
    test = binary_dataset(50, 50, name="test", seed=2)
    grid = [ClassifierSpec("logistic", max_rounds=100, learning_rate=0.5), ClassifierSpec("gbdt", max_rounds=30)]
    return train, test, cross_validate(train, grid)


class TestCrossDataset:

    def test_top_of_one(self, data):
        train, test, cv = data
        e = cross_dataset_eval(train, test, [cv[0]], 0.1, 0)
        assert len(e.per_model) == 1
        assert e.avg_drop_f1_macro == e.per_model[0].drop_f1_macro
        m = e.per_model[0]
        assert m.drop_f1_macro == pytest.approx(m.cv_mean_f1_macro - m.cross_f1_macro)

    def test_self_evaluation_drop_small(self, data):
        train, _, cv = data
        e = cross_dataset_eval(train, train, cv, 0.1, 0)
        for m in e.per_model:
            assert m.drop_f1_macro <= 0.05

    def test_no_test_leakage(self):
        train = LabeledDataset.from_pairs(
            "tr", [("bad troll", POSITIVE), ("good day", NEGATIVE)] * 10
        )
        test = LabeledDataset.from_pairs("te", [("unseenword troll", POSITIVE), ("good zebra", NEGATIVE)])
        (r,) = cross_validate(train, [constant_spec()], k=2, holdout_fraction=0.2)
        e = cross_dataset_eval(train, test, [r], 0.2, 0)
        vocab = e.pipelines[0].vocabulary
        assert "unseenword" not in vocab and "zebra" not in vocab

    def test_fit_pipeline_vocab_from_train_only(self):
        tr = binary_dataset(10, 10)
        ho = LabeledDataset.from_pairs("h", [("onlyinholdout troll", POSITIVE), ("friend", NEGATIVE)])
        p = fit_pipeline(tr, ho, constant_spec())
        assert "onlyinholdout" not in p.vocabulary

    def test_failed_models_excluded(self, data):
        train, test, cv = data
        bad = CVResult(ClassifierSpec("logistic", learning_rate=1e308), [], 0.9, 0.0, 0.9, True, 9)
        e = cross_dataset_eval(train, test, [bad, cv[0]], 0.1, 0)
        assert len(e.per_model) == 1 and len(e.failed_models) == 1
        assert e.avg_drop_f1_macro == e.per_model[0].drop_f1_macro

    def test_round_trip(self, data):
        train, test, cv = data
        e = cross_dataset_eval(train, test, cv, 0.1, 0, experiment_id=4)
        assert ExperimentResult.from_dict(e.to_dict()).to_dict() == e.to_dict()
