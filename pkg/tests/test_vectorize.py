import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biasbench.corpus import POSITIVE, Document, LabeledDataset
from biasbench.errors import ConfigError, DataError
from biasbench.vectorize import (
    encode,
    encode_count,
    encode_tfidf,
    fit_vocabulary,
    load_coordinate,
    ngrams,
    oov_ratio,
    save_coordinate,
    tokenize,
)


def ds_of(*texts, name="d"):
    return LabeledDataset.from_pairs(name, [(t, POSITIVE) for t in texts])


def docs_of(*texts):
    return [Document(str(i), t) for i, t in enumerate(texts)]


word_lists = st.lists(
    st.lists(st.sampled_from(["a", "b", "c", "dd", "ee", "f1"]), min_size=0, max_size=8),
    min_size=1,
    max_size=12,
)


class TestTokenize:
    @pytest.mark.parametrize(
        "text,tokens",
        [
            ("Hello, World!", ["hello", "world"]),
            ("", []),
            ("don't stop2", ["don", "t", "stop2"]),
            ("snake_case--x", ["snake", "case", "x"]),
            ("  MiXeD\tcase\n", ["mixed", "case"]),
        ],
    )
    def test_examples(self, text, tokens):
        assert tokenize(text) == tokens

    def test_ngrams(self):
        assert ngrams(["a", "b", "c"], 2) == ["a", "b", "c", "a b", "b c"]
        assert ngrams(["a", "b", "c"], 3)[-1] == "a b c"
        with pytest.raises(ConfigError):
            ngrams(["a"], 4)


class TestVocabulary:
    def test_hand_count(self):
        v = fit_vocabulary(ds_of("a b", "b c"), min_df=1)
        assert dict(v.term_to_index) == {"a": 0, "b": 1, "c": 2}
        assert dict(v.document_frequency) == {"a": 1, "b": 2, "c": 1}
        assert v.n_documents == 2
        assert v.fitted_on == "d"

    def test_min_df_two(self):
        v = fit_vocabulary(ds_of("a b", "b c"), min_df=2)
        assert dict(v.term_to_index) == {"b": 0}

    def test_min_df_three_empty(self):
        with pytest.raises(DataError, match="empty vocabulary"):
            fit_vocabulary(ds_of("a b", "b c"), min_df=3)

    def test_max_features_tie_break(self):
        v = fit_vocabulary(ds_of("c a b", "b c", "z"), max_features=2)
        # b and c have df 2; a and z have df 1
        assert v.terms == ["b", "c"]
        v = fit_vocabulary(ds_of("c a b", "b", "z"), max_features=2)
        assert v.terms == ["a", "b"]

    def test_bad_min_df(self):
        with pytest.raises(ConfigError):
            fit_vocabulary(ds_of("a"), min_df=0)

    @given(word_lists)
    def test_indices_dense_and_df_in_range(self, docs):
        texts = [" ".join(d) for d in docs]
        if not any(texts):
            return
        v = fit_vocabulary(ds_of(*texts))
        assert sorted(v.term_to_index.values()) == list(range(len(v)))
        assert v.terms == sorted(v.terms)
        assert all(1 <= df <= v.n_documents for df in v.document_frequency.values())


class TestCount:
    def test_direct(self):
        v = fit_vocabulary(ds_of("a b c"))
        row = encode_count(docs_of("b b c"), v).rows[0]
        assert row.as_dict() == {1: 2.0, 2: 1.0}

    def test_only_oov(self):
        v = fit_vocabulary(ds_of("a b c"))
        row = encode_count(docs_of("x y"), v).rows[0]
        assert row.indices == () and row.values == ()

    def test_empty_doc_list(self):
        v = fit_vocabulary(ds_of("a b c"))
        fm = encode_count([], v)
        assert fm.n_rows == 0 and fm.n_columns == 3

    @settings(max_examples=50)
    @given(word_lists)
    def test_column_sums_equal_corpus_frequency(self, docs):
        texts = [" ".join(d) for d in docs]
        if not any(texts):
            return
        v = fit_vocabulary(ds_of(*texts))
        m = encode_count(docs_of(*texts), v).matrix
        freq = Counter(t for text in texts for t in tokenize(text))
        sums = np.asarray(m.sum(axis=0)).ravel()
        for term, j in v.term_to_index.items():
            assert sums[j] == freq[term]

    def test_rows_sparse_invariants(self):
        v = fit_vocabulary(ds_of("a b c d", "c d e"))
        for row in encode_count(docs_of("e d c b a a", "c c", ""), v).rows:
            assert list(row.indices) == sorted(set(row.indices))
            assert all(x != 0 for x in row.values)
            assert all(i < len(v) for i in row.indices)


class TestTfidf:
    def test_single_doc(self):
        v = fit_vocabulary(ds_of("a"))
        assert v.idf()[0] == 1.0
        assert encode_tfidf(docs_of("a"), v).rows[0].as_dict() == {0: 1.0}

    def test_hand_values(self):
        v = fit_vocabulary(ds_of("a b", "b"))
        np.testing.assert_allclose(v.idf(), [math.log(1.5) + 1, 1.0], atol=1e-12)
        row = encode_tfidf(docs_of("a b"), v).rows[0]
        a, b = 1.405465, 1.0
        norm = math.hypot(a, b)
        np.testing.assert_allclose(row.values, [0.814802, 0.579739], atol=1e-6)
        np.testing.assert_allclose(row.values, [a / norm, b / norm], atol=1e-6)

    def test_absent_term_zero(self):
        v = fit_vocabulary(ds_of("a b", "b"))
        assert encode_tfidf(docs_of("b"), v).rows[0].indices == (1,)

    @settings(max_examples=50)
    @given(word_lists, word_lists)
    def test_unit_norm_or_zero(self, fit_docs, enc_docs):
        fit_texts = [" ".join(d) for d in fit_docs]
        if not any(fit_texts):
            return
        v = fit_vocabulary(ds_of(*fit_texts))
        m = encode_tfidf(docs_of(*[" ".join(d) for d in enc_docs]), v).matrix
        norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
        for n in norms:
            assert n == 0.0 or abs(n - 1.0) < 1e-9

    def test_encode_dispatch(self):
        v = fit_vocabulary(ds_of("a"))
        assert encode(docs_of("a"), v, "tfidf").encoding == "tfidf"
        with pytest.raises(ConfigError):
            encode(docs_of("a"), v, "bm25")


class TestCoordinateFile:
    def test_round_trip(self, tmp_path):
        v = fit_vocabulary(ds_of("a b c", "c d"))
        fm = encode_tfidf(docs_of("a a b", "", "d c"), v)
        save_coordinate(fm, tmp_path / "m.txt")
        header = (tmp_path / "m.txt").read_text().splitlines()[0]
        assert header == f"3 4 {fm.matrix.nnz} tfidf"
        back = load_coordinate(tmp_path / "m.txt")
        assert back.encoding == "tfidf"
        np.testing.assert_array_equal(back.matrix.toarray(), fm.matrix.toarray())


class TestOOV:
    def test_subset_zero(self):
        v = fit_vocabulary(ds_of("a b c"))
        r = oov_ratio(v, ds_of("a a b"))
        assert (r.ratio_token_level, r.ratio_type_level) == (0.0, 0.0)

    def test_disjoint_one(self):
        v = fit_vocabulary(ds_of("a b"))
        r = oov_ratio(v, ds_of("x y y"))
        assert (r.ratio_token_level, r.ratio_type_level) == (1.0, 1.0)

    def test_hand_count(self):
        v = fit_vocabulary(ds_of("a b"))
        r = oov_ratio(v, ds_of("a a c"))
        assert r.ratio_token_level == pytest.approx(1 / 3)
        assert r.ratio_type_level == 0.5
        assert (r.oov_token_count, r.total_token_count) == (1, 3)
        assert (r.oov_type_count, r.total_type_count) == (1, 2)

    def test_no_tokens(self):
        v = fit_vocabulary(ds_of("a"))
        with pytest.raises(DataError):
            oov_ratio(v, ds_of("!!", ""))

    @given(word_lists)
    def test_self_ratio_zero(self, docs):
        texts = [" ".join(d) for d in docs]
        if not any(texts):
            return
        ds = ds_of(*texts)
        r = oov_ratio(fit_vocabulary(ds), ds)
        assert r.ratio_token_level == 0.0 and r.ratio_type_level == 0.0
