import numpy as np
import pytest

from stylo_ensemble.corpus import Corpus
from stylo_ensemble.features import (
    CHAR_NGRAM,
    PHRASE_PATTERN,
    RAW_COUNT,
    RELATIVE_FREQUENCY,
    SEP,
    TOKEN_NGRAM,
    AnnotationError,
    FeatureKindError,
    FeatureSpec,
    PhrasePatternRule,
    doc_char_ngrams,
    extract_char_ngrams,
    extract_phrase_patterns,
    extract_token_ngrams,
    load_matrix,
    save_matrix,
    vectorize,
)
from stylo_ensemble.synthetic import SyntheticCorpusSpec, gen_synthetic

from conftest import doc


def one_doc_corpus(surfaces, **kw):
    return Corpus((doc("d1", "X", surfaces, **kw),))


class TestCharNgrams:
    def test_abab_bigrams(self):
        corpus = one_doc_corpus(["ab", "ab"])
        fm = extract_char_ngrams(corpus, 2, FeatureSpec(CHAR_NGRAM, n=2, frequency_mode=RAW_COUNT))
        counts = dict(zip(fm.vocabulary.keys, fm.dense()[0]))
        assert counts == {"ab": 2.0, "ba": 1.0}

    def test_too_short_yields_zero_row(self):
        corpus = Corpus((doc("d1", "X", ["a"]), doc("d2", "Y", ["bc"])))
        fm = extract_char_ngrams(corpus, 2, FeatureSpec(CHAR_NGRAM, n=2, frequency_mode=RAW_COUNT))
        assert fm.row("d1").sum() == 0.0

    def test_crosses_token_boundaries(self):
        fm = extract_char_ngrams(one_doc_corpus(["ab", "cd"]), 2,
                                 FeatureSpec(CHAR_NGRAM, n=2, frequency_mode=RAW_COUNT))
        assert "bc" in fm.vocabulary.keys

    def test_boundary_crossing_disabled(self):
        spec = FeatureSpec(CHAR_NGRAM, n=2, frequency_mode=RAW_COUNT, cross_token_boundaries=False)
        fm = extract_char_ngrams(one_doc_corpus(["ab", "cd"]), 2, spec)
        assert set(fm.vocabulary.keys) == {"ab", "cd"}

    def test_column_count_matches_distinct_pair_scan(self):
        corpus = gen_synthetic(SyntheticCorpusSpec(
            num_authors=4, docs_per_author=5, tokens_per_doc=40, seed=11))
        fm = extract_char_ngrams(corpus, 2, FeatureSpec(CHAR_NGRAM, n=2))
        # independent oracle: scan every document's concatenated text
        distinct = set()
        for d in corpus.documents:
            text = "".join(t.surface for t in d.tokens)
            distinct.update(text[i:i + 2] for i in range(len(text) - 1))
        assert len(fm.vocabulary) == len(distinct)

    def test_char_row_sum_is_charlen_minus_one(self):
        corpus = gen_synthetic(SyntheticCorpusSpec(
            num_authors=2, docs_per_author=3, tokens_per_doc=30, seed=5))
        fm = extract_char_ngrams(corpus, 2, FeatureSpec(CHAR_NGRAM, n=2, frequency_mode=RAW_COUNT))
        for d in corpus.documents:
            charlen = sum(len(t.surface) for t in d.tokens)
            assert fm.row(d.doc_id).sum() == max(0, charlen - 1)


class TestTokenNgrams:
    def test_unigram_counts(self):
        corpus = one_doc_corpus(["the", "cat", "the"])
        fm = extract_token_ngrams(corpus, 1, FeatureSpec(TOKEN_NGRAM, n=1, frequency_mode=RAW_COUNT))
        counts = dict(zip(fm.vocabulary.keys, fm.dense()[0]))
        assert counts == {"the": 2.0, "cat": 1.0}

    def test_bigram_key_uses_separator(self):
        corpus = one_doc_corpus(["a", "b"])
        fm = extract_token_ngrams(corpus, 2, FeatureSpec(TOKEN_NGRAM, n=2, frequency_mode=RAW_COUNT))
        assert fm.vocabulary.keys == (f"a{SEP}b",)

    def test_unigram_columns_equal_distinct_surfaces(self):
        corpus = gen_synthetic(SyntheticCorpusSpec(
            num_authors=3, docs_per_author=4, tokens_per_doc=60, seed=2))
        fm = extract_token_ngrams(corpus, 1, FeatureSpec(TOKEN_NGRAM, n=1))
        surfaces = {t.surface for d in corpus.documents for t in d.tokens}
        assert len(fm.vocabulary) == len(surfaces)

    def test_unigram_row_sum_is_token_count(self):
        corpus = gen_synthetic(SyntheticCorpusSpec(
            num_authors=2, docs_per_author=2, tokens_per_doc=25, seed=8))
        fm = extract_token_ngrams(corpus, 1, FeatureSpec(TOKEN_NGRAM, n=1, frequency_mode=RAW_COUNT))
        for d in corpus.documents:
            assert fm.row(d.doc_id).sum() == len(d.tokens)


class TestPhrasePatterns:
    def test_noun_masked_particle_kept(self):
        corpus = one_doc_corpus(
            ["BERT", "ha"],
            pos=["noun", "particle"],
            starts=[True, False],
        )
        fm = extract_phrase_patterns(corpus, spec=FeatureSpec(PHRASE_PATTERN, frequency_mode=RAW_COUNT))
        assert fm.vocabulary.keys == (f"noun{SEP}ha",)

    def test_punctuation_only_phrase_keeps_surface(self):
        corpus = one_doc_corpus([".",], pos=["punctuation"], starts=[True])
        fm = extract_phrase_patterns(corpus, spec=FeatureSpec(PHRASE_PATTERN, frequency_mode=RAW_COUNT))
        assert fm.vocabulary.keys == (".",)

    def test_missing_pos_rejected(self):
        corpus = one_doc_corpus(["a", "b"], starts=[True, False])
        with pytest.raises(AnnotationError):
            extract_phrase_patterns(corpus)

    def test_missing_boundaries_rejected(self):
        corpus = one_doc_corpus(["a", "b"], pos=["noun", "noun"])
        with pytest.raises(AnnotationError):
            extract_phrase_patterns(corpus)

    def test_vocab_matches_brute_force_phrase_walk(self):
        corpus = gen_synthetic(SyntheticCorpusSpec(
            num_authors=3, docs_per_author=5, tokens_per_doc=50, seed=21))
        rule = PhrasePatternRule()
        fm = extract_phrase_patterns(corpus, rule,
                                     FeatureSpec(PHRASE_PATTERN, frequency_mode=RAW_COUNT))
        # independent oracle: walk phrases token by token
        patterns = set()
        for d in corpus.documents:
            current = []
            all_patterns = []
            for t in d.tokens:
                if t.phrase_start and current:
                    all_patterns.append(current)
                    current = []
                current.append(t.surface if t.pos in rule.preserved_pos else t.pos)
            all_patterns.append(current)
            patterns.update(SEP.join(p) for p in all_patterns)
        assert set(fm.vocabulary.keys) == patterns

    def test_masking_soundness(self):
        corpus = gen_synthetic(SyntheticCorpusSpec(
            num_authors=2, docs_per_author=4, tokens_per_doc=60, seed=31))
        rule = PhrasePatternRule()
        fm = extract_phrase_patterns(corpus, rule)
        masked_surfaces = {
            t.surface
            for d in corpus.documents
            for t in d.tokens
            if t.pos not in rule.preserved_pos
        }
        for key in fm.vocabulary.keys:
            for element in key.split(SEP):
                assert element not in masked_surfaces


class TestVocabularyAndModes:
    def test_deterministic_ordering(self):
        corpus = gen_synthetic(SyntheticCorpusSpec(
            num_authors=3, docs_per_author=3, tokens_per_doc=40, seed=6))
        a = extract_token_ngrams(corpus, 1, FeatureSpec(TOKEN_NGRAM, n=1))
        b = extract_token_ngrams(corpus, 1, FeatureSpec(TOKEN_NGRAM, n=1))
        assert a.vocabulary.keys == b.vocabulary.keys

    def test_order_by_total_freq_then_key(self):
        corpus = one_doc_corpus(["b", "b", "a", "a", "c"])
        fm = extract_token_ngrams(corpus, 1, FeatureSpec(TOKEN_NGRAM, n=1, frequency_mode=RAW_COUNT))
        assert fm.vocabulary.keys == ("a", "b", "c")

    def test_min_doc_freq(self):
        corpus = Corpus((doc("d1", "X", ["a", "b"]), doc("d2", "Y", ["a", "c"])))
        spec = FeatureSpec(TOKEN_NGRAM, n=1, min_doc_freq=2, frequency_mode=RAW_COUNT)
        fm = extract_token_ngrams(corpus, 1, spec)
        assert fm.vocabulary.keys == ("a",)

    def test_max_features_cap(self):
        corpus = one_doc_corpus(["a", "a", "b", "b", "c"])
        spec = FeatureSpec(TOKEN_NGRAM, n=1, max_features=2, frequency_mode=RAW_COUNT)
        fm = extract_token_ngrams(corpus, 1, spec)
        assert fm.vocabulary.keys == ("a", "b")

    def test_relative_rows_sum_to_one(self):
        corpus = gen_synthetic(SyntheticCorpusSpec(
            num_authors=2, docs_per_author=3, tokens_per_doc=30, seed=4))
        fm = extract_token_ngrams(corpus, 1, FeatureSpec(TOKEN_NGRAM, n=1,
                                                         frequency_mode=RELATIVE_FREQUENCY))
        sums = np.asarray(fm.values.sum(axis=1)).ravel()
        assert np.allclose(sums, 1.0, atol=1e-9)


class TestVectorize:
    def test_oov_only_doc_gives_zero_row(self):
        train = one_doc_corpus(["a", "b"])
        spec = FeatureSpec(TOKEN_NGRAM, n=1, frequency_mode=RAW_COUNT)
        fm = extract_token_ngrams(train, 1, spec)
        test = Corpus((doc("t1", "X", ["z", "q"]),))
        out = vectorize(test, fm.vocabulary, spec)
        assert out.row("t1").sum() == 0.0

    def test_round_trip_on_training_docs(self):
        corpus = gen_synthetic(SyntheticCorpusSpec(
            num_authors=2, docs_per_author=3, tokens_per_doc=30, seed=9))
        spec = FeatureSpec(TOKEN_NGRAM, n=1)
        fm = extract_token_ngrams(corpus, 1, spec)
        again = vectorize(corpus, fm.vocabulary, spec)
        assert np.allclose(fm.dense(), again.dense())

    def test_manual_filter_oracle(self):
        train = one_doc_corpus(["a", "b", "c"])
        spec = FeatureSpec(TOKEN_NGRAM, n=1, frequency_mode=RAW_COUNT)
        fm = extract_token_ngrams(train, 1, spec)
        test = Corpus((doc("t1", "X", ["a", "a", "z", "c"]),))
        out = vectorize(test, fm.vocabulary, spec)
        expected = {"a": 2.0, "b": 0.0, "c": 1.0}
        got = dict(zip(out.vocabulary.keys, out.dense()[0]))
        assert got == expected

    def test_kind_mismatch(self):
        train = one_doc_corpus(["ab"])
        fm = extract_char_ngrams(train, 2, FeatureSpec(CHAR_NGRAM, n=2))
        with pytest.raises(FeatureKindError):
            vectorize(train, fm.vocabulary, FeatureSpec(TOKEN_NGRAM, n=2))

    def test_fold_hygiene(self):
        # vocabulary built on one fold never contains keys absent from it
        corpus = gen_synthetic(SyntheticCorpusSpec(
            num_authors=4, docs_per_author=4, tokens_per_doc=40, seed=13))
        train_docs = corpus.documents[:8]
        train = Corpus(train_docs)
        fm = extract_token_ngrams(train, 1, FeatureSpec(TOKEN_NGRAM, n=1))
        train_surfaces = {t.surface for d in train_docs for t in d.tokens}
        assert set(fm.vocabulary.keys) <= train_surfaces


class TestSerialization:
    def test_csv_round_trip(self, tmp_path):
        corpus = gen_synthetic(SyntheticCorpusSpec(
            num_authors=2, docs_per_author=3, tokens_per_doc=30, seed=1))
        fm = extract_token_ngrams(corpus, 1, FeatureSpec(TOKEN_NGRAM, n=1))
        save_matrix(fm, tmp_path / "m.csv", tmp_path / "v.csv")
        again = load_matrix(tmp_path / "m.csv", tmp_path / "v.csv")
        assert again.doc_ids == fm.doc_ids
        assert again.vocabulary == fm.vocabulary
        assert np.allclose(again.dense(), fm.dense())
