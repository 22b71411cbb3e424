"""Stylometric feature extraction: character n-grams, token n-grams, and
POS-masked phrase patterns, all as sparse count/frequency matrices with
deterministic vocabularies."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .corpus import AnnotatedDocument, Corpus

# Joins n-gram elements and phrase-pattern elements; assumed absent from
# token surfaces and POS tags.
SEP = "\x1f"

CHAR_NGRAM = "char_ngram"
TOKEN_NGRAM = "token_ngram"
PHRASE_PATTERN = "phrase_pattern"

RAW_COUNT = "raw_count"
RELATIVE_FREQUENCY = "relative_frequency"

# Function-word categories whose surfaces stay visible in phrase patterns.
DEFAULT_PRESERVED_POS = frozenset(
    {"particle", "punctuation", "conjunction", "adjective"}
)


class AnnotationError(ValueError):
    """Required POS tags or phrase boundaries are missing."""


class FeatureKindError(ValueError):
    """Vocabulary kind does not match the requested extraction."""


@dataclass(frozen=True)
class FeatureSpec:
    kind: str
    n: int = 1
    min_doc_freq: int = 1
    max_features: int | None = None
    frequency_mode: str = RELATIVE_FREQUENCY
    # Char n-grams normally run across token boundaries (unsegmented text);
    # set False for segmented languages.
    cross_token_boundaries: bool = True

    def __post_init__(self):
        if self.kind not in (CHAR_NGRAM, TOKEN_NGRAM, PHRASE_PATTERN):
            raise FeatureKindError(f"unknown feature kind {self.kind!r}")
        if self.kind != PHRASE_PATTERN and self.n < 1:
            raise ValueError("n must be >= 1")
        if self.min_doc_freq < 1:
            raise ValueError("min_doc_freq must be >= 1")
        if self.frequency_mode not in (RAW_COUNT, RELATIVE_FREQUENCY):
            raise ValueError(f"unknown frequency mode {self.frequency_mode!r}")

    @property
    def kind_id(self) -> str:
        if self.kind == PHRASE_PATTERN:
            return self.kind
        return f"{self.kind}:{self.n}"


@dataclass(frozen=True)
class PhrasePatternRule:
    preserved_pos: frozenset[str] = DEFAULT_PRESERVED_POS

    def __post_init__(self):
        if not self.preserved_pos:
            raise ValueError("preserved_pos must be non-empty")

    def mask(self, surface: str, pos: str) -> str:
        return surface if pos in self.preserved_pos else pos


@dataclass(frozen=True)
class Vocabulary:
    kind_id: str
    keys: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {k: i for i, k in enumerate(self.keys)})
        if len(self.index) != len(self.keys):
            raise ValueError("vocabulary keys must be unique")

    def __len__(self) -> int:
        return len(self.keys)


@dataclass(frozen=True)
class FeatureMatrix:
    doc_ids: tuple[str, ...]
    vocabulary: Vocabulary
    values: sparse.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def dense(self) -> np.ndarray:
        return np.asarray(self.values.todense(), dtype=np.float64)

    def row(self, doc_id: str) -> np.ndarray:
        i = self.doc_ids.index(doc_id)
        return np.asarray(self.values[i].todense()).ravel()


def doc_char_ngrams(doc: AnnotatedDocument, n: int, cross: bool = True) -> Counter:
    if cross:
        text = "".join(t.surface for t in doc.tokens)
        return Counter(text[i : i + n] for i in range(len(text) - n + 1))
    counts: Counter = Counter()
    for t in doc.tokens:
        counts.update(t.surface[i : i + n] for i in range(len(t.surface) - n + 1))
    return counts


def doc_token_ngrams(doc: AnnotatedDocument, n: int) -> Counter:
    surfaces = [t.surface for t in doc.tokens]
    return Counter(
        SEP.join(surfaces[i : i + n]) for i in range(len(surfaces) - n + 1)
    )


def doc_phrases(doc: AnnotatedDocument) -> list[list[int]]:
    """Indices of each maximal phrase run (phrase_start opens a new run)."""
    if not doc.has_phrases:
        raise AnnotationError(f"document {doc.doc_id!r} has no phrase boundaries")
    phrases: list[list[int]] = []
    for i, tok in enumerate(doc.tokens):
        if tok.phrase_start or not phrases:
            phrases.append([i])
        else:
            phrases[-1].append(i)
    return phrases


def doc_phrase_patterns(doc: AnnotatedDocument, rule: PhrasePatternRule) -> Counter:
    if not doc.has_pos:
        raise AnnotationError(f"document {doc.doc_id!r} is missing POS tags")
    counts: Counter = Counter()
    for phrase in doc_phrases(doc):
        counts[SEP.join(rule.mask(doc.tokens[i].surface, doc.tokens[i].pos) for i in phrase)] += 1
    return counts


def _doc_counts(doc: AnnotatedDocument, spec: FeatureSpec, rule: PhrasePatternRule | None) -> Counter:
    if spec.kind == CHAR_NGRAM:
        return doc_char_ngrams(doc, spec.n, spec.cross_token_boundaries)
    if spec.kind == TOKEN_NGRAM:
        return doc_token_ngrams(doc, spec.n)
    return doc_phrase_patterns(doc, rule or PhrasePatternRule())


def build_vocabulary(counts_per_doc: list[Counter], spec: FeatureSpec) -> Vocabulary:
    """Filter by document frequency, cap by total frequency, order by
    descending total frequency then lexicographic key."""
    total: Counter = Counter()
    doc_freq: Counter = Counter()
    for counts in counts_per_doc:
        total.update(counts)
        doc_freq.update(counts.keys())
    keys = [k for k in total if doc_freq[k] >= spec.min_doc_freq]
    keys.sort(key=lambda k: (-total[k], k))
    if spec.max_features is not None:
        keys = keys[: spec.max_features]
    return Vocabulary(kind_id=spec.kind_id, keys=tuple(keys))


def _assemble(
    doc_ids: list[str],
    counts_per_doc: list[Counter],
    vocab: Vocabulary,
    mode: str,
) -> FeatureMatrix:
    rows: list[int] = []
    cols: list[int] = []
    data: list[float] = []
    for r, counts in enumerate(counts_per_doc):
        present = [(vocab.index[k], v) for k, v in counts.items() if k in vocab.index]
        if mode == RELATIVE_FREQUENCY:
            denom = sum(v for _, v in present)
            if denom > 0:
                present = [(c, v / denom) for c, v in present]
        for c, v in sorted(present):
            rows.append(r)
            cols.append(c)
            data.append(float(v))
    mat = sparse.csr_matrix(
        (data, (rows, cols)), shape=(len(doc_ids), len(vocab)), dtype=np.float64
    )
    return FeatureMatrix(tuple(doc_ids), vocab, mat)


def extract(
    corpus: Corpus,
    spec: FeatureSpec,
    rule: PhrasePatternRule | None = None,
) -> FeatureMatrix:
    """Build the vocabulary over `corpus` and vectorize it in one pass."""
    counts = [_doc_counts(d, spec, rule) for d in corpus.documents]
    vocab = build_vocabulary(counts, spec)
    return _assemble([d.doc_id for d in corpus.documents], counts, vocab, spec.frequency_mode)


def extract_char_ngrams(corpus: Corpus, n: int, spec: FeatureSpec | None = None) -> FeatureMatrix:
    spec = spec or FeatureSpec(CHAR_NGRAM, n=n)
    if spec.kind != CHAR_NGRAM or spec.n != n:
        raise FeatureKindError("spec does not describe a char n-gram extraction")
    return extract(corpus, spec)


def extract_token_ngrams(corpus: Corpus, n: int, spec: FeatureSpec | None = None) -> FeatureMatrix:
    spec = spec or FeatureSpec(TOKEN_NGRAM, n=n)
    if spec.kind != TOKEN_NGRAM or spec.n != n:
        raise FeatureKindError("spec does not describe a token n-gram extraction")
    return extract(corpus, spec)


def extract_phrase_patterns(
    corpus: Corpus,
    rule: PhrasePatternRule | None = None,
    spec: FeatureSpec | None = None,
) -> FeatureMatrix:
    spec = spec or FeatureSpec(PHRASE_PATTERN)
    if spec.kind != PHRASE_PATTERN:
        raise FeatureKindError("spec does not describe a phrase-pattern extraction")
    return extract(corpus, spec, rule)


def vectorize(
    corpus: Corpus,
    vocabulary: Vocabulary,
    spec: FeatureSpec,
    rule: PhrasePatternRule | None = None,
) -> FeatureMatrix:
    """Apply an existing (e.g. training-fold) vocabulary to new documents.

    Out-of-vocabulary features are dropped; relative frequencies are taken
    over the in-vocabulary counts so nonzero rows still sum to 1.
    """
    if vocabulary.kind_id != spec.kind_id:
        raise FeatureKindError(
            f"vocabulary kind {vocabulary.kind_id!r} != requested {spec.kind_id!r}"
        )
    counts = [_doc_counts(d, spec, rule) for d in corpus.documents]
    return _assemble([d.doc_id for d in corpus.documents], counts, vocabulary, spec.frequency_mode)


def save_matrix(matrix: FeatureMatrix, values_path: str | Path, vocab_path: str | Path) -> None:
    """Sparse triplet CSV plus a vocabulary sidecar CSV."""
    with Path(values_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["doc_id", "feature_index", "value"])
        csr = matrix.values.tocsr()
        for r, doc_id in enumerate(matrix.doc_ids):
            start, end = csr.indptr[r], csr.indptr[r + 1]
            if start == end:
                if len(matrix.vocabulary) > 0:
                    # explicit zero so the row survives the round trip
                    w.writerow([doc_id, 0, repr(0.0)])
                continue
            cols = csr.indices[start:end]
            vals = csr.data[start:end]
            for j in np.argsort(cols):
                w.writerow([doc_id, int(cols[j]), repr(float(vals[j]))])
    with Path(vocab_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["feature_index", "key", "kind"])
        for i, key in enumerate(matrix.vocabulary.keys):
            w.writerow([i, key, matrix.vocabulary.kind_id])


def load_matrix(values_path: str | Path, vocab_path: str | Path) -> FeatureMatrix:
    keys: list[str] = []
    kind_id = None
    with Path(vocab_path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            keys.append(rec["key"])
            kind_id = rec["kind"]
    if kind_id is None:
        raise ValueError(f"{vocab_path}: empty vocabulary sidecar")
    vocab = Vocabulary(kind_id=kind_id, keys=tuple(keys))
    doc_ids: list[str] = []
    doc_index: dict[str, int] = {}
    rows, cols, data = [], [], []
    with Path(values_path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            did = rec["doc_id"]
            if did not in doc_index:
                doc_index[did] = len(doc_ids)
                doc_ids.append(did)
            rows.append(doc_index[did])
            cols.append(int(rec["feature_index"]))
            data.append(float(rec["value"]))
    mat = sparse.csr_matrix(
        (data, (rows, cols)), shape=(len(doc_ids), len(vocab)), dtype=np.float64
    )
    return FeatureMatrix(tuple(doc_ids), vocab, mat)
