"""Desk-scale synthetic corpora with controllable author separation.

Each author draws content and function words from author-specific
multinomials; a divergence knob scales how far those multinomials sit
from a shared base distribution (0 = indistinguishable authors). Tokens
carry POS tags and phrase boundaries from a small seeded grammar so all
three feature families have something to chew on.

Also provides stub prediction matrices: probability outputs with a
controllable hit rate, standing in for externally fine-tuned language
models when exercising the fusion machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import AnnotatedDocument, AnnotatedToken, Corpus, FoldPlan
from .ensemble import GROUP_PLM, ModelOutput, softmax, write_prediction_matrix

CONTENT_POS = ("noun", "verb", "adverb")
FUNCTION_POS = ("particle", "punctuation", "conjunction", "adjective")


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    num_authors: int = 10
    docs_per_author: int = 20
    tokens_per_doc: int = 510
    divergence: float = 1.0
    num_content_words: int = 150
    num_particles: int = 8
    num_adjectives: int = 10
    mean_phrase_extras: float = 1.0  # mean function tokens after a content word
    seed: int = 0

    def __post_init__(self):
        if min(self.num_authors, self.docs_per_author, self.tokens_per_doc) < 1:
            raise ValueError("all counts must be >= 1")
        if self.divergence < 0:
            raise ValueError("divergence must be >= 0")


def _lexicon(spec: SyntheticCorpusSpec):
    content = [(f"w{i:03d}", CONTENT_POS[i % len(CONTENT_POS)]) for i in range(spec.num_content_words)]
    particles = [(f"p{i}", "particle") for i in range(spec.num_particles)]
    adjectives = [(f"adj{i}", "adjective") for i in range(spec.num_adjectives)]
    conjunctions = [(f"c{i}", "conjunction") for i in range(4)]
    punctuation = [(".", "punctuation"), (",", "punctuation")]
    return content, particles, adjectives, conjunctions, punctuation


def gen_synthetic(spec: SyntheticCorpusSpec) -> Corpus:
    rng = np.random.default_rng(spec.seed)
    content, particles, adjectives, conjunctions, punctuation = _lexicon(spec)

    # Zipf-ish shared base over content words, flat over function words.
    base_content = -np.log(np.arange(1, len(content) + 1, dtype=np.float64))
    base_particle = np.zeros(len(particles))
    base_adj = np.zeros(len(adjectives))

    author_content = []
    author_particle = []
    author_adj = []
    for _ in range(spec.num_authors):
        author_content.append(softmax(base_content + spec.divergence * rng.normal(size=len(content))))
        author_particle.append(softmax(base_particle + 0.5 * spec.divergence * rng.normal(size=len(particles))))
        author_adj.append(softmax(base_adj + 0.5 * spec.divergence * rng.normal(size=len(adjectives))))

    docs = []
    width = max(2, len(str(spec.num_authors - 1)))
    for a in range(spec.num_authors):
        author = f"author{a:0{width}d}"
        for d in range(spec.docs_per_author):
            tokens: list[AnnotatedToken] = []
            phrase_countdown = int(rng.integers(3, 9))  # phrases until sentence end
            while len(tokens) < spec.tokens_per_doc:
                # phrase = optional conjunction opener + content word + extras
                first = True
                if rng.random() < 0.08:
                    s, pos = conjunctions[rng.integers(len(conjunctions))]
                    tokens.append(AnnotatedToken(s, pos, True))
                    first = False
                if rng.random() < 0.12:
                    s, pos = adjectives[rng.choice(len(adjectives), p=author_adj[a])]
                else:
                    s, pos = content[rng.choice(len(content), p=author_content[a])]
                tokens.append(AnnotatedToken(s, pos, first))
                extras = rng.poisson(spec.mean_phrase_extras)
                for _ in range(extras):
                    s, pos = particles[rng.choice(len(particles), p=author_particle[a])]
                    tokens.append(AnnotatedToken(s, pos, False))
                phrase_countdown -= 1
                if phrase_countdown <= 0:
                    s, pos = punctuation[0] if rng.random() < 0.8 else punctuation[1]
                    tokens.append(AnnotatedToken(s, pos, False))
                    phrase_countdown = int(rng.integers(3, 9))
            tokens = tokens[: spec.tokens_per_doc]
            docs.append(
                AnnotatedDocument(f"{author}-d{d:03d}", author, tuple(tokens))
            )
    return Corpus(tuple(docs))


@dataclass(frozen=True)
class StubModelSpec:
    model_id: str
    hit_rate: float  # target top-1 accuracy of the stub
    confidence: float = 3.0  # logit boost on the chosen class
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.hit_rate <= 1.0:
            raise ValueError("hit_rate must be in [0, 1]")


def stub_predictions(
    spec: StubModelSpec,
    doc_ids: list[str],
    true_labels: list[str],
    class_order: list[str],
) -> ModelOutput:
    """Softmax rows whose argmax hits the true class about hit_rate of the
    time; misses land on a random other class."""
    rng = np.random.default_rng(spec.seed)
    index = {c: i for i, c in enumerate(class_order)}
    M = len(class_order)
    logits = spec.noise * rng.normal(size=(len(doc_ids), M))
    for r, label in enumerate(true_labels):
        target = index[label]
        if rng.random() >= spec.hit_rate:
            others = [j for j in range(M) if j != target]
            target = others[rng.integers(len(others))]
        logits[r, target] += spec.confidence
    return ModelOutput(
        model_id=spec.model_id,
        group=GROUP_PLM,
        doc_ids=tuple(doc_ids),
        class_order=tuple(class_order),
        probs=softmax(logits),
    )


def write_stub_model(
    spec: StubModelSpec,
    corpus: Corpus,
    plan: FoldPlan,
    out_dir: str | Path,
    splits: tuple[str, ...] = ("validation", "test"),
) -> None:
    """Emit interchange CSV + manifest files for every fold and split,
    mimicking what an external fine-tuning run would produce."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    author_of = {d.doc_id: d.author for d in corpus.documents}
    for f, fold in enumerate(plan.folds):
        for split in splits:
            ids = list(fold.role(split))
            labels = [author_of[i] for i in ids]
            split_tag = {"train": 0, "validation": 1, "test": 2}[split]
            split_seed = (spec.seed * 1000003 + f * 101 + split_tag) % (2 ** 31)
            out = stub_predictions(
                StubModelSpec(
                    spec.model_id, spec.hit_rate, spec.confidence, spec.noise, split_seed
                ),
                ids,
                labels,
                list(corpus.labels),
            )
            write_prediction_matrix(
                out,
                out_dir / f"fold{f}_{split}.csv",
                out_dir / f"fold{f}_{split}.manifest.json",
                fold=f,
            )
