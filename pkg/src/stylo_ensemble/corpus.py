"""Corpus ingestion, truncation, and stratified fold planning.

Documents are ordered token streams with optional POS tags and phrase
boundaries. The on-disk corpus format is JSONL, one document per line:

    {"doc_id": "...", "author": "...",
     "tokens": [{"s": "surface", "p": "pos-or-null", "b": true}, ...]}

Unknown fields are ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_TRUNCATION = 510


class CorpusError(ValueError):
    """Malformed corpus file or invariant violation."""


class FoldPlanError(ValueError):
    """Corpus cannot be divided into the requested fold layout."""


@dataclass(frozen=True)
class AnnotatedToken:
    surface: str
    pos: str | None = None
    phrase_start: bool = False

    def __post_init__(self):
        if not self.surface:
            raise CorpusError("token surface must be non-empty")


@dataclass(frozen=True)
class AnnotatedDocument:
    doc_id: str
    author: str
    tokens: tuple[AnnotatedToken, ...]

    def __post_init__(self):
        if not self.doc_id:
            raise CorpusError("doc_id must be non-empty")
        if not self.tokens:
            raise CorpusError(f"document {self.doc_id!r} has no tokens")
        # If any token carries a phrase boundary, the document must open one.
        if any(t.phrase_start for t in self.tokens) and not self.tokens[0].phrase_start:
            raise CorpusError(
                f"document {self.doc_id!r}: phrase boundaries present but the "
                "first token does not start a phrase"
            )

    @property
    def has_pos(self) -> bool:
        return all(t.pos is not None for t in self.tokens)

    @property
    def has_phrases(self) -> bool:
        return any(t.phrase_start for t in self.tokens)


@dataclass(frozen=True)
class Corpus:
    documents: tuple[AnnotatedDocument, ...]
    labels: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        seen: set[str] = set()
        for doc in self.documents:
            if doc.doc_id in seen:
                raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
        object.__setattr__(
            self, "labels", tuple(sorted({d.author for d in self.documents}))
        )

    def __len__(self) -> int:
        return len(self.documents)

    def by_author(self) -> dict[str, list[AnnotatedDocument]]:
        out: dict[str, list[AnnotatedDocument]] = {a: [] for a in self.labels}
        for doc in self.documents:
            out[doc.author].append(doc)
        return out

    def subset(self, doc_ids) -> "Corpus":
        wanted = set(doc_ids)
        missing = wanted - {d.doc_id for d in self.documents}
        if missing:
            raise CorpusError(f"unknown doc_ids: {sorted(missing)}")
        return Corpus(tuple(d for d in self.documents if d.doc_id in wanted))

    def document(self, doc_id: str) -> AnnotatedDocument:
        for d in self.documents:
            if d.doc_id == doc_id:
                return d
        raise CorpusError(f"unknown doc_id {doc_id!r}")


def load_corpus(path: str | Path, format: str = "jsonl") -> Corpus:
    """Read a corpus file. Only the JSONL format is currently defined."""
    if format != "jsonl":
        raise CorpusError(f"unknown corpus format {format!r}")
    path = Path(path)
    docs: list[AnnotatedDocument] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            docs.append(_parse_record(rec, f"{path}:{lineno}"))
    if not docs:
        raise CorpusError(f"{path}: empty corpus file")
    return Corpus(tuple(docs))


def _parse_record(rec: dict, where: str) -> AnnotatedDocument:
    try:
        doc_id = rec["doc_id"]
        author = rec["author"]
        raw_tokens = rec["tokens"]
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"{where}: missing field {exc}") from exc
    if not isinstance(author, str) or not author:
        raise CorpusError(f"{where}: author must be a non-empty string")
    tokens = []
    for tok in raw_tokens:
        try:
            surface = tok["s"]
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"{where}: token missing surface") from exc
        if not isinstance(surface, str) or not surface:
            raise CorpusError(f"{where}: token surface must be a non-empty string")
        tokens.append(
            AnnotatedToken(
                surface=surface,
                pos=tok.get("p"),
                phrase_start=bool(tok.get("b", False)),
            )
        )
    try:
        return AnnotatedDocument(doc_id=doc_id, author=author, tokens=tuple(tokens))
    except CorpusError as exc:
        raise CorpusError(f"{where}: {exc}") from exc


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            rec = {
                "doc_id": doc.doc_id,
                "author": doc.author,
                "tokens": [
                    {"s": t.surface, "p": t.pos, "b": t.phrase_start}
                    for t in doc.tokens
                ],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def truncate(doc: AnnotatedDocument, limit: int = DEFAULT_TRUNCATION) -> AnnotatedDocument:
    """Keep only the first `limit` tokens; id and author are unchanged."""
    if limit < 1:
        raise ValueError("truncation limit must be >= 1")
    if len(doc.tokens) <= limit:
        return doc
    return AnnotatedDocument(doc.doc_id, doc.author, doc.tokens[:limit])


def truncate_corpus(corpus: Corpus, limit: int = DEFAULT_TRUNCATION) -> Corpus:
    return Corpus(tuple(truncate(d, limit) for d in corpus.documents))


@dataclass(frozen=True)
class FoldAssignment:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]

    def role(self, name: str) -> tuple[str, ...]:
        return getattr(self, name)


@dataclass(frozen=True)
class FoldPlan:
    num_folds: int
    folds: tuple[FoldAssignment, ...]

    def to_json(self) -> str:
        obj = {
            "num_folds": self.num_folds,
            "folds": [
                {
                    "train": list(f.train),
                    "validation": list(f.validation),
                    "test": list(f.test),
                }
                for f in self.folds
            ],
        }
        return json.dumps(obj, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        obj = json.loads(text)
        folds = tuple(
            FoldAssignment(
                tuple(f["train"]), tuple(f["validation"]), tuple(f["test"])
            )
            for f in obj["folds"]
        )
        return cls(num_folds=obj["num_folds"], folds=folds)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FoldPlan":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def make_fold_plan(
    corpus: Corpus,
    num_folds: int,
    ratios: tuple[int, int, int],
    seed: int,
) -> FoldPlan:
    """Build a stratified rotation plan.

    `ratios` is the per-author (train, validation, test) document count.
    Per author, documents are shuffled once by `seed` and cut into
    2*num_folds equal blocks; fold f takes block 2f as validation and
    block 2f+1 as test, the rest as train. Each document therefore lands
    in validation-or-test exactly once across the folds.

    A single-fold plan is allowed to hold out fewer documents than a full
    rotation would (the leftover blocks stay in train).
    """
    n_train, n_val, n_test = ratios
    if num_folds < 1:
        raise FoldPlanError("num_folds must be >= 1")
    if n_val != n_test:
        raise FoldPlanError(
            f"rotation requires equal validation/test counts, got {n_val}/{n_test}"
        )
    if n_val < 1:
        raise FoldPlanError("validation/test counts must be >= 1")

    by_author = corpus.by_author()
    block = n_val
    for author, docs in by_author.items():
        if len(docs) != n_train + n_val + n_test:
            raise FoldPlanError(
                f"author {author!r} has {len(docs)} documents, "
                f"ratios {ratios} require {n_train + n_val + n_test}"
            )
        if 2 * num_folds * block > len(docs):
            raise FoldPlanError(
                f"author {author!r}: {len(docs)} documents cannot supply "
                f"{num_folds} folds of {block}+{block} held-out documents"
            )
        if num_folds > 1 and 2 * num_folds * block != len(docs):
            raise FoldPlanError(
                f"author {author!r}: {len(docs)} documents do not divide into "
                f"{2 * num_folds} rotation blocks of {block}"
            )

    rng = np.random.default_rng(seed)
    shuffled: dict[str, list[str]] = {}
    for author in sorted(by_author):
        ids = sorted(d.doc_id for d in by_author[author])
        perm = rng.permutation(len(ids))
        shuffled[author] = [ids[i] for i in perm]

    folds = []
    for f in range(num_folds):
        val: list[str] = []
        test: list[str] = []
        train: list[str] = []
        for author in sorted(shuffled):
            ids = shuffled[author]
            v = ids[2 * f * block : (2 * f + 1) * block]
            t = ids[(2 * f + 1) * block : (2 * f + 2) * block]
            held = set(v) | set(t)
            val.extend(v)
            test.extend(t)
            train.extend(i for i in ids if i not in held)
        folds.append(
            FoldAssignment(tuple(sorted(train)), tuple(sorted(val)), tuple(sorted(test)))
        )
    return FoldPlan(num_folds=num_folds, folds=tuple(folds))


def check_fold_plan(plan: FoldPlan, corpus: Corpus) -> None:
    """Raise FoldPlanError if the plan violates its invariants."""
    all_ids = {d.doc_id for d in corpus.documents}
    author_of = {d.doc_id: d.author for d in corpus.documents}
    held_counts: dict[str, int] = {i: 0 for i in all_ids}
    for k, fold in enumerate(plan.folds):
        roles = {"train": fold.train, "validation": fold.validation, "test": fold.test}
        combined: list[str] = []
        for ids in roles.values():
            combined.extend(ids)
        if len(combined) != len(set(combined)):
            raise FoldPlanError(f"fold {k}: roles overlap")
        if set(combined) != all_ids:
            raise FoldPlanError(f"fold {k}: roles do not cover the corpus")
        for role, ids in roles.items():
            per_author: dict[str, int] = {}
            for i in ids:
                per_author[author_of[i]] = per_author.get(author_of[i], 0) + 1
            counts = [per_author.get(a, 0) for a in corpus.labels]
            if max(counts) - min(counts) > 1:
                raise FoldPlanError(f"fold {k} role {role}: stratification off by >1")
        for i in fold.validation + fold.test:
            held_counts[i] += 1
    bad = {i: c for i, c in held_counts.items() if c > 1}
    if bad:
        raise FoldPlanError(f"documents held out more than once: {sorted(bad)}")
    if plan.num_folds > 1 and any(c != 1 for c in held_counts.values()):
        missing = sorted(i for i, c in held_counts.items() if c == 0)
        raise FoldPlanError(f"documents never held out: {missing}")
