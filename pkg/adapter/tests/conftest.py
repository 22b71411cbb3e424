"""Shared fixtures: synthetic corpora, fold plans, and a tiny local
checkpoint pre-trained on a disjoint author set.

The corpus and fold-plan files are produced with the ensemble toolkit (a
test dependency); the adapter itself only ever sees the files.
"""

from pathlib import Path

import pytest

from stylo_ensemble.corpus import make_fold_plan, save_corpus
from stylo_ensemble.synthetic import SyntheticCorpusSpec, gen_synthetic

DOC_TOKENS = 96


def write_corpus_and_plan(root: Path, *, num_authors=4, docs_per_author=8,
                          tokens=32, num_folds=2, ratios=(4, 2, 2), seed=0):
    corpus = gen_synthetic(SyntheticCorpusSpec(
        num_authors=num_authors, docs_per_author=docs_per_author,
        tokens_per_doc=tokens, divergence=1.0, seed=seed))
    root.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, root / "corpus.jsonl")
    plan = make_fold_plan(corpus, num_folds, ratios, seed=seed)
    plan.save(root / "plan.json")
    return corpus, plan


@pytest.fixture
def small_setup(tmp_path):
    corpus, plan = write_corpus_and_plan(tmp_path)
    return tmp_path, corpus, plan


def build_checkpoint(path: Path, target_corpus, *, seed=0, pre_epochs=10):
    """A small generic checkpoint: the same architecture pre-trained on a
    disjoint set of synthetic authors, with a WordPiece vocab covering the
    synthetic lexicon."""
    import torch
    from torch.utils.data import DataLoader, TensorDataset
    from transformers import BertConfig, BertForSequenceClassification, BertTokenizer

    pre = gen_synthetic(SyntheticCorpusSpec(
        num_authors=8, docs_per_author=40, tokens_per_doc=DOC_TOKENS,
        divergence=1.0, seed=99))
    surfaces = sorted({t.surface for c in (target_corpus, pre)
                       for d in c.documents for t in d.tokens})
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + surfaces
    path.mkdir(parents=True, exist_ok=True)
    (path / "vocab.txt").write_text("\n".join(vocab) + "\n")
    tokenizer = BertTokenizer(str(path / "vocab.txt"))
    tokenizer.save_pretrained(path)

    torch.manual_seed(seed)
    model = BertForSequenceClassification(BertConfig(
        vocab_size=len(vocab), hidden_size=64, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=128,
        max_position_embeddings=DOC_TOKENS + 16, num_labels=8))
    texts = [" ".join(t.surface for t in d.tokens) for d in pre.documents]
    labels = sorted({d.author for d in pre.documents})
    y = torch.tensor([labels.index(d.author) for d in pre.documents])
    enc = tokenizer(texts, padding=True, truncation=True,
                    max_length=DOC_TOKENS + 2, return_tensors="pt")
    loader = DataLoader(
        TensorDataset(enc["input_ids"], enc["attention_mask"], y),
        batch_size=16, shuffle=True,
        generator=torch.Generator().manual_seed(seed + 1))
    optimizer = torch.optim.AdamW(model.parameters(), lr=1e-3)
    for _ in range(pre_epochs):
        model.train()
        for input_ids, attention_mask, yy in loader:
            optimizer.zero_grad()
            out = model(input_ids=input_ids, attention_mask=attention_mask,
                        labels=yy)
            out.loss.backward()
            optimizer.step()
    model.save_pretrained(path)
    return path
