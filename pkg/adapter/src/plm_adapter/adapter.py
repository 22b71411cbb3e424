"""Fold-wise fine-tuning of a transformer sequence classifier.

Per fold: train on the train split, track validation macro F1 after every
epoch, and emit softmaxed test (and validation) probabilities from the
best-validation epoch in the interchange format. Stub mode swaps training
for seeded random logits so the format contract can be exercised without a
deep-learning runtime; torch/transformers are imported lazily for the same
reason.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .interchange import (
    Document,
    FormatError,
    class_order,
    load_corpus,
    load_fold_plan,
    write_matrix,
)


class AdapterError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdapterConfig:
    checkpoint: str
    corpus_path: str
    fold_plan_path: str
    output_dir: str
    model_id: str
    batch_size: int = 16
    learning_rate: float = 2e-5
    weight_decay: float = 0.01
    epochs: int = 40
    max_length: int = 512
    truncation: int = 510  # corpus tokens kept before special tokens
    seed: int = 0
    stub: bool = False
    device: str = "cpu"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.max_length < 3 or self.truncation < 1:
            raise ValueError("max_length must fit at least one token plus specials")


def derive_seed(master: int, tag: str) -> int:
    digest = hashlib.sha256(f"{master}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**32)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _macro_f1(true_idx: np.ndarray, pred_idx: np.ndarray, num_classes: int) -> float:
    f1s = []
    for c in range(num_classes):
        tp = float(np.sum((pred_idx == c) & (true_idx == c)))
        fp = float(np.sum((pred_idx == c) & (true_idx != c)))
        fn = float(np.sum((pred_idx != c) & (true_idx == c)))
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1s.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
    return sum(f1s) / num_classes


@dataclass
class _FoldResult:
    fold: int
    best_epoch: int
    best_val_f1: float
    probs: dict  # split -> (doc_ids, probs)


def _texts(docs: list[Document], truncation: int) -> list[str]:
    return [" ".join(d.surfaces[:truncation]) for d in docs]


def _run_fold_stub(
    config: AdapterConfig, fold_no: int, by_split: dict, classes: tuple[str, ...]
) -> _FoldResult:
    probs = {}
    for split, docs in by_split.items():
        if split == "train":
            continue
        rng = np.random.default_rng(
            derive_seed(config.seed, f"stub:{fold_no}:{split}")
        )
        logits = rng.normal(size=(len(docs), len(classes)))
        probs[split] = ([d.doc_id for d in docs], _softmax(logits))
    return _FoldResult(fold=fold_no, best_epoch=-1, best_val_f1=float("nan"),
                       probs=probs)


def _run_fold_train(
    config: AdapterConfig, fold_no: int, by_split: dict, classes: tuple[str, ...]
) -> _FoldResult:
    try:
        import torch
        from torch.utils.data import DataLoader, TensorDataset
        from transformers import (
            AutoModelForSequenceClassification,
            AutoTokenizer,
        )
    except ImportError as exc:
        raise AdapterError(
            "training mode needs torch and transformers (pip install "
            "'plm-adapter[torch]'); use --stub for format-only output"
        ) from exc

    torch.manual_seed(derive_seed(config.seed, f"fold:{fold_no}"))
    device = torch.device(config.device)
    try:
        tokenizer = AutoTokenizer.from_pretrained(config.checkpoint)
        model = AutoModelForSequenceClassification.from_pretrained(
            config.checkpoint,
            num_labels=len(classes),
            # the head is re-initialized when the checkpoint was trained
            # for a different number of classes
            ignore_mismatched_sizes=True,
        ).to(device)
    except (OSError, ValueError, RuntimeError, EnvironmentError) as exc:
        raise AdapterError(f"cannot load checkpoint {config.checkpoint!r}: {exc}") from exc

    label_index = {c: i for i, c in enumerate(classes)}

    def encode(docs):
        enc = tokenizer(
            _texts(docs, config.truncation),
            padding=True,
            truncation=True,
            max_length=config.max_length,
            return_tensors="pt",
        )
        if int(enc["attention_mask"].sum(dim=1).min()) <= 2:
            raise AdapterError(
                "tokenizer produced an empty encoding for at least one "
                "document; checkpoint and corpus vocabulary are incompatible"
            )
        y = torch.tensor([label_index[d.author] for d in docs])
        return enc, y

    train_enc, train_y = encode(by_split["train"])
    val_enc, val_y = encode(by_split["validation"])
    test_enc, test_y = encode(by_split["test"])

    loader = DataLoader(
        TensorDataset(train_enc["input_ids"], train_enc["attention_mask"], train_y),
        batch_size=config.batch_size,
        shuffle=True,
        generator=torch.Generator().manual_seed(
            derive_seed(config.seed, f"shuffle:{fold_no}")
        ),
    )
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.learning_rate,
        weight_decay=config.weight_decay,
    )

    def logits_for(enc):
        model.eval()
        with torch.no_grad():
            out = model(
                input_ids=enc["input_ids"].to(device),
                attention_mask=enc["attention_mask"].to(device),
            )
        return out.logits.cpu().numpy()

    best = (-1.0, -1, None, None)  # val f1, epoch, test logits, val logits
    try:
        for epoch in range(config.epochs):
            model.train()
            for input_ids, attention_mask, y in loader:
                optimizer.zero_grad()
                out = model(
                    input_ids=input_ids.to(device),
                    attention_mask=attention_mask.to(device),
                    labels=y.to(device),
                )
                out.loss.backward()
                optimizer.step()
            val_logits = logits_for(val_enc)
            val_f1 = _macro_f1(
                val_y.numpy(), val_logits.argmax(axis=1), len(classes)
            )
            if val_f1 > best[0]:
                best = (val_f1, epoch, logits_for(test_enc), val_logits)
    except RuntimeError as exc:
        if "out of memory" in str(exc).lower():
            raise AdapterError(
                f"out of memory at batch_size={config.batch_size}; retry "
                "with a smaller --batch-size"
            ) from exc
        raise

    val_f1, epoch, test_logits, val_logits = best
    return _FoldResult(
        fold=fold_no,
        best_epoch=epoch,
        best_val_f1=val_f1,
        probs={
            "validation": ([d.doc_id for d in by_split["validation"]],
                           _softmax(val_logits)),
            "test": ([d.doc_id for d in by_split["test"]],
                     _softmax(test_logits)),
        },
    )


def finetune_and_predict(config: AdapterConfig, only_fold: int | None = None) -> list[_FoldResult]:
    """Train (or stub) each fold and write interchange files.

    only_fold restricts the run to one fold so folds can be parallelized
    across processes.
    """
    docs = load_corpus(config.corpus_path)
    folds = load_fold_plan(config.fold_plan_path)
    classes = class_order(docs)
    by_id = {d.doc_id: d for d in docs}

    results = []
    for fold_no, fold in enumerate(folds):
        if only_fold is not None and fold_no != only_fold:
            continue
        try:
            by_split = {
                split: [by_id[i] for i in sorted(getattr(fold, split))]
                for split in ("train", "validation", "test")
            }
        except KeyError as exc:
            raise FormatError(f"fold {fold_no} references unknown doc_id {exc}") from exc
        if config.stub:
            result = _run_fold_stub(config, fold_no, by_split, classes)
        else:
            result = _run_fold_train(config, fold_no, by_split, classes)
        for split, (doc_ids, probs) in result.probs.items():
            write_matrix(
                config.output_dir, config.model_id, fold_no, split,
                doc_ids, classes, probs,
            )
        results.append(result)
    return results
