"""File formats shared with the ensemble toolkit.

The adapter talks to the toolkit only through files: the JSONL corpus, the
fold plan JSON, and the prediction-matrix interchange (CSV + manifest).
This module implements exactly those three, nothing more.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    author: str
    surfaces: tuple[str, ...]


@dataclass(frozen=True)
class Fold:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]


def load_corpus(path: str | Path) -> list[Document]:
    """JSONL, one document per line; only surfaces are needed here."""
    docs = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                docs.append(Document(
                    doc_id=rec["doc_id"],
                    author=rec["author"],
                    surfaces=tuple(t["s"] for t in rec["tokens"]),
                ))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not docs:
        raise FormatError(f"{path}: empty corpus")
    return docs


def class_order(docs: list[Document]) -> tuple[str, ...]:
    return tuple(sorted({d.author for d in docs}))


def load_fold_plan(path: str | Path) -> list[Fold]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return [
            Fold(tuple(f["train"]), tuple(f["validation"]), tuple(f["test"]))
            for f in obj["folds"]
        ]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_matrix(
    out_dir: str | Path,
    model_id: str,
    fold: int,
    split: str,
    doc_ids: list[str],
    classes: tuple[str, ...],
    probs: np.ndarray,
) -> None:
    """fold{f}_{split}.csv plus its manifest, rows in doc_id order."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (len(doc_ids), len(classes)):
        raise FormatError("probability matrix shape mismatch")
    if not np.allclose(probs.sum(axis=1), 1.0, atol=1e-6):
        raise FormatError("rows must sum to 1 within 1e-6")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    order = np.argsort(np.asarray(doc_ids))
    with (out_dir / f"fold{fold}_{split}.csv").open(
        "w", newline="", encoding="utf-8"
    ) as fh:
        w = csv.writer(fh)
        w.writerow(["doc_id", *classes])
        for i in order:
            w.writerow([doc_ids[i], *[repr(float(v)) for v in probs[i]]])
    manifest = {
        "model_id": model_id,
        "group": "plm",
        "fold": fold,
        "class_order": list(classes),
    }
    (out_dir / f"fold{fold}_{split}.manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
