"""Soft-voting fusion of model probability outputs and exhaustive
enumeration of ensemble subsets.

The fused score for class j is (1/sum_k w_k) * sum_k w_k * p_kj, the
weight-normalized form of averaging the member probability vectors; the
predicted label is the argmax, ties broken toward the lowest class index.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ROW_SUM_TOLERANCE = 1e-6

GROUP_PLM = "plm"
GROUP_FEATURE_CLASSIFIER = "feature_classifier"

MODE_POOLED = "pooled"
MODE_GROUPED = "grouped"


class EnsembleError(ValueError):
    pass


@dataclass(frozen=True)
class ModelOutput:
    model_id: str
    group: str
    doc_ids: tuple[str, ...]
    class_order: tuple[str, ...]
    probs: np.ndarray  # len(doc_ids) x len(class_order), row-stochastic

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if self.group not in (GROUP_PLM, GROUP_FEATURE_CLASSIFIER):
            raise EnsembleError(f"unknown model group {self.group!r}")
        if probs.shape != (len(self.doc_ids), len(self.class_order)):
            raise EnsembleError(
                f"{self.model_id}: matrix shape {probs.shape} does not match "
                f"{len(self.doc_ids)} docs x {len(self.class_order)} classes"
            )
        if (probs < 0).any() or (probs > 1).any():
            raise EnsembleError(f"{self.model_id}: probabilities outside [0, 1]")
        sums = probs.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)
        if bad.size:
            i = int(bad[0])
            raise EnsembleError(
                f"{self.model_id}: row for doc {self.doc_ids[i]!r} sums to "
                f"{sums[i]:.6f}, expected 1 within {ROW_SUM_TOLERANCE}"
            )

    def predictions(self) -> list[str]:
        return [self.class_order[j] for j in np.argmax(self.probs, axis=1)]


@dataclass(frozen=True)
class EnsembleSpec:
    member_ids: tuple[str, ...]
    weights: tuple[float, ...] | None = None  # None -> uniform
    mode: str = MODE_POOLED

    def __post_init__(self):
        if not self.member_ids:
            raise EnsembleError("ensemble needs at least one member")
        if len(set(self.member_ids)) != len(self.member_ids):
            raise EnsembleError("duplicate member ids")
        if self.weights is not None:
            if len(self.weights) != len(self.member_ids):
                raise EnsembleError("one weight per member required")
            if any(w <= 0 for w in self.weights):
                raise EnsembleError("weights must be positive")
        if self.mode not in (MODE_POOLED, MODE_GROUPED):
            raise EnsembleError(f"unknown ensemble mode {self.mode!r}")


@dataclass(frozen=True)
class EnsembleResult:
    doc_ids: tuple[str, ...]
    class_order: tuple[str, ...]
    fused: np.ndarray
    predicted: tuple[str, ...]


def softmax(logits) -> np.ndarray:
    """Max-shifted softmax; safe for large magnitudes."""
    x = np.asarray(logits, dtype=np.float64)
    if np.isnan(x).any():
        raise ValueError("NaN in softmax input")
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=-1, keepdims=True)


def _weighted_mean(mats: list[np.ndarray], weights: list[float]) -> np.ndarray:
    total = sum(weights)
    out = np.zeros_like(mats[0])
    for m, w in zip(mats, weights):
        out += (w / total) * m
    return out


def soft_vote(outputs: list[ModelOutput], spec: EnsembleSpec) -> EnsembleResult:
    """Fuse member outputs.

    pooled: one weight-normalized average over all members. grouped:
    average within each model group first, then average the group vectors
    (the integrated-ensemble reading).
    """
    by_id = {o.model_id: o for o in outputs}
    members = []
    for mid in spec.member_ids:
        if mid not in by_id:
            raise EnsembleError(f"unknown member {mid!r}")
        members.append(by_id[mid])
    ref = members[0]
    for o in members[1:]:
        if o.doc_ids != ref.doc_ids:
            raise EnsembleError(f"{o.model_id}: doc_id mismatch with {ref.model_id}")
        if o.class_order != ref.class_order:
            raise EnsembleError(f"{o.model_id}: class-order mismatch with {ref.model_id}")
    weights = list(spec.weights) if spec.weights is not None else [1.0] * len(members)

    if spec.mode == MODE_POOLED:
        fused = _weighted_mean([o.probs for o in members], weights)
    else:
        groups: dict[str, tuple[list[np.ndarray], list[float]]] = {}
        for o, w in zip(members, weights):
            groups.setdefault(o.group, ([], []))
            groups[o.group][0].append(o.probs)
            groups[o.group][1].append(w)
        group_means = [
            _weighted_mean(mats, ws) for mats, ws in (groups[g] for g in sorted(groups))
        ]
        fused = sum(group_means) / len(group_means)

    predicted = tuple(ref.class_order[j] for j in np.argmax(fused, axis=1))
    return EnsembleResult(ref.doc_ids, ref.class_order, fused, predicted)


def enumerate_subsets(model_ids, min_size: int = 2) -> list[tuple[str, ...]]:
    """All subsets of size >= min_size, ordered by size then lexicographic."""
    ids = sorted(model_ids)
    if len(ids) != len(set(ids)):
        raise EnsembleError("duplicate model ids")
    if len(ids) < min_size:
        raise EnsembleError(
            f"{len(ids)} models cannot form subsets of size >= {min_size}"
        )
    out: list[tuple[str, ...]] = []
    for size in range(min_size, len(ids) + 1):
        out.extend(itertools.combinations(ids, size))
    return out


def integrated_enumerate(
    plm_ids, fc_ids, min_size: int = 2
) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Cross product of the two groups' subset enumerations."""
    plm_subsets = enumerate_subsets(plm_ids, min_size)
    fc_subsets = enumerate_subsets(fc_ids, min_size)
    return [(p, f) for p in plm_subsets for f in fc_subsets]


# --- interchange format -------------------------------------------------
#
# Prediction matrices cross the process boundary as a CSV with header
# doc_id,<label_1>,...,<label_M> plus a JSON manifest
# {model_id, group, fold, class_order}.


def write_prediction_matrix(
    output: ModelOutput, csv_path: str | Path, manifest_path: str | Path, fold: int
) -> None:
    with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["doc_id", *output.class_order])
        for doc_id, row in zip(output.doc_ids, output.probs):
            w.writerow([doc_id, *[repr(float(v)) for v in row]])
    manifest = {
        "model_id": output.model_id,
        "group": output.group,
        "fold": fold,
        "class_order": list(output.class_order),
    }
    Path(manifest_path).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_prediction_matrix(csv_path: str | Path, manifest_path: str | Path) -> tuple[ModelOutput, int]:
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    for key in ("model_id", "group", "fold", "class_order"):
        if key not in manifest:
            raise EnsembleError(f"{manifest_path}: manifest missing {key!r}")
    class_order = tuple(manifest["class_order"])
    doc_ids: list[str] = []
    rows: list[list[float]] = []
    with Path(csv_path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "doc_id" or tuple(header[1:]) != class_order:
            raise EnsembleError(
                f"{csv_path}: header does not match manifest class_order"
            )
        for rec in reader:
            doc_ids.append(rec[0])
            rows.append([float(v) for v in rec[1:]])
    output = ModelOutput(
        model_id=manifest["model_id"],
        group=manifest["group"],
        doc_ids=tuple(doc_ids),
        class_order=class_order,
        probs=np.array(rows, dtype=np.float64),
    )
    return output, int(manifest["fold"])
