"""Scoring and statistical comparison of prediction results.

Per-class recall/precision/F1 come from a one-vs-rest reduction of the
confusion matrix; macro F1 is their unweighted mean. Welch's t-test and
Cohen's d quantify differences between groups of F1 scores.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import stdtr


class EvaluationError(ValueError):
    pass


def confusion(true_labels, predicted_labels, class_order) -> np.ndarray:
    """counts[i][j] = documents with true class i predicted as class j."""
    if len(true_labels) != len(predicted_labels):
        raise EvaluationError("label sequences differ in length")
    if len(true_labels) == 0:
        raise EvaluationError("nothing to score")
    index = {c: i for i, c in enumerate(class_order)}
    cm = np.zeros((len(class_order), len(class_order)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        if t not in index or p not in index:
            raise EvaluationError(f"label outside class order: {t!r} / {p!r}")
        cm[index[t], index[p]] += 1
    return cm


@dataclass(frozen=True)
class ClassMetrics:
    recall: tuple[float, ...]
    precision: tuple[float, ...]
    f1: tuple[float, ...]


def metrics(cm: np.ndarray) -> tuple[ClassMetrics, float]:
    """Per-class recall/precision/F1 and macro F1. 0/0 ratios score 0."""
    cm = np.asarray(cm)
    tp = np.diag(cm).astype(float)
    fn = cm.sum(axis=1) - tp
    fp = cm.sum(axis=0) - tp

    def safe(num, den):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)

    recall = safe(tp, tp + fn)
    precision = safe(tp, tp + fp)
    f1 = safe(2 * precision * recall, precision + recall)
    macro = float(f1.mean())
    return (
        ClassMetrics(tuple(recall), tuple(precision), tuple(f1)),
        macro,
    )


def macro_f1(true_labels, predicted_labels, class_order) -> float:
    return metrics(confusion(true_labels, predicted_labels, class_order))[1]


@dataclass(frozen=True)
class ComparisonResult:
    t: float
    df: float
    p: float
    cohens_d: float


def welch_t_test(x, y) -> ComparisonResult:
    """Welch's two-sample t-test with Welch-Satterthwaite df, two-sided p,
    and pooled-sd Cohen's d."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = x.size, y.size
    if nx < 2 or ny < 2:
        raise EvaluationError("each sample needs at least 2 observations")
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(ddof=1), y.var(ddof=1)
    if vx == 0.0 and vy == 0.0:
        if mx == my:
            return ComparisonResult(t=0.0, df=float(nx + ny - 2), p=1.0, cohens_d=0.0)
        raise EvaluationError("zero variance in both samples with unequal means")
    se2 = vx / nx + vy / ny
    t = (mx - my) / math.sqrt(se2)
    df = se2 ** 2 / ((vx / nx) ** 2 / (nx - 1) + (vy / ny) ** 2 / (ny - 1))
    # two-sided p from the t CDF
    p = 2.0 * float(stdtr(df, -abs(t)))
    pooled = math.sqrt(((nx - 1) * vx + (ny - 1) * vy) / (nx + ny - 2))
    d = 0.0 if pooled == 0.0 else (mx - my) / pooled
    return ComparisonResult(t=float(t), df=float(df), p=p, cohens_d=float(d))


@dataclass(frozen=True)
class EvaluationReport:
    identifier: str
    members: tuple[str, ...]
    fold_macro_f1: tuple[float, ...]
    fold_class_metrics: tuple[ClassMetrics, ...] = ()
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def mean_macro_f1(self) -> float:
        return float(np.mean(self.fold_macro_f1))

    @property
    def sd_macro_f1(self) -> float:
        if len(self.fold_macro_f1) < 2:
            return 0.0
        return float(np.std(self.fold_macro_f1, ddof=1))

    def to_dict(self, class_order=None) -> dict:
        obj = {
            "identifier": self.identifier,
            "members": list(self.members),
            "fold_macro_f1": [float(v) for v in self.fold_macro_f1],
            "mean_macro_f1": self.mean_macro_f1,
            "sd_macro_f1": self.sd_macro_f1,
        }
        if self.fold_class_metrics:
            obj["fold_class_metrics"] = [
                {
                    "recall": list(m.recall),
                    "precision": list(m.precision),
                    "f1": list(m.f1),
                }
                for m in self.fold_class_metrics
            ]
        if class_order is not None:
            obj["class_order"] = list(class_order)
        if self.extra:
            obj["extra"] = self.extra
        return obj

    @classmethod
    def from_dict(cls, obj: dict) -> "EvaluationReport":
        fcm = tuple(
            ClassMetrics(tuple(m["recall"]), tuple(m["precision"]), tuple(m["f1"]))
            for m in obj.get("fold_class_metrics", [])
        )
        return cls(
            identifier=obj["identifier"],
            members=tuple(obj["members"]),
            fold_macro_f1=tuple(obj["fold_macro_f1"]),
            fold_class_metrics=fcm,
            extra=obj.get("extra", {}),
        )


def save_reports(reports: list[EvaluationReport], path: str | Path) -> None:
    obj = [r.to_dict() for r in reports]
    Path(path).write_text(
        json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_reports(path: str | Path) -> list[EvaluationReport]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return [EvaluationReport.from_dict(r) for r in obj]


def rank_report(reports: list[EvaluationReport], k: int) -> list[dict]:
    """Top-k by mean macro F1, descending; ties resolved by identifier."""
    ordered = sorted(reports, key=lambda r: (-r.mean_macro_f1, r.identifier))
    return [
        {
            "rank": i + 1,
            "identifier": r.identifier,
            "members": list(r.members),
            "mean_macro_f1": r.mean_macro_f1,
            "sd_macro_f1": r.sd_macro_f1,
        }
        for i, r in enumerate(ordered[:k])
    ]


TOP_TRUNCATION = 50


def group_values(groups: dict[str, list[float]], top: int = TOP_TRUNCATION) -> dict[str, list[float]]:
    """Apply the top-N truncation rule: groups larger than `top` keep only
    their `top` best values."""
    out = {}
    for name, values in groups.items():
        vals = sorted(values, reverse=True)
        if len(vals) > top:
            vals = vals[:top]
        out[name] = vals
    return out


def boxplot_data(groups: dict[str, list[float]], top: int = TOP_TRUNCATION) -> list[dict]:
    """Five-number summaries (linear-interpolation quantiles) plus mean/sd,
    after top-N truncation of oversized groups."""
    rows = []
    truncated = group_values(groups, top)
    for name in groups:
        vals = np.asarray(truncated[name], dtype=np.float64)
        if vals.size == 0:
            raise EvaluationError(f"group {name!r} is empty")
        q1, med, q3 = np.quantile(vals, [0.25, 0.5, 0.75])
        rows.append(
            {
                "group": name,
                "n_total": len(groups[name]),
                "n_used": int(vals.size),
                "min": float(vals.min()),
                "q1": float(q1),
                "median": float(med),
                "q3": float(q3),
                "max": float(vals.max()),
                "mean": float(vals.mean()),
                "sd": float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0,
            }
        )
    return rows
