"""Random Forest and multiclass (SAMME) AdaBoost over feature matrices.

Both models consume dense numeric matrices and integer class indices and
emit row-stochastic probability matrices. Defaults follow the reference
implementations the method was validated with: 500 trees / mtry =
floor(sqrt(p)) / min_leaf 1 for the forest, 100 depth-3 rounds for
boosting.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tree import DecisionTree, train_tree

MODEL_FORMAT_VERSION = 1

# Finite stand-in for the infinite round weight of a perfect weak learner.
PERFECT_ROUND_ALPHA = math.log(1e12)


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class RandomForestConfig:
    num_trees: int = 500
    mtry: int | None = None  # None -> floor(sqrt(p)), min 1
    min_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1 or self.min_leaf < 1:
            raise ValueError("counts must be >= 1")

    def resolve_mtry(self, p: int) -> int:
        if self.mtry is not None:
            return max(1, min(self.mtry, p))
        return max(1, int(math.isqrt(p)))


@dataclass(frozen=True)
class AdaBoostConfig:
    num_rounds: int = 100
    base_max_depth: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.num_rounds < 1 or self.base_max_depth < 1:
            raise ValueError("counts must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    rf: RandomForestConfig = field(default_factory=RandomForestConfig)
    ada: AdaBoostConfig = field(default_factory=AdaBoostConfig)


@dataclass
class RandomForestModel:
    trees: list[DecisionTree]
    num_classes: int
    config: RandomForestConfig

    def to_json(self) -> str:
        obj = {
            "format_version": MODEL_FORMAT_VERSION,
            "model": "random_forest",
            "num_classes": self.num_classes,
            "config": {
                "num_trees": self.config.num_trees,
                "mtry": self.config.mtry,
                "min_leaf": self.config.min_leaf,
                "seed": self.config.seed,
            },
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(obj, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RandomForestModel":
        obj = json.loads(text)
        if obj.get("model") != "random_forest":
            raise ValueError("not a random forest model file")
        return cls(
            trees=[DecisionTree.from_dict(t) for t in obj["trees"]],
            num_classes=obj["num_classes"],
            config=RandomForestConfig(**obj["config"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RandomForestModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass
class AdaBoostModel:
    rounds: list[tuple[DecisionTree, float]]
    num_classes: int
    config: AdaBoostConfig

    def to_json(self) -> str:
        obj = {
            "format_version": MODEL_FORMAT_VERSION,
            "model": "adaboost",
            "num_classes": self.num_classes,
            "config": {
                "num_rounds": self.config.num_rounds,
                "base_max_depth": self.config.base_max_depth,
                "seed": self.config.seed,
            },
            "rounds": [
                {"tree": t.to_dict(), "alpha": float(a)} for t, a in self.rounds
            ],
        }
        return json.dumps(obj, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AdaBoostModel":
        obj = json.loads(text)
        if obj.get("model") != "adaboost":
            raise ValueError("not an adaboost model file")
        return cls(
            rounds=[
                (DecisionTree.from_dict(r["tree"]), r["alpha"]) for r in obj["rounds"]
            ],
            num_classes=obj["num_classes"],
            config=AdaBoostConfig(**obj["config"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AdaBoostModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _check_training_input(X: np.ndarray, y: np.ndarray, num_classes: int) -> None:
    if X.shape[0] == 0:
        raise TrainingError("empty training set")
    if np.unique(y).size < 2:
        raise TrainingError("training set contains a single class")
    if y.max() >= num_classes or y.min() < 0:
        raise TrainingError("labels out of range for num_classes")


def rf_train(X: np.ndarray, y: np.ndarray, num_classes: int, config: RandomForestConfig) -> RandomForestModel:
    """Bootstrap-resampled trees grown to purity on mtry candidate features."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_training_input(X, y, num_classes)
    n, p = X.shape
    mtry = config.resolve_mtry(p)
    seeds = np.random.SeedSequence(config.seed).spawn(config.num_trees)
    trees = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        boot = rng.integers(0, n, size=n)
        trees.append(
            train_tree(
                X[boot],
                y[boot],
                num_classes,
                mtry=mtry,
                min_leaf=config.min_leaf,
                rng=rng,
            )
        )
    return RandomForestModel(trees=trees, num_classes=num_classes, config=config)


def rf_predict_proba(model: RandomForestModel, X: np.ndarray) -> np.ndarray:
    """Hard-vote fractions: each tree votes its leaf argmax."""
    X = np.asarray(X, dtype=np.float64)
    votes = np.zeros((X.shape[0], model.num_classes))
    for tree in model.trees:
        pred = tree.predict(X)
        votes[np.arange(X.shape[0]), pred] += 1.0
    return votes / len(model.trees)


def ada_train(X: np.ndarray, y: np.ndarray, num_classes: int, config: AdaBoostConfig) -> AdaBoostModel:
    """SAMME boosting of depth-limited trees.

    alpha_m = ln((1-err)/err) + ln(M-1); rounds with err >= 1 - 1/M are
    rejected and boosting stops; a perfect round is kept with a large
    finite alpha and stops boosting.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_training_input(X, y, num_classes)
    n = X.shape[0]
    M = num_classes
    w = np.full(n, 1.0 / n)
    rounds: list[tuple[DecisionTree, float]] = []
    for _ in range(config.num_rounds):
        tree = train_tree(
            X, y, num_classes, max_depth=config.base_max_depth, sample_weight=w
        )
        pred = tree.predict(X)
        miss = pred != y
        err = float(w[miss].sum())
        if err >= 1.0 - 1.0 / M:
            break
        if err <= 0.0:
            rounds.append((tree, PERFECT_ROUND_ALPHA))
            break
        alpha = math.log((1.0 - err) / err) + math.log(M - 1)
        rounds.append((tree, alpha))
        w = w * np.exp(alpha * miss)
        w = w / w.sum()
    if not rounds:
        raise TrainingError("first boosting round was no better than chance")
    return AdaBoostModel(rounds=rounds, num_classes=num_classes, config=config)


def ada_predict_proba(model: AdaBoostModel, X: np.ndarray) -> np.ndarray:
    """Per class, the alpha mass of rounds voting it, normalized to sum 1."""
    X = np.asarray(X, dtype=np.float64)
    scores = np.zeros((X.shape[0], model.num_classes))
    total = 0.0
    for tree, alpha in model.rounds:
        pred = tree.predict(X)
        scores[np.arange(X.shape[0]), pred] += alpha
        total += alpha
    return scores / total
