"""CART-style decision tree with weighted Gini splits.

The tree is stored as flat arrays so it serializes to JSON directly and
predicts without recursion. Splits are binary on numeric thresholds; the
threshold is the midpoint of adjacent distinct sorted values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS = 1e-300


@dataclass
class DecisionTree:
    # Parallel node arrays; feature == -1 marks a leaf.
    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    dist: list[list[float]]
    num_classes: int

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index for each row of X."""
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros(X.shape[0], dtype=np.int64)
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        active = feature[out] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            node = out[idx]
            goes_left = X[idx, feature[node]] < threshold[node]
            out[idx] = np.where(goes_left, left[node], right[node])
            active[idx] = feature[out[idx]] >= 0
        return out

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        dist = np.asarray(self.dist, dtype=np.float64)
        return dist[self.apply(X)]

    def predict(self, X: np.ndarray) -> np.ndarray:
        # Ties break toward the lowest class index (argmax convention).
        return np.argmax(self.predict_proba(X), axis=1)

    def node_count(self) -> int:
        return len(self.feature)

    def to_dict(self) -> dict:
        return {
            "feature": list(map(int, self.feature)),
            "threshold": [float(t) for t in self.threshold],
            "left": list(map(int, self.left)),
            "right": list(map(int, self.right)),
            "dist": [[float(p) for p in d] for d in self.dist],
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DecisionTree":
        return cls(
            feature=obj["feature"],
            threshold=obj["threshold"],
            left=obj["left"],
            right=obj["right"],
            dist=obj["dist"],
            num_classes=obj["num_classes"],
        )


def _best_split(
    X: np.ndarray,
    wy: np.ndarray,
    idx: np.ndarray,
    feats: np.ndarray,
    min_leaf: int,
):
    """Best (feature, threshold, impurity) over candidate features.

    wy is the (n_total, M) weighted one-hot label matrix. Returns None when
    no valid split exists. Evaluates every cut position of every candidate
    feature in one vectorized pass using cumulative class-weight sums.
    """
    n = idx.size
    if n < 2 * min_leaf or n < 2:
        return None
    Xs = X[np.ix_(idx, feats)]  # n x f
    order = np.argsort(Xs, axis=0, kind="stable")
    Xsort = np.take_along_axis(Xs, order, axis=0)
    cum = np.cumsum(wy[idx][order], axis=0)  # n x f x M
    total = cum[-1, 0, :]  # class totals, identical across features
    wl = cum.sum(axis=2)  # n x f
    wr = wl[-1, :][None, :] - wl
    # Weighted Gini mass: w * (1 - sum p^2) = w - sum(c^2)/w
    gl = wl - (cum ** 2).sum(axis=2) / np.maximum(wl, _EPS)
    rem = total[None, None, :] - cum
    gr = wr - (rem ** 2).sum(axis=2) / np.maximum(wr, _EPS)
    score = (gl + gr)[:-1, :]  # cut after sorted position i

    valid = Xsort[:-1, :] < Xsort[1:, :]
    if min_leaf > 1:
        pos = np.arange(1, n)[:, None]
        valid &= (pos >= min_leaf) & (n - pos >= min_leaf)
    if not valid.any():
        return None
    score = np.where(valid, score, np.inf)
    flat = int(np.argmin(score))
    i, j = divmod(flat, score.shape[1])
    impurity = float(score[i, j])
    thr = float((Xsort[i, j] + Xsort[i + 1, j]) / 2.0)
    return int(feats[j]), thr, impurity


def train_tree(
    X: np.ndarray,
    y: np.ndarray,
    num_classes: int,
    *,
    mtry: int | None = None,
    max_depth: int | None = None,
    min_leaf: int = 1,
    sample_weight: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> DecisionTree:
    """Grow a tree by greedy weighted-Gini splits.

    mtry: number of candidate features drawn uniformly without replacement
    per split (None = all features). Stops on purity, depth, min_leaf, or
    when no candidate feature admits a valid split.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y length mismatch")
    n, p = X.shape
    if sample_weight is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(sample_weight, dtype=np.float64)
        if (w < 0).any() or w.sum() <= 0:
            raise ValueError("sample weights must be nonnegative and not all zero")
    if mtry is not None and rng is None:
        rng = np.random.default_rng(0)

    wy = np.zeros((n, num_classes))
    wy[np.arange(n), y] = w

    tree = DecisionTree([], [], [], [], [], num_classes)

    def add_node() -> int:
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        # internal nodes keep a zero placeholder so dist stays rectangular
        tree.dist.append([0.0] * num_classes)
        return len(tree.feature) - 1

    def leaf_dist(idx: np.ndarray) -> list[float]:
        d = wy[idx].sum(axis=0)
        s = d.sum()
        if s <= 0:
            # All-zero-weight leaf: fall back to unweighted frequencies.
            d = np.bincount(y[idx], minlength=num_classes).astype(float)
            s = d.sum()
        return list(d / s)

    root = add_node()
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        classes = np.unique(y[idx])
        pure = classes.size == 1
        at_depth = max_depth is not None and depth >= max_depth
        split = None
        if not pure and not at_depth:
            if mtry is None or mtry >= p:
                feats = np.arange(p)
            else:
                feats = np.sort(rng.choice(p, size=mtry, replace=False))
            split = _best_split(X, wy, idx, feats, min_leaf)
        if split is None:
            tree.dist[node] = leaf_dist(idx)
            continue
        feat, thr, _ = split
        goes_left = X[idx, feat] < thr
        left_idx = idx[goes_left]
        right_idx = idx[~goes_left]
        if left_idx.size == 0 or right_idx.size == 0:
            tree.dist[node] = leaf_dist(idx)
            continue
        tree.feature[node] = feat
        tree.threshold[node] = thr
        l = add_node()
        r = add_node()
        tree.left[node] = l
        tree.right[node] = r
        stack.append((r, right_idx, depth + 1))
        stack.append((l, left_idx, depth + 1))
    return tree


def gini_impurity(y: np.ndarray, w: np.ndarray, num_classes: int) -> float:
    """Weighted Gini of a label sample; independent check for split quality."""
    totals = np.zeros(num_classes)
    np.add.at(totals, y, w)
    s = totals.sum()
    if s <= 0:
        return 0.0
    p = totals / s
    return float(1.0 - (p ** 2).sum())
