"""C4.5-style decision tree over numeric attributes.

Binary splits ``x <= t`` / ``x > t`` with thresholds at midpoints between
adjacent distinct values where the class composition changes. A split is
chosen by gain ratio among candidates whose information gain is at least the
mean gain of all candidates at the node. Pruning is either pessimistic
(error-based subtree replacement) or reduced-error on a held-out slice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import Dataset
from .exceptions import ParseError, PredictError, ValidationError
from .rules import DiagnosticRule, RuleAtom, RuleSet
from .schema import CLASS_LABELS, CORE_NAMES, DiagnosisClass, KpiRecord

FORMAT_VERSION = 1
PRUNING_MODES = ("none", "pessimistic", "reduced_error")

_EPS = 1e-12


class Node:
    """Tree node. Internal nodes have ``feature``/``threshold`` and two
    children; every node keeps the training class counts that reached it."""

    __slots__ = ("feature", "threshold", "left", "right", "counts")

    def __init__(self, counts, feature=None, threshold=None, left=None, right=None):
        self.counts = np.asarray(counts, dtype=np.int64)
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def class_index(self) -> int:
        return int(np.argmax(self.counts))

    def distribution(self) -> np.ndarray:
        total = self.counts.sum()
        if total == 0:
            return np.full(len(self.counts), 1.0 / len(self.counts))
        return self.counts / total

    def make_leaf(self):
        self.feature = self.threshold = self.left = self.right = None

    def leaves(self):
        if self.is_leaf:
            yield self
        else:
            yield from self.left.leaves()
            yield from self.right.leaves()

    def n_nodes(self) -> int:
        return 1 if self.is_leaf else 1 + self.left.n_nodes() + self.right.n_nodes()

    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(self.left.depth(), self.right.depth())


def entropy(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    """Row-wise Shannon entropy (bits) of a 2-D count array."""
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(totals > 0, counts / totals, 0.0)
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logs).sum(axis=1)


def added_errors(n: float, e: float, confidence: float) -> float:
    """Extra errors on top of ``e`` observed among ``n`` at the upper
    confidence limit of the binomial error rate (C4.5 pessimistic estimate)."""
    if e < 1:
        base = n * (1 - confidence ** (1 / n))
        if e == 0:
            return base
        return base + e * (added_errors(n, 1, confidence) - base)
    if e + 0.5 >= n:
        return max(n - e, 0.0)
    z = NormalDist().inv_cdf(1 - confidence)
    f = (e + 0.5) / n
    r = (f + z * z / (2 * n) + z * math.sqrt(f / n - f * f / n + z * z / (4 * n * n))) / (1 + z * z / n)
    return r * n - e


def _leaf_estimate(counts: np.ndarray, confidence: float) -> float:
    n = float(counts.sum())
    if n == 0:
        return 0.0
    e = n - float(counts.max())
    return e + added_errors(n, e, confidence)


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    gain: float
    gain_ratio: float


def split_candidates(X: np.ndarray, y: np.ndarray, n_classes: int, min_leaf: int,
                     ) -> list[SplitCandidate]:
    """Every admissible binary split of the rows ``X``/``y`` (``y`` holds class
    indices). Boundaries between two value groups that are pure in the same
    class are skipped; both sides must hold at least ``min_leaf`` rows."""
    n = len(y)
    parent = np.bincount(y, minlength=n_classes)
    h_parent = entropy(parent)
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    onehot[np.arange(n), y] = 1
    out = []
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cum = np.cumsum(onehot[order], axis=0)
        # last index of each distinct-value group
        ends = np.flatnonzero(np.r_[xs[1:] != xs[:-1], True])
        if len(ends) < 2:
            continue
        group_counts = np.diff(np.vstack([np.zeros(n_classes, dtype=np.int64), cum[ends]]), axis=0)
        pure_class = np.where((group_counts > 0).sum(axis=1) == 1, group_counts.argmax(axis=1), -1)
        boundary = ends[:-1]
        keep = ~((pure_class[:-1] >= 0) & (pure_class[:-1] == pure_class[1:]))
        n_left = boundary + 1
        keep &= (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not keep.any():
            continue
        boundary = boundary[keep]
        left = cum[boundary]
        right = parent - left
        n_left = (boundary + 1).astype(float)
        n_right = n - n_left
        cond = (n_left * _entropy_rows(left) + n_right * _entropy_rows(right)) / n
        gain = h_parent - cond
        pl = n_left / n
        split_info = -(pl * np.log2(pl) + (1 - pl) * np.log2(1 - pl))
        ratio = gain / split_info
        thresholds = (xs[boundary] + xs[boundary + 1]) / 2.0
        for t, g, r in zip(thresholds, gain, ratio):
            out.append(SplitCandidate(j, float(t), float(g), float(r)))
    return out


def choose_split(candidates: Sequence[SplitCandidate]) -> SplitCandidate | None:
    """Max gain ratio among candidates with gain >= mean gain; ties go to the
    lower feature index, then the lower threshold. None if no candidate has
    positive gain."""
    positive = [c for c in candidates if c.gain > _EPS]
    if not positive:
        return None
    mean_gain = sum(c.gain for c in candidates) / len(candidates)
    eligible = [c for c in positive if c.gain >= mean_gain - _EPS]
    best = eligible[0]
    for c in eligible[1:]:
        if c.gain_ratio > best.gain_ratio + _EPS:
            best = c
        elif abs(c.gain_ratio - best.gain_ratio) <= _EPS and (c.feature, c.threshold) < (
                best.feature, best.threshold):
            best = c
    return best


class C45Classifier(BaseEstimator, ClassifierMixin):
    """Decision tree classifier with gain-ratio splits.

    Parameters
    ----------
    min_leaf_instances : int
        Minimum number of training rows on each side of a split.
    pruning : {"pessimistic", "reduced_error", "none"}
    confidence : float
        Confidence factor of the pessimistic error estimate.
    holdout_fraction : float
        Share of the training rows held back for reduced-error pruning.
    random_state : int
        Seed of the reduced-error holdout draw.
    feature_names : sequence of str, optional
        Names of the columns of ``X``; taken from a DataFrame when omitted.
    """

    def __init__(self, min_leaf_instances=2, pruning="pessimistic", confidence=0.25,
                 holdout_fraction=0.25, random_state=0, feature_names=None):
        self.min_leaf_instances = min_leaf_instances
        self.pruning = pruning
        self.confidence = confidence
        self.holdout_fraction = holdout_fraction
        self.random_state = random_state
        self.feature_names = feature_names

    def _validate_params(self):
        if self.pruning not in PRUNING_MODES:
            raise ValidationError(f"pruning must be one of {PRUNING_MODES}, got {self.pruning!r}")
        if not 0.0 < self.confidence < 1.0:
            raise ValidationError("confidence must lie in (0, 1)")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValidationError("holdout_fraction must lie in (0, 1)")
        if int(self.min_leaf_instances) < 1:
            raise ValidationError("min_leaf_instances must be at least 1")

    def fit(self, X, y):
        self._validate_params()
        names = self.feature_names
        if names is None and hasattr(X, "columns"):
            names = [str(c) for c in X.columns]
        X = check_array(X, dtype=float)
        y = np.asarray(y, dtype=object).ravel()
        if len(y) != len(X):
            raise ValidationError(f"{len(y)} labels for {len(X)} rows")
        if len(X) < 2:
            raise ValidationError("training needs at least two records")
        if any(v is None or (isinstance(v, str) and v == "") for v in y):
            raise ValidationError("training data contains unlabeled records")
        if names is None:
            names = [f"x{j}" for j in range(X.shape[1])]
        if len(names) != X.shape[1]:
            raise ValidationError(f"{len(names)} feature names for {X.shape[1]} columns")
        self.feature_names_in_ = np.array([str(n) for n in names], dtype=object)
        self.n_features_in_ = X.shape[1]
        classes, y_idx = np.unique(y.astype(str), return_inverse=True)
        self.classes_ = classes.astype(object)

        if self.pruning == "reduced_error":
            rng = np.random.default_rng(self.random_state)
            order = rng.permutation(len(X))
            n_hold = int(math.floor(self.holdout_fraction * len(X) + 0.5))
            n_hold = min(max(n_hold, 1), len(X) - 1)
            hold, grow = np.sort(order[:n_hold]), np.sort(order[n_hold:])
            self.tree_ = self._grow(X[grow], y_idx[grow])
            self._prune_reduced_error(self.tree_, X[hold], y_idx[hold])
        else:
            self.tree_ = self._grow(X, y_idx)
            if self.pruning == "pessimistic":
                self._prune_pessimistic(self.tree_)
        return self

    def _grow(self, X, y) -> Node:
        k = len(self.classes_)
        min_leaf = int(self.min_leaf_instances)
        root = Node(np.bincount(y, minlength=k))
        stack = [(root, np.arange(len(y)))]
        while stack:
            node, idx = stack.pop()
            counts = node.counts
            if (counts > 0).sum() <= 1 or len(idx) < 2 * min_leaf:
                continue
            best = choose_split(split_candidates(X[idx], y[idx], k, min_leaf))
            if best is None:
                continue
            go_left = X[idx, best.feature] <= best.threshold
            li, ri = idx[go_left], idx[~go_left]
            node.feature, node.threshold = best.feature, best.threshold
            node.left = Node(np.bincount(y[li], minlength=k))
            node.right = Node(np.bincount(y[ri], minlength=k))
            stack.append((node.right, ri))
            stack.append((node.left, li))
        return root

    def _prune_pessimistic(self, node: Node) -> float:
        """Bottom-up subtree replacement; returns the estimated errors of the
        (possibly collapsed) subtree."""
        if node.is_leaf:
            return _leaf_estimate(node.counts, self.confidence)
        subtree = self._prune_pessimistic(node.left) + self._prune_pessimistic(node.right)
        as_leaf = _leaf_estimate(node.counts, self.confidence)
        if as_leaf <= subtree + 0.1:
            node.make_leaf()
            return as_leaf
        return subtree

    def _prune_reduced_error(self, node: Node, X, y) -> int:
        """Collapse a subtree when the holdout rows reaching it are classified
        no worse by its majority class. Returns the holdout errors."""
        as_leaf = int((y != node.class_index).sum())
        if node.is_leaf:
            return as_leaf
        go_left = X[:, node.feature] <= node.threshold
        subtree = (self._prune_reduced_error(node.left, X[go_left], y[go_left])
                   + self._prune_reduced_error(node.right, X[~go_left], y[~go_left]))
        if as_leaf <= subtree:
            node.make_leaf()
            return as_leaf
        return subtree

    def _leaf_for(self, x: np.ndarray) -> Node:
        node = self.tree_
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def apply_rows(self, X) -> list[Node]:
        check_is_fitted(self, "tree_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise PredictError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return [self._leaf_for(x) for x in X]

    def predict(self, X):
        return self.classes_[[leaf.class_index for leaf in self.apply_rows(X)]]

    def predict_proba(self, X):
        leaves = self.apply_rows(X)
        if not leaves:
            return np.zeros((0, len(self.classes_)))
        return np.vstack([leaf.distribution() for leaf in leaves])

    @property
    def n_leaves_(self) -> int:
        check_is_fitted(self, "tree_")
        return sum(1 for _ in self.tree_.leaves())

    @property
    def n_nodes_(self) -> int:
        check_is_fitted(self, "tree_")
        return self.tree_.n_nodes()

    @property
    def depth_(self) -> int:
        check_is_fitted(self, "tree_")
        return self.tree_.depth()


# ------------------------------------------------------------ domain wrappers


@dataclass(frozen=True)
class LearnParams:
    min_leaf_instances: int = 2
    pruning: str = "pessimistic"
    confidence: float = 0.25
    holdout_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        self.estimator()._validate_params()

    def estimator(self, feature_names=None) -> C45Classifier:
        return C45Classifier(
            min_leaf_instances=self.min_leaf_instances,
            pruning=self.pruning,
            confidence=self.confidence,
            holdout_fraction=self.holdout_fraction,
            random_state=self.seed,
            feature_names=feature_names,
        )


def train(data: Dataset, params: LearnParams | None = None,
          features: Sequence[str] = CORE_NAMES) -> C45Classifier:
    """Fit a tree on a labeled KPI dataset."""
    params = params or LearnParams()
    X = data.matrix(features)
    y = data.labels()
    return params.estimator(feature_names=list(features)).fit(X, y)


def _record_row(model: C45Classifier, r: KpiRecord) -> np.ndarray:
    check_is_fitted(model, "tree_")
    row = []
    for name in model.feature_names_in_:
        value = r.get(name)
        if value is None:
            raise PredictError(f"record lacks attribute {name!r}")
        row.append(value)
    return np.array([row], dtype=float)


def predict(model: C45Classifier, r: KpiRecord) -> DiagnosisClass:
    return DiagnosisClass.parse(str(model.predict(_record_row(model, r))[0]))


def predict_distribution(model: C45Classifier, r: KpiRecord) -> dict[str, float]:
    """Leaf class frequencies keyed by class label, over the reporting order
    (Class A, Class B, Class C, Optimised) plus any other trained class."""
    proba = model.predict_proba(_record_row(model, r))[0]
    labels = list(CLASS_LABELS) + [c for c in model.classes_ if c not in CLASS_LABELS]
    dist = dict.fromkeys(labels, 0.0)
    for c, p in zip(model.classes_, proba):
        dist[str(c)] = float(p)
    return dist


def export_rules(model: C45Classifier, version: str = "tree-export") -> RuleSet:
    """One rule per leaf, guard = the root-to-leaf conditions. A single-leaf
    tree becomes one rule whose guard ``<first feature> >= 0`` always holds on
    the non-negative KPI domain."""
    check_is_fitted(model, "tree_")
    names = list(model.feature_names_in_)
    rules = []

    def walk(node, path):
        if node.is_leaf:
            guard = tuple(path) or (RuleAtom(names[0], ">=", 0.0),)
            outcome = DiagnosisClass.parse(str(model.classes_[node.class_index]))
            rules.append(DiagnosticRule(f"L{len(rules) + 1}", guard, outcome))
            return
        name = names[node.feature]
        walk(node.left, path + [RuleAtom(name, "<=", node.threshold)])
        walk(node.right, path + [RuleAtom(name, ">", node.threshold)])

    walk(model.tree_, [])
    return RuleSet(tuple(rules), version)


# -------------------------------------------------------------- serialization


def dumps_model(model: C45Classifier) -> str:
    """Versioned text form: a header, then one line per node in preorder
    with two spaces of indent per depth level."""
    check_is_fitted(model, "tree_")
    params = model.get_params()
    lines = [
        f"cellfault-tree {FORMAT_VERSION}",
        "params " + " ".join(f"{k}={params[k]!r}" for k in
                             ("min_leaf_instances", "pruning", "confidence",
                              "holdout_fraction", "random_state")),
        "features " + ",".join(model.feature_names_in_),
        "classes " + "|".join(str(c) for c in model.classes_),
    ]

    def emit(node, depth):
        pad = "  " * depth
        counts = ",".join(str(int(c)) for c in node.counts)
        if node.is_leaf:
            lines.append(f"{pad}leaf {node.class_index} counts={counts}")
        else:
            lines.append(f"{pad}split {model.feature_names_in_[node.feature]} "
                         f"{node.threshold!r} counts={counts}")
            emit(node.left, depth + 1)
            emit(node.right, depth + 1)

    emit(model.tree_, 0)
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> C45Classifier:
    import ast

    lines = text.splitlines()
    if len(lines) < 5 or not lines[0].startswith("cellfault-tree "):
        raise ParseError("not a cellfault tree model", 1)
    version = lines[0].split()[1]
    if version != str(FORMAT_VERSION):
        raise ParseError(f"unsupported model version {version}", 1)
    params = {}
    for item in lines[1].split()[1:]:
        key, _, value = item.partition("=")
        params[key] = ast.literal_eval(value)
    features = lines[2].split(" ", 1)[1].split(",")
    classes = lines[3].split(" ", 1)[1].split("|")
    model = C45Classifier(**params, feature_names=features)
    index = {n: j for j, n in enumerate(features)}
    body = lines[4:]
    pos = 0

    def parse(depth):
        nonlocal pos
        if pos >= len(body):
            raise ParseError("truncated model", pos + 5)
        line = body[pos]
        lineno = pos + 5
        indent = len(line) - len(line.lstrip(" "))
        if indent != 2 * depth:
            raise ParseError("bad indentation", lineno)
        parts = line.split()
        pos += 1
        try:
            counts = [int(c) for c in parts[-1].removeprefix("counts=").split(",")]
            if parts[0] == "leaf":
                return Node(counts)
            if parts[0] == "split":
                node = Node(counts, index[parts[1]], float(parts[2]))
                node.left = parse(depth + 1)
                node.right = parse(depth + 1)
                return node
        except (KeyError, ValueError, IndexError):
            raise ParseError(f"malformed node line {line.strip()!r}", lineno) from None
        raise ParseError(f"unknown node kind {parts[0]!r}", lineno)

    model.tree_ = parse(0)
    if pos != len(body):
        raise ParseError("trailing lines after the tree", pos + 5)
    model.feature_names_in_ = np.array(features, dtype=object)
    model.n_features_in_ = len(features)
    model.classes_ = np.array(classes, dtype=object)
    return model


def learn_params_of(model: C45Classifier) -> LearnParams:
    return LearnParams(
        min_leaf_instances=model.min_leaf_instances,
        pruning=model.pruning,
        confidence=model.confidence,
        holdout_fraction=model.holdout_fraction,
        seed=model.random_state,
    )


__all__ = [
    "C45Classifier",
    "LearnParams",
    "Node",
    "SplitCandidate",
    "added_errors",
    "choose_split",
    "dumps_model",
    "entropy",
    "export_rules",
    "learn_params_of",
    "loads_model",
    "predict",
    "predict_distribution",
    "split_candidates",
    "train",
]
