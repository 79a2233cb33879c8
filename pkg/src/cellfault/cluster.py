"""k-means (Lloyd) clustering of cells with per-cluster attribute profiles."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .dataset import Dataset
from .exceptions import AssignError, ValidationError
from .schema import ATTRIBUTES, CLUSTER_FEATURES, KpiRecord


@dataclass(frozen=True)
class FeatureScaler:
    """Z-score scaling; attributes with zero spread keep scale 1."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, standardize: bool = True) -> FeatureScaler:
        X = np.asarray(X, dtype=float)
        if not standardize:
            return cls(np.zeros(X.shape[1]), np.ones(X.shape[1]))
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.mean


def squared_distances(Z: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((Z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def wcss(Z: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    return float(((Z - centroids[labels]) ** 2).sum())


def _repair_empty(labels: np.ndarray, own_dist: np.ndarray, k: int) -> np.ndarray:
    """Give each empty cluster the record farthest from its centroid, taken
    from a cluster that can spare one."""
    labels = labels.copy()
    own_dist = own_dist.copy()
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        spare = counts[labels] > 1
        if not spare.any():
            break
        i = int(np.argmax(np.where(spare, own_dist, -1.0)))
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] += 1
        own_dist[i] = 0.0
    return labels


@dataclass
class LloydResult:
    labels: np.ndarray
    centroids: np.ndarray
    wcss: float
    n_iter: int
    history: list[float]


def lloyd(Z: np.ndarray, centroids: np.ndarray, max_iter: int = 100) -> LloydResult:
    """Alternate nearest-centroid assignment and mean update until the
    assignment repeats or ``max_iter`` updates have run. ``history`` holds
    the within-cluster sum of squares after every update."""
    Z = np.asarray(Z, dtype=float)
    centroids = np.array(centroids, dtype=float)
    k = len(centroids)
    labels = None
    history = []
    n_iter = 0
    for _ in range(max_iter):
        d = squared_distances(Z, centroids)
        new = d.argmin(axis=1)
        new = _repair_empty(new, d[np.arange(len(Z)), new], k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centroids = np.vstack([Z[labels == j].mean(axis=0) for j in range(k)])
        n_iter += 1
        history.append(wcss(Z, labels, centroids))
    if labels is None:
        labels = squared_distances(Z, centroids).argmin(axis=1)
    return LloydResult(labels, centroids, wcss(Z, labels, centroids), n_iter, history)


class KMeansProfiler(BaseEstimator, ClusterMixin):
    """Seeded k-means with random-record initialisation and restarts.

    Centroids live in the (optionally standardized) feature space;
    ``profiles_`` holds per-cluster mean and sample standard deviation of
    every feature in original units, shape ``(n_clusters, n_features, 2)``.
    """

    def __init__(self, n_clusters=9, max_iter=100, n_init=10, standardize=True,
                 random_state=0, feature_names=None):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.n_init = n_init
        self.standardize = standardize
        self.random_state = random_state
        self.feature_names = feature_names

    def fit(self, X, y=None):
        names = self.feature_names
        if names is None and hasattr(X, "columns"):
            names = [str(c) for c in X.columns]
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValidationError("expected a 2-D feature matrix")
        if not np.isfinite(X).all():
            raise ValidationError("features must be finite")
        n, f = X.shape
        k = int(self.n_clusters)
        if k < 1:
            raise ValidationError("n_clusters must be at least 1")
        if n < k:
            raise ValidationError(f"{n} records cannot form {k} clusters")
        if int(self.max_iter) < 1 or int(self.n_init) < 1:
            raise ValidationError("max_iter and n_init must be at least 1")
        if names is None:
            names = [f"x{j}" for j in range(f)]
        if len(names) != f:
            raise ValidationError(f"{len(names)} feature names for {f} columns")

        self.scaler_ = FeatureScaler.fit(X, self.standardize)
        Z = self.scaler_.transform(X)
        rng = np.random.default_rng(self.random_state)
        best = None
        self.restart_wcss_ = []
        for _ in range(int(self.n_init)):
            start = rng.choice(n, size=k, replace=False)
            result = lloyd(Z, Z[start], int(self.max_iter))
            self.restart_wcss_.append(result.wcss)
            if best is None or result.wcss < best.wcss:
                best = result

        self.feature_names_in_ = np.array([str(x) for x in names], dtype=object)
        self.n_features_in_ = f
        self.cluster_centers_ = best.centroids
        self.labels_ = best.labels
        self.inertia_ = best.wcss
        self.n_iter_ = best.n_iter
        self.wcss_history_ = best.history
        self.profiles_ = _profiles(X, best.labels, k)
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise AssignError(f"expected {self.n_features_in_} features")
        return squared_distances(self.scaler_.transform(X), self.cluster_centers_).argmin(axis=1)

    @property
    def sizes_(self) -> np.ndarray:
        check_is_fitted(self, "labels_")
        return np.bincount(self.labels_, minlength=self.n_clusters)


def _profiles(X: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((k, X.shape[1], 2))
    for j in range(k):
        members = X[labels == j]
        out[j, :, 0] = members.mean(axis=0)
        out[j, :, 1] = members.std(axis=0, ddof=1) if len(members) > 1 else 0.0
    return out


# ------------------------------------------------------------ domain wrappers


@dataclass(frozen=True)
class ClusterParams:
    k: int = 9
    max_iterations: int = 100
    seed: int = 0
    restarts: int = 10
    standardize: bool = True

    def __post_init__(self):
        if self.k < 1 or self.max_iterations < 1 or self.restarts < 1:
            raise ValidationError("k, max_iterations and restarts must be at least 1")

    def estimator(self, feature_names=None) -> KMeansProfiler:
        return KMeansProfiler(n_clusters=self.k, max_iter=self.max_iterations,
                              n_init=self.restarts, standardize=self.standardize,
                              random_state=self.seed, feature_names=feature_names)


def feature_matrix(data: Dataset | Sequence[KpiRecord],
                   features: Sequence[str] = CLUSTER_FEATURES) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.matrix(features)
    rows = []
    for r in data:
        row = [r.get(n) for n in features]
        missing = [n for n, v in zip(features, row) if v is None]
        if missing:
            raise ValidationError(f"record {r.cell_id!r} lacks {', '.join(missing)}")
        rows.append(row)
    return np.array(rows, dtype=float).reshape(len(rows), len(features))


def fit(data: Dataset | Sequence[KpiRecord], params: ClusterParams | None = None,
        features: Sequence[str] = CLUSTER_FEATURES) -> KMeansProfiler:
    params = params or ClusterParams()
    return params.estimator(list(features)).fit(feature_matrix(data, features))


def assign(model: KMeansProfiler, r: KpiRecord) -> int:
    row = []
    for name in model.feature_names_in_:
        value = r.get(name)
        if value is None:
            raise AssignError(f"record lacks attribute {name!r}")
        row.append(value)
    return int(model.predict(np.array([row]))[0])


# ------------------------------------------------------------------ reports


def _label(name: str) -> str:
    info = ATTRIBUTES.get(name)
    return info.label if info else name


@dataclass(frozen=True)
class ProfileTable:
    features: tuple[str, ...]
    means: np.ndarray  # (k, f)
    std_devs: np.ndarray
    sizes: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.sizes)

    def render(self, decimals: int = 2) -> str:
        labels = [_label(f) for f in self.features]
        first = max(len("Attribute (KPI)"), max(len(x) for x in labels), len("  Std.Dev"))
        heads = [f"Cluster {j}" for j in range(self.k)]
        values = [f"{v:.{decimals}f}" for v in np.concatenate([self.means.ravel(), self.std_devs.ravel()])]
        width = max(max(len(h) for h in heads), max(len(v) for v in values))
        lines = [f"{'Attribute (KPI)':<{first}}  " + "  ".join(f"{h:>{width}}" for h in heads)]
        lines.append(f"{'  Size':<{first}}  " + "  ".join(f"{s:>{width}d}" for s in self.sizes))
        for i, label in enumerate(labels):
            lines.append(label)
            for stat, arr in (("Mean", self.means), ("Std.Dev", self.std_devs)):
                lines.append(f"{'  ' + stat:<{first}}  " + "  ".join(
                    f"{arr[j, i]:>{width}.{decimals}f}" for j in range(self.k)))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["attribute", "statistic", "cluster", "value"])
        for i, name in enumerate(self.features):
            for stat, arr in (("mean", self.means), ("std_dev", self.std_devs)):
                for j in range(self.k):
                    w.writerow([name, stat, j, repr(float(arr[j, i]))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "sizes": list(self.sizes),
            "attributes": [
                {
                    "name": name,
                    "label": _label(name),
                    "mean": [float(v) for v in self.means[:, i]],
                    "std_dev": [float(v) for v in self.std_devs[:, i]],
                }
                for i, name in enumerate(self.features)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def profile_report(model: KMeansProfiler) -> ProfileTable:
    check_is_fitted(model, "profiles_")
    return ProfileTable(
        features=tuple(model.feature_names_in_),
        means=model.profiles_[:, :, 0].copy(),
        std_devs=model.profiles_[:, :, 1].copy(),
        sizes=tuple(int(s) for s in model.sizes_),
    )
