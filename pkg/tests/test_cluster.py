import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.cluster import KMeans

from cellfault.cluster import (
    ClusterParams,
    FeatureScaler,
    KMeansProfiler,
    assign,
    fit,
    lloyd,
    profile_report,
    squared_distances,
)
from cellfault.exceptions import AssignError, ValidationError
from cellfault.schema import CLUSTER_FEATURES, KpiRecord
from cellfault.synth import GenSpec, generate


def best_two_partition(x):
    """Exhaustive optimum of the k=2 objective on 1-D points."""
    best = np.inf
    n = len(x)
    for mask in itertools.product([0, 1], repeat=n - 1):
        labels = np.array((0,) + mask)
        if labels.min() == labels.max():
            continue
        total = sum(((x[labels == j] - x[labels == j].mean()) ** 2).sum() for j in (0, 1))
        best = min(best, total)
    return best


class TestLloyd:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_sklearn_lloyd(self, seed):
        rng = np.random.default_rng(seed)
        Z = rng.normal(size=(80, 3))
        init = Z[rng.choice(80, 4, replace=False)]
        ours = lloyd(Z, init, 300)
        ref = KMeans(4, init=init, n_init=1, algorithm="lloyd", max_iter=300, tol=0).fit(Z)
        assert ours.wcss == pytest.approx(ref.inertia_, rel=1e-9)
        assert (ours.labels == ref.labels_).all()

    @pytest.mark.parametrize("seed", range(50))
    def test_wcss_non_increasing(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(int(rng.integers(10, 60)), int(rng.integers(1, 5))))
        m = KMeansProfiler(n_clusters=int(rng.integers(2, 6)), n_init=3, random_state=seed).fit(X)
        h = m.wcss_history_
        assert all(b <= a + 1e-9 for a, b in zip(h, h[1:]))

    def test_empty_cluster_repaired(self):
        Z = np.array([[0.0], [0.1], [10.0], [10.1]])
        init = np.array([[0.0], [10.0], [100.0]])  # third centroid attracts nothing
        res = lloyd(Z, init)
        assert np.bincount(res.labels, minlength=3).min() >= 1

    def test_converges_and_stops(self):
        Z = np.array([[0.0], [1.0], [10.0], [11.0]])
        res = lloyd(Z, Z[[0, 2]])
        assert res.n_iter == 1
        assert res.wcss == pytest.approx(1.0)


class TestBruteForce:
    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0, 100, allow_nan=False), min_size=2, max_size=12, unique=True))
    def test_k2_optimum(self, points):
        x = np.array(points)
        m = KMeansProfiler(n_clusters=2, n_init=50, standardize=False, random_state=0).fit(x[:, None])
        assert m.inertia_ == pytest.approx(best_two_partition(x), rel=1e-9, abs=1e-9)


@pytest.fixture(scope="module")
def data():
    return generate(GenSpec(mode="templates", n=450, seed=3))


@pytest.fixture(scope="module")
def table():
    return profile_report(fit(generate(GenSpec(mode="templates", n=270, seed=0))))


class TestProfiler:
    def test_profiles_sample_std(self, data):
        m = fit(data, ClusterParams(k=9, seed=1))
        X = data.matrix(CLUSTER_FEATURES)
        for j in range(9):
            members = X[m.labels_ == j]
            assert m.profiles_[j, :, 0] == pytest.approx(members.mean(axis=0))
            assert m.profiles_[j, :, 1] == pytest.approx(members.std(axis=0, ddof=1))

    def test_singleton_std_zero(self):
        X = np.array([[0.0, 0.0], [0.1, 0.0], [50.0, 50.0]])
        m = KMeansProfiler(n_clusters=2, random_state=0).fit(X)
        single = np.flatnonzero(m.sizes_ == 1)[0]
        assert (m.profiles_[single, :, 1] == 0).all()

    def test_deterministic(self, data):
        a = fit(data, ClusterParams(seed=4))
        b = fit(data, ClusterParams(seed=4))
        assert (a.labels_ == b.labels_).all() and a.inertia_ == b.inertia_

    def test_best_restart_kept(self, data):
        m = fit(data, ClusterParams(seed=2, restarts=5))
        assert m.inertia_ == min(m.restart_wcss_)
        assert len(m.restart_wcss_) == 5

    def test_predict_matches_labels(self, data):
        m = fit(data)
        assert (m.predict(data.matrix(CLUSTER_FEATURES)) == m.labels_).all()

    def test_assign_record(self, data):
        m = fit(data)
        r = data.records()[7]
        assert assign(m, r) == m.labels_[7]
        with pytest.raises(AssignError):
            assign(m, KpiRecord(*([1.0] * 8)))

    def test_standardization(self):
        X = np.array([[1.0, 5.0], [3.0, 5.0]])
        s = FeatureScaler.fit(X)
        assert s.transform(X).tolist() == [[-1.0, 0.0], [1.0, 0.0]]
        assert s.inverse_transform(s.transform(X)) == pytest.approx(X)

    def test_too_few_records(self):
        with pytest.raises(ValidationError):
            KMeansProfiler(n_clusters=5).fit(np.zeros((3, 2)))

    def test_nonfinite(self):
        with pytest.raises(ValidationError):
            KMeansProfiler(n_clusters=1).fit(np.array([[np.nan]]))

    def test_argmin_ties_lowest_id(self):
        d = squared_distances(np.array([[0.0]]), np.array([[1.0], [-1.0]]))
        assert d.argmin(axis=1)[0] == 0


class TestProfileTable:
    def test_shape(self, table):
        assert table.means.shape == (9, 7)
        assert sum(table.sizes) == 270

    def test_render_layout(self, table):
        lines = table.render().splitlines()
        assert lines[0].startswith("Attribute (KPI)")
        assert "Cluster 8" in lines[0]
        assert lines[2] == "TCH Failures"
        assert lines[3].lstrip().startswith("Mean")
        assert len(lines) == 2 + 3 * 7

    def test_csv(self, table):
        lines = table.to_csv().splitlines()
        assert lines[0] == "attribute,statistic,cluster,value"
        assert len(lines) == 1 + 7 * 2 * 9

    def test_json(self, table):
        data = json.loads(table.to_json())
        assert data["k"] == 9
        assert [a["name"] for a in data["attributes"]] == list(CLUSTER_FEATURES)
