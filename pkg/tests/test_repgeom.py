import json
import random

import numpy as np
import pytest

from docharmonize.errors import DataError
from docharmonize.repgeom import (
    EmbeddingRecord,
    EmbeddingSet,
    analyze,
    load_embeddings,
    neighborhood_purity,
    project_2d,
    silhouette_per_class,
    subsample_per_class,
)
from docharmonize.taxonomy import builtin_heron_remap

import oracles


def make_set(points, labels, ids=None):
    ids = ids if ids is not None else list(range(len(points)))
    records = [
        EmbeddingRecord(id=i, page_id=1, label=label,
                        vector=np.asarray(p, dtype=np.float64))
        for i, p, label in zip(ids, points, labels)
    ]
    return EmbeddingSet(records=records)


def random_set(rng, max_n=60, max_d=8, n_classes=3):
    n = rng.randint(4, max_n)
    d = rng.randint(2, max_d)
    points = [[rng.gauss(0, 1) for _ in range(d)] for _ in range(n)]
    labels = [rng.choice("ABC"[:n_classes]) for _ in range(n)]
    # ensure at least two classes
    labels[0], labels[1] = "A", "B"
    return make_set(points, labels)


class TestSilhouette:
    def test_worked_four_point_example(self):
        es = make_set([(0, 0), (0, 1), (10, 0), (10, 1)], ["A", "A", "B", "B"])
        scores = silhouette_per_class(es)
        for c in ("A", "B"):
            assert scores[c] == pytest.approx(0.9002, abs=1e-4)

    def test_singleton_class_scores_zero(self):
        es = make_set([(0, 0), (0, 1), (9, 9)], ["A", "A", "B"])
        scores = silhouette_per_class(es)
        assert scores["B"] == 0.0

    def test_duplicate_points_guard(self):
        es = make_set([(0, 0), (0, 0), (0, 0), (0, 0)], ["A", "A", "B", "B"])
        scores = silhouette_per_class(es)
        assert scores == {"A": 0.0, "B": 0.0}

    def test_single_class_rejected(self):
        es = make_set([(0, 0), (1, 1)], ["A", "A"])
        with pytest.raises(DataError):
            silhouette_per_class(es)

    def test_matches_oracle(self):
        rng = random.Random(7)
        for _ in range(40):
            es = random_set(rng)
            got = silhouette_per_class(es)
            want = oracles.silhouette_direct(
                [r.vector.tolist() for r in es.records], es.labels())
            assert set(got) == set(want)
            for c in got:
                assert got[c] == pytest.approx(want[c], abs=1e-9)
                assert -1.0 <= got[c] <= 1.0

    def test_rigid_transform_invariance(self):
        rng = random.Random(13)
        es = random_set(rng, max_d=5)
        d = es.dim
        # random rotation via QR of a Gaussian matrix, plus a translation
        q, _ = np.linalg.qr(np.array([[rng.gauss(0, 1) for _ in range(d)]
                                      for _ in range(d)]))
        shift = np.array([rng.uniform(-5, 5) for _ in range(d)])
        moved = EmbeddingSet(records=[
            EmbeddingRecord(id=r.id, page_id=r.page_id, label=r.label,
                            vector=r.vector @ q + shift)
            for r in es.records
        ])
        before = silhouette_per_class(es)
        after = silhouette_per_class(moved)
        for c in before:
            assert after[c] == pytest.approx(before[c], abs=1e-9)
        mp_before, _ = neighborhood_purity(es, k=5)
        mp_after, _ = neighborhood_purity(moved, k=5)
        assert mp_after == pytest.approx(mp_before, abs=1e-9)


class TestPurity:
    def two_clusters(self):
        return make_set([(0, 0), (1, 0), (2, 0), (10, 0), (11, 0), (12, 0)],
                        ["A", "A", "A", "B", "B", "B"])

    def test_k2_two_clusters(self):
        mean, per_class = neighborhood_purity(self.two_clusters(), k=2)
        assert mean == 1.0 and per_class == {"A": 1.0, "B": 1.0}

    def test_k3_two_clusters(self):
        mean, _ = neighborhood_purity(self.two_clusters(), k=3)
        assert mean == pytest.approx(2 / 3)

    def test_same_class_always_one(self):
        es = make_set([(0, 0), (3, 0), (9, 9)], ["A", "A", "A"])
        for k in (1, 2, 50):
            mean, _ = neighborhood_purity(es, k=k)
            assert mean == 1.0

    def test_effective_k_caps_at_n_minus_one(self):
        es = self.two_clusters()
        mean_big, _ = neighborhood_purity(es, k=100)
        mean_capped, _ = neighborhood_purity(es, k=5)
        assert mean_big == pytest.approx(mean_capped)

    def test_tiebreak_ascending_id(self):
        # points 1 and 2 are equidistant from point 0; the lower id wins
        es = make_set([(0, 0), (1, 0), (-1, 0)], ["A", "A", "B"], ids=[10, 20, 30])
        _, per_class = neighborhood_purity(es, k=1)
        assert per_class["A"] == 1.0  # id 20 chosen over id 30 for point 10

    def test_matches_oracle(self):
        rng = random.Random(21)
        for _ in range(40):
            es = random_set(rng)
            k = rng.randint(1, 10)
            mean, per_class = neighborhood_purity(es, k=k)
            want_mean, want_per = oracles.purity_direct(
                [r.vector.tolist() for r in es.records], es.labels(),
                [r.id for r in es.records], k)
            assert mean == pytest.approx(want_mean, abs=1e-9)
            for c in per_class:
                assert per_class[c] == pytest.approx(want_per[c], abs=1e-9)

    def test_relabeling_permutation(self):
        rng = random.Random(3)
        es = random_set(rng)
        mean, per_class = neighborhood_purity(es, k=4)
        swap = {"A": "B", "B": "A", "C": "C"}
        swapped = EmbeddingSet(records=[
            EmbeddingRecord(id=r.id, page_id=r.page_id, label=swap[r.label],
                            vector=r.vector)
            for r in es.records
        ])
        mean2, per_class2 = neighborhood_purity(swapped, k=4)
        assert mean2 == pytest.approx(mean)
        for old, new in swap.items():
            if old in per_class:
                assert per_class2[new] == pytest.approx(per_class[old])

    def test_errors(self):
        es = make_set([(0, 0)], ["A"])
        with pytest.raises(DataError):
            neighborhood_purity(es, k=1)
        with pytest.raises(DataError):
            neighborhood_purity(self.two_clusters(), k=0)


class TestProject2d:
    def test_collinear(self):
        es = make_set([(0, 0), (1, 0), (2, 0)], ["A", "A", "A"])
        xy = project_2d(es)
        assert xy[:, 0] == pytest.approx([-1, 0, 1])
        assert xy[:, 1] == pytest.approx([0, 0, 0], abs=1e-12)

    def test_2d_input_preserves_distances(self):
        rng = random.Random(8)
        pts = [(rng.uniform(-5, 5), rng.uniform(-5, 5)) for _ in range(12)]
        es = make_set(pts, ["A"] * 12)
        xy = project_2d(es)
        orig = np.asarray(pts)
        for i in range(12):
            for j in range(i + 1, 12):
                assert np.linalg.norm(xy[i] - xy[j]) == pytest.approx(
                    np.linalg.norm(orig[i] - orig[j]), abs=1e-9)

    def test_reconstruction_matches_eigensolver(self):
        rng = random.Random(5)
        pts = [[rng.gauss(0, 1) for _ in range(5)] for _ in range(10)]
        es = make_set(pts, ["A"] * 10)
        xy = project_2d(es)
        x = np.asarray(pts)
        centered = x - x.mean(axis=0)
        # best rank-2 residual from an eigendecomposition of the covariance
        eigvals = np.sort(np.linalg.eigvalsh(centered.T @ centered))[::-1]
        best_residual = eigvals[2:].sum()
        residual = (centered ** 2).sum() - (xy ** 2).sum()
        assert residual == pytest.approx(best_residual, abs=1e-6)

    def test_bit_stable(self):
        rng = random.Random(17)
        pts = [[rng.gauss(0, 1) for _ in range(4)] for _ in range(9)]
        es = make_set(pts, ["A"] * 9)
        a, b = project_2d(es), project_2d(es)
        assert np.array_equal(a, b)

    def test_zero_variance_rejected(self):
        es = make_set([(1, 1), (1, 1)], ["A", "B"])
        with pytest.raises(DataError):
            project_2d(es)


class TestLoadEmbeddings:
    def write(self, tmp_path, rows):
        path = tmp_path / "emb.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        return path

    def test_round_trip(self, tmp_path):
        path = self.write(tmp_path, [
            {"id": 1, "page_id": 7, "label": "paragraph", "vector": [0.5, 1.5]},
            {"id": 2, "page_id": 7, "label": "table", "vector": [2.0, 3.0],
             "x": 0.1, "y": 0.2},
        ])
        es = load_embeddings(path)
        assert len(es) == 2 and es.dim == 2
        assert es.records[0].xy is None
        assert es.records[1].xy == (0.1, 0.2)

    def test_dim_mismatch_names_row(self, tmp_path):
        path = self.write(tmp_path, [
            {"id": 1, "page_id": 1, "label": "a", "vector": [0.0, 1.0]},
            {"id": 2, "page_id": 1, "label": "a", "vector": [0.0, 1.0, 2.0]},
        ])
        with pytest.raises(DataError, match=":2:"):
            load_embeddings(path)

    def test_non_finite_rejected(self, tmp_path):
        path = self.write(tmp_path, [
            {"id": 1, "page_id": 1, "label": "a", "vector": [0.0, float("1e400")]},
        ])
        with pytest.raises(DataError):
            load_embeddings(path)

    def test_remap_applied(self, tmp_path):
        path = self.write(tmp_path, [
            {"id": 1, "page_id": 1, "label": "Footnote", "vector": [0.0, 1.0]},
            {"id": 2, "page_id": 1, "label": "Text", "vector": [1.0, 0.0]},
        ])
        es = load_embeddings(path, remap=builtin_heron_remap())
        assert es.labels() == ["other", "paragraph"]


class TestSubsampleAndAnalyze:
    def test_subsample_seeded(self):
        rng = random.Random(2)
        es = random_set(rng, max_n=40)
        a = subsample_per_class(es, cap=5, seed=1)
        b = subsample_per_class(es, cap=5, seed=1)
        assert [r.id for r in a.records] == [r.id for r in b.records]
        counts = {}
        for r in a.records:
            counts[r.label] = counts.get(r.label, 0) + 1
        assert all(v <= 5 for v in counts.values())

    def test_analyze_report_shape(self):
        es = make_set([(0, 0), (0, 1), (10, 0), (10, 1)], ["A", "A", "B", "B"])
        report = analyze(es, k=1)
        assert report.params["effective_k"] == 1
        assert report.mean_purity == 1.0
        assert report.silhouette["A"] == pytest.approx(0.9002, abs=1e-4)
        assert len(report.coordinates) == 4
        assert report.params["projection"] == "pca"

    def test_analyze_uses_precomputed_xy(self):
        records = [
            EmbeddingRecord(id=i, page_id=1, label="AB"[i // 2],
                            vector=np.array([float(i), 0.0]), xy=(i * 1.0, -1.0))
            for i in range(4)
        ]
        report = analyze(EmbeddingSet(records=records), k=1)
        assert report.params["projection"] == "precomputed"
        assert report.coordinates[3]["x"] == 3.0
        assert report.coordinates[3]["y"] == -1.0

    def test_separable_two_class(self):
        rng = random.Random(31)
        pts = [[rng.gauss(0, 0.1), rng.gauss(0, 0.1)] for _ in range(15)]
        pts += [[rng.gauss(50, 0.1), rng.gauss(50, 0.1)] for _ in range(15)]
        es = make_set(pts, ["A"] * 15 + ["B"] * 15)
        report = analyze(es, k=14)
        assert report.mean_purity == 1.0
        assert report.silhouette["A"] > 0.9 and report.silhouette["B"] > 0.9
