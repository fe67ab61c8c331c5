"""Recall@K, retrieval, machine preference, CCA/PCA baselines."""

import numpy as np
import pytest

from vmembed import evaluation as ev
from vmembed.errors import (DimMismatch, EmptyCorpus, NonFiniteInput,
                            RankDeficient)


def brute_recall(s, k):
    n = s.shape[0]
    hits = 0
    for i in range(n):
        rank = 1
        for j in range(n):
            if j == i:
                continue
            if s[i, j] > s[i, i] or (s[i, j] == s[i, i] and j < i):
                rank += 1
        if rank <= k:
            hits += 1
    return 100.0 * hits / n


class TestRecallAtK:
    def test_identity_perfect(self):
        assert ev.recall_at_k(np.eye(8), 1) == 100.0

    def test_worked_example(self):
        s = np.array([[0.9, 0.8], [0.95, 0.7]])
        assert ev.recall_at_k(s, 1) == 50.0
        assert ev.recall_at_k(s, 2) == 100.0

    def test_tie_breaks_toward_earlier_index(self):
        s = np.full((2, 2), 0.5)
        # row 0 wins its tie (no earlier index), row 1 loses it
        assert ev.recall_at_k(s, 1) == 50.0

    def test_matches_brute_force(self, rng):
        s = np.round(rng.standard_normal((20, 20)), 1)  # forced ties
        for k in (1, 3, 10, 20):
            assert ev.recall_at_k(s, k) == brute_recall(s, k)

    def test_monotone_in_k(self, rng):
        s = rng.standard_normal((30, 30))
        vals = [ev.recall_at_k(s, k) for k in range(1, 31)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert vals[-1] == 100.0

    def test_random_matrix_near_chance(self, rng):
        s = rng.standard_normal((200, 200))
        # rank of the diagonal is uniform; R@10 concentrates near 5 %
        assert 1.0 <= ev.recall_at_k(s, 10) <= 11.0

    def test_not_square(self):
        with pytest.raises(DimMismatch):
            ev.recall_at_k(np.zeros((3, 4)), 1)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            ev.recall_at_k(np.eye(3), 0)
        with pytest.raises(ValueError):
            ev.recall_at_k(np.eye(3), 4)


class TestRetrieve:
    def test_self_retrieval(self, rng):
        corpus = rng.standard_normal((10, 6))
        corpus /= np.linalg.norm(corpus, axis=1, keepdims=True)
        res = ev.retrieve(corpus[3], corpus, top_k=2, query_id="q3",
                          ground_truth=3)
        assert res.ranked[0][0] == 3
        assert res.ranked[0][1] == pytest.approx(1.0)
        assert res.rank_of_ground_truth == 1
        assert res.query_id == "q3"

    def test_orthogonal_ties_by_index(self):
        corpus = np.eye(4)
        res = ev.retrieve(np.array([1.0, 0, 0, 0]), corpus, top_k=4)
        assert [i for i, _ in res.ranked] == [0, 1, 2, 3]

    def test_full_sort_oracle(self, rng):
        corpus = rng.standard_normal((25, 5))
        query = rng.standard_normal(5)
        res = ev.retrieve(query, corpus, top_k=25)
        sims = corpus @ query
        want = sorted(range(25), key=lambda i: (-sims[i], i))
        assert [i for i, _ in res.ranked] == want
        for i, s in res.ranked:
            assert s == pytest.approx(sims[i])

    def test_top_k_truncates(self, rng):
        corpus = rng.standard_normal((25, 5))
        res = ev.retrieve(rng.standard_normal(5), corpus, top_k=7)
        assert len(res.ranked) == 7

    def test_ground_truth_rank_with_ties(self):
        corpus = np.array([[1.0], [2.0], [2.0], [0.5]])
        res = ev.retrieve(np.array([1.0]), corpus, 4, ground_truth=2)
        # sims (1, 2, 2, 0.5): one larger-by-tie-index above index 2
        assert res.rank_of_ground_truth == 2

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            ev.retrieve(np.ones(3), np.zeros((0, 3)), 1)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            ev.retrieve(np.ones(3), np.ones((5, 4)), 1)


class TestMachinePreference:
    def test_identity_always_wins(self):
        assert ev.machine_preference_gr(np.eye(12), 500) == 100.0

    def test_constant_matrix_is_chance(self):
        assert ev.machine_preference_gr(np.full((6, 6), 0.3), 400) == 50.0

    def test_random_near_chance(self, rng):
        s = rng.standard_normal((50, 50))
        got = ev.machine_preference_gr(s, 10000, seed=0)
        assert 45.0 <= got <= 55.0

    def test_deterministic_in_seed(self, rng):
        s = rng.standard_normal((20, 20))
        a = ev.machine_preference_gr(s, 1000, seed=3)
        b = ev.machine_preference_gr(s, 1000, seed=3)
        assert a == b

    def test_strong_diagonal_near_perfect(self, rng):
        s = 0.05 * rng.standard_normal((30, 30)) + np.eye(30)
        assert ev.machine_preference_gr(s, 2000) > 95.0

    def test_validation(self):
        with pytest.raises(ValueError):
            ev.machine_preference_gr(np.eye(3), 0)
        with pytest.raises(ValueError):
            ev.machine_preference_gr(np.eye(1), 10)


def planted_pair(rng, n=2000, latent=4, dx=8, dy=9, noise=0.05):
    z = rng.standard_normal((n, latent))
    gx = rng.standard_normal((latent, dx))
    gy = rng.standard_normal((latent, dy))
    x = z @ gx + noise * rng.standard_normal((n, dx))
    y = z @ gy + noise * rng.standard_normal((n, dy))
    return x, y


class TestCca:
    def test_planted_correlation_recovered(self, rng):
        x, y = planted_pair(rng)
        model = ev.fit_cca(x, y, components=4)
        assert np.all(model.correlations > 0.95)
        s = ev.cca_similarity(model, x, y)
        assert ev.recall_at_k(s, 10) > 50.0

    def test_null_correlations_small(self, rng):
        x = rng.standard_normal((2000, 8))
        y = rng.standard_normal((2000, 9))
        model = ev.fit_cca(x, y, 4)
        assert np.all(model.correlations < 0.15)

    def test_invertible_map_perfect(self, rng):
        x = rng.standard_normal((300, 5))
        r = rng.standard_normal((5, 5)) + 3 * np.eye(5)
        model = ev.fit_cca(x, x @ r, 5)
        assert np.all(model.correlations > 0.999)

    def test_scaling_invariance(self, rng):
        x, y = planted_pair(rng, n=800)
        a = ev.fit_cca(x, y, 4)
        b = ev.fit_cca(1000.0 * x + 5.0, 0.001 * y - 2.0, 4)
        np.testing.assert_allclose(a.correlations, b.correlations, atol=1e-3)

    def test_correlations_match_projections(self, rng):
        x, y = planted_pair(rng, n=1500, noise=0.2)
        model = ev.fit_cca(x, y, 3)
        xp, yp = ev.apply_cca(model, x, y)
        for c in range(3):
            emp = np.corrcoef(xp[:, c], yp[:, c])[0, 1]
            assert emp == pytest.approx(model.correlations[c], abs=2e-3)

    def test_deterministic(self, rng):
        x, y = planted_pair(rng, n=400)
        a = ev.fit_cca(x, y, 3)
        b = ev.fit_cca(x.copy(), y.copy(), 3)
        np.testing.assert_array_equal(a.proj_a, b.proj_a)
        np.testing.assert_array_equal(a.proj_b, b.proj_b)

    def test_rank_deficient(self, rng):
        with pytest.raises(RankDeficient):
            ev.fit_cca(rng.standard_normal((3, 5)),
                       rng.standard_normal((3, 5)), 3)

    def test_component_bounds(self, rng):
        x = rng.standard_normal((50, 4))
        with pytest.raises(ValueError):
            ev.fit_cca(x, x, 5)
        with pytest.raises(ValueError):
            ev.fit_cca(x, x, 0)

    def test_non_finite(self, rng):
        x = rng.standard_normal((50, 4))
        y = x.copy()
        y[0, 0] = np.nan
        with pytest.raises(NonFiniteInput):
            ev.fit_cca(x, y, 2)

    def test_apply_dim_mismatch(self, rng):
        x, y = planted_pair(rng, n=200)
        model = ev.fit_cca(x, y, 2)
        with pytest.raises(DimMismatch):
            ev.apply_cca(model, x[:, :4], y)

    def test_row_count_mismatch(self, rng):
        with pytest.raises(DimMismatch):
            ev.fit_cca(rng.standard_normal((10, 3)),
                       rng.standard_normal((11, 3)), 2)


class TestPcaBaseline:
    def test_identical_modalities_perfect(self, rng):
        x = rng.standard_normal((40, 6))
        s = ev.pca_baseline(x, x, 4)
        assert ev.recall_at_k(s, 1) == 100.0

    def test_independent_modalities_near_chance(self, rng):
        x = rng.standard_normal((100, 6))
        y = rng.standard_normal((100, 6))
        s = ev.pca_baseline(x, y, 4)
        assert ev.recall_at_k(s, 1) < 20.0


class TestMetricsReport:
    def test_keys_and_values(self):
        report = ev.metrics_report(np.eye(30), seed=5, trials=200)
        assert report["n"] == 30 and report["seed"] == 5
        for direction in ("video_to_music", "music_to_video"):
            assert set(report[direction]) == {"R@1", "R@10", "R@25"}
            assert report[direction]["R@1"] == 100.0
        assert report["machine_gr"] == 100.0

    def test_small_n_drops_large_k(self):
        report = ev.metrics_report(np.eye(5), trials=50)
        assert set(report["video_to_music"]) == {"R@1"}
