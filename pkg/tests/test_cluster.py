import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imgk.cluster import avg_silhouette, kmeans, pairwise_distances, silhouette
from imgk.errors import ValidationError
from imgk.synth import MixtureSpec, gen_mixture
from imgk.validate import silhouette_bruteforce

RNG = np.random.default_rng(99)

# Frozen with the all-pairs oracle: mean of (10.05-0.1)/10.05, (9.95-0.1)/9.95,
# (9.95-0.1)/9.95, (10.05-0.1)/10.05 for the two-pair 1-D instance below.
HAND_INSTANCE_SCORE = 0.9899997499937498


def blobs(k=3, per=20, dim=5, sep=20.0, seed=0):
    spec = MixtureSpec(k_true=k, points_per_component=per, dim=dim,
                       center_scale=sep, within_std=1.0, seed=seed)
    return gen_mixture(spec)


class TestKmeans:
    def test_k1_groups_everything_around_the_grand_mean(self):
        points = RNG.standard_normal((30, 4))
        c = kmeans(points, 1, seed=5)
        assert np.all(c.assignments == 0)
        expected = float(((points - points.mean(axis=0)) ** 2).sum())
        assert c.inertia == pytest.approx(expected, rel=1e-9)

    def test_k_equals_n_gives_zero_inertia(self):
        points = RNG.standard_normal((12, 3))
        c = kmeans(points, 12, seed=5)
        assert c.inertia == pytest.approx(0.0, abs=1e-12)
        assert len(set(c.assignments.tolist())) == 12

    @pytest.mark.parametrize("seed", range(30))
    def test_separated_blobs_recovered_for_every_seed(self, seed):
        points, truth = blobs(k=3, per=20, dim=5, sep=20.0, seed=7)
        centers = np.array([points[truth == c].mean(axis=0) for c in range(3)])
        gaps = np.linalg.norm(centers[:, None] - centers[None, :], axis=2)
        np.fill_diagonal(gaps, np.inf)
        assert gaps.min() >= 10.0  # fixture property: centers >= 10x the unit std
        c = kmeans(points, 3, seed=seed)
        # agreement up to label permutation
        mapping = {}
        for got, want in zip(c.assignments, truth):
            mapping.setdefault(got, want)
            assert mapping[got] == want

    def test_no_empty_clusters_even_under_duplicates(self):
        points = np.zeros((6, 2))
        c = kmeans(points, 3, seed=1)
        assert set(c.assignments.tolist()) == {0, 1, 2}

    def test_invalid_k_rejected(self):
        points = RNG.standard_normal((5, 2))
        with pytest.raises(ValidationError):
            kmeans(points, 0, seed=1)
        with pytest.raises(ValidationError):
            kmeans(points, 6, seed=1)

    def test_deterministic_given_seed(self):
        points = RNG.standard_normal((50, 6))
        a = kmeans(points, 4, seed=77)
        b = kmeans(points, 4, seed=77)
        assert np.array_equal(a.assignments, b.assignments)
        assert np.array_equal(a.centroids, b.centroids)
        assert a.inertia == b.inertia

    def test_inertia_matches_definition(self):
        points = RNG.standard_normal((40, 3))
        c = kmeans(points, 5, seed=3)
        direct = sum(
            float(((points[i] - c.centroids[c.assignments[i]]) ** 2).sum())
            for i in range(40)
        )
        assert c.inertia == pytest.approx(direct, rel=1e-6)


class TestSilhouette:
    def test_two_coincident_pairs_score_one(self):
        points = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
        assert silhouette(points, np.array([0, 0, 1, 1])) == 1.0

    def test_hand_instance_matches_frozen_oracle_value(self):
        points = np.array([[0.0], [0.1], [10.0], [10.1]])
        labels = np.array([0, 0, 1, 1])
        fast = silhouette(points, labels)
        assert fast == pytest.approx(HAND_INSTANCE_SCORE, abs=1e-12)
        assert silhouette_bruteforce(points, labels) == pytest.approx(fast, abs=1e-12)

    def test_all_identical_points_score_zero(self):
        points = np.zeros((6, 2))
        assert silhouette(points, np.array([0, 0, 0, 1, 1, 1])) == 0.0

    def test_single_cluster_rejected(self):
        with pytest.raises(ValidationError):
            silhouette(RNG.standard_normal((5, 2)), np.zeros(5, dtype=int))

    def test_tiny_n_rejected(self):
        with pytest.raises(ValidationError):
            silhouette(RNG.standard_normal((2, 2)), np.array([0, 1]))

    def test_agrees_with_bruteforce_on_random_instances(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            n = int(rng.integers(6, 51))
            k = int(rng.integers(2, 6))
            points = rng.standard_normal((n, 3))
            labels = rng.integers(k, size=n)
            if len(np.unique(labels)) < 2:
                continue
            assert silhouette(points, labels) == pytest.approx(
                silhouette_bruteforce(points, labels), abs=1e-10
            )

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        points = rng.standard_normal((20, 3))
        labels = rng.integers(3, size=20)
        if len(np.unique(labels)) < 2:
            return
        perm = rng.permutation(3)
        assert silhouette(points, labels) == silhouette(points, perm[labels])

    def test_precomputed_distance_matrix_matches(self):
        points = RNG.standard_normal((30, 4))
        labels = RNG.integers(3, size=30)
        dist = pairwise_distances(points)
        assert silhouette(points, labels) == silhouette(points, labels, dist=dist)


class TestAvgSilhouette:
    def test_single_run_mean_is_that_run(self):
        points, _ = blobs(seed=11)
        summary = avg_silhouette(points, 3, 1, base_seed=123)
        assert summary.mean_score == summary.per_run_scores[0]

    def test_stable_partition_gives_constant_scores(self):
        points, _ = blobs(k=3, per=20, dim=5, sep=30.0, seed=2)
        summary = avg_silhouette(points, 3, 30, base_seed=9)
        assert np.all(summary.per_run_scores == summary.per_run_scores[0])
        # mean of 30 identical floats rounds within the documented 1e-12
        assert summary.mean_score == pytest.approx(summary.per_run_scores[0], abs=1e-12)

    def test_true_k_beats_neighbours(self):
        points, _ = blobs(k=3, per=20, dim=5, sep=20.0, seed=13)
        at = {k: avg_silhouette(points, k, 30, base_seed=1).mean_score for k in (2, 3, 5)}
        assert at[3] > at[2] and at[3] > at[5]

    def test_mean_is_reduction_of_run_scores(self):
        points, _ = blobs(seed=8)
        summary = avg_silhouette(points, 4, 7, base_seed=2)
        assert summary.mean_score == float(np.mean(summary.per_run_scores))

    def test_bitwise_identical_across_worker_counts(self):
        points, _ = blobs(k=3, per=25, dim=10, sep=10.0, seed=21)
        runs = [avg_silhouette(points, 3, 30, base_seed=17, workers=w) for w in (1, 4, 8)]
        for other in runs[1:]:
            assert np.array_equal(runs[0].per_run_scores, other.per_run_scores)
            assert runs[0].mean_score == other.mean_score

    def test_k_bounds_enforced(self):
        points = RNG.standard_normal((10, 2))
        with pytest.raises(ValidationError):
            avg_silhouette(points, 1, 3)
        with pytest.raises(ValidationError):
            avg_silhouette(points, 10, 3)
