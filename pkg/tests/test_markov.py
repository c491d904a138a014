import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedline import markov
from fedline.errors import ContractError

from conftest import make_dataset


def ngram_count_oracle(seq, order, states):
    """Independent dictionary-based n-gram counter."""
    index = {s: i for i, s in enumerate(states)}
    rows = list(itertools.product(states, repeat=order))
    row_of = {r: i for i, r in enumerate(rows)}
    counts = np.zeros((len(rows), len(states)), dtype=int)
    for i in range(len(seq) - order):
        prefix = tuple(seq[i:i + order])
        counts[row_of[prefix], index[seq[i + order]]] += 1
    return counts


class TestErrorStates:
    def test_mapping(self):
        assert markov.error_state(1, 1) == "hit"
        assert markov.error_state(0, 0) == "hit"
        assert markov.error_state(1, 0) == "miss"
        assert markov.error_state(0, 1) == "mistake"

    def test_sequence(self):
        seq = markov.build_error_sequence([1, 0, 1, 0], [1, 1, 0, 0])
        assert seq == ["hit", "mistake", "miss", "hit"]


class TestFitMarkov:
    def test_hand_example_order1(self):
        seq = ["hit", "hit", "miss", "hit", "miss"]
        tm = markov.fit_markov(seq, 1, states=markov.ERROR_STATES)
        # transitions: hit->hit, hit->miss (x2), miss->hit
        assert tm.probs[0, 0] == pytest.approx(1 / 3)
        assert tm.probs[0, 1] == pytest.approx(2 / 3)
        assert tm.probs[1, 0] == 1.0
        assert tm.uniform_rows[2]  # "mistake" never occurs as a prefix
        assert np.allclose(tm.probs[2], 1 / 3)

    def test_row_order_is_product_order(self):
        tm = markov.fit_markov(["S0", "S1", "S0", "S1"], 2, states=markov.GT_STATES)
        assert tm.row_states == (("S0", "S0"), ("S0", "S1"), ("S1", "S0"), ("S1", "S1"))
        assert tm.probs.shape == (4, 2)

    def test_too_short(self):
        with pytest.raises(ContractError):
            markov.fit_markov(["hit"], 1)

    @given(st.integers(0, 10_000), st.integers(1, 2))
    @settings(max_examples=100, deadline=None)
    def test_matches_counting_oracle(self, seed, order):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(order + 1, 60))
        states = markov.ERROR_STATES
        seq = [states[i] for i in rng.integers(0, 3, n)]
        tm = markov.fit_markov(seq, order, states=states)
        counts = ngram_count_oracle(seq, order, states)
        assert np.array_equal(tm.counts, counts)
        totals = counts.sum(axis=1)
        for r in range(len(counts)):
            if totals[r] == 0:
                assert tm.uniform_rows[r]
                assert np.allclose(tm.probs[r], 1 / 3)
            else:
                assert np.allclose(tm.probs[r], counts[r] / totals[r])
        assert np.allclose(tm.probs.sum(axis=1), 1.0, atol=1e-12)

    def test_long_sequence_recovers_true_matrix(self):
        true = np.array([[0.9, 0.05, 0.05], [0.6, 0.3, 0.1], [0.5, 0.1, 0.4]])
        rng = np.random.default_rng(3)
        n = 100_000
        seq_idx = np.empty(n, dtype=int)
        seq_idx[0] = 0
        for i in range(1, n):
            seq_idx[i] = rng.choice(3, p=true[seq_idx[i - 1]])
        seq = [markov.ERROR_STATES[i] for i in seq_idx]
        tm = markov.fit_markov(seq, 1, states=markov.ERROR_STATES)
        assert np.max(np.abs(tm.probs - true)) < 0.02


class TestCompareMatrices:
    def test_symmetry(self):
        a = markov.matrix_from_probs([[0.7, 0.3], [0.2, 0.8]], markov.GT_STATES)
        b = markov.matrix_from_probs([[0.6, 0.4], [0.25, 0.75]], markov.GT_STATES)
        ab = markov.compare_matrices(a, b, 0.2)
        ba = markov.compare_matrices(b, a, 0.2)
        assert ab["mean_diff"] == ba["mean_diff"] and ab["max_diff"] == ba["max_diff"]
        assert ab["max_diff"] == pytest.approx(0.1)
        assert ab["within"]

    def test_rows_uniform_in_both_excluded(self):
        seq_a = ["hit", "hit", "miss", "hit"]
        seq_b = ["hit", "miss", "hit", "hit"]
        a = markov.fit_markov(seq_a, 1, states=markov.ERROR_STATES)
        b = markov.fit_markov(seq_b, 1, states=markov.ERROR_STATES)
        out = markov.compare_matrices(a, b, 0.5)
        assert out["excluded_rows"] == 1  # the never-seen "mistake" row
        assert out["diff"].shape == (3, 3)

    def test_alphabet_mismatch(self):
        a = markov.matrix_from_probs([[0.5, 0.5], [0.5, 0.5]], markov.GT_STATES)
        b = markov.matrix_from_probs(np.full((3, 3), 1 / 3), markov.ERROR_STATES)
        with pytest.raises(ContractError):
            markov.compare_matrices(a, b, 0.1)


class TestFixtures:
    def test_published_hfl_difference(self):
        fl = markov.load_matrix_fixture("hfl_error_model_fl")
        cl = markov.load_matrix_fixture("hfl_error_model_cl")
        out = markov.compare_matrices(fl, cl, 0.1)
        assert out["max_diff"] == pytest.approx(0.096, abs=1e-9)
        assert out["mean_diff"] == pytest.approx(0.054, abs=1e-3)

    def test_published_vfl_difference(self):
        fl = markov.load_matrix_fixture("vfl_error_model_fl")
        cl = markov.load_matrix_fixture("vfl_error_model_cl")
        out = markov.compare_matrices(fl, cl, 0.1)
        assert out["max_diff"] == pytest.approx(0.100, abs=1e-9)
        assert out["mean_diff"] == pytest.approx(0.035, abs=1e-3)

    def test_fixture_rows_stochastic(self):
        for name in ("hfl_error_model_fl", "hfl_error_model_cl",
                     "vfl_error_model_fl", "vfl_error_model_cl"):
            tm = markov.load_matrix_fixture(name)
            assert np.allclose(tm.probs.sum(axis=1), 1.0, atol=1e-9)


class TestAngles:
    def test_identical_is_zero(self):
        assert markov.angle_degrees([1.0, 2.0], [2.0, 4.0]) == pytest.approx(0.0, abs=1e-4)

    def test_orthogonal_is_ninety(self):
        assert markov.angle_degrees([1.0, 0.0], [0.0, 3.0]) == pytest.approx(90.0)

    def test_zero_vector_rejected(self):
        with pytest.raises(ContractError):
            markov.angle_degrees([0.0, 0.0], [1.0, 0.0])

    def test_pairwise_matches_scalar(self):
        rng = np.random.default_rng(1)
        vecs = rng.uniform(0.1, 1.0, (6, 4))
        d = markov.pairwise_angles(vecs)
        for i in range(6):
            for j in range(6):
                if i != j:
                    assert d[i, j] == pytest.approx(
                        markov.angle_degrees(vecs[i], vecs[j]), abs=1e-9)
        assert np.allclose(d, d.T) and np.allclose(np.diag(d), 0.0)

    @given(st.integers(0, 2000))
    @settings(max_examples=50, deadline=None)
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        u, v, w = rng.uniform(-1.0, 1.0, (3, 5))
        for vec in (u, v, w):
            vec[0] += 2.0  # keep away from the zero vector
        uv = markov.angle_degrees(u, v)
        vw = markov.angle_degrees(v, w)
        uw = markov.angle_degrees(u, w)
        assert uw <= uv + vw + 1e-9


class TestDbscan:
    def _two_blob_distances(self):
        # points 0-3 mutually close, 4-7 mutually close, 8 far from all
        n = 9
        d = np.full((n, n), 50.0)
        np.fill_diagonal(d, 0.0)
        for grp in (range(0, 4), range(4, 8)):
            for i in grp:
                for j in grp:
                    if i != j:
                        d[i, j] = 1.0
        return d

    def test_two_clusters_one_noise(self):
        labels = markov.dbscan(self._two_blob_distances(), eps=2.0, min_pts=3)
        assert list(labels[:4]) == [0] * 4
        assert list(labels[4:8]) == [1] * 4
        assert labels[8] == -1

    def test_deterministic(self):
        d = self._two_blob_distances()
        a = markov.dbscan(d, 2.0, 3)
        b = markov.dbscan(d, 2.0, 3)
        assert np.array_equal(a, b)

    def test_min_pts_too_high_all_noise(self):
        labels = markov.dbscan(self._two_blob_distances(), eps=2.0, min_pts=6)
        assert np.all(labels == -1)

    def test_border_point_joins_first_cluster(self):
        # point 2 is within eps of both cores 0..1 and 3..4
        d = np.array([
            [0.0, 1.0, 1.5, 9.0, 9.0],
            [1.0, 0.0, 1.5, 9.0, 9.0],
            [1.5, 1.5, 0.0, 1.5, 1.5],
            [9.0, 9.0, 1.5, 0.0, 1.0],
            [9.0, 9.0, 1.5, 1.0, 0.0],
        ])
        labels = markov.dbscan(d, eps=2.0, min_pts=3)
        assert labels[2] == labels[0]

    def test_silhouette_well_separated_near_one(self):
        d = self._two_blob_distances()
        labels = markov.dbscan(d, 2.0, 3)
        s = markov.silhouette(d, labels)
        assert s > 0.9

    def test_silhouette_single_cluster_zero(self):
        d = np.zeros((4, 4))
        assert markov.silhouette(d, np.zeros(4, dtype=int)) == 0.0


class TestHeterogeneity:
    def _regime_dataset(self, p_low=0.05, p_high=0.6, n=4000, seed=0):
        rng = np.random.default_rng(seed)
        y = np.concatenate([rng.random(n // 2) < p_low,
                            rng.random(n // 2) < p_high]).astype(int)
        x = rng.standard_normal((n, 2))
        return make_dataset(x, y)

    def test_two_regimes_found(self):
        d = self._regime_dataset()
        half = d.n_samples // 2
        rng = np.random.default_rng(7)
        groups = []
        for _ in range(25):
            groups.append((int(rng.integers(0, half - 400)), 400))
        for _ in range(25):
            groups.append((int(rng.integers(half, d.n_samples - 400)), 400))
        reports = markov.heterogeneity(d, k_orders=(1,), groups=groups, seed=1)
        rep = reports[1]
        assert rep.n_clusters == 2
        assert rep.strong_heterogeneity
        assert rep.n_outliers <= 5

    def test_homogeneous_single_cluster(self):
        rng = np.random.default_rng(5)
        y = (rng.random(5000) < 0.3).astype(int)
        d = make_dataset(rng.standard_normal((5000, 2)), y)
        reports = markov.heterogeneity(d, n_groups=40, len_range=(400, 800),
                                       k_orders=(1,), seed=2)
        assert reports[1].n_clusters == 1
        assert not reports[1].strong_heterogeneity

    def test_orders_and_eps_defaults(self):
        d = self._regime_dataset(seed=3)
        reports = markov.heterogeneity(d, n_groups=30, len_range=(300, 600),
                                       k_orders=(1, 2), seed=4)
        assert set(reports) == {1, 2}
        assert reports[1].eps_degrees == 5.0
        assert reports[2].eps_degrees == 8.0
        assert reports[2].vectors.shape[1] == 8

    def test_sample_groups_bounds(self):
        d = self._regime_dataset()
        groups = markov.sample_groups(d, 50, (100, 200), seed=9)
        assert len(groups) == 50
        for start, length in groups:
            assert 100 <= length <= 200
            assert 0 <= start and start + length <= d.n_samples

    def test_sample_groups_infeasible(self):
        d = self._regime_dataset()
        with pytest.raises(ContractError):
            markov.sample_groups(d, 5, (100, 10 ** 6), seed=0)
