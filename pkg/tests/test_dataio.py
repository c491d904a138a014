import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedline import dataio
from fedline.errors import ContractError, IntegrityError, ParseError, PartitionError, SpecError

from conftest import make_dataset


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestLoadCsv:
    def test_three_row_file(self, tmp_path):
        f = tmp_path / "d.csv"
        write_lines(f, ["Id,ts,F1,F2,Response",
                        "1,0.0,1.5,2.5,0",
                        "2,1.0,,3.5,1",
                        "3,2.0,0.5,0.25,0"])
        d = dataio.load_csv(f)
        assert d.n_samples == 3 and d.n_features == 2
        assert list(d.ids) == [1, 2, 3]
        assert list(d.labels) == [0, 1, 0]
        assert np.isnan(d.features[1, 0])

    def test_duplicate_id(self, tmp_path):
        f = tmp_path / "d.csv"
        write_lines(f, ["Id,ts,F1,Response", "7,0,1,0", "7,1,2,1"])
        with pytest.raises(IntegrityError, match="7"):
            dataio.load_csv(f)

    def test_non_numeric_cell_names_line(self, tmp_path):
        f = tmp_path / "d.csv"
        write_lines(f, ["Id,ts,F1,Response", "1,0,1,0", "2,1,abc,1"])
        with pytest.raises(ParseError, match="line 3"):
            dataio.load_csv(f)

    def test_empty_file(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("", encoding="utf-8")
        with pytest.raises(IntegrityError):
            dataio.load_csv(f)

    def test_round_trip(self, tmp_path):
        f = tmp_path / "d.csv"
        write_lines(f, ["Id,ts,F1,F2,Response",
                        "1,0.0,1.5,,0",
                        "2,1.25,-3.75e-05,2.0,1"])
        d = dataio.load_csv(f)
        out = tmp_path / "out.csv"
        dataio.write_csv(d, out)
        d2 = dataio.load_csv(out)
        assert np.array_equal(d.ids, d2.ids)
        assert np.array_equal(d.features, d2.features, equal_nan=True)
        assert np.array_equal(d.labels, d2.labels)
        # canonical writer output is a fixed point
        out2 = tmp_path / "out2.csv"
        dataio.write_csv(d2, out2)
        assert out.read_text() == out2.read_text()


class TestGenerateSynthetic:
    def test_deterministic(self):
        spec = dataio.SyntheticSpec(100, 5, 0.5, 0.0, 2.0, 1)
        a = dataio.generate_synthetic(spec)
        b = dataio.generate_synthetic(spec)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.ids, b.ids)

    def test_exact_positive_count(self):
        d = dataio.generate_synthetic(dataio.SyntheticSpec(200, 4, 0.25, seed=3))
        assert int(d.labels.sum()) == 50

    def test_timestamps_strictly_increasing(self):
        d = dataio.generate_synthetic(dataio.SyntheticSpec(50, 3, 0.4, seed=0))
        assert np.all(np.diff(d.timestamps) > 0)

    def test_class_means_differ(self):
        d = dataio.generate_synthetic(dataio.SyntheticSpec(2000, 3, 0.5, 0.0, 2.0, 5))
        mu1 = d.features[d.labels == 1].mean(axis=0)
        mu0 = d.features[d.labels == 0].mean(axis=0)
        assert np.all(mu1 - mu0 > 1.0)

    def test_infeasible_spec(self):
        with pytest.raises(SpecError):
            dataio.SyntheticSpec(100, 3, 0.001, seed=0)

    def test_separable_data_supports_accurate_tree(self):
        # oracle: a depth-limited CART tree fit on sep=4 data is > 0.9 accurate
        from fedline import cart
        d = dataio.generate_synthetic(dataio.SyntheticSpec(400, 4, 0.5, 0.0, 4.0, 11))
        tree = cart.build_tree(d, d.feature_names, None, cart.TreeConfig(max_depth=3))
        acc = (cart.tree_predict_dataset(tree, d) == d.labels).mean()
        assert acc > 0.9


class TestPartitionHorizontal:
    def test_four_client_balanced_layout(self):
        d = dataio.generate_synthetic(dataio.SyntheticSpec(18000, 3, 12000 / 18000, seed=1))
        assert int(d.labels.sum()) == 12000
        part = dataio.partition_horizontal(d, 4, seed=0)
        for c in part.clients:
            assert int(c.labels.sum()) == 3000
            assert c.n_samples == 4500

    def test_k1_identity(self, small_separable):
        part = dataio.partition_horizontal(small_separable, 1, seed=0)
        assert sorted(part.clients[0].ids) == sorted(small_separable.ids)

    def test_balance_rule(self):
        d = make_dataset(np.arange(10).reshape(5, 2), [0, 1, 0, 1, 0])
        part = dataio.partition_horizontal(d, 2, seed=7)
        assert sorted(c.n_samples for c in part.clients) == [2, 3]

    def test_k_too_large(self, small_separable):
        with pytest.raises(PartitionError):
            dataio.partition_horizontal(small_separable, 10**6, seed=0)

    @given(k=st.integers(1, 30), seed=st.integers(0, 10))
    @settings(max_examples=25, deadline=None)
    def test_union_preserves_id_label_multiset(self, k, seed):
        d = dataio.generate_synthetic(dataio.SyntheticSpec(60, 2, 0.3, seed=2))
        part = dataio.partition_horizontal(d, k, seed=seed)
        pairs = sorted((int(i), int(l)) for c in part.clients
                       for i, l in zip(c.ids, c.labels))
        expected = sorted((int(i), int(l)) for i, l in zip(d.ids, d.labels))
        assert pairs == expected
        sizes = [c.n_samples for c in part.clients]
        assert max(sizes) - min(sizes) <= 1
        for cls in (0, 1):
            counts = [int(np.sum(c.labels == cls)) for c in part.clients]
            assert max(counts) - min(counts) <= 1


class TestPartitionVertical:
    def test_22_22_split(self):
        d = dataio.generate_synthetic(dataio.SyntheticSpec(30, 44, 0.5, seed=0))
        groups = [list(d.feature_names[:22]), list(d.feature_names[22:])]
        part = dataio.partition_vertical(d, groups)
        assert [c.n_features for c in part.clients] == [22, 22]
        assert np.array_equal(part.clients[0].ids, part.clients[1].ids)

    def test_single_group_identity(self, small_separable):
        part = dataio.partition_vertical(small_separable, [list(small_separable.feature_names)])
        assert np.array_equal(part.clients[0].features, small_separable.features)

    def test_overlapping_groups(self, small_separable):
        with pytest.raises(PartitionError):
            dataio.partition_vertical(small_separable, [["F1"], ["F1"]])

    def test_unknown_feature(self, small_separable):
        with pytest.raises(LookupError):
            dataio.partition_vertical(small_separable, [["NOPE"]])

    def test_reconcatenation_reproduces_matrix(self):
        d = dataio.generate_synthetic(dataio.SyntheticSpec(40, 6, 0.5, seed=4))
        groups = [["F2", "F5"], ["F1"], ["F3", "F4", "F6"]]
        part = dataio.partition_vertical(d, groups)
        rebuilt = np.hstack([c.features for c in part.clients])
        names = [f for g in groups for f in g]
        cols = [d.feature_names.index(f) for f in names]
        assert np.array_equal(rebuilt, d.features[:, cols])


class TestPca:
    def test_rank1_data(self):
        x = np.outer(np.linspace(-1, 1, 20), [3.0, 4.0])
        d = make_dataset(x, np.tile([0, 1], 10))
        m = dataio.fit_pca(d, n_components=1)
        assert m.explained_variance_ratio[0] == pytest.approx(1.0)

    def test_identity_covariance_ratios_match_eig_oracle(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((4000, 3))
        d = make_dataset(x, np.tile([0, 1], 2000))
        m = dataio.fit_pca(d, n_components=3)
        # oracle: eigendecomposition of the empirical covariance
        cov = np.cov(x, rowvar=False)
        eig = np.sort(np.linalg.eigvalsh(cov))[::-1]
        assert np.allclose(m.explained_variance_ratio, eig / eig.sum(), atol=1e-9)
        assert np.allclose(m.explained_variance_ratio, [1 / 3] * 3, atol=0.05)

    def test_variance_threshold_planted_two_factor(self):
        # plant eigenvalues {10, 5, 0.1, 0.1} via a known rotation
        rng = np.random.default_rng(5)
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        eigs = np.array([10.0, 5.0, 0.1, 0.1])
        z = rng.standard_normal((5000, 4)) * np.sqrt(eigs)
        x = z @ q.T
        d = make_dataset(x, np.tile([0, 1], 2500))
        # oracle: cumulative ratio by hand; 15/15.2 > 0.95 at q=2
        m = dataio.fit_pca(d, variance_threshold=0.95)
        assert m.components.shape[0] == 2

    def test_orthonormal_components(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((50, 5))
        d = make_dataset(x, np.tile([0, 1], 25))
        m = dataio.fit_pca(d, n_components=4)
        gram = m.components @ m.components.T
        assert np.allclose(gram, np.eye(4), atol=1e-8)
        assert np.all(np.diff(m.explained_variance_ratio) <= 1e-12)

    def test_reconstruction_error_non_increasing(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((60, 6))
        d = make_dataset(x, np.tile([0, 1], 30))
        errs = []
        for q in range(1, 7):
            m = dataio.fit_pca(d, n_components=q)
            rec = dataio.pca_inverse(m, dataio.pca_transform(m, x))
            errs.append(float(np.sum((rec - x) ** 2)))
        assert all(a >= b - 1e-9 for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 1e-8  # q = rank(X)

    def test_missing_values_rejected(self):
        x = np.array([[1.0, np.nan], [2.0, 3.0]])
        d = make_dataset(x, [0, 1])
        with pytest.raises(ContractError):
            dataio.fit_pca(d, n_components=1)


class TestImpute:
    def test_column_mean(self):
        x = np.array([[1.0], [np.nan], [3.0]])
        d = make_dataset(x, [0, 1, 0])
        out = dataio.impute_missing(d, "column-mean")
        assert list(out.features[:, 0]) == [1.0, 2.0, 3.0]

    def test_no_missing_identity(self, small_separable):
        out = dataio.impute_missing(small_separable, "column-mean")
        assert out is small_separable

    def test_all_missing_column_falls_back_to_zero(self):
        x = np.full((3, 1), np.nan)
        d = make_dataset(x, [0, 1, 0])
        with pytest.warns(dataio.ImputationWarning):
            out = dataio.impute_missing(d, "column-mean")
        assert list(out.features[:, 0]) == [0.0, 0.0, 0.0]

    def test_zero_strategy(self):
        x = np.array([[np.nan, 5.0]])
        d = make_dataset(x, [0])
        out = dataio.impute_missing(d, "zero")
        assert list(out.features[0]) == [0.0, 5.0]
