import numpy as np
import pytest

from cgmvae import data as D
from cgmvae.errors import ConfigError, DatasetParseError


@pytest.fixture
def dense_pair(tmp_path):
    x = tmp_path / "X.csv"
    y = tmp_path / "Y.csv"
    x.write_text("1.0,2.0\n3.0,4.0\n5.0,6.0\n")
    y.write_text("1,0\n0,1\n1,1\n")
    return str(x), str(y)


class TestLoadDense:
    def test_three_rows(self, dense_pair):
        ds = D.load(dense_pair, "dense-csv")
        assert ds.n_samples == 3 and ds.n_features == 2 and ds.n_labels == 2

    def test_ragged_row_reports_line(self, tmp_path, dense_pair):
        x = tmp_path / "bad.csv"
        x.write_text("1.0,2.0\n3.0\n")
        with pytest.raises(DatasetParseError, match="line 2"):
            D.load_dense(str(x), dense_pair[1])

    def test_non_binary_labels_rejected(self, tmp_path, dense_pair):
        y = tmp_path / "bady.csv"
        y.write_text("1,0\n0,2\n1,1\n")
        with pytest.raises(DatasetParseError, match="non-binary"):
            D.load_dense(dense_pair[0], str(y))

    def test_row_count_mismatch(self, tmp_path, dense_pair):
        y = tmp_path / "short.csv"
        y.write_text("1,0\n0,1\n")
        with pytest.raises(DatasetParseError, match="rows"):
            D.load_dense(dense_pair[0], str(y))

    def test_unknown_format(self, dense_pair):
        with pytest.raises(ConfigError):
            D.load(dense_pair, "arff")


class TestLoadSparse:
    def test_documented_line(self, tmp_path):
        f = tmp_path / "sparse.txt"
        f.write_text("#L=4 D=5\n0,2 1:0.5 3:1.0\n")
        ds = D.load(str(f), "sparse-multilabel")
        np.testing.assert_array_equal(ds.labels[0], [1, 0, 1, 0])
        np.testing.assert_array_equal(ds.features[0], [0.0, 0.5, 0.0, 1.0, 0.0])

    def test_empty_label_part(self, tmp_path):
        f = tmp_path / "sparse.txt"
        f.write_text("#L=2 D=3\n 0:1.0\n")
        ds = D.load_sparse(str(f))
        np.testing.assert_array_equal(ds.labels[0], [0, 0])
        assert ds.empty_label_mask[0]

    def test_missing_header(self, tmp_path):
        f = tmp_path / "sparse.txt"
        f.write_text("0 1:2.0\n")
        with pytest.raises(DatasetParseError, match="line 1"):
            D.load_sparse(str(f))

    def test_out_of_range_index(self, tmp_path):
        f = tmp_path / "sparse.txt"
        f.write_text("#L=2 D=3\n5 0:1.0\n")
        with pytest.raises(DatasetParseError, match="line 2"):
            D.load_sparse(str(f))


def _toy_dataset(n, d=2, n_labels=2, seed=0):
    gen = np.random.default_rng(seed)
    return D.Dataset(
        features=gen.normal(size=(n, d)),
        labels=(gen.random((n, n_labels)) < 0.5).astype(np.int8),
        split=np.zeros(n, dtype=np.int8),
    )


class TestSplit:
    def test_exact_division(self):
        ds = D.split(_toy_dataset(10), (0.8, 0.1, 0.1), seed=0)
        assert ds.rows("train").size == 8
        assert ds.rows("val").size == 1
        assert ds.rows("test").size == 1

    def test_deterministic(self):
        a = D.split(_toy_dataset(50), seed=7)
        b = D.split(_toy_dataset(50), seed=7)
        np.testing.assert_array_equal(a.split, b.split)

    def test_scene_sized_counts(self):
        ds = D.split(_toy_dataset(2407, d=1), (0.8, 0.1, 0.1), seed=0)
        assert ds.rows("train").size == 1925
        assert ds.rows("val").size == 241
        assert ds.rows("test").size == 241

    def test_cover_and_disjoint(self):
        ds = D.split(_toy_dataset(37), seed=3)
        all_rows = np.concatenate([ds.rows(s) for s in ("train", "val", "test")])
        assert sorted(all_rows) == list(range(37))

    def test_bad_fractions(self):
        with pytest.raises(ConfigError):
            D.split(_toy_dataset(10), (0.5, 0.1, 0.1), seed=0)

    def test_empty_split_rejected(self):
        with pytest.raises(ConfigError):
            D.split(_toy_dataset(3), (0.9, 0.05, 0.05), seed=0)

    def test_manifest_override(self, tmp_path):
        f = tmp_path / "split.txt"
        f.write_text("0\n0\n1\n2\n")
        ds = D.apply_split_manifest(_toy_dataset(4), str(f))
        np.testing.assert_array_equal(ds.split, [0, 0, 1, 2])

    def test_manifest_length_mismatch(self, tmp_path):
        f = tmp_path / "split.txt"
        f.write_text("0\n1\n")
        with pytest.raises(DatasetParseError):
            D.apply_split_manifest(_toy_dataset(4), str(f))


class TestSubsample:
    def test_full_fraction_identity(self):
        ds = D.split(_toy_dataset(20), seed=0)
        assert D.subsample_train(ds, 1.0, seed=0) is ds

    def test_floor_rule(self):
        ds = D.split(_toy_dataset(2407, d=1), seed=0)
        sub = D.subsample_train(ds, 0.5, seed=0)
        assert sub.rows("train").size == 962
        assert sub.rows("val").size == 241
        assert sub.rows("test").size == 241

    def test_deterministic(self):
        ds = D.split(_toy_dataset(40), seed=0)
        a = D.subsample_train(ds, 0.5, seed=9)
        b = D.subsample_train(ds, 0.5, seed=9)
        np.testing.assert_array_equal(a.features, b.features)

    def test_bad_fraction(self):
        ds = D.split(_toy_dataset(20), seed=0)
        with pytest.raises(ConfigError):
            D.subsample_train(ds, 0.0, seed=0)

    def test_norm_stats_recomputed(self):
        ds = D.split(_toy_dataset(200, d=3), seed=0)
        sub = D.subsample_train(ds, 0.3, seed=1)
        kept = sub.features[sub.split == D.TRAIN]
        np.testing.assert_allclose(sub.feature_mean, kept.mean(axis=0), rtol=1e-12)


class TestBatches:
    def test_sizes_with_short_final(self):
        ds = D.split(_toy_dataset(7), (0.72, 0.14, 0.14), seed=0)
        assert ds.rows("train").size == 5
        sizes = [b.features.shape[0] for b in D.batches(ds, "train", 2, seed=0, epoch=1)]
        assert sizes == [2, 2, 1]

    def test_epoch_changes_order(self):
        ds = D.split(_toy_dataset(64), seed=0)
        o1 = np.concatenate([b.row_indices for b in D.batches(ds, "train", 8, 0, epoch=1)])
        o2 = np.concatenate([b.row_indices for b in D.batches(ds, "train", 8, 0, epoch=2)])
        assert not np.array_equal(o1, o2)
        assert sorted(o1) == sorted(o2)

    def test_normalization_from_emitted_batches(self):
        ds = D.split(_toy_dataset(500, d=4, seed=5), seed=0)
        rows = np.vstack([b.features for b in D.batches(ds, "train", 64, 0, epoch=1)])
        np.testing.assert_allclose(rows.mean(axis=0), 0.0, atol=1e-6)
        np.testing.assert_allclose(rows.std(axis=0), 1.0, atol=1e-6)

    def test_labels_unmodified(self):
        ds = D.split(_toy_dataset(30), seed=0)
        before = ds.labels.copy()
        for _ in D.batches(ds, "train", 4, 0, epoch=1):
            pass
        np.testing.assert_array_equal(ds.labels, before)

    def test_unknown_split(self):
        ds = D.split(_toy_dataset(30), seed=0)
        with pytest.raises(ConfigError):
            list(D.batches(ds, "holdout", 4, 0, epoch=1))

    def test_bad_batch_size(self):
        ds = D.split(_toy_dataset(30), seed=0)
        with pytest.raises(ConfigError):
            list(D.batches(ds, "train", 0, 0, epoch=1))


class TestNormStats:
    def test_zero_std_replaced(self):
        ds = _toy_dataset(10)
        ds.features[:, 1] = 5.0
        ds = D.Dataset(features=ds.features, labels=ds.labels, split=ds.split)
        assert ds.feature_std[1] == 1.0
        assert np.all(ds.normalized(np.arange(10))[:, 1] == 0.0)

    def test_train_only_stats(self):
        ds = D.split(_toy_dataset(100, d=2, seed=8), seed=0)
        train_rows = ds.features[ds.split == D.TRAIN]
        np.testing.assert_allclose(ds.feature_mean, train_rows.mean(axis=0), rtol=1e-12)
