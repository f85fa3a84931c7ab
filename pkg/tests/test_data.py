"""Data generation, non-iid partitioning, global dataset, CSV ingestion."""

import numpy as np
import pytest

from dslsim.core import ConfigError, RngStream
from dslsim.data import (
    Dataset,
    GlobalDataset,
    PartitionSpec,
    gen_synthetic,
    load_csv,
    merge_global_train,
    partition_noniid,
    standardize,
    weight_divergence,
)


def rows_as_set(ds):
    return {tuple(row) + (int(lab),) for row, lab in zip(ds.features, ds.labels)}


class TestGenSynthetic:
    def test_single_class_all_zero_labels(self):
        ds = gen_synthetic(100, 4, 1, 2.0, RngStream(1, "datagen"))
        assert np.all(ds.labels == 0)

    def test_balanced_up_to_rounding(self):
        ds = gen_synthetic(103, 4, 5, 2.0, RngStream(1, "datagen"))
        counts = np.bincount(ds.labels, minlength=5)
        assert counts.max() - counts.min() <= 1
        assert counts.sum() == 103

    def test_zero_sep_rejected(self):
        with pytest.raises(ConfigError, match="sep"):
            gen_synthetic(100, 4, 2, 0.0, RngStream(1, "datagen"))

    def test_fewer_samples_than_classes_rejected(self):
        with pytest.raises(ConfigError):
            gen_synthetic(3, 4, 5, 2.0, RngStream(1, "datagen"))

    def test_reproducible(self):
        a = gen_synthetic(50, 3, 2, 1.0, RngStream(9, "datagen"))
        b = gen_synthetic(50, 3, 2, 1.0, RngStream(9, "datagen"))
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)

    def test_nearest_mean_plugin_accuracy_on_separated_classes(self):
        # independent oracle: estimate class means on one half, classify the
        # other by the nearest mean; sep=4 makes classes nearly disjoint
        ds = gen_synthetic(1000, 20, 5, 4.0, RngStream(5, "datagen"))
        train, hold = ds.subset(range(500)), ds.subset(range(500, 1000))
        means = np.stack([train.features[train.labels == c].mean(axis=0) for c in range(5)])
        dists = ((hold.features[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        acc = (dists.argmin(axis=1) == hold.labels).mean()
        assert acc > 0.9


class TestPartitionNoniid:
    def setup_method(self):
        self.ds = gen_synthetic(2000, 6, 5, 3.0, RngStream(2, "datagen"))

    def test_exact_partition_and_disjointness(self):
        spec = PartitionSpec(num_workers=8, dirichlet_alpha=0.5, global_fraction=0.02)
        locals_, global_ds = partition_noniid(self.ds, spec, RngStream(3, "partition"))
        pieces = [rows_as_set(d) for d in locals_] + [
            rows_as_set(global_ds.train_part),
            rows_as_set(global_ds.score_part),
        ]
        total = sum(len(p) for p in pieces)
        assert total == len(self.ds)
        union = set().union(*pieces)
        assert len(union) == len(self.ds)  # no duplicates across shards
        assert union == rows_as_set(self.ds)

    def test_global_size_rounding(self):
        spec = PartitionSpec(num_workers=4, global_fraction=0.01)
        _, global_ds = partition_noniid(self.ds, spec, RngStream(3, "partition"))
        assert len(global_ds) == round(0.01 * len(self.ds))

    def test_global_split_proportions(self):
        spec = PartitionSpec(num_workers=4, global_fraction=0.05, global_split=0.5)
        _, global_ds = partition_noniid(self.ds, spec, RngStream(3, "partition"))
        assert len(global_ds.train_part) == round(0.5 * len(global_ds))

    def test_near_uniform_alpha_gives_near_uniform_histograms(self):
        ds = gen_synthetic(10_000, 4, 5, 3.0, RngStream(4, "datagen"))
        spec = PartitionSpec(num_workers=10, dirichlet_alpha=1e6, global_fraction=0.01)
        for seed in range(10):
            locals_, _ = partition_noniid(ds, spec, RngStream(seed, "partition"))
            for shard in locals_:
                hist = np.bincount(shard.labels, minlength=5) / len(shard)
                tv = 0.5 * np.abs(hist - 0.2).sum()
                assert tv < 0.05

    def test_small_alpha_concentrates_labels(self):
        ds = gen_synthetic(10_000, 4, 5, 3.0, RngStream(4, "datagen"))
        spec = PartitionSpec(num_workers=50, dirichlet_alpha=0.1, global_fraction=0.01)
        for seed in range(10):
            locals_, _ = partition_noniid(ds, spec, RngStream(seed, "partition"))
            top2_mass = []
            for shard in locals_:
                hist = np.bincount(shard.labels, minlength=5) / len(shard)
                top2_mass.append(np.sort(hist)[-2:].sum())
            assert np.median(top2_mass) >= 0.8

    def test_every_worker_nonempty_under_heavy_skew(self):
        ds = gen_synthetic(10_000, 4, 5, 3.0, RngStream(4, "datagen"))
        spec = PartitionSpec(num_workers=50, dirichlet_alpha=0.1, global_fraction=0.01)
        for seed in range(5):
            locals_, _ = partition_noniid(ds, spec, RngStream(seed, "partition"))
            assert min(len(s) for s in locals_) >= 1

    def test_too_small_dataset_rejected(self):
        tiny = self.ds.subset(range(4))
        spec = PartitionSpec(num_workers=10, global_fraction=0.1)
        with pytest.raises(ConfigError):
            partition_noniid(tiny, spec, RngStream(1, "partition"))

    def test_shard_mode_partitions_exactly(self):
        spec = PartitionSpec(num_workers=8, mode="shards", shards_per_worker=2)
        locals_, global_ds = partition_noniid(self.ds, spec, RngStream(3, "partition"))
        total = sum(len(s) for s in locals_) + len(global_ds)
        assert total == len(self.ds)
        # two shards of sorted labels: most workers see few classes
        class_counts = [len(np.unique(s.labels)) for s in locals_]
        assert np.median(class_counts) <= 3

    def test_same_seed_identical_partition(self):
        spec = PartitionSpec(num_workers=8)
        a, ga = partition_noniid(self.ds, spec, RngStream(11, "partition"))
        b, gb = partition_noniid(self.ds, spec, RngStream(11, "partition"))
        for da, db in zip(a, b):
            assert np.array_equal(da.features, db.features)
        assert np.array_equal(ga.score_part.labels, gb.score_part.labels)


class TestMergeGlobalTrain:
    def test_empty_share_is_identity(self):
        local = Dataset(np.ones((3, 2)), np.zeros(3, dtype=int))
        empty = Dataset(np.empty((0, 2)), np.empty(0, dtype=int))
        merged = merge_global_train(local, GlobalDataset(empty, empty))
        assert merged is local

    def test_sizes_concatenate(self):
        local = Dataset(np.ones((20, 2)), np.zeros(20, dtype=int))
        share = Dataset(np.zeros((5, 2)), np.ones(5, dtype=int))
        merged = merge_global_train(local, GlobalDataset(share, share))
        assert len(merged) == 25

    def test_dim_mismatch_rejected(self):
        local = Dataset(np.ones((3, 2)), np.zeros(3, dtype=int))
        share = Dataset(np.ones((2, 4)), np.zeros(2, dtype=int))
        with pytest.raises(ValueError, match="dimension"):
            merge_global_train(local, GlobalDataset(share, share))


class TestWeightDivergence:
    def test_coincident_models_give_zero(self):
        g = np.array([1.0, -2.0, 3.0])
        assert weight_divergence([g.copy(), g.copy()], g) == 0.0

    def test_hand_value(self):
        u = np.array([1.0, 0.0])
        assert weight_divergence([u, -u], u) == pytest.approx(1.0)

    def test_zero_global_norm_guard(self):
        value = weight_divergence([np.array([3.0, 4.0])], np.zeros(2))
        assert value == pytest.approx(5.0 / 1e-12)


class TestCsvIngestion:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "ds.csv"
        path.write_text("f0,f1,label\n0.5,-1.25,0\n2.0,3.5,2\n")
        ds = load_csv(path)
        assert ds.features.shape == (2, 2)
        assert list(ds.labels) == [0, 2]
        assert ds.features[1, 1] == 3.5

    def test_bad_row_aborts_with_line_number(self, tmp_path):
        path = tmp_path / "ds.csv"
        path.write_text("f0,f1,label\n0.5,1.0,0\nbogus,1.0,1\n")
        with pytest.raises(ConfigError, match="line 3"):
            load_csv(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "ds.csv"
        path.write_text("a,b,label\n0.5,1.0,0\n")
        with pytest.raises(ConfigError, match="header"):
            load_csv(path)

    def test_negative_label_rejected(self, tmp_path):
        path = tmp_path / "ds.csv"
        path.write_text("f0,label\n0.5,-1\n")
        with pytest.raises(ConfigError, match="line 2"):
            load_csv(path)


def test_standardize_centers_and_scales():
    ds = gen_synthetic(500, 3, 2, 5.0, RngStream(6, "datagen"))
    out = standardize(ds)
    assert np.allclose(out.features.mean(axis=0), 0.0, atol=1e-9)
    assert np.allclose(out.features.std(axis=0), 1.0, atol=1e-9)
